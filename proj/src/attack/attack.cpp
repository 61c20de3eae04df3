#include "ftm/attack/attack.hpp"

#include <chrono>
#include <cmath>
#include <iostream>

#include "ftm/attack/transforms.hpp"
#include "ftm/core/rng.hpp"

namespace ftm::attack {

namespace {

struct TiParams {
  bool enabled = false;
  int kernel = 5;
  double sigma = 3.0;
};

struct VtParams {
  bool enabled = false;
  int samples = 5;
  double bound = 1.5;
};

// One surrogate copy's feature-stage state for an attack run.
struct CopyState {
  PerturbState<float> perturb;
  CleanFeatureStore<float> clean;
  Pcg32 sel_rng;
  Pcg32 alpha_rng;
};

}  // namespace

AdvResult run_attack(const Model<float>& surrogate, const TensorF& x, const std::vector<int>& y_t,
                     const AttackConfig& cfg, uint64_t batch_index, const IterCallback& callback) {
  cfg.validate();
  if (x.rank() != 4) throw InputError("run_attack: expected [B,C,H,W] input");
  if (static_cast<int>(y_t.size()) != x.dim(0)) throw InputError("run_attack: label count mismatch");
  {
    float mx = kern::amax(x.numel(), x.data());
    if (mx > 1.0f) throw InputError("run_attack: input values must lie in [0,1]");
    for (int64_t i = 0; i < x.numel(); ++i)
      if (x[i] < 0.0f) throw InputError("run_attack: input values must lie in [0,1]");
  }
  const int B = x.dim(0);
  const int side = x.dim(2);

  TiParams ti;
  VtParams vt;
  for (const auto& t : cfg.transforms) {
    if (t.kind == "ti") {
      ti.enabled = t.ti_kernel_size > 1;
      ti.kernel = t.ti_kernel_size;
      ti.sigma = t.ti_sigma;
    } else if (t.kind == "vt") {
      vt.enabled = true;
      vt.samples = t.vt_samples;
      vt.bound = t.vt_bound;
    }
  }

  Pcg32 t_rng = stream_rng(cfg.seed, "transform", batch_index);
  Pcg32 admix_rng = stream_rng(cfg.seed, "admix", batch_index);
  Pcg32 vt_rng = stream_rng(cfg.seed, "vt", batch_index);

  Ensemble<float> ens(surrogate, cfg.ensemble_k);

  std::vector<LayerHandle> eligible;
  if (cfg.p > 0.0) {
    eligible = enumerate_eligible_layers(surrogate, side);
    if (eligible.empty())
      throw ConfigError("attack: p > 0 but model '" + surrogate.name + "' has no eligible layers at side " +
                        std::to_string(side));
  }

  const bool ftm_on = cfg.feature_stage_enabled();
  MixParams mp{cfg.beta, cfg.p, cfg.alpha_max, cfg.eps_bar};

  // Per-copy feature state. Each copy records its own clean features under
  // its own transform draws and keeps independent selection/mixing streams.
  std::vector<CopyState> copies(static_cast<size_t>(ens.size()));
  if (ftm_on) {
    for (int k = 0; k < ens.size(); ++k) {
      CopyState& cs = copies[static_cast<size_t>(k)];
      cs.sel_rng = stream_rng(cfg.seed, "selection", batch_index, static_cast<uint64_t>(k));
      cs.alpha_rng = stream_rng(cfg.seed, "mixup_alpha", batch_index, static_cast<uint64_t>(k));
      Pcg32 clean_rng = stream_rng(cfg.seed, "clean_record", batch_index, static_cast<uint64_t>(k));
      Pipeline rec_pipe = build_pipeline(cfg.transforms, B, side, side, clean_rng, clean_rng);
      TensorF x_rec = rec_pipe.forward_base(x);
      if (rec_pipe.fan) x_rec = rec_pipe.fan->forward_copy(x_rec, 0);
      cs.clean = record_clean_features(ens.copies[static_cast<size_t>(k)], x_rec, eligible, clean_rng);
      cs.perturb = init_perturb_state<float>(eligible, B);
    }
  }

  AdvResult res;
  res.per_iter_loss.reserve(static_cast<size_t>(cfg.iterations));
  TensorF x_adv = x;
  TensorF g_momentum(x.shape());
  TensorF v_prev;  // variance-tuning carry

  auto t0 = std::chrono::steady_clock::now();

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    Pipeline pipe = build_pipeline(cfg.transforms, B, side, side, t_rng, admix_rng);

    // Selection draws and mixing ratios for this iteration, per copy, in
    // forward layer order.
    std::vector<nn::HookMap<float>> hook_maps(static_cast<size_t>(ens.size()));
    std::vector<std::vector<std::unique_ptr<FtmHook<float>>>> hooks(static_cast<size_t>(ens.size()));
    if (ftm_on) {
      for (int k = 0; k < ens.size(); ++k) {
        CopyState& cs = copies[static_cast<size_t>(k)];
        cs.perturb.tau = sample_selection(eligible, cfg.p, cs.sel_rng);
        for (const auto& h : eligible) {
          bool sel = cs.perturb.tau[h.layer_id] < cfg.p;
          std::vector<float> alpha;
          if (sel) {
            int C = h.feature_shape[0];  // channels for [C,H,W], width for [D]
            alpha.resize(static_cast<size_t>(B) * C);
            for (auto& a : alpha) a = static_cast<float>(cs.alpha_rng.next_double() * cfg.alpha_max);
          }
          auto hook = std::make_unique<FtmHook<float>>(h.layer_id, &cs.perturb.delta.at(h.layer_id), &cs.clean,
                                                       std::move(alpha), sel, mp);
          hook_maps[static_cast<size_t>(k)][h.layer_id] = hook.get();
          hooks[static_cast<size_t>(k)].push_back(std::move(hook));
        }
      }
    }
    std::vector<const nn::HookMap<float>*> hook_ptrs;
    for (auto& m : hook_maps) hook_ptrs.push_back(&m);

    TensorF x_base = pipe.forward_base(x_adv);
    int n_copies = pipe.copies();
    TensorF g_base(x_base.shape());
    double loss_sum = 0.0;
    std::vector<std::map<std::string, TensorF>> delta_grads(static_cast<size_t>(ens.size()));

    for (int j = 0; j < n_copies; ++j) {
      TensorF x_in = pipe.fan ? pipe.fan->forward_copy(x_base, j) : x_base;
      TensorF logits = ens.forward(x_in, hook_ptrs);
      std::vector<float> losses = nn::logit_loss(logits, y_t);
      for (float l : losses) loss_sum += l;
      TensorF dlogits = nn::logit_loss_grad(logits, y_t);
      TensorF gin = ens.backward(dlogits);
      if (pipe.fan)
        pipe.fan->backward_copy(gin, j, g_base);
      else
        kern::axpy(g_base.numel(), 1.0f, gin.data(), g_base.data());
      if (ftm_on) {
        for (int k = 0; k < ens.size(); ++k) {
          auto& hv = hooks[static_cast<size_t>(k)];  // parallel to `eligible`
          auto& acc = delta_grads[static_cast<size_t>(k)];
          for (size_t i = 0; i < hv.size(); ++i) {
            if (!hv[i]->selected() || !hv[i]->has_delta_grad()) continue;
            TensorF g = hv[i]->take_delta_grad();
            auto it = acc.find(eligible[i].layer_id);
            if (it == acc.end())
              acc.emplace(eligible[i].layer_id, std::move(g));
            else
              kern::axpy(it->second.numel(), 1.0f, g.data(), it->second.data());
          }
        }
      }
    }
    if (n_copies > 1) {
      kern::scale(g_base.numel(), 1.0f / static_cast<float>(n_copies), g_base.data());
      for (auto& acc : delta_grads)
        for (auto& [id, g] : acc) kern::scale(g.numel(), 1.0f / static_cast<float>(n_copies), g.data());
    }
    double loss_rec = loss_sum / n_copies;
    if (!std::isfinite(loss_rec))
      throw NonFiniteLossError(iter, "run_attack: non-finite loss at iteration " + std::to_string(iter));
    res.per_iter_loss.push_back(loss_rec);

    TensorF g_raw = pipe.backward_base(g_base);

    if (ftm_on) {
      for (int k = 0; k < ens.size(); ++k)
        update_perturbations(copies[static_cast<size_t>(k)].perturb, delta_grads[static_cast<size_t>(k)], cfg.p);
    }

    if (vt.enabled) {
      // Neighbor passes run the plain transformed loss (no feature stage);
      // their pipelines and offsets draw from the vt stream.
      auto grad_at = [&](const TensorF& xq) {
        Pipeline p2 = build_pipeline(cfg.transforms, B, side, side, vt_rng, vt_rng);
        TensorF base = p2.forward_base(xq);
        int nc = p2.copies();
        TensorF gb(base.shape());
        for (int j = 0; j < nc; ++j) {
          TensorF x_in = p2.fan ? p2.fan->forward_copy(base, j) : base;
          std::vector<const nn::HookMap<float>*> no_hooks;
          TensorF logits = ens.forward(x_in, no_hooks);
          TensorF dlogits = nn::logit_loss_grad(logits, y_t);
          TensorF gin = ens.backward(dlogits);
          if (p2.fan)
            p2.fan->backward_copy(gin, j, gb);
          else
            kern::axpy(gb.numel(), 1.0f, gin.data(), gb.data());
        }
        if (nc > 1) kern::scale(gb.numel(), 1.0f / static_cast<float>(nc), gb.data());
        return p2.backward_base(gb);
      };
      auto [g_used, v_new] =
          vt_gradient(grad_at, x_adv, g_raw, vt.samples, vt.bound * cfg.epsilon, v_prev, vt_rng);
      g_raw = std::move(g_used);
      v_prev = std::move(v_new);
    }

    if (ti.enabled) g_raw = ti_smooth(g_raw, ti.kernel, ti.sigma);

    int zero_flags = 0;
    g_momentum = momentum_update(g_momentum, g_raw, cfg.mu, &zero_flags);
    if (zero_flags > 0) {
      res.zero_grad_events += zero_flags;
      std::cerr << "[attack] warning: zero gradient L1 for " << zero_flags << " image(s) at iteration " << iter
                << ", momentum carried unchanged\n";
    }
    x_adv = step_and_clip(x_adv, g_momentum, x, cfg.eta, cfg.epsilon);

    if (callback) callback(iter, x_adv);
  }

  auto t1 = std::chrono::steady_clock::now();
  res.elapsed_seconds = std::chrono::duration<double>(t1 - t0).count() / B;
  res.x_adv_final = std::move(x_adv);
  return res;
}

}  // namespace ftm::attack
