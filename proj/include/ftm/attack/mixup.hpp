#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "ftm/attack/adapter.hpp"
#include "ftm/core/rng.hpp"
#include "ftm/core/tensor.hpp"
#include "ftm/kernels/kernels.hpp"

namespace ftm::attack {

struct MixParams {
  double beta = 0.01;
  double p = 0.1;
  double alpha_max = 0.75;
  double eps_bar = 1e-12;
};

// Per-layer learnable feature perturbations plus the current iteration's
// selection draws. delta carries over across iterations; tau is resampled.
template <class T>
struct PerturbState {
  std::map<std::string, Tensor<T>> delta;
  std::map<std::string, double> tau;

  bool selected(const std::string& layer_id, double p) const {
    auto it = tau.find(layer_id);
    return it != tau.end() && it->second < p;
  }
};

template <class T>
struct CleanFeatureStore {
  std::map<std::string, Tensor<T>> features;  // layer_id -> captured input feature
  std::vector<int> shuffle_perm;              // batch pairing used when mixing
};

namespace detail {

// Observer hook: returns its input unchanged and keeps a copy.
template <class T>
class CaptureHook final : public nn::FeatureHook<T> {
 public:
  Tensor<T> forward(const Tensor<T>& z) override {
    captured_ = z;
    return z;
  }
  Tensor<T> backward(const Tensor<T>& gout) override { return gout; }
  Tensor<T> take() { return std::move(captured_); }

 private:
  Tensor<T> captured_;
};

// Channel count of a feature: C for [B,C,H,W], D for [B,D].
template <class T>
int feature_channels(const Tensor<T>& z) {
  return z.dim(1);
}

// Spatial size under one channel.
template <class T>
int64_t feature_hw(const Tensor<T>& z) {
  return z.rank() == 4 ? static_cast<int64_t>(z.dim(2)) * z.dim(3) : 1;
}

}  // namespace detail

// Initializes all-zero perturbations for the given layers (shapes include the
// batch dimension: perturbations are per image).
template <class T>
PerturbState<T> init_perturb_state(const std::vector<LayerHandle>& layers, int batch) {
  PerturbState<T> st;
  for (const auto& h : layers) {
    std::vector<int> shape;
    shape.push_back(batch);
    for (int d : h.feature_shape) shape.push_back(d);
    st.delta.emplace(h.layer_id, Tensor<T>(shape));
  }
  return st;
}

// tau_k ~ U(0,1) per layer, drawn in forward order; layer k is selected this
// iteration iff tau_k < p.
inline std::map<std::string, double> sample_selection(const std::vector<LayerHandle>& layers, double p, Pcg32& rng) {
  if (p < 0.0 || p > 1.0) throw InputError("sample_selection: p must be in [0, 1]");
  std::map<std::string, double> tau;
  for (const auto& h : layers) tau[h.layer_id] = rng.next_double();
  return tau;
}

// One forward pass on the clean batch capturing each listed layer's input
// feature; also draws the batch pairing permutation (no fixed points for
// B > 1) used for mixing.
template <class T>
CleanFeatureStore<T> record_clean_features(Model<T>& model, const Tensor<T>& x_clean,
                                           const std::vector<LayerHandle>& layers, Pcg32& rng) {
  CleanFeatureStore<T> store;
  store.shuffle_perm = rng.derangement(x_clean.dim(0));
  std::vector<detail::CaptureHook<T>> hooks(layers.size());
  nn::HookMap<T> map;
  for (size_t i = 0; i < layers.size(); ++i) map[layers[i].layer_id] = &hooks[i];
  model.predict_with_interception(x_clean, map);
  for (size_t i = 0; i < layers.size(); ++i) store.features.emplace(layers[i].layer_id, hooks[i].take());
  return store;
}

// z_bar = z + beta * |z| * delta / (|delta| + eps_bar), whole-tensor L2 norms
// per image. The zero cases (beta = 0, delta = 0, z = 0) skip the add so the
// result is z bit for bit.
template <class T>
Tensor<T> ftm_forward(const Tensor<T>& z, const Tensor<T>& delta, const MixParams& mp) {
  if (!z.same_shape(delta)) throw InputError("ftm_forward: shape mismatch " + z.shape_str() + " vs " + delta.shape_str());
  Tensor<T> out = z;
  if (mp.beta == 0.0) return out;
  int64_t n = z.slice_numel();
  for (int b = 0; b < z.dim(0); ++b) {
    T nz = std::sqrt(kern::sumsq(n, z.slice(b)));
    T nd = std::sqrt(kern::sumsq(n, delta.slice(b)));
    if (nz == T(0) || nd == T(0)) continue;
    T s = static_cast<T>(mp.beta) * nz / (nd + static_cast<T>(mp.eps_bar));
    kern::axpy(n, s, delta.slice(b), out.slice(b));
  }
  return out;
}

// Clean-feature mixup: if selected, z' = (1-alpha) (.) z_bar + alpha (.) z_c
// with alpha per (image, channel) ~ U(0, alpha_max) broadcast over space.
// alpha must hold B*C draws (row-major); unselected layers pass through.
template <class T>
Tensor<T> clean_mixup(const Tensor<T>& z_bar, const Tensor<T>& z_c, const std::vector<T>& alpha, bool selected) {
  if (!selected) return z_bar;
  if (!z_bar.same_shape(z_c)) throw std::runtime_error("clean_mixup: internal shape mismatch " + z_bar.shape_str() + " vs " + z_c.shape_str());
  int B = z_bar.dim(0), C = detail::feature_channels(z_bar);
  int64_t hw = detail::feature_hw(z_bar);
  if (static_cast<int64_t>(alpha.size()) != static_cast<int64_t>(B) * C)
    throw std::runtime_error("clean_mixup: alpha size mismatch");
  Tensor<T> out(z_bar.shape());
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      int64_t off = (static_cast<int64_t>(b) * C + c) * hw;
      kern::lerp(hw, alpha[static_cast<size_t>(b) * C + c], z_bar.data() + off, z_c.data() + off, out.data() + off);
    }
  return out;
}

// Convenience used by tests: draws alpha itself.
template <class T>
Tensor<T> clean_mixup(const Tensor<T>& z_bar, const Tensor<T>& z_c, double alpha_max, bool selected, Pcg32& rng) {
  if (!selected) return z_bar;
  int B = z_bar.dim(0), C = detail::feature_channels(z_bar);
  std::vector<T> alpha(static_cast<size_t>(B) * C);
  for (auto& a : alpha) a = static_cast<T>(rng.next_double() * alpha_max);
  return clean_mixup(z_bar, z_c, alpha, selected);
}

// Raw-gradient ascent step on the selected perturbations (the beta scaling in
// the forward makes delta scale-free, so no step size is applied). Grads must
// be present exactly for the selected layers.
template <class T>
void update_perturbations(PerturbState<T>& state, const std::map<std::string, Tensor<T>>& grads, double p) {
  for (const auto& [id, g] : grads) {
    if (!state.selected(id, p))
      throw InputError("update_perturbations: gradient provided for unselected layer '" + id + "'");
    auto it = state.delta.find(id);
    if (it == state.delta.end()) throw InputError("update_perturbations: unknown layer '" + id + "'");
    if (!it->second.same_shape(g)) throw InputError("update_perturbations: gradient shape mismatch for '" + id + "'");
  }
  for (auto& [id, d] : state.delta) {
    if (!state.selected(id, p)) continue;
    auto it = grads.find(id);
    if (it == grads.end()) throw InputError("update_perturbations: missing gradient for selected layer '" + id + "'");
    kern::axpy(d.numel(), T(1), it->second.data(), d.data());
  }
}

// The production hook: Eq. z_bar followed by the clean mixup, with exact
// gradients through the per-image norms. delta may be null (no learned
// perturbation); the clean feature is resolved lazily from the store so
// size-changing pipelines still mix (the store entry is resized). The learned
// perturbation only applies when the live feature matches its shape. After
// backward, take_delta_grad() yields dL/d(delta) for selected layers.
template <class T>
class FtmHook final : public nn::FeatureHook<T> {
 public:
  FtmHook(std::string layer_id, const Tensor<T>* delta, const CleanFeatureStore<T>* store, std::vector<T> alpha,
          bool selected, MixParams mp)
      : layer_id_(std::move(layer_id)), delta_(delta), store_(store), alpha_(std::move(alpha)), selected_(selected),
        mp_(mp) {}

  Tensor<T> forward(const Tensor<T>& z) override {
    z_ = z;
    int B = z.dim(0);
    int64_t n = z.slice_numel();
    nz_.assign(static_cast<size_t>(B), T(0));
    nd_.assign(static_cast<size_t>(B), T(0));
    s_.assign(static_cast<size_t>(B), T(0));
    delta_applies_ = delta_ != nullptr && mp_.beta > 0.0 && z.same_shape(*delta_);
    Tensor<T> z_bar = z;
    if (delta_applies_) {
      for (int b = 0; b < B; ++b) {
        T nz = std::sqrt(kern::sumsq(n, z.slice(b)));
        T nd = std::sqrt(kern::sumsq(n, delta_->slice(b)));
        T s = static_cast<T>(mp_.beta) * nz / (nd + static_cast<T>(mp_.eps_bar));
        nz_[static_cast<size_t>(b)] = nz;
        nd_[static_cast<size_t>(b)] = nd;
        s_[static_cast<size_t>(b)] = s;
        if (nz == T(0) || nd == T(0)) continue;
        kern::axpy(n, s, delta_->slice(b), z_bar.slice(b));
      }
    }
    if (!selected_) return z_bar;
    Tensor<T> z_c = permuted_clean_feature(*store_, layer_id_, z.shape());
    return clean_mixup(z_bar, z_c, alpha_, true);
  }

  Tensor<T> backward(const Tensor<T>& gout) override {
    int B = z_.dim(0), C = detail::feature_channels(z_);
    int64_t hw = detail::feature_hw(z_);
    int64_t n = z_.slice_numel();

    // dL/d(z_bar): scale by (1 - alpha) per channel when mixed in.
    Tensor<T> gbar = gout;
    if (selected_) {
      for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
          int64_t off = (static_cast<int64_t>(b) * C + c) * hw;
          kern::scale(hw, T(1) - alpha_[static_cast<size_t>(b) * C + c], gbar.data() + off);
        }
    }

    Tensor<T> gz = gbar;
    if (delta_applies_) {
      if (selected_) delta_grad_ = Tensor<T>(delta_->shape());
      for (int b = 0; b < B; ++b) {
        T nz = nz_[static_cast<size_t>(b)], nd = nd_[static_cast<size_t>(b)], s = s_[static_cast<size_t>(b)];
        T denom = nd + static_cast<T>(mp_.eps_bar);
        T gdot = kern::dot(n, gbar.slice(b), delta_->slice(b));
        // dz += beta/(nd+eps) * <gbar, delta> * z/nz
        if (nz != T(0)) {
          T coef = static_cast<T>(mp_.beta) / denom * gdot / nz;
          kern::axpy(n, coef, z_.slice(b), gz.slice(b));
        }
        if (selected_) {
          // ddelta = s*gbar - beta*nz/(nd+eps)^2 * <gbar, delta> * delta/nd
          kern::axpy(n, s, gbar.slice(b), delta_grad_.slice(b));
          if (nd != T(0)) {
            T coef = -static_cast<T>(mp_.beta) * nz / (denom * denom) * gdot / nd;
            kern::axpy(n, coef, delta_->slice(b), delta_grad_.slice(b));
          }
        }
      }
    } else if (selected_) {
      // beta = 0 (or shape-skipped delta): the learned perturbation does not
      // influence this forward, so its gradient is exactly zero.
      delta_grad_ = delta_ != nullptr ? Tensor<T>(delta_->shape()) : Tensor<T>(z_.shape());
    }
    return gz;
  }

  bool has_delta_grad() const { return !delta_grad_.empty(); }
  Tensor<T> take_delta_grad() { return std::move(delta_grad_); }
  bool selected() const { return selected_; }

 private:
  std::string layer_id_;
  const Tensor<T>* delta_;
  const CleanFeatureStore<T>* store_;
  std::vector<T> alpha_;
  bool selected_;
  MixParams mp_;
  Tensor<T> z_;
  std::vector<T> nz_, nd_, s_;
  bool delta_applies_ = false;
  Tensor<T> delta_grad_;
};

// Applies the store's batch pairing and, when the recorded feature's spatial
// size disagrees with the live one (size-changing custom pipelines), resizes
// it. The result is the constant mixing partner for this iteration.
template <class T>
Tensor<T> permuted_clean_feature(const CleanFeatureStore<T>& store, const std::string& layer_id,
                                 const std::vector<int>& live_shape) {
  auto it = store.features.find(layer_id);
  if (it == store.features.end()) throw InputError("clean feature store: no capture for layer '" + layer_id + "'");
  const Tensor<T>& raw = it->second;
  Tensor<T> out(live_shape);
  int B = live_shape[0];
  if (static_cast<int>(store.shuffle_perm.size()) != B || raw.dim(0) != B)
    throw InputError("clean feature store: batch size mismatch for layer '" + layer_id + "'");
  bool same_spatial = raw.shape() == live_shape;
  for (int b = 0; b < B; ++b) {
    int src = store.shuffle_perm[static_cast<size_t>(b)];
    if (same_spatial) {
      std::copy(raw.slice(src), raw.slice(src) + raw.slice_numel(), out.slice(b));
    } else if (raw.rank() == 4 && static_cast<int>(live_shape.size()) == 4 && raw.dim(1) == live_shape[1]) {
      kern::resize_bilinear(raw.slice(src), raw.dim(1), raw.dim(2), raw.dim(3), live_shape[2], live_shape[3],
                            out.slice(b));
    } else {
      throw InputError("clean feature store: incompatible feature shape for layer '" + layer_id + "'");
    }
  }
  return out;
}

}  // namespace ftm::attack
