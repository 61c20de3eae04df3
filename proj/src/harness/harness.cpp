#include "ftm/harness/harness.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "ftm/harness/plot.hpp"
#include "ftm/nn/loss.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ftm::harness {

double targeted_success_rate(const TensorF& x_adv, attack::Model<float>& target, const std::vector<int>& y_t) {
  if (x_adv.dim(0) != static_cast<int>(y_t.size())) throw InputError("targeted_success_rate: label count mismatch");
  int hits = 0;
  const int chunk = 128;
  for (int start = 0; start < x_adv.dim(0); start += chunk) {
    int n = std::min(chunk, x_adv.dim(0) - start);
    TensorF batch({n, x_adv.dim(1), x_adv.dim(2), x_adv.dim(3)});
    std::copy(x_adv.slice(start), x_adv.slice(start) + static_cast<int64_t>(n) * x_adv.slice_numel(), batch.data());
    TensorF logits = target.predict_logits(batch);
    std::vector<int> pred = nn::argmax_rows(logits);
    for (int i = 0; i < n; ++i)
      if (pred[static_cast<size_t>(i)] == y_t[static_cast<size_t>(start + i)]) ++hits;
  }
  return static_cast<double>(hits) / x_adv.dim(0);
}

CraftResult craft_adversarial(const attack::Model<float>& surrogate, const EvalDataset& ds,
                              const attack::AttackConfig& cfg, int checkpoint_every,
                              const attack::IterCallback& per_batch_callback) {
  CraftResult res;
  const int N = ds.size();
  res.adv = TensorF(ds.images.shape());
  res.per_iter_loss.assign(static_cast<size_t>(cfg.iterations), 0.0);
  if (checkpoint_every > 0)
    for (int it = checkpoint_every - 1; it < cfg.iterations; it += checkpoint_every)
      res.checkpoints.emplace_back(it, TensorF(ds.images.shape()));

  uint64_t batch_index = 0;
  for (int start = 0; start < N; start += cfg.batch_size, ++batch_index) {
    int n = std::min(cfg.batch_size, N - start);
    TensorF x({n, ds.images.dim(1), ds.images.dim(2), ds.images.dim(3)});
    std::copy(ds.images.slice(start), ds.images.slice(start) + static_cast<int64_t>(n) * ds.images.slice_numel(),
              x.data());
    std::vector<int> y_t(ds.target_labels.begin() + start, ds.target_labels.begin() + start + n);

    attack::IterCallback cb;
    if (checkpoint_every > 0 || per_batch_callback) {
      cb = [&, start, n](int iter, const TensorF& x_adv) {
        if (per_batch_callback) per_batch_callback(iter, x_adv);
        if (checkpoint_every > 0 && (iter + 1) % checkpoint_every == 0) {
          size_t slot = static_cast<size_t>((iter + 1) / checkpoint_every - 1);
          if (slot < res.checkpoints.size())
            std::copy(x_adv.data(), x_adv.data() + x_adv.numel(), res.checkpoints[slot].second.slice(start));
        }
        (void)n;
      };
    }

    attack::AdvResult r = attack::run_attack(surrogate, x, y_t, cfg, batch_index, cb);
    std::copy(r.x_adv_final.data(), r.x_adv_final.data() + r.x_adv_final.numel(), res.adv.slice(start));
    for (size_t i = 0; i < r.per_iter_loss.size(); ++i) res.per_iter_loss[i] += r.per_iter_loss[i];
    res.craft_seconds += r.elapsed_seconds * n;
    res.zero_grad_events += r.zero_grad_events;
  }
  res.per_image_seconds = N > 0 ? res.craft_seconds / N : 0.0;
  return res;
}

std::optional<double> TransferReport::cell(const std::string& attack, const std::string& surrogate,
                                           const std::string& target) const {
  for (const auto& c : cells)
    if (!c.failed && c.attack == attack && c.surrogate == surrogate && c.target == target) return c.success;
  return std::nullopt;
}

TransferReport run_transfer_matrix(const models::Registry& reg, const EvalDataset& ds, const attack::RunConfig& base,
                                   const MatrixOptions& opt, std::map<std::string, TensorF>* crafted) {
  TransferReport rep;
  rep.dataset_id = ds.id;
  rep.config_snapshot = attack::serialize_run_config(base);

  for (const auto& surrogate_name : opt.surrogates) {
    attack::Model<float> surrogate = models::load_model(reg, surrogate_name);
    for (const auto& attack_name : opt.attacks) {
      attack::AttackConfig acfg;
      if (attack_name == "custom") {
        acfg = base.atk;
      } else {
        // canonical pipeline under the run's shared protocol scalars
        acfg = attack::expand_pipeline(attack_name, base.mode);
        acfg.epsilon = base.atk.epsilon;
        acfg.eta = base.atk.eta;
        acfg.mu = base.atk.mu;
        acfg.iterations = base.atk.iterations;
        acfg.seed = base.atk.seed;
        acfg.batch_size = base.atk.batch_size;
      }
      try {
        acfg.validate();
        CraftResult cr = craft_adversarial(surrogate, ds, acfg);
        rep.timing.push_back({attack_name, surrogate_name, cr.per_image_seconds, cr.craft_seconds});
        if (crafted != nullptr) (*crafted)[attack_name + "@" + surrogate_name] = cr.adv;
        for (const auto& target_name : opt.targets) {
          TransferCell cell{attack_name, surrogate_name, target_name, 0.0, false, ""};
          try {
            attack::Model<float> target = models::load_model(reg, target_name);
            cell.success = targeted_success_rate(cr.adv, target, ds.target_labels);
          } catch (const std::exception& e) {
            cell.failed = true;
            cell.error = e.what();
          }
          rep.cells.push_back(std::move(cell));
        }
      } catch (const std::exception& e) {
        // crafting failed: mark the whole row
        for (const auto& target_name : opt.targets)
          rep.cells.push_back({attack_name, surrogate_name, target_name, 0.0, true, e.what()});
      }
    }
  }
  return rep;
}

void write_report_json(const TransferReport& rep, const std::string& path) {
  json j;
  j["dataset"] = rep.dataset_id;
  j["config"] = json::parse(rep.config_snapshot);
  j["cells"] = json::array();
  for (const auto& c : rep.cells) {
    json e{{"attack", c.attack}, {"surrogate", c.surrogate}, {"target", c.target}, {"success", c.success}};
    if (c.failed) {
      e["failed"] = true;
      e["error"] = c.error;
    }
    j["cells"].push_back(e);
  }
  j["timing"] = json::array();
  for (const auto& t : rep.timing)
    j["timing"].push_back({{"attack", t.attack},
                           {"surrogate", t.surrogate},
                           {"per_image_seconds", t.per_image_seconds},
                           {"craft_seconds", t.craft_seconds}});
  std::ofstream f(path);
  if (!f) throw EvalError("cannot write report: " + path);
  f << j.dump(2) << "\n";
}

TransferReport read_report_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw EvalError("cannot open report: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw EvalError("report " + path + " is not valid JSON: " + e.what());
  }
  TransferReport rep;
  rep.dataset_id = j.value("dataset", "");
  if (j.contains("config")) rep.config_snapshot = j["config"].dump(2) + "\n";
  for (const auto& e : j.value("cells", json::array())) {
    TransferCell c;
    c.attack = e.value("attack", "");
    c.surrogate = e.value("surrogate", "");
    c.target = e.value("target", "");
    c.success = e.value("success", 0.0);
    c.failed = e.value("failed", false);
    c.error = e.value("error", "");
    rep.cells.push_back(std::move(c));
  }
  for (const auto& e : j.value("timing", json::array()))
    rep.timing.push_back({e.value("attack", ""), e.value("surrogate", ""), e.value("per_image_seconds", 0.0),
                          e.value("craft_seconds", 0.0)});
  return rep;
}

void write_matrix_csv(const TransferReport& rep, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw EvalError("cannot write matrix csv: " + path);
  f << "attack,surrogate,target,success,failed\n";
  for (const auto& c : rep.cells)
    f << c.attack << "," << c.surrogate << "," << c.target << "," << c.success << "," << (c.failed ? 1 : 0) << "\n";
}

namespace {

double avg_over_targets(const std::map<std::string, double>& per_target) {
  double s = 0;
  int n = 0;
  for (const auto& [k, v] : per_target) {
    s += v;
    ++n;
  }
  return n > 0 ? s / n : 0.0;
}

}  // namespace

AblationResult run_ablation(const std::string& kind, const std::vector<double>& grid, const models::Registry& reg,
                            const EvalDataset& ds, const attack::RunConfig& base, const std::string& out_dir) {
  fs::create_directories(out_dir);
  AblationResult res;
  res.kind = kind;
  attack::Model<float> surrogate = models::load_model(reg, base.surrogate);
  std::vector<std::pair<std::string, attack::Model<float>>> targets;
  for (const auto& t : base.targets) targets.emplace_back(t, models::load_model(reg, t));
  if (targets.empty()) throw ConfigError("ablation: no targets configured");

  auto eval_adv = [&](const TensorF& adv) {
    std::map<std::string, double> out;
    for (auto& [name, model] : targets) out[name] = targeted_success_rate(adv, model, ds.target_labels);
    out["avg"] = avg_over_targets(out);  // inserted after, so avg covers targets only
    return out;
  };

  if (kind == "iterations") {
    CraftResult cr = craft_adversarial(surrogate, ds, base.atk, /*checkpoint_every=*/20);
    double cum_best = 0.0;
    for (auto& [iter, snapshot] : cr.checkpoints) {
      AblationPoint pt;
      pt.params["iterations"] = iter + 1;
      pt.success = eval_adv(snapshot);
      cum_best = std::max(cum_best, pt.success["avg"]);
      pt.success["cumulative_best_avg"] = cum_best;
      pt.per_image_seconds = cr.per_image_seconds;
      res.points.push_back(std::move(pt));
    }
  } else if (kind == "beta_sweep") {
    std::vector<double> betas = grid.empty() ? std::vector<double>{0.0, 0.005, 0.01, 0.02, 0.04} : grid;
    for (double beta : betas) {
      attack::AttackConfig c = base.atk;
      c.beta = beta;
      CraftResult cr = craft_adversarial(surrogate, ds, c);
      AblationPoint pt;
      pt.params["beta"] = beta;
      pt.success = eval_adv(cr.adv);
      pt.per_image_seconds = cr.per_image_seconds;
      res.points.push_back(std::move(pt));
    }
  } else if (kind == "p_alpha_grid") {
    std::vector<double> ps = grid.empty() ? std::vector<double>{0.05, 0.1, 0.15, 0.5, 1.0} : grid;
    for (double p : ps) {
      attack::AttackConfig c = base.atk;
      c.p = p;
      CraftResult cr = craft_adversarial(surrogate, ds, c);
      AblationPoint pt;
      pt.params["p"] = p;
      pt.params["alpha_max"] = c.alpha_max;
      pt.success = eval_adv(cr.adv);
      pt.per_image_seconds = cr.per_image_seconds;
      res.points.push_back(std::move(pt));
    }
  } else if (kind == "ensemble_size") {
    std::vector<double> ks = grid.empty() ? std::vector<double>{1, 2, 3} : grid;
    for (double kd : ks) {
      attack::AttackConfig c = base.atk;
      c.ensemble_k = static_cast<int>(kd);
      CraftResult cr = craft_adversarial(surrogate, ds, c);
      AblationPoint pt;
      pt.params["ensemble_k"] = kd;
      pt.success = eval_adv(cr.adv);
      pt.per_image_seconds = cr.per_image_seconds;
      res.points.push_back(std::move(pt));
    }
  } else {
    throw ConfigError("ablation: unknown kind '" + kind + "' (iterations|beta_sweep|p_alpha_grid|ensemble_size)");
  }

  // persist CSV
  std::string csv = (fs::path(out_dir) / ("ablation_" + kind + ".csv")).string();
  {
    std::ofstream f(csv);
    if (!f) throw EvalError("cannot write ablation csv: " + csv);
    // header from the first point
    f << "# ablation " << kind << "\n";
    std::vector<std::string> pkeys, skeys;
    for (const auto& [k, v] : res.points.front().params) pkeys.push_back(k);
    for (const auto& [k, v] : res.points.front().success) skeys.push_back(k);
    for (size_t i = 0; i < pkeys.size(); ++i) f << (i ? "," : "") << pkeys[i];
    for (const auto& k : skeys) f << ",success_" << k;
    f << ",per_image_seconds\n";
    for (const auto& pt : res.points) {
      for (size_t i = 0; i < pkeys.size(); ++i) f << (i ? "," : "") << pt.params.at(pkeys[i]);
      for (const auto& k : skeys) f << "," << pt.success.at(k);
      f << "," << pt.per_image_seconds << "\n";
    }
  }
  res.csv_path = csv;

  // plot: one series per success key over the primary parameter
  std::string primary = res.points.front().params.begin()->first;
  if (kind == "iterations") primary = "iterations";
  if (kind == "beta_sweep") primary = "beta";
  if (kind == "p_alpha_grid") primary = "p";
  if (kind == "ensemble_size") primary = "ensemble_k";
  std::vector<Series> series;
  for (const auto& [skey, _] : res.points.front().success) {
    Series s;
    s.label = skey;
    for (const auto& pt : res.points) {
      s.x.push_back(pt.params.at(primary));
      s.y.push_back(pt.success.at(skey));
    }
    series.push_back(std::move(s));
  }
  std::string svg = (fs::path(out_dir) / ("ablation_" + kind + ".svg")).string();
  write_svg_lines(svg, "ablation: " + kind, primary, "targeted success rate", series);
  res.svg_path = svg;
  return res;
}

}  // namespace ftm::harness
