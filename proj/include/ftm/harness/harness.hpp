#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ftm/attack/attack.hpp"
#include "ftm/attack/config.hpp"
#include "ftm/harness/dataset.hpp"
#include "ftm/models/registry.hpp"

namespace ftm::harness {

// Fraction of images the target classifies as their target label.
double targeted_success_rate(const TensorF& x_adv, attack::Model<float>& target, const std::vector<int>& y_t);

struct CraftResult {
  TensorF adv;                        // [N,3,H,W]
  double craft_seconds = 0.0;         // total crafting wall time
  double per_image_seconds = 0.0;     // craft_seconds / N
  std::vector<double> per_iter_loss;  // summed over all images, length T
  int zero_grad_events = 0;
  // checkpoint snapshots of the whole set (iteration index, images)
  std::vector<std::pair<int, TensorF>> checkpoints;
};

// Runs the attack over the dataset in batches (independent RNG streams per
// batch). checkpoint_every > 0 additionally snapshots the full adversarial
// set after every that-many iterations.
CraftResult craft_adversarial(const attack::Model<float>& surrogate, const EvalDataset& ds,
                              const attack::AttackConfig& cfg, int checkpoint_every = 0,
                              const attack::IterCallback& per_batch_callback = nullptr);

struct TransferCell {
  std::string attack, surrogate, target;
  double success = 0.0;
  bool failed = false;
  std::string error;
};

struct TransferTiming {
  std::string attack, surrogate;
  double per_image_seconds = 0.0;
  double craft_seconds = 0.0;
};

struct TransferReport {
  std::string dataset_id;
  std::string config_snapshot;  // serialized RunConfig
  std::vector<TransferCell> cells;
  std::vector<TransferTiming> timing;

  bool any_failed() const {
    for (const auto& c : cells)
      if (c.failed) return true;
    return false;
  }
  std::optional<double> cell(const std::string& attack, const std::string& surrogate, const std::string& target) const;
};

struct MatrixOptions {
  std::vector<std::string> attacks;
  std::vector<std::string> surrogates;
  std::vector<std::string> targets;
  bool keep_adv = false;  // also return crafted tensors
};

// For each (attack, surrogate): craft once, evaluate on every target.
TransferReport run_transfer_matrix(const models::Registry& reg, const EvalDataset& ds, const attack::RunConfig& base,
                                   const MatrixOptions& opt,
                                   std::map<std::string, TensorF>* crafted = nullptr);

void write_report_json(const TransferReport& rep, const std::string& path);
TransferReport read_report_json(const std::string& path);
void write_matrix_csv(const TransferReport& rep, const std::string& path);

struct AblationPoint {
  std::map<std::string, double> params;  // e.g. {beta: 0.01} or {p:..., alpha_max:...}
  std::map<std::string, double> success; // per target + "avg"
  double per_image_seconds = 0.0;
};

struct AblationResult {
  std::string kind;
  std::vector<AblationPoint> points;
  std::string csv_path, svg_path;
};

// kinds: iterations | beta_sweep | p_alpha_grid | ensemble_size.
// grid semantics: beta values / p values (alpha fixed from cfg) / k values;
// unused for iterations (checkpoints every 20 iterations).
AblationResult run_ablation(const std::string& kind, const std::vector<double>& grid, const models::Registry& reg,
                            const EvalDataset& ds, const attack::RunConfig& base, const std::string& out_dir);

}  // namespace ftm::harness
