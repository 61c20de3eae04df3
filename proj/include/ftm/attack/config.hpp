#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ftm::attack {

// One entry of the ordered transform list. kind-specific fields keep their
// defaults when unused; unknown kinds are rejected at validation.
struct TransformSpec {
  std::string kind;  // identity | di | rdi | ti | si | admix | vt

  double di_prob = 0.7;       // di: probability the resize+pad fires
  double max_pad_ratio = 1.1; // di/rdi: padded side = floor(ratio * H)
  int ti_kernel_size = 5;     // ti: odd kernel
  double ti_sigma = 3.0;
  int si_copies = 5;          // si: m
  double admix_weight = 0.2;  // admix: w
  int admix_count = 3;        // admix: m2 (images mixed in)
  int admix_scales = 1;       // admix: m1 (scale copies)
  int vt_samples = 5;         // vt: N
  double vt_bound = 1.5;      // vt: neighborhood radius = vt_bound * epsilon

  bool operator==(const TransformSpec&) const = default;
};

struct AttackConfig {
  double epsilon = 16.0 / 255.0;  // L-inf budget, [0,1] pixel units
  double eta = 2.0 / 255.0;       // step size
  double mu = 1.0;                // momentum decay
  int iterations = 300;           // T
  double beta = 0.0;              // learned-perturbation ratio
  double p = 0.0;                 // per-layer update probability
  double alpha_max = 0.0;         // clean mixup ratio upper bound
  int ensemble_k = 1;             // perturbed surrogate copies
  double eps_bar = 1e-12;         // stabilizer in the perturbation scaling
  std::vector<TransformSpec> transforms;
  uint64_t seed = 0;
  int batch_size = 32;

  bool operator==(const AttackConfig&) const = default;

  void validate() const;  // throws ConfigError naming the offending field

  // Feature machinery active at all? (clean mixup and/or learned deltas)
  bool feature_stage_enabled() const { return p > 0.0 && (beta > 0.0 || alpha_max > 0.0); }
};

struct RunConfig {
  std::string attack = "RDI-FTM";  // named pipeline or "custom"
  AttackConfig atk;
  std::string dataset_manifest;
  std::string registry_path;
  std::string output_dir;
  std::string mode = "desk";  // desk | full
  std::string surrogate;
  std::vector<std::string> targets;
  int max_images = 0;  // 0 = whole manifest
  bool export_png = false;

  bool operator==(const RunConfig&) const = default;

  void validate() const;
};

// Named attacks and their expansion into an AttackConfig. Momentum and TI
// smoothing are components of every named pipeline. Desk mode runs T=100,
// full mode the T=300 protocol.
std::vector<std::string> named_attacks();
AttackConfig expand_pipeline(const std::string& attack_name, const std::string& mode);

// JSON (de)serialization; parse(serialize(c)) == c. Scalar fields accept
// fraction strings like "16/255" on input.
std::string serialize_run_config(const RunConfig& cfg);
RunConfig parse_run_config_text(const std::string& text);
RunConfig load_run_config(const std::string& path);
void save_run_config(const RunConfig& cfg, const std::string& path);

// dotted-path override, e.g. set_config_field(cfg, "atk.beta", "0.02")
void set_config_field(RunConfig& cfg, const std::string& key, const std::string& value);

}  // namespace ftm::attack
