#pragma once

#include <string>
#include <vector>

#include "ftm/attack/config.hpp"
#include "ftm/harness/harness.hpp"

namespace ftm::cli {

struct PrepareDeskOptions {
  uint64_t seed = 1;
  std::string out_dir;
  int train_count = 6000;
  int test_count = 1500;
  int eval_count = 256;
  int epochs = 8;
  double acc_floor = 0.90;
  std::vector<std::string> archs;  // empty = full desk zoo
  bool verbose = false;
};

// Command entry points (also used directly by tests).
std::string cmd_attack(const attack::RunConfig& cfg);  // returns the run dir
harness::TransferReport cmd_evaluate(const std::string& run_dir, const std::vector<std::string>& targets,
                                     const std::string& registry_override = "");
void cmd_prepare_desk(const PrepareDeskOptions& opt);
void cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_dir);

// argv-style driver; returns the process exit code (0 ok, 2 config error,
// 3 model/registry error, 4 evaluation failure).
int run_cli(const std::vector<std::string>& args);

}  // namespace ftm::cli
