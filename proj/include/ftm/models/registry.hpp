#pragma once

#include <string>
#include <vector>

#include "ftm/attack/adapter.hpp"

namespace ftm::models {

struct ModelSpec {
  std::string name;
  std::string arch;
  std::string weights;  // path, relative to the registry file's directory
  int input_side = 0;
  int num_classes = 0;
  std::vector<float> mean;  // per-channel, applied inside the handle
  std::vector<float> std;
  std::string interception = "auto";  // "auto": inputs of conv/linear layers
  double test_accuracy = 0.0;
};

struct Registry {
  std::string path;  // file this registry was loaded from
  std::vector<ModelSpec> models;

  const ModelSpec& find(const std::string& name) const;
  std::vector<std::string> names() const;
};

Registry load_registry(const std::string& path);
void save_registry(const Registry& reg, const std::string& path);

// Builds the architecture, prepends the normalizer, loads weights.
attack::Model<float> load_model(const Registry& reg, const std::string& name);

// Assembles an in-memory model from a spec plus an existing net (training).
attack::Model<float> wrap_model(const ModelSpec& spec, nn::Sequential<float> raw_net);

}  // namespace ftm::models
