#pragma once

#include <string>
#include <vector>

#include "ftm/core/tensor.hpp"

namespace ftm::harness {

struct EvalDataset {
  std::string id;
  TensorF images;  // [N,3,H,W], values in [0,1]
  std::vector<int> true_labels;
  std::vector<int> target_labels;
  std::vector<std::string> image_paths;

  int size() const { return images.empty() ? 0 : images.dim(0); }
};

// Manifest CSV with columns (image_path, true_label, target_label); paths are
// relative to the manifest. Rows violating target != true, malformed rows and
// missing files are reported with their row number.
EvalDataset load_dataset(const std::string& manifest_path);

// Writes per-image .npy files plus the manifest. Returns the manifest path.
std::string save_dataset(const std::string& dir, const std::string& name, const TensorF& images,
                         const std::vector<int>& true_labels, const std::vector<int>& target_labels);

EvalDataset slice_dataset(const EvalDataset& ds, int count);

}  // namespace ftm::harness
