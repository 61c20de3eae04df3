#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ftm/core/tensor.hpp"

namespace ftm::data {

// Procedurally rendered 10-class shape images: class-defining geometry over a
// smooth random background, with random color/pose/scale, an occasional
// distractor shape and pixel noise. Fully reproducible from (seed, split,
// index); splits are independent streams, so train/test/eval never collide.
struct ShapesConfig {
  int side = 48;
  int num_classes = 10;
  double noise_sigma = 0.05;
  double distractor_prob = 0.5;
  double min_contrast = 0.35;  // fg-to-bg RGB distance floor
  uint64_t seed = 1234;
};

extern const char* const kShapeClassNames[10];

// One [3,side,side] image in [0,1]; the label is index % num_classes.
TensorF render_shape_image(const ShapesConfig& cfg, const std::string& split, uint64_t index, int* label_out);

// count images stacked as [N,3,side,side] plus labels.
void generate_shapes(const ShapesConfig& cfg, const std::string& split, uint64_t start, int count, TensorF& images,
                     std::vector<int>& labels);

}  // namespace ftm::data
