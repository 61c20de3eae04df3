#pragma once

#include <string>

#include "ftm/core/tensor.hpp"

namespace ftm::data {

// True when PNG support was compiled in (libpng found at configure time).
bool png_supported();

// Quantizes a [3,H,W] float image in [0,1] to 8-bit RGB and writes it. The
// quantization is lossy: round-tripping does not preserve perturbation-ball
// membership, which is why crafted tensors are stored as .npy.
void write_png_rgb(const std::string& path, const TensorF& image);

}  // namespace ftm::data
