#pragma once

#include <string>

#include "ftm/core/tensor.hpp"

namespace ftm::data {

// Minimal NPY v1.0 float32 C-order reader/writer.
void save_npy(const std::string& path, const TensorF& t);
TensorF load_npy(const std::string& path);

}  // namespace ftm::data
