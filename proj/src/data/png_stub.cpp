#include "ftm/data/png_io.hpp"

#include "ftm/core/error.hpp"

namespace ftm::data {

bool png_supported() { return false; }

void write_png_rgb(const std::string& path, const TensorF&) {
  throw EvalError("png export requested but PNG support was not built (" + path + ")");
}

}  // namespace ftm::data
