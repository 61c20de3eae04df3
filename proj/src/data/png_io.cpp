#include "ftm/data/png_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

#include <png.h>

#include "ftm/core/error.hpp"

namespace ftm::data {

bool png_supported() { return true; }

void write_png_rgb(const std::string& path, const TensorF& image) {
  if (image.rank() != 3 || image.dim(0) != 3) throw InputError("write_png_rgb: expected [3,H,W]");
  int H = image.dim(1), W = image.dim(2);
  std::vector<unsigned char> rows(static_cast<size_t>(H) * W * 3);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c) {
        float v = image[(static_cast<int64_t>(c) * H + y) * W + x];
        rows[(static_cast<size_t>(y) * W + x) * 3 + static_cast<size_t>(c)] =
            static_cast<unsigned char>(std::clamp(std::lround(v * 255.0f), 0L, 255L));
      }

  FILE* fp = std::fopen(path.c_str(), "wb");
  if (fp == nullptr) throw EvalError("cannot write png: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw EvalError("libpng failure writing " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(W), static_cast<png_uint_32>(H), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < H; ++y) png_write_row(png, rows.data() + static_cast<size_t>(y) * W * 3);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

}  // namespace ftm::data
