#include "ftm/data/shapes.hpp"

#include <algorithm>
#include <cmath>

#include "ftm/core/rng.hpp"

namespace ftm::data {

const char* const kShapeClassNames[10] = {"disk",  "ring",  "square", "frame",   "triangle",
                                          "plus",  "cross", "bars",   "checker", "diamond"};

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Vec2 {
  double x, y;
};

// Signed distance to the class shape in a translated/rotated pixel frame;
// negative inside. r is the nominal radius in pixels.
double shape_sdf(int cls, Vec2 q, double r) {
  double ax = std::abs(q.x), ay = std::abs(q.y);
  switch (cls) {
    case 0:  // disk
      return std::hypot(q.x, q.y) - r;
    case 1:  // ring
      return std::abs(std::hypot(q.x, q.y) - 0.72 * r) - 0.28 * r;
    case 2:  // square
      return std::max(ax, ay) - 0.85 * r;
    case 3:  // square frame
      return std::abs(std::max(ax, ay) - 0.66 * r) - 0.22 * r;
    case 4: {  // equilateral triangle, circumradius r
      double d = -1e9;
      for (int i = 0; i < 3; ++i) {
        double a = kPi / 2 + 2.0 * kPi * i / 3.0 + kPi;  // outward edge normals
        d = std::max(d, q.x * std::cos(a) + q.y * std::sin(a) - 0.5 * r);
      }
      return d;
    }
    case 5: {  // plus
      double bar1 = std::max(ax - r, ay - 0.30 * r);
      double bar2 = std::max(ay - r, ax - 0.30 * r);
      return std::min(bar1, bar2);
    }
    case 6: {  // diagonal cross: plus rotated 45 degrees
      double c = std::cos(kPi / 4), s = std::sin(kPi / 4);
      Vec2 p{c * q.x - s * q.y, s * q.x + c * q.y};
      return shape_sdf(5, p, r);
    }
    case 7: {  // three horizontal bars
      double d = 1e9;
      for (int k = -1; k <= 1; ++k) d = std::min(d, std::max(ax - r, std::abs(q.y - k * 0.72 * r) - 0.20 * r));
      return d;
    }
    case 8:  // checker-textured square (texture applied by the caller)
      return std::max(ax, ay) - 0.85 * r;
    case 9:  // diamond
      return (ax + ay) - 1.1 * r;
    default:
      return 1e9;
  }
}

struct ShapeInstance {
  int cls = 0;
  double cx = 0, cy = 0, r = 10, theta = 0;
  double color[3] = {0, 0, 0};
};

void draw_shape(TensorF& img, const ShapeInstance& s, int side) {
  double ct = std::cos(-s.theta), st = std::sin(-s.theta);
  int lo_y = std::max(0, static_cast<int>(s.cy - 1.8 * s.r)), hi_y = std::min(side - 1, static_cast<int>(s.cy + 1.8 * s.r));
  int lo_x = std::max(0, static_cast<int>(s.cx - 1.8 * s.r)), hi_x = std::min(side - 1, static_cast<int>(s.cx + 1.8 * s.r));
  for (int y = lo_y; y <= hi_y; ++y)
    for (int x = lo_x; x <= hi_x; ++x) {
      double dx = x + 0.5 - s.cx, dy = y + 0.5 - s.cy;
      Vec2 q{ct * dx - st * dy, st * dx + ct * dy};
      double d = shape_sdf(s.cls, q, s.r);
      double cov = std::clamp(0.5 - d / 1.5, 0.0, 1.0);  // ~1.5px soft edge
      if (cov <= 0.0) continue;
      if (s.cls == 8) {
        // 3px checker texture in the shape frame
        int cell = (static_cast<int>(std::floor(q.x / 3.0)) + static_cast<int>(std::floor(q.y / 3.0))) & 1;
        if (cell == 0) cov *= 0.15;
      }
      for (int c = 0; c < 3; ++c) {
        float& px = img.at(0, c, y, x);
        px = static_cast<float>((1.0 - cov) * px + cov * s.color[c]);
      }
    }
}

}  // namespace

TensorF render_shape_image(const ShapesConfig& cfg, const std::string& split, uint64_t index, int* label_out) {
  int side = cfg.side;
  Pcg32 rng = stream_rng(cfg.seed, "shapes." + split, index);
  int cls = static_cast<int>(index % static_cast<uint64_t>(cfg.num_classes));
  if (label_out != nullptr) *label_out = cls;

  TensorF img({1, 3, side, side});

  // Smooth background: 5x5 color control grid, bilinearly upsampled.
  constexpr int G = 5;
  double grid[3][G][G];
  double base[3];
  for (int c = 0; c < 3; ++c) base[c] = rng.uniform(0.15, 0.85);
  for (int gy = 0; gy < G; ++gy)
    for (int gx = 0; gx < G; ++gx)
      for (int c = 0; c < 3; ++c)
        grid[c][gy][gx] = std::clamp(base[c] + rng.uniform(-0.28, 0.28), 0.02, 0.98);
  double mean_bg[3] = {0, 0, 0};
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      double fy = (y + 0.5) / side * (G - 1), fx = (x + 0.5) / side * (G - 1);
      int y0 = std::min(static_cast<int>(fy), G - 2), x0 = std::min(static_cast<int>(fx), G - 2);
      double wy = fy - y0, wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        double v = (1 - wy) * ((1 - wx) * grid[c][y0][x0] + wx * grid[c][y0][x0 + 1]) +
                   wy * ((1 - wx) * grid[c][y0 + 1][x0] + wx * grid[c][y0 + 1][x0 + 1]);
        img.at(0, c, y, x) = static_cast<float>(v);
        mean_bg[c] += v;
      }
    }
  for (double& m : mean_bg) m /= static_cast<double>(side) * side;

  auto rot_range = [&](int c) -> double {
    // Keep rotations away from symmetries that would alias one class into
    // another (square vs diamond, plus vs cross).
    switch (c) {
      case 2: case 3: case 8: case 9: return rng.uniform(-0.32, 0.32);  // ~±18 deg
      case 5: case 6: return rng.uniform(-0.30, 0.30);
      case 7: return rng.uniform(-0.26, 0.26);
      default: return rng.uniform(0.0, 2.0 * kPi);
    }
  };

  // Optional distractor from another class, drawn under the main shape.
  if (rng.next_double() < cfg.distractor_prob) {
    ShapeInstance d;
    d.cls = (cls + 1 + static_cast<int>(rng.bounded(static_cast<uint32_t>(cfg.num_classes - 1)))) % cfg.num_classes;
    d.r = rng.uniform(3.5, 6.0);
    d.cx = rng.uniform(d.r + 2.0, side - d.r - 2.0);
    d.cy = rng.uniform(d.r + 2.0, side - d.r - 2.0);
    d.theta = rot_range(d.cls);
    for (double& c : d.color) c = rng.uniform(0.05, 0.95);
    draw_shape(img, d, side);
  }

  ShapeInstance m;
  m.cls = cls;
  m.r = rng.uniform(9.0, 15.0);
  m.cx = rng.uniform(m.r + 3.0, side - m.r - 3.0);
  m.cy = rng.uniform(m.r + 3.0, side - m.r - 3.0);
  m.theta = rot_range(cls);
  for (int tries = 0;; ++tries) {
    double d2 = 0;
    for (int c = 0; c < 3; ++c) {
      m.color[c] = rng.uniform(0.02, 0.98);
      d2 += (m.color[c] - mean_bg[c]) * (m.color[c] - mean_bg[c]);
    }
    if (std::sqrt(d2) >= cfg.min_contrast || tries > 16) break;
  }
  draw_shape(img, m, side);

  if (cfg.noise_sigma > 0) {
    for (int64_t i = 0; i < img.numel(); ++i)
      img[i] = std::clamp(img[i] + static_cast<float>(rng.normal() * cfg.noise_sigma), 0.0f, 1.0f);
  }
  return img;
}

void generate_shapes(const ShapesConfig& cfg, const std::string& split, uint64_t start, int count, TensorF& images,
                     std::vector<int>& labels) {
  images = TensorF({count, 3, cfg.side, cfg.side});
  labels.assign(static_cast<size_t>(count), 0);
  for (int i = 0; i < count; ++i) {
    int label = 0;
    TensorF one = render_shape_image(cfg, split, start + static_cast<uint64_t>(i), &label);
    std::copy(one.data(), one.data() + one.numel(), images.slice(i));
    labels[static_cast<size_t>(i)] = label;
  }
}

}  // namespace ftm::data
