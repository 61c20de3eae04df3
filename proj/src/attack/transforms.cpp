#include "ftm/attack/transforms.hpp"

#include <cmath>

#include "ftm/core/error.hpp"
#include "ftm/kernels/kernels.hpp"

namespace ftm::attack {

std::vector<double> gaussian_kernel(int kernel_size, double sigma) {
  if (kernel_size < 1 || kernel_size % 2 == 0) throw InputError("gaussian_kernel: kernel size must be odd and >= 1");
  if (sigma <= 0.0) throw InputError("gaussian_kernel: sigma must be positive");
  std::vector<double> k(static_cast<size_t>(kernel_size) * kernel_size);
  int c = kernel_size / 2;
  double sum = 0.0;
  for (int y = 0; y < kernel_size; ++y)
    for (int x = 0; x < kernel_size; ++x) {
      double d2 = (y - c) * (y - c) + (x - c) * (x - c);
      double v = std::exp(-d2 / (2.0 * sigma * sigma));
      k[static_cast<size_t>(y) * kernel_size + x] = v;
      sum += v;
    }
  for (double& v : k) v /= sum;
  return k;
}

namespace {

void check_image_batch(const TensorF& x, const char* who) {
  if (x.rank() != 4) throw InputError(std::string(who) + ": expected [B,C,H,W], got " + x.shape_str());
}

// Resize + pad with frozen draws for one batch.
struct DiDraws {
  bool applied = false;
  int pad_to = 0;
  std::vector<int> resize_to, off_y, off_x;
};

DiDraws draw_di(int batch, int side, double prob, double max_pad_ratio, Pcg32& rng, bool forced) {
  DiDraws d;
  d.pad_to = static_cast<int>(max_pad_ratio * side);
  if (d.pad_to < side) d.pad_to = side;
  d.applied = forced || (rng.next_double() < prob);
  if (!d.applied) return d;
  d.resize_to.resize(static_cast<size_t>(batch));
  d.off_y.resize(static_cast<size_t>(batch));
  d.off_x.resize(static_cast<size_t>(batch));
  for (int b = 0; b < batch; ++b) {
    int r = rng.range_int(side, d.pad_to);
    d.resize_to[static_cast<size_t>(b)] = r;
    d.off_y[static_cast<size_t>(b)] = d.pad_to > r ? rng.range_int(0, d.pad_to - r) : 0;
    d.off_x[static_cast<size_t>(b)] = d.pad_to > r ? rng.range_int(0, d.pad_to - r) : 0;
  }
  return d;
}

TensorF apply_di(const TensorF& x, const DiDraws& d) {
  if (!d.applied) return x;
  int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  TensorF out({B, C, d.pad_to, d.pad_to});
  std::vector<float> tmp;
  for (int b = 0; b < B; ++b) {
    int r = d.resize_to[static_cast<size_t>(b)];
    tmp.assign(static_cast<size_t>(C) * r * r, 0.0f);
    kern::resize_bilinear(x.slice(b), C, H, W, r, r, tmp.data());
    float* dst = out.slice(b);
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < r; ++y) {
        float* row = dst + (static_cast<int64_t>(c) * d.pad_to + d.off_y[static_cast<size_t>(b)] + y) * d.pad_to +
                     d.off_x[static_cast<size_t>(b)];
        const float* src = tmp.data() + (static_cast<int64_t>(c) * r + y) * r;
        std::copy(src, src + r, row);
      }
  }
  return out;
}

TensorF apply_di_bwd(const TensorF& g, const DiDraws& d, int B, int C, int H, int W) {
  if (!d.applied) return g;
  TensorF gx({B, C, H, W});
  std::vector<float> crop;
  for (int b = 0; b < B; ++b) {
    int r = d.resize_to[static_cast<size_t>(b)];
    crop.assign(static_cast<size_t>(C) * r * r, 0.0f);
    const float* src = g.slice(b);
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < r; ++y) {
        const float* row = src + (static_cast<int64_t>(c) * d.pad_to + d.off_y[static_cast<size_t>(b)] + y) * d.pad_to +
                           d.off_x[static_cast<size_t>(b)];
        std::copy(row, row + r, crop.data() + (static_cast<int64_t>(c) * r + y) * r);
      }
    kern::resize_bilinear_bwd(crop.data(), C, H, W, r, r, gx.slice(b));
  }
  return gx;
}

class DiStep final : public ImageStep {
 public:
  DiStep(int batch, int side, double prob, double max_pad_ratio, Pcg32& rng, bool forced)
      : draws_(draw_di(batch, side, prob, max_pad_ratio, rng, forced)) {}

  TensorF forward(const TensorF& x) override {
    in_shape_ = x.shape();
    return apply_di(x, draws_);
  }
  TensorF backward(const TensorF& g) override {
    return apply_di_bwd(g, draws_, in_shape_[0], in_shape_[1], in_shape_[2], in_shape_[3]);
  }

 private:
  DiDraws draws_;
  std::vector<int> in_shape_;
};

class RdiStep final : public ImageStep {
 public:
  RdiStep(int batch, int side, double max_pad_ratio, Pcg32& rng)
      : draws_(draw_di(batch, side, 1.0, max_pad_ratio, rng, /*forced=*/true)) {}

  TensorF forward(const TensorF& x) override {
    in_shape_ = x.shape();
    TensorF padded = apply_di(x, draws_);
    int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    TensorF out({B, C, H, W});
    for (int b = 0; b < B; ++b) kern::resize_bilinear(padded.slice(b), C, draws_.pad_to, draws_.pad_to, H, W, out.slice(b));
    return out;
  }

  TensorF backward(const TensorF& g) override {
    int B = in_shape_[0], C = in_shape_[1], H = in_shape_[2], W = in_shape_[3];
    TensorF gpad({B, C, draws_.pad_to, draws_.pad_to});
    for (int b = 0; b < B; ++b) kern::resize_bilinear_bwd(g.slice(b), C, draws_.pad_to, draws_.pad_to, H, W, gpad.slice(b));
    return apply_di_bwd(gpad, draws_, B, C, H, W);
  }

 private:
  DiDraws draws_;
  std::vector<int> in_shape_;
};

class SiFan final : public FanOutStep {
 public:
  explicit SiFan(int m) : m_(m) {}
  int copies() const override { return m_; }
  TensorF forward_copy(const TensorF& x, int j) override {
    TensorF out = x;
    kern::scale(out.numel(), std::ldexp(1.0f, -j), out.data());
    return out;
  }
  void backward_copy(const TensorF& g, int j, TensorF& gx) override {
    kern::axpy(g.numel(), std::ldexp(1.0f, -j), g.data(), gx.data());
  }

 private:
  int m_;
};

class AdmixFan final : public FanOutStep {
 public:
  AdmixFan(int batch, double w, int m2, int m1, Pcg32& rng) : w_(static_cast<float>(w)), m2_(m2), m1_(m1) {
    for (int j = 0; j < m2_; ++j) perms_.push_back(rng.permutation(batch));
  }
  int copies() const override { return m2_ * m1_; }

  TensorF forward_copy(const TensorF& x, int j) override {
    int j2 = j / m1_, j1 = j % m1_;
    const auto& perm = perms_[static_cast<size_t>(j2)];
    TensorF out = x;
    int64_t sn = x.slice_numel();
    for (int b = 0; b < x.dim(0); ++b) kern::axpy(sn, w_, x.slice(perm[static_cast<size_t>(b)]), out.slice(b));
    if (j1 > 0) kern::scale(out.numel(), std::ldexp(1.0f, -j1), out.data());
    return out;
  }

  void backward_copy(const TensorF& g, int j, TensorF& gx) override {
    int j2 = j / m1_, j1 = j % m1_;
    const auto& perm = perms_[static_cast<size_t>(j2)];
    float s = std::ldexp(1.0f, -j1);
    int64_t sn = g.slice_numel();
    for (int b = 0; b < g.dim(0); ++b) {
      kern::axpy(sn, s, g.slice(b), gx.slice(b));
      // mixing term: copy b read from image perm[b]
      kern::axpy(sn, w_ * s, g.slice(b), gx.slice(perm[static_cast<size_t>(b)]));
    }
  }

 private:
  float w_;
  int m2_, m1_;
  std::vector<std::vector<int>> perms_;
};

}  // namespace

TensorF di_transform(const TensorF& x, double prob, Pcg32& rng, double max_pad_ratio) {
  check_image_batch(x, "di_transform");
  if (prob < 0.0 || prob > 1.0) throw InputError("di_transform: prob must be in [0, 1]");
  if (x.dim(2) != x.dim(3)) throw InputError("di_transform: expected square images");
  DiStep step(x.dim(0), x.dim(2), prob, max_pad_ratio, rng, false);
  return step.forward(x);
}

TensorF rdi_transform(const TensorF& x, Pcg32& rng, double max_pad_ratio) {
  check_image_batch(x, "rdi_transform");
  if (x.dim(2) != x.dim(3)) throw InputError("rdi_transform: expected square images");
  RdiStep step(x.dim(0), x.dim(2), max_pad_ratio, rng);
  return step.forward(x);
}

TensorF ti_smooth(const TensorF& g, int kernel_size, double sigma) {
  check_image_batch(g, "ti_smooth");
  if (kernel_size % 2 == 0) throw InputError("ti_smooth: kernel size must be odd");
  if (kernel_size <= 1) return g;
  std::vector<double> kd = gaussian_kernel(kernel_size, sigma);
  std::vector<float> kf(kd.begin(), kd.end());
  TensorF out(g.shape());
  for (int b = 0; b < g.dim(0); ++b)
    kern::depthwise_same_conv(g.slice(b), g.dim(1), g.dim(2), g.dim(3), kf.data(), kernel_size, out.slice(b));
  return out;
}

std::vector<TensorF> si_copies(const TensorF& x, int m) {
  check_image_batch(x, "si_copies");
  if (m < 1) throw InputError("si_copies: m must be >= 1");
  SiFan fan(m);
  std::vector<TensorF> out;
  for (int j = 0; j < m; ++j) out.push_back(fan.forward_copy(x, j));
  return out;
}

std::vector<TensorF> admix_copies(const TensorF& x, const TensorF& pool, double w, int m2, int m1, Pcg32& rng) {
  check_image_batch(x, "admix_copies");
  if (pool.numel() == 0 || pool.dim(0) == 0) throw InputError("admix_copies: empty pool");
  if (pool.slice_numel() != x.slice_numel()) throw InputError("admix_copies: pool shape mismatch");
  if (m2 < 1 || m1 < 1) throw InputError("admix_copies: m2 and m1 must be >= 1");
  std::vector<TensorF> out;
  float wf = static_cast<float>(w);
  int64_t sn = x.slice_numel();
  for (int j2 = 0; j2 < m2; ++j2) {
    std::vector<int> pick(static_cast<size_t>(x.dim(0)));
    for (int b = 0; b < x.dim(0); ++b) pick[static_cast<size_t>(b)] = static_cast<int>(rng.bounded(static_cast<uint32_t>(pool.dim(0))));
    for (int j1 = 0; j1 < m1; ++j1) {
      TensorF copy = x;
      for (int b = 0; b < x.dim(0); ++b) kern::axpy(sn, wf, pool.slice(pick[static_cast<size_t>(b)]), copy.slice(b));
      if (j1 > 0) kern::scale(copy.numel(), std::ldexp(1.0f, -j1), copy.data());
      out.push_back(std::move(copy));
    }
  }
  return out;
}

std::pair<TensorF, TensorF> vt_gradient(const std::function<TensorF(const TensorF&)>& loss_grad_fn, const TensorF& x,
                                        const TensorF& g_at_x, int n_samples, double bound, const TensorF& v_prev,
                                        Pcg32& rng) {
  if (n_samples < 1) throw InputError("vt_gradient: n_samples must be >= 1");
  TensorF g_used = g_at_x;
  if (!v_prev.empty()) kern::axpy(g_used.numel(), 1.0f, v_prev.data(), g_used.data());
  TensorF v_new(x.shape());
  TensorF neighbor(x.shape());
  float b = static_cast<float>(bound);
  for (int s = 0; s < n_samples; ++s) {
    for (int64_t i = 0; i < x.numel(); ++i) neighbor[i] = x[i] + rng.uniform(-b, b);
    TensorF gn = loss_grad_fn(neighbor);
    kern::axpy(v_new.numel(), 1.0f, gn.data(), v_new.data());
  }
  kern::scale(v_new.numel(), 1.0f / static_cast<float>(n_samples), v_new.data());
  kern::axpy(v_new.numel(), -1.0f, g_at_x.data(), v_new.data());
  return {std::move(g_used), std::move(v_new)};
}

Pipeline build_pipeline(const std::vector<TransformSpec>& specs, int batch, int height, int width, Pcg32& transform_rng,
                        Pcg32& admix_rng) {
  if (height != width) throw InputError("build_pipeline: expected square images");
  Pipeline p;
  for (const auto& t : specs) {
    if (t.kind == "identity" || t.kind == "ti" || t.kind == "vt") continue;  // ti/vt handled by the attack loop
    if (t.kind == "di") {
      p.steps.push_back(std::make_unique<DiStep>(batch, height, t.di_prob, t.max_pad_ratio, transform_rng, false));
    } else if (t.kind == "rdi") {
      p.steps.push_back(std::make_unique<RdiStep>(batch, height, t.max_pad_ratio, transform_rng));
    } else if (t.kind == "si") {
      if (p.fan) throw ConfigError("transform pipeline: only one multi-copy stage supported");
      p.fan = std::make_unique<SiFan>(t.si_copies);
    } else if (t.kind == "admix") {
      if (p.fan) throw ConfigError("transform pipeline: only one multi-copy stage supported");
      p.fan = std::make_unique<AdmixFan>(batch, t.admix_weight, t.admix_count, t.admix_scales, admix_rng);
    } else {
      throw ConfigError("transform pipeline: unknown kind '" + t.kind + "'");
    }
  }
  return p;
}

}  // namespace ftm::attack
