#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "ftm/attack/config.hpp"
#include "ftm/core/rng.hpp"
#include "ftm/core/tensor.hpp"

namespace ftm::attack {

// ---------------------------------------------------------------------------
// Standalone transform operations.

// Gaussian smoothing kernel, normalized to sum 1 (computed in double).
std::vector<double> gaussian_kernel(int kernel_size, double sigma);

// Random resize (per image, to a side in [H, floor(ratio*H)]) + random-offset
// zero padding, fired with probability `prob` per batch. Output side is
// floor(ratio*H) when fired, unchanged otherwise.
TensorF di_transform(const TensorF& x, double prob, Pcg32& rng, double max_pad_ratio = 1.1);

// DI with prob=1, rescaled back to the input size.
TensorF rdi_transform(const TensorF& x, Pcg32& rng, double max_pad_ratio = 1.1);

// Depthwise Gaussian smoothing of a gradient tensor. kernel_size must be odd;
// kernel_size 1 is the identity.
TensorF ti_smooth(const TensorF& g, int kernel_size, double sigma);

// [x / 2^i for i in 0..m-1]
std::vector<TensorF> si_copies(const TensorF& x, int m);

// m2*m1 copies (x + w*pool[perm_j]) / 2^i; pool rows are drawn by shuffling.
std::vector<TensorF> admix_copies(const TensorF& x, const TensorF& pool, double w, int m2, int m1, Pcg32& rng);

// Gradient variance tuning: returns (g(x) + v_prev, v_new) where v_new is the
// mean gradient over N uniform neighbors of x minus g(x). The caller threads
// v across iterations. loss_grad_fn(x) -> dL/dx and g_at_x is the already
// computed gradient at x (so no extra pass is spent on it).
std::pair<TensorF, TensorF> vt_gradient(const std::function<TensorF(const TensorF&)>& loss_grad_fn, const TensorF& x,
                                        const TensorF& g_at_x, int n_samples, double bound, const TensorF& v_prev,
                                        Pcg32& rng);

// ---------------------------------------------------------------------------
// Differentiable per-iteration pipeline. Random draws are frozen at build
// time so forward and backward see the same transformation.

class ImageStep {
 public:
  virtual ~ImageStep() = default;
  virtual TensorF forward(const TensorF& x) = 0;
  virtual TensorF backward(const TensorF& g) = 0;  // adjoint w.r.t. the input
};

// Multi-copy stage (SI / Admix): the attack averages gradients over copies.
class FanOutStep {
 public:
  virtual ~FanOutStep() = default;
  virtual int copies() const = 0;
  virtual TensorF forward_copy(const TensorF& x, int j) = 0;
  // Accumulates the adjoint of copy j into gx (same shape as x).
  virtual void backward_copy(const TensorF& g, int j, TensorF& gx) = 0;
};

struct Pipeline {
  std::vector<std::unique_ptr<ImageStep>> steps;
  std::unique_ptr<FanOutStep> fan;

  int copies() const { return fan ? fan->copies() : 1; }

  TensorF forward_base(const TensorF& x) {
    TensorF cur = x;
    for (auto& s : steps) cur = s->forward(cur);
    return cur;
  }
  TensorF backward_base(const TensorF& g) {
    TensorF cur = g;
    for (size_t i = steps.size(); i-- > 0;) cur = steps[i]->backward(cur);
    return cur;
  }
};

// Instantiates the image-space part of the transform list for one iteration,
// consuming draws from transform_rng (di/rdi) and admix_rng (pool shuffles).
Pipeline build_pipeline(const std::vector<TransformSpec>& specs, int batch, int height, int width,
                        Pcg32& transform_rng, Pcg32& admix_rng);

}  // namespace ftm::attack
