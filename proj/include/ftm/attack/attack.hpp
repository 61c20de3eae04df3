#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ftm/attack/adapter.hpp"
#include "ftm/attack/config.hpp"
#include "ftm/attack/mixup.hpp"
#include "ftm/core/tensor.hpp"
#include "ftm/kernels/kernels.hpp"
#include "ftm/nn/loss.hpp"

namespace ftm::attack {

template <class T>
struct AttackState {
  Tensor<T> x_adv;
  Tensor<T> g_momentum;
  int iter = 0;
};

struct AdvResult {
  TensorF x_adv_final;
  std::vector<double> per_iter_loss;  // batch-summed logit loss, one per iteration
  double elapsed_seconds = 0.0;       // craft wall time per image
  int zero_grad_events = 0;           // images whose gradient L1 norm was zero
};

// g_tilde = mu * g_prev + g_new / ||g_new||_1, the L1 norm taken over each
// image's full tensor. A zero gradient skips the normalization (the momentum
// term alone carries over); zero_flags counts those images.
template <class T>
Tensor<T> momentum_update(const Tensor<T>& g_prev, const Tensor<T>& g_new, double mu, int* zero_flags = nullptr) {
  if (!g_prev.same_shape(g_new)) throw InputError("momentum_update: shape mismatch");
  Tensor<T> out(g_prev.shape());
  int64_t n = g_prev.slice_numel();
  for (int b = 0; b < g_prev.dim(0); ++b) {
    T* dst = out.slice(b);
    kern::axpy(n, static_cast<T>(mu), g_prev.slice(b), dst);
    T l1 = kern::asum(n, g_new.slice(b));
    if (l1 == T(0)) {
      if (zero_flags != nullptr) ++(*zero_flags);
      continue;
    }
    kern::axpy(n, T(1) / l1, g_new.slice(b), dst);
  }
  return out;
}

// x' = clamp(clamp(x_adv - eta*sign(g_tilde), x_ref-eps, x_ref+eps), 0, 1).
// The ball clamp guarantees |x' - x_ref| <= eps exactly (see eps_ball_clamp).
template <class T>
Tensor<T> step_and_clip(const Tensor<T>& x_adv, const Tensor<T>& g_tilde, const Tensor<T>& x_ref, double eta,
                        double epsilon) {
  if (!x_adv.same_shape(g_tilde) || !x_adv.same_shape(x_ref)) throw InputError("step_and_clip: shape mismatch");
  Tensor<T> out = x_adv;
  kern::sign_step(out.numel(), static_cast<T>(eta), g_tilde.data(), out.data());
  kern::eps_ball_clamp(out.numel(), x_ref.data(), static_cast<T>(epsilon), out.data());
  return out;
}

// Called after each completed iteration with the current adversarial batch.
using IterCallback = std::function<void(int iter, const TensorF& x_adv)>;

// Runs the full momentum-iterative attack (input transforms, feature mixup,
// learned perturbation updates, ensemble) on one batch. Deterministic given
// (cfg.seed, batch_index); independent batches use disjoint streams.
AdvResult run_attack(const Model<float>& surrogate, const TensorF& x, const std::vector<int>& y_t,
                     const AttackConfig& cfg, uint64_t batch_index = 0, const IterCallback& callback = nullptr);

}  // namespace ftm::attack
