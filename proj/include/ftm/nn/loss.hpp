#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ftm/core/error.hpp"
#include "ftm/core/tensor.hpp"

namespace ftm::nn {

template <class T>
void check_labels(const Tensor<T>& logits, const std::vector<int>& y) {
  if (logits.rank() != 2) throw InputError("loss: logits must be [B, num_classes]");
  if (static_cast<int>(y.size()) != logits.dim(0)) throw InputError("loss: label count does not match batch");
  for (size_t b = 0; b < y.size(); ++b)
    if (y[b] < 0 || y[b] >= logits.dim(1))
      throw InputError("loss: target label " + std::to_string(y[b]) + " out of range at row " + std::to_string(b));
}

// L[b] = -logits[b, y[b]]. Minimizing L drives the selected logit up.
template <class T>
std::vector<T> logit_loss(const Tensor<T>& logits, const std::vector<int>& y) {
  check_labels(logits, y);
  std::vector<T> out(y.size());
  for (size_t b = 0; b < y.size(); ++b) out[b] = -logits.at(static_cast<int>(b), y[b]);
  return out;
}

// Gradient of sum_b L[b] with respect to the logits. Sum reduction keeps each
// image's gradient independent of batch size.
template <class T>
Tensor<T> logit_loss_grad(const Tensor<T>& logits, const std::vector<int>& y) {
  check_labels(logits, y);
  Tensor<T> g(logits.shape());
  for (size_t b = 0; b < y.size(); ++b) g.at(static_cast<int>(b), y[b]) = T(-1);
  return g;
}

// Mean softmax cross-entropy; fills grad (d mean-loss / d logits) when given.
template <class T>
T softmax_xent_mean(const Tensor<T>& logits, const std::vector<int>& y, Tensor<T>* grad = nullptr) {
  check_labels(logits, y);
  int B = logits.dim(0), C = logits.dim(1);
  if (grad != nullptr) *grad = Tensor<T>(logits.shape());
  T total = T(0);
  std::vector<T> p(static_cast<size_t>(C));
  for (int b = 0; b < B; ++b) {
    T mx = logits.at(b, 0);
    for (int c = 1; c < C; ++c) mx = std::max(mx, logits.at(b, c));
    T z = T(0);
    for (int c = 0; c < C; ++c) {
      p[static_cast<size_t>(c)] = std::exp(logits.at(b, c) - mx);
      z += p[static_cast<size_t>(c)];
    }
    total += -(logits.at(b, y[static_cast<size_t>(b)]) - mx - std::log(z));
    if (grad != nullptr) {
      for (int c = 0; c < C; ++c) {
        T q = p[static_cast<size_t>(c)] / z;
        grad->at(b, c) = (q - (c == y[static_cast<size_t>(b)] ? T(1) : T(0))) / static_cast<T>(B);
      }
    }
  }
  return total / static_cast<T>(B);
}

template <class T>
std::vector<int> argmax_rows(const Tensor<T>& logits) {
  std::vector<int> out(static_cast<size_t>(logits.dim(0)));
  for (int b = 0; b < logits.dim(0); ++b) {
    int best = 0;
    for (int c = 1; c < logits.dim(1); ++c)
      if (logits.at(b, c) > logits.at(b, best)) best = c;
    out[static_cast<size_t>(b)] = best;
  }
  return out;
}

}  // namespace ftm::nn
