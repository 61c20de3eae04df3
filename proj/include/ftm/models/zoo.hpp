#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "ftm/core/error.hpp"
#include "ftm/core/rng.hpp"
#include "ftm/nn/layers.hpp"

namespace ftm::models {

inline const std::vector<std::string>& desk_archs() {
  static const std::vector<std::string> a = {"plain16", "bnwide", "strided", "k5pool"};
  return a;
}

// Builds the raw classifier stack (no input normalization; the model handle
// prepends that). All heads are global-average-pooled so padded input sizes
// still run. Naming: convN / bnN / reluN / poolN / gap / fc.
template <class T>
nn::Sequential<T> build_arch(const std::string& arch, int num_classes) {
  using namespace nn;
  Sequential<T> net;
  auto conv = [&](int n, int ci, int co, int k, int s = 1) {
    net.add(std::make_unique<Conv2d<T>>("conv" + std::to_string(n), ci, co, k, s));
  };
  auto relu = [&](int n) { net.add(std::make_unique<ReLU<T>>("relu" + std::to_string(n))); };
  auto bn = [&](int n, int c) { net.add(std::make_unique<BatchNorm2d<T>>("bn" + std::to_string(n), c)); };
  auto maxp = [&](int n) { net.add(std::make_unique<MaxPool2d<T>>("pool" + std::to_string(n))); };
  auto avgp = [&](int n) { net.add(std::make_unique<AvgPool2d<T>>("pool" + std::to_string(n))); };
  auto head = [&](int ch) {
    net.add(std::make_unique<GlobalAvgPool<T>>("gap"));
    net.add(std::make_unique<Linear<T>>("fc", ch, num_classes));
  };

  if (arch == "plain16") {
    conv(1, 3, 16, 3), relu(1), maxp(1);
    conv(2, 16, 32, 3), relu(2), maxp(2);
    conv(3, 32, 64, 3), relu(3), maxp(3);
    conv(4, 64, 64, 3), relu(4), maxp(4);
    conv(5, 64, 96, 3), relu(5);
    conv(6, 96, 96, 3), relu(6);
    head(96);
  } else if (arch == "bnwide") {
    conv(1, 3, 24, 5), bn(1, 24), relu(1), avgp(1);
    conv(2, 24, 48, 3), bn(2, 48), relu(2), avgp(2);
    conv(3, 48, 96, 3), bn(3, 96), relu(3), avgp(3);
    conv(4, 96, 96, 3), bn(4, 96), relu(4), avgp(4);
    conv(5, 96, 128, 1), relu(5);
    conv(6, 128, 96, 3), relu(6);
    head(96);
  } else if (arch == "strided") {
    conv(1, 3, 20, 3, 2), relu(1);
    conv(2, 20, 40, 3), relu(2);
    conv(3, 40, 56, 3, 2), relu(3);
    conv(4, 56, 80, 3), relu(4);
    conv(5, 80, 96, 3, 2), relu(5);
    conv(6, 96, 112, 3, 2), relu(6);
    conv(7, 112, 112, 3), relu(7);
    conv(8, 112, 112, 3), relu(8);
    head(112);
  } else if (arch == "k5pool") {
    conv(1, 3, 16, 5), relu(1), maxp(1);
    conv(2, 16, 32, 5), relu(2), maxp(2);
    conv(3, 32, 48, 3), relu(3), maxp(3);
    conv(4, 48, 64, 3), relu(4), maxp(4);
    conv(5, 64, 64, 3), relu(5);
    conv(6, 64, 96, 1), relu(6);
    head(96);
  } else if (arch == "tiny2") {
    // Two eligible interception points at input side 32: conv5 (2x2 feature)
    // and the fc input.
    conv(1, 3, 8, 3), relu(1), maxp(1);
    conv(2, 8, 12, 3), relu(2), maxp(2);
    conv(3, 12, 16, 3), relu(3), maxp(3);
    conv(4, 16, 16, 3), relu(4), maxp(4);
    conv(5, 16, 24, 3), relu(5);
    head(24);
  } else if (arch == "fd2") {
    // Two parameterized layers; only the fc input is an eligible point.
    conv(1, 3, 8, 3), relu(1), maxp(1);
    head(8);
  } else {
    throw RegistryError("unknown architecture '" + arch + "'");
  }
  return net;
}

// He-normal weights, zero biases; BatchNorm keeps gamma=1/beta=0.
template <class T>
void init_weights(nn::Sequential<T>& net, Pcg32& rng) {
  for (auto& p : net.params()) {
    if (p.grad == nullptr) continue;  // running stats
    bool is_weight = p.name.size() > 7 && p.name.rfind(".weight") == p.name.size() - 7;
    if (!is_weight) continue;
    Tensor<T>& w = *p.value;
    int64_t fan_in = w.rank() >= 2 ? w.numel() / w.dim(0) : w.numel();
    T stddev = static_cast<T>(std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (int64_t i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(rng.normal()) * stddev;
  }
}

}  // namespace ftm::models
