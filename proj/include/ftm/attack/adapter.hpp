#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ftm/core/error.hpp"
#include "ftm/core/tensor.hpp"
#include "ftm/kernels/kernels.hpp"
#include "ftm/nn/layers.hpp"
#include "ftm/nn/loss.hpp"

namespace ftm::attack {

// An interception point: the input feature of one layer.
struct LayerHandle {
  std::string layer_id;
  std::vector<int> feature_shape;  // {C,H,W} or {D}

  int min_spatial_side() const {
    if (feature_shape.size() == 3) return std::min(feature_shape[1], feature_shape[2]);
    return 1;  // flattened features count as 1x1
  }
};

// Classifier behind a uniform interface. Pixel-space normalization lives in
// the first layer, so callers always work in raw [0,1] images.
template <class T>
struct Model {
  std::string name;
  std::string arch;
  int input_side = 0;
  int num_classes = 0;
  nn::Sequential<T> net;  // normalize + build_arch stack

  Model clone() const {
    Model m;
    m.name = name;
    m.arch = arch;
    m.input_side = input_side;
    m.num_classes = num_classes;
    m.net = net;
    return m;
  }

  // All interception points (inputs of conv/linear layers) in forward order,
  // for a given evaluation resolution.
  std::vector<LayerHandle> interception_points(int side) const {
    std::vector<LayerHandle> out;
    auto shapes = net.feature_shapes({3, side, side});
    for (int i = 0; i < net.size(); ++i) {
      if (!net.layer(i).feature_consumer()) continue;
      out.push_back({net.layer(i).id(), shapes[static_cast<size_t>(i)]});
    }
    return out;
  }

  Tensor<T> predict_logits(const Tensor<T>& x) {
    if (x.rank() != 4) throw InputError("predict: expected [B,C,H,W], got " + x.shape_str());
    if (x.dim(1) != 3) throw InputError("predict: channel mismatch, got " + x.shape_str());
    if (x.dim(2) != input_side || x.dim(3) != input_side) {
      Tensor<T> resized({x.dim(0), 3, input_side, input_side});
      for (int b = 0; b < x.dim(0); ++b)
        kern::resize_bilinear(x.slice(b), 3, x.dim(2), x.dim(3), input_side, input_side, resized.slice(b));
      return net.forward(resized, /*training=*/false);
    }
    return net.forward(x, /*training=*/false);
  }

  // Forward with per-layer feature transforms. Gradients flow back through
  // the hooks when net.backward() is called afterwards.
  Tensor<T> predict_with_interception(const Tensor<T>& x, const nn::HookMap<T>& hooks,
                                      std::vector<std::pair<std::string, Tensor<T>>>* capture = nullptr) {
    return net.forward(x, /*training=*/false, &hooks, capture);
  }
};

// Layers whose input feature is small enough to perturb: min spatial side at
// most input_side/16, in forward order.
template <class T>
std::vector<LayerHandle> enumerate_eligible_layers(const Model<T>& model, int input_side) {
  std::vector<LayerHandle> out;
  for (auto& h : model.interception_points(input_side))
    if (16 * h.min_spatial_side() <= input_side) out.push_back(h);
  return out;
}

// FTM-E: copies of one surrogate, each carrying its own perturbation state.
// Copies share weight values; their execution state is independent.
template <class T>
struct Ensemble {
  std::vector<Model<T>> copies;

  explicit Ensemble(const Model<T>& base, int k) {
    if (k < 1) throw ConfigError("ensemble size must be >= 1");
    for (int i = 0; i < k; ++i) copies.push_back(base.clone());
  }

  int size() const { return static_cast<int>(copies.size()); }

  // Mean of per-copy logits. hooks[i] applies to copy i (may be empty maps).
  Tensor<T> forward(const Tensor<T>& x, const std::vector<const nn::HookMap<T>*>& hooks) {
    Tensor<T> sum;
    for (size_t i = 0; i < copies.size(); ++i) {
      const nn::HookMap<T>* h = i < hooks.size() ? hooks[i] : nullptr;
      nn::HookMap<T> empty;
      Tensor<T> logits = copies[i].net.forward(x, false, h != nullptr ? h : &empty, nullptr);
      if (i == 0)
        sum = std::move(logits);
      else
        kern::vadd(sum.numel(), sum.data(), logits.data(), sum.data());
    }
    if (copies.size() > 1) kern::scale(sum.numel(), T(1) / static_cast<T>(copies.size()), sum.data());
    return sum;
  }

  // Backward of the mean: every copy receives gout/k; input gradients sum.
  Tensor<T> backward(const Tensor<T>& gout) {
    Tensor<T> scaled = gout;
    if (copies.size() > 1) kern::scale(scaled.numel(), T(1) / static_cast<T>(copies.size()), scaled.data());
    Tensor<T> gin;
    for (size_t i = 0; i < copies.size(); ++i) {
      Tensor<T> g = copies[i].net.backward(scaled, /*param_grads=*/false);
      if (i == 0)
        gin = std::move(g);
      else
        kern::vadd(gin.numel(), gin.data(), g.data(), gin.data());
    }
    return gin;
  }
};

}  // namespace ftm::attack
