#pragma once

#include <cstdint>
#include <vector>

#include "ftm/core/tensor.hpp"
#include "ftm/nn/layers.hpp"

namespace ftm::train {

struct TrainConfig {
  int epochs = 8;
  int batch_size = 64;
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int shift_px = 3;    // random translate augmentation
  bool hflip = true;
  uint64_t seed = 0;
  bool verbose = false;
};

struct TrainReport {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_test_acc;
  double final_test_acc = 0.0;
};

// SGD with momentum and cosine learning-rate decay on the raw classifier
// stack; inputs are normalized with (mean, stdev) before the first layer.
TrainReport train_classifier(nn::Sequential<float>& net, const TensorF& train_x, const std::vector<int>& train_y,
                             const TensorF& test_x, const std::vector<int>& test_y, const TrainConfig& cfg,
                             const std::vector<float>& mean, const std::vector<float>& stdev);

// Top-1 accuracy of a raw classifier stack on normalized inputs.
double evaluate_accuracy(nn::Sequential<float>& net, const TensorF& x, const std::vector<int>& y,
                         const std::vector<float>& mean, const std::vector<float>& stdev, int batch_size = 128);

}  // namespace ftm::train
