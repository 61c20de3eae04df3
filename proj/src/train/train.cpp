#include "ftm/train/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "ftm/core/rng.hpp"
#include "ftm/nn/loss.hpp"

namespace ftm::train {

namespace {

constexpr double kPi = 3.14159265358979323846;

void normalize_into(const TensorF& src, TensorF& dst, const std::vector<float>& mean, const std::vector<float>& stdev) {
  int B = src.dim(0), C = src.dim(1);
  int64_t hw = static_cast<int64_t>(src.dim(2)) * src.dim(3);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const float* s = src.data() + (static_cast<int64_t>(b) * C + c) * hw;
      float* d = dst.data() + (static_cast<int64_t>(b) * C + c) * hw;
      float m = mean[static_cast<size_t>(c)], inv = 1.0f / stdev[static_cast<size_t>(c)];
      for (int64_t i = 0; i < hw; ++i) d[i] = (s[i] - m) * inv;
    }
}

// Shift with edge clamp + optional horizontal flip, writing into dst slice.
void augment_image(const float* src, float* dst, int C, int H, int W, int dy, int dx, bool flip) {
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y) {
      int sy = std::clamp(y + dy, 0, H - 1);
      for (int x = 0; x < W; ++x) {
        int sx = std::clamp(x + dx, 0, W - 1);
        int rx = flip ? (W - 1 - sx) : sx;
        dst[(static_cast<int64_t>(c) * H + y) * W + x] = src[(static_cast<int64_t>(c) * H + sy) * W + rx];
      }
    }
}

}  // namespace

double evaluate_accuracy(nn::Sequential<float>& net, const TensorF& x, const std::vector<int>& y,
                         const std::vector<float>& mean, const std::vector<float>& stdev, int batch_size) {
  int N = x.dim(0);
  int correct = 0;
  for (int start = 0; start < N; start += batch_size) {
    int n = std::min(batch_size, N - start);
    TensorF batch({n, x.dim(1), x.dim(2), x.dim(3)});
    std::copy(x.slice(start), x.slice(start) + static_cast<int64_t>(n) * x.slice_numel(), batch.data());
    TensorF norm(batch.shape());
    normalize_into(batch, norm, mean, stdev);
    TensorF logits = net.forward(norm, /*training=*/false);
    std::vector<int> pred = nn::argmax_rows(logits);
    for (int i = 0; i < n; ++i)
      if (pred[static_cast<size_t>(i)] == y[static_cast<size_t>(start + i)]) ++correct;
  }
  return static_cast<double>(correct) / N;
}

TrainReport train_classifier(nn::Sequential<float>& net, const TensorF& train_x, const std::vector<int>& train_y,
                             const TensorF& test_x, const std::vector<int>& test_y, const TrainConfig& cfg,
                             const std::vector<float>& mean, const std::vector<float>& stdev) {
  TrainReport report;
  int N = train_x.dim(0);
  int C = train_x.dim(1), H = train_x.dim(2), W = train_x.dim(3);
  Pcg32 rng = stream_rng(cfg.seed, "train");

  // momentum buffers parallel to params
  auto params = net.params();
  std::vector<TensorF> velocity;
  for (auto& p : params) velocity.emplace_back(p.grad != nullptr ? p.value->shape() : std::vector<int>{1});

  int steps_per_epoch = (N + cfg.batch_size - 1) / cfg.batch_size;
  int total_steps = steps_per_epoch * cfg.epochs;
  int step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int> order = rng.permutation(N);
    double epoch_loss = 0.0;
    int batches = 0;
    for (int start = 0; start < N; start += cfg.batch_size, ++step, ++batches) {
      int n = std::min(cfg.batch_size, N - start);
      TensorF batch({n, C, H, W});
      std::vector<int> labels(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) {
        int src = order[static_cast<size_t>(start + i)];
        int dy = cfg.shift_px > 0 ? rng.range_int(-cfg.shift_px, cfg.shift_px) : 0;
        int dx = cfg.shift_px > 0 ? rng.range_int(-cfg.shift_px, cfg.shift_px) : 0;
        bool flip = cfg.hflip && rng.next_double() < 0.5;
        augment_image(train_x.slice(src), batch.slice(i), C, H, W, dy, dx, flip);
        labels[static_cast<size_t>(i)] = train_y[static_cast<size_t>(src)];
      }
      TensorF norm(batch.shape());
      normalize_into(batch, norm, mean, stdev);

      net.zero_grads();
      TensorF logits = net.forward(norm, /*training=*/true);
      TensorF lgrad;
      double loss = nn::softmax_xent_mean(logits, labels, &lgrad);
      epoch_loss += loss;
      net.backward(lgrad, /*param_grads=*/true);

      double lr_t = cfg.lr * 0.5 * (1.0 + std::cos(kPi * step / std::max(1, total_steps)));
      for (size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = params[pi];
        if (p.grad == nullptr) continue;
        TensorF& v = velocity[pi];
        float m = static_cast<float>(cfg.momentum), wd = static_cast<float>(cfg.weight_decay);
        float lr = static_cast<float>(lr_t);
        for (int64_t i = 0; i < p.value->numel(); ++i) {
          float g = (*p.grad)[i] + wd * (*p.value)[i];
          v[i] = m * v[i] + g;
          (*p.value)[i] -= lr * v[i];
        }
      }
    }
    report.epoch_loss.push_back(epoch_loss / std::max(1, batches));
    double acc = evaluate_accuracy(net, test_x, test_y, mean, stdev);
    report.epoch_test_acc.push_back(acc);
    if (cfg.verbose)
      std::fprintf(stderr, "[train] epoch %d/%d loss %.4f test_acc %.4f\n", epoch + 1, cfg.epochs,
                   report.epoch_loss.back(), acc);
  }
  report.final_test_acc = report.epoch_test_acc.empty() ? 0.0 : report.epoch_test_acc.back();
  return report;
}

}  // namespace ftm::train
