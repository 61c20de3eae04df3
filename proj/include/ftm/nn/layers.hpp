#pragma once

#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ftm/core/error.hpp"
#include "ftm/core/tensor.hpp"
#include "ftm/kernels/kernels.hpp"

namespace ftm::nn {

template <class T>
struct ParamRef {
  std::string name;
  Tensor<T>* value = nullptr;
  Tensor<T>* grad = nullptr;  // null for non-trainable buffers (running stats)
};

// Transformation applied to a layer's input feature during an intercepted
// forward pass. backward() receives dL/d(output) and returns dL/d(input);
// learnable side gradients stay inside the hook.
template <class T>
class FeatureHook {
 public:
  virtual ~FeatureHook() = default;
  virtual Tensor<T> forward(const Tensor<T>& z) = 0;
  virtual Tensor<T> backward(const Tensor<T>& gout) = 0;
};

template <class T>
using HookMap = std::map<std::string, FeatureHook<T>*, std::less<>>;

template <class T>
class Layer {
 public:
  explicit Layer(std::string id) : id_(std::move(id)) {}
  virtual ~Layer() = default;

  const std::string& id() const { return id_; }
  virtual const char* kind() const = 0;

  virtual Tensor<T> forward(const Tensor<T>& in, bool training) = 0;
  // param_grads: also accumulate gradients into the layer's parameter grads
  // (training); attack passes only need the input gradient.
  virtual Tensor<T> backward(const Tensor<T>& gout, bool param_grads) = 0;

  virtual void collect_params(std::vector<ParamRef<T>>& out) { (void)out; }

  // Static shape inference on a feature shape: {C,H,W} or {D}.
  virtual std::vector<int> out_shape(const std::vector<int>& in) const { return in; }

  // True for layers whose input feature is an interception point.
  virtual bool feature_consumer() const { return false; }

  virtual std::unique_ptr<Layer<T>> clone() const = 0;

 protected:
  std::string id_;
};

template <class T>
class Normalize : public Layer<T> {
 public:
  Normalize(std::string id, std::vector<T> mean, std::vector<T> std)
      : Layer<T>(std::move(id)), mean_(std::move(mean)), std_(std::move(std)) {
    for (T s : std_)
      if (s <= T(0)) throw InputError("normalize: std must be positive");
  }
  const char* kind() const override { return "normalize"; }

  Tensor<T> forward(const Tensor<T>& in, bool) override {
    if (in.rank() != 4 || in.dim(1) != static_cast<int>(mean_.size()))
      throw InputError("normalize: channel mismatch, input " + in.shape_str());
    Tensor<T> out(in.shape());
    int B = in.dim(0), C = in.dim(1);
    int64_t hw = static_cast<int64_t>(in.dim(2)) * in.dim(3);
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c) {
        const T* src = in.data() + (static_cast<int64_t>(b) * C + c) * hw;
        T* dst = out.data() + (static_cast<int64_t>(b) * C + c) * hw;
        T m = mean_[c], inv = T(1) / std_[c];
        for (int64_t i = 0; i < hw; ++i) dst[i] = (src[i] - m) * inv;
      }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& gout, bool) override {
    Tensor<T> gin(gout.shape());
    int B = gout.dim(0), C = gout.dim(1);
    int64_t hw = static_cast<int64_t>(gout.dim(2)) * gout.dim(3);
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c) {
        const T* src = gout.data() + (static_cast<int64_t>(b) * C + c) * hw;
        T* dst = gin.data() + (static_cast<int64_t>(b) * C + c) * hw;
        T inv = T(1) / std_[c];
        for (int64_t i = 0; i < hw; ++i) dst[i] = src[i] * inv;
      }
    return gin;
  }

  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Normalize<T>>(*this); }

  const std::vector<T>& mean() const { return mean_; }
  const std::vector<T>& stdev() const { return std_; }

 private:
  std::vector<T> mean_, std_;
};

template <class T>
class Conv2d : public Layer<T> {
 public:
  Conv2d(std::string id, int in_ch, int out_ch, int k, int stride = 1, int pad = -1)
      : Layer<T>(std::move(id)), in_ch_(in_ch), out_ch_(out_ch), k_(k), stride_(stride),
        pad_(pad < 0 ? k / 2 : pad) {
    weight_ = Tensor<T>({out_ch_, in_ch_, k_, k_});
    bias_ = Tensor<T>({out_ch_});
    wgrad_ = Tensor<T>({out_ch_, in_ch_, k_, k_});
    bgrad_ = Tensor<T>({out_ch_});
  }
  const char* kind() const override { return "conv2d"; }
  bool feature_consumer() const override { return true; }

  std::vector<int> out_shape(const std::vector<int>& in) const override {
    if (in.size() != 3) throw InputError("conv2d " + this->id_ + ": expected a [C,H,W] feature");
    if (in[0] != in_ch_) throw InputError("conv2d " + this->id_ + ": channel mismatch");
    int oh = (in[1] + 2 * pad_ - k_) / stride_ + 1;
    int ow = (in[2] + 2 * pad_ - k_) / stride_ + 1;
    if (oh <= 0 || ow <= 0) throw InputError("conv2d " + this->id_ + ": feature too small");
    return {out_ch_, oh, ow};
  }

  Tensor<T> forward(const Tensor<T>& in, bool) override {
    if (in.rank() != 4 || in.dim(1) != in_ch_) throw InputError("conv2d " + this->id_ + ": bad input " + in.shape_str());
    input_ = in;
    int B = in.dim(0), H = in.dim(2), W = in.dim(3);
    int OH = (H + 2 * pad_ - k_) / stride_ + 1;
    int OW = (W + 2 * pad_ - k_) / stride_ + 1;
    int64_t ohw = static_cast<int64_t>(OH) * OW;
    int ck2 = in_ch_ * k_ * k_;
    col_.assign(static_cast<size_t>(ck2) * ohw, T(0));
    Tensor<T> out({B, out_ch_, OH, OW});
    for (int b = 0; b < B; ++b) {
      kern::im2col(in.slice(b), in_ch_, H, W, k_, stride_, pad_, col_.data());
      kern::gemm<T>(false, false, out_ch_, static_cast<int>(ohw), ck2, T(1), weight_.data(), ck2, col_.data(),
                    static_cast<int>(ohw), T(0), out.slice(b), static_cast<int>(ohw));
      T* dst = out.slice(b);
      for (int c = 0; c < out_ch_; ++c) {
        T bv = bias_[c];
        T* row = dst + static_cast<int64_t>(c) * ohw;
        for (int64_t i = 0; i < ohw; ++i) row[i] += bv;
      }
    }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& gout, bool param_grads) override {
    int B = input_.dim(0), H = input_.dim(2), W = input_.dim(3);
    int OH = gout.dim(2), OW = gout.dim(3);
    int64_t ohw = static_cast<int64_t>(OH) * OW;
    int ck2 = in_ch_ * k_ * k_;
    Tensor<T> gin(input_.shape());
    std::vector<T> dcol(static_cast<size_t>(ck2) * ohw);
    for (int b = 0; b < B; ++b) {
      kern::gemm<T>(true, false, ck2, static_cast<int>(ohw), out_ch_, T(1), weight_.data(), ck2, gout.slice(b),
                    static_cast<int>(ohw), T(0), dcol.data(), static_cast<int>(ohw));
      kern::col2im(dcol.data(), in_ch_, H, W, k_, stride_, pad_, gin.slice(b));
      if (param_grads) {
        kern::im2col(input_.slice(b), in_ch_, H, W, k_, stride_, pad_, col_.data());
        kern::gemm<T>(false, true, out_ch_, ck2, static_cast<int>(ohw), T(1), gout.slice(b), static_cast<int>(ohw),
                      col_.data(), static_cast<int>(ohw), T(1), wgrad_.data(), ck2);
        const T* g = gout.slice(b);
        for (int c = 0; c < out_ch_; ++c) {
          T s = T(0);
          const T* row = g + static_cast<int64_t>(c) * ohw;
          for (int64_t i = 0; i < ohw; ++i) s += row[i];
          bgrad_[c] += s;
        }
      }
    }
    return gin;
  }

  void collect_params(std::vector<ParamRef<T>>& out) override {
    out.push_back({this->id_ + ".weight", &weight_, &wgrad_});
    out.push_back({this->id_ + ".bias", &bias_, &bgrad_});
  }

  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Conv2d<T>>(*this); }

  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }

 private:
  int in_ch_, out_ch_, k_, stride_, pad_;
  Tensor<T> weight_, bias_, wgrad_, bgrad_;
  Tensor<T> input_;
  std::vector<T> col_;
};

template <class T>
class ReLU : public Layer<T> {
 public:
  explicit ReLU(std::string id) : Layer<T>(std::move(id)) {}
  const char* kind() const override { return "relu"; }

  Tensor<T> forward(const Tensor<T>& in, bool) override {
    input_ = in;
    Tensor<T> out(in.shape());
    kern::relu_fwd(in.data(), out.data(), in.numel());
    return out;
  }
  Tensor<T> backward(const Tensor<T>& gout, bool) override {
    Tensor<T> gin(gout.shape());
    kern::relu_bwd(input_.data(), gout.data(), gin.data(), gout.numel());
    return gin;
  }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<ReLU<T>>(*this); }

 private:
  Tensor<T> input_;
};

template <class T>
class MaxPool2d : public Layer<T> {
 public:
  MaxPool2d(std::string id, int k = 2, int stride = 2) : Layer<T>(std::move(id)), k_(k), stride_(stride) {}
  const char* kind() const override { return "maxpool"; }

  std::vector<int> out_shape(const std::vector<int>& in) const override {
    if (in.size() != 3) throw InputError("maxpool: expected [C,H,W]");
    return {in[0], (in[1] - k_) / stride_ + 1, (in[2] - k_) / stride_ + 1};
  }

  Tensor<T> forward(const Tensor<T>& in, bool) override {
    in_shape_ = in.shape();
    int B = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
    int OH = (H - k_) / stride_ + 1, OW = (W - k_) / stride_ + 1;
    Tensor<T> out({B, C, OH, OW});
    argmax_.assign(static_cast<size_t>(out.numel()), 0);
    int64_t o = 0;
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c) {
        const T* plane = in.data() + (static_cast<int64_t>(b) * C + c) * H * W;
        for (int oy = 0; oy < OH; ++oy)
          for (int ox = 0; ox < OW; ++ox, ++o) {
            int iy0 = oy * stride_, ix0 = ox * stride_;
            T best = plane[static_cast<int64_t>(iy0) * W + ix0];
            int64_t bi = static_cast<int64_t>(iy0) * W + ix0;
            for (int dy = 0; dy < k_; ++dy)
              for (int dx = 0; dx < k_; ++dx) {
                int64_t idx = static_cast<int64_t>(iy0 + dy) * W + (ix0 + dx);
                if (plane[idx] > best) {
                  best = plane[idx];
                  bi = idx;
                }
              }
            out[o] = best;
            argmax_[static_cast<size_t>(o)] = bi;
          }
      }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& gout, bool) override {
    Tensor<T> gin(in_shape_);
    int B = gout.dim(0), C = gout.dim(1);
    int64_t ohw = static_cast<int64_t>(gout.dim(2)) * gout.dim(3);
    int64_t hw = static_cast<int64_t>(in_shape_[2]) * in_shape_[3];
    int64_t o = 0;
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c) {
        T* plane = gin.data() + (static_cast<int64_t>(b) * C + c) * hw;
        for (int64_t i = 0; i < ohw; ++i, ++o) plane[argmax_[static_cast<size_t>(o)]] += gout[o];
      }
    return gin;
  }

  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<MaxPool2d<T>>(*this); }

 private:
  int k_, stride_;
  std::vector<int> in_shape_;
  std::vector<int64_t> argmax_;
};

template <class T>
class AvgPool2d : public Layer<T> {
 public:
  AvgPool2d(std::string id, int k = 2, int stride = 2) : Layer<T>(std::move(id)), k_(k), stride_(stride) {}
  const char* kind() const override { return "avgpool"; }

  std::vector<int> out_shape(const std::vector<int>& in) const override {
    if (in.size() != 3) throw InputError("avgpool: expected [C,H,W]");
    return {in[0], (in[1] - k_) / stride_ + 1, (in[2] - k_) / stride_ + 1};
  }

  Tensor<T> forward(const Tensor<T>& in, bool) override {
    in_shape_ = in.shape();
    int B = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
    int OH = (H - k_) / stride_ + 1, OW = (W - k_) / stride_ + 1;
    T inv = T(1) / static_cast<T>(k_ * k_);
    Tensor<T> out({B, C, OH, OW});
    int64_t o = 0;
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c) {
        const T* plane = in.data() + (static_cast<int64_t>(b) * C + c) * H * W;
        for (int oy = 0; oy < OH; ++oy)
          for (int ox = 0; ox < OW; ++ox, ++o) {
            T s = T(0);
            for (int dy = 0; dy < k_; ++dy)
              for (int dx = 0; dx < k_; ++dx) s += plane[static_cast<int64_t>(oy * stride_ + dy) * W + ox * stride_ + dx];
            out[o] = s * inv;
          }
      }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& gout, bool) override {
    Tensor<T> gin(in_shape_);
    int B = gout.dim(0), C = gout.dim(1), OH = gout.dim(2), OW = gout.dim(3);
    int H = in_shape_[2], W = in_shape_[3];
    T inv = T(1) / static_cast<T>(k_ * k_);
    int64_t o = 0;
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c) {
        T* plane = gin.data() + (static_cast<int64_t>(b) * C + c) * H * W;
        for (int oy = 0; oy < OH; ++oy)
          for (int ox = 0; ox < OW; ++ox, ++o) {
            T g = gout[o] * inv;
            for (int dy = 0; dy < k_; ++dy)
              for (int dx = 0; dx < k_; ++dx) plane[static_cast<int64_t>(oy * stride_ + dy) * W + ox * stride_ + dx] += g;
          }
      }
    return gin;
  }

  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<AvgPool2d<T>>(*this); }

 private:
  int k_, stride_;
  std::vector<int> in_shape_;
};

// [B,C,H,W] -> [B,C] spatial mean. Keeps the head insensitive to the input
// resolution changes that padding transforms introduce.
template <class T>
class GlobalAvgPool : public Layer<T> {
 public:
  explicit GlobalAvgPool(std::string id) : Layer<T>(std::move(id)) {}
  const char* kind() const override { return "gap"; }

  std::vector<int> out_shape(const std::vector<int>& in) const override {
    if (in.size() != 3) throw InputError("gap: expected [C,H,W]");
    return {in[0]};
  }

  Tensor<T> forward(const Tensor<T>& in, bool) override {
    in_shape_ = in.shape();
    int B = in.dim(0), C = in.dim(1);
    int64_t hw = static_cast<int64_t>(in.dim(2)) * in.dim(3);
    T inv = T(1) / static_cast<T>(hw);
    Tensor<T> out({B, C});
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c) {
        const T* plane = in.data() + (static_cast<int64_t>(b) * C + c) * hw;
        T s = T(0);
        for (int64_t i = 0; i < hw; ++i) s += plane[i];
        out.at(b, c) = s * inv;
      }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& gout, bool) override {
    Tensor<T> gin(in_shape_);
    int B = in_shape_[0], C = in_shape_[1];
    int64_t hw = static_cast<int64_t>(in_shape_[2]) * in_shape_[3];
    T inv = T(1) / static_cast<T>(hw);
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c) {
        T g = gout.at(b, c) * inv;
        T* plane = gin.data() + (static_cast<int64_t>(b) * C + c) * hw;
        for (int64_t i = 0; i < hw; ++i) plane[i] = g;
      }
    return gin;
  }

  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<GlobalAvgPool<T>>(*this); }

 private:
  std::vector<int> in_shape_;
};

template <class T>
class Flatten : public Layer<T> {
 public:
  explicit Flatten(std::string id) : Layer<T>(std::move(id)) {}
  const char* kind() const override { return "flatten"; }

  std::vector<int> out_shape(const std::vector<int>& in) const override {
    int n = 1;
    for (int d : in) n *= d;
    return {n};
  }

  Tensor<T> forward(const Tensor<T>& in, bool) override {
    in_shape_ = in.shape();
    return in.reshaped({in.dim(0), static_cast<int>(in.slice_numel())});
  }
  Tensor<T> backward(const Tensor<T>& gout, bool) override { return gout.reshaped(in_shape_); }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Flatten<T>>(*this); }

 private:
  std::vector<int> in_shape_;
};

template <class T>
class Linear : public Layer<T> {
 public:
  Linear(std::string id, int in_dim, int out_dim) : Layer<T>(std::move(id)), in_dim_(in_dim), out_dim_(out_dim) {
    weight_ = Tensor<T>({out_dim_, in_dim_});
    bias_ = Tensor<T>({out_dim_});
    wgrad_ = Tensor<T>({out_dim_, in_dim_});
    bgrad_ = Tensor<T>({out_dim_});
  }
  const char* kind() const override { return "linear"; }
  bool feature_consumer() const override { return true; }

  std::vector<int> out_shape(const std::vector<int>& in) const override {
    if (in.size() != 1 || in[0] != in_dim_) throw InputError("linear " + this->id_ + ": dimension mismatch");
    return {out_dim_};
  }

  Tensor<T> forward(const Tensor<T>& in, bool) override {
    if (in.rank() != 2 || in.dim(1) != in_dim_) throw InputError("linear " + this->id_ + ": bad input " + in.shape_str());
    input_ = in;
    int B = in.dim(0);
    Tensor<T> out({B, out_dim_});
    kern::gemm<T>(false, true, B, out_dim_, in_dim_, T(1), in.data(), in_dim_, weight_.data(), in_dim_, T(0),
                  out.data(), out_dim_);
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < out_dim_; ++c) out.at(b, c) += bias_[c];
    return out;
  }

  Tensor<T> backward(const Tensor<T>& gout, bool param_grads) override {
    int B = input_.dim(0);
    Tensor<T> gin(input_.shape());
    kern::gemm<T>(false, false, B, in_dim_, out_dim_, T(1), gout.data(), out_dim_, weight_.data(), in_dim_, T(0),
                  gin.data(), in_dim_);
    if (param_grads) {
      kern::gemm<T>(true, false, out_dim_, in_dim_, B, T(1), gout.data(), out_dim_, input_.data(), in_dim_, T(1),
                    wgrad_.data(), in_dim_);
      for (int b = 0; b < B; ++b)
        for (int c = 0; c < out_dim_; ++c) bgrad_[c] += gout.at(b, c);
    }
    return gin;
  }

  void collect_params(std::vector<ParamRef<T>>& out) override {
    out.push_back({this->id_ + ".weight", &weight_, &wgrad_});
    out.push_back({this->id_ + ".bias", &bias_, &bgrad_});
  }

  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Linear<T>>(*this); }

  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }

 private:
  int in_dim_, out_dim_;
  Tensor<T> weight_, bias_, wgrad_, bgrad_;
  Tensor<T> input_;
};

// Batch norm over [B,C,H,W]. Training uses batch statistics (biased variance)
// and maintains running stats; inference is the affine map from running stats.
template <class T>
class BatchNorm2d : public Layer<T> {
 public:
  BatchNorm2d(std::string id, int channels, T eps = T(1e-5), T momentum = T(0.1))
      : Layer<T>(std::move(id)), ch_(channels), eps_(eps), momentum_(momentum) {
    gamma_ = Tensor<T>({ch_}, T(1));
    beta_ = Tensor<T>({ch_});
    ggrad_ = Tensor<T>({ch_});
    bgrad_ = Tensor<T>({ch_});
    running_mean_ = Tensor<T>({ch_});
    running_var_ = Tensor<T>({ch_}, T(1));
  }
  const char* kind() const override { return "batchnorm"; }

  Tensor<T> forward(const Tensor<T>& in, bool training) override {
    if (in.rank() != 4 || in.dim(1) != ch_) throw InputError("batchnorm " + this->id_ + ": bad input " + in.shape_str());
    training_ = training;
    input_ = in;
    int B = in.dim(0);
    int64_t hw = static_cast<int64_t>(in.dim(2)) * in.dim(3);
    int64_t n = static_cast<int64_t>(B) * hw;
    Tensor<T> out(in.shape());
    mean_.assign(static_cast<size_t>(ch_), T(0));
    inv_std_.assign(static_cast<size_t>(ch_), T(0));
    for (int c = 0; c < ch_; ++c) {
      T m, v;
      if (training) {
        T s = T(0), s2 = T(0);
        for (int b = 0; b < B; ++b) {
          const T* p = in.data() + (static_cast<int64_t>(b) * ch_ + c) * hw;
          for (int64_t i = 0; i < hw; ++i) {
            s += p[i];
            s2 += p[i] * p[i];
          }
        }
        m = s / static_cast<T>(n);
        v = s2 / static_cast<T>(n) - m * m;
        if (v < T(0)) v = T(0);
        running_mean_[c] = (T(1) - momentum_) * running_mean_[c] + momentum_ * m;
        running_var_[c] = (T(1) - momentum_) * running_var_[c] + momentum_ * v;
      } else {
        m = running_mean_[c];
        v = running_var_[c];
      }
      T inv = T(1) / std::sqrt(v + eps_);
      mean_[static_cast<size_t>(c)] = m;
      inv_std_[static_cast<size_t>(c)] = inv;
      T g = gamma_[c], bt = beta_[c];
      for (int b = 0; b < B; ++b) {
        const T* p = in.data() + (static_cast<int64_t>(b) * ch_ + c) * hw;
        T* q = out.data() + (static_cast<int64_t>(b) * ch_ + c) * hw;
        for (int64_t i = 0; i < hw; ++i) q[i] = (p[i] - m) * inv * g + bt;
      }
    }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& gout, bool param_grads) override {
    int B = input_.dim(0);
    int64_t hw = static_cast<int64_t>(input_.dim(2)) * input_.dim(3);
    int64_t n = static_cast<int64_t>(B) * hw;
    Tensor<T> gin(input_.shape());
    for (int c = 0; c < ch_; ++c) {
      T m = mean_[static_cast<size_t>(c)], inv = inv_std_[static_cast<size_t>(c)], g = gamma_[c];
      if (!training_) {
        // Inference: y = (x - rm) * inv * gamma + beta is affine in x.
        T scale = inv * g;
        T dg = T(0), db = T(0);
        for (int b = 0; b < B; ++b) {
          const T* go = gout.data() + (static_cast<int64_t>(b) * ch_ + c) * hw;
          const T* x = input_.data() + (static_cast<int64_t>(b) * ch_ + c) * hw;
          T* gi = gin.data() + (static_cast<int64_t>(b) * ch_ + c) * hw;
          for (int64_t i = 0; i < hw; ++i) {
            gi[i] = go[i] * scale;
            if (param_grads) {
              dg += go[i] * (x[i] - m) * inv;
              db += go[i];
            }
          }
        }
        if (param_grads) {
          ggrad_[c] += dg;
          bgrad_[c] += db;
        }
        continue;
      }
      // Training: dx = gamma*inv/n * (n*dy - sum(dy) - xhat * sum(dy*xhat)).
      T sum_dy = T(0), sum_dy_xhat = T(0);
      for (int b = 0; b < B; ++b) {
        const T* go = gout.data() + (static_cast<int64_t>(b) * ch_ + c) * hw;
        const T* x = input_.data() + (static_cast<int64_t>(b) * ch_ + c) * hw;
        for (int64_t i = 0; i < hw; ++i) {
          sum_dy += go[i];
          sum_dy_xhat += go[i] * (x[i] - m) * inv;
        }
      }
      T k = g * inv / static_cast<T>(n);
      for (int b = 0; b < B; ++b) {
        const T* go = gout.data() + (static_cast<int64_t>(b) * ch_ + c) * hw;
        const T* x = input_.data() + (static_cast<int64_t>(b) * ch_ + c) * hw;
        T* gi = gin.data() + (static_cast<int64_t>(b) * ch_ + c) * hw;
        for (int64_t i = 0; i < hw; ++i) {
          T xhat = (x[i] - m) * inv;
          gi[i] = k * (static_cast<T>(n) * go[i] - sum_dy - xhat * sum_dy_xhat);
        }
      }
      if (param_grads) {
        ggrad_[c] += sum_dy_xhat;
        bgrad_[c] += sum_dy;
      }
    }
    return gin;
  }

  void collect_params(std::vector<ParamRef<T>>& out) override {
    out.push_back({this->id_ + ".gamma", &gamma_, &ggrad_});
    out.push_back({this->id_ + ".beta", &beta_, &bgrad_});
    out.push_back({this->id_ + ".running_mean", &running_mean_, nullptr});
    out.push_back({this->id_ + ".running_var", &running_var_, nullptr});
  }

  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<BatchNorm2d<T>>(*this); }

 private:
  int ch_;
  T eps_, momentum_;
  bool training_ = false;
  Tensor<T> gamma_, beta_, ggrad_, bgrad_, running_mean_, running_var_;
  Tensor<T> input_;
  std::vector<T> mean_, inv_std_;
};

// Layer stack. Hooks transform the input feature of the layer they are keyed
// on; gradients flow back through the hook to the previous layer and to any
// learnable tensors the hook owns.
template <class T>
class Sequential {
 public:
  Sequential() = default;
  Sequential(const Sequential& other) { *this = other; }
  Sequential& operator=(const Sequential& other) {
    layers_.clear();
    for (const auto& l : other.layers_) layers_.push_back(l->clone());
    applied_hooks_.clear();
    return *this;
  }
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  void add(std::unique_ptr<Layer<T>> layer) { layers_.push_back(std::move(layer)); }

  int size() const { return static_cast<int>(layers_.size()); }
  Layer<T>& layer(int i) { return *layers_[static_cast<size_t>(i)]; }
  const Layer<T>& layer(int i) const { return *layers_[static_cast<size_t>(i)]; }

  int index_of(std::string_view id) const {
    for (size_t i = 0; i < layers_.size(); ++i)
      if (layers_[i]->id() == id) return static_cast<int>(i);
    return -1;
  }

  // hook_capture, when provided, records each hook's output in forward order.
  Tensor<T> forward(const Tensor<T>& x, bool training = false, const HookMap<T>* hooks = nullptr,
                    std::vector<std::pair<std::string, Tensor<T>>>* hook_capture = nullptr) {
    if (hooks != nullptr) {
      for (const auto& [id, hook] : *hooks) {
        (void)hook;
        int idx = index_of(id);
        if (idx < 0) throw InputError("interception: unknown layer id '" + id + "'");
        if (!layers_[static_cast<size_t>(idx)]->feature_consumer())
          throw InputError("interception: layer '" + id + "' is not an interception point");
      }
    }
    applied_hooks_.assign(layers_.size(), nullptr);
    Tensor<T> cur = x;
    for (size_t i = 0; i < layers_.size(); ++i) {
      if (hooks != nullptr) {
        auto it = hooks->find(layers_[i]->id());
        if (it != hooks->end() && it->second != nullptr) {
          cur = it->second->forward(cur);
          applied_hooks_[i] = it->second;
          if (hook_capture != nullptr) hook_capture->emplace_back(layers_[i]->id(), cur);
        }
      }
      cur = layers_[i]->forward(cur, training);
    }
    return cur;
  }

  Tensor<T> backward(const Tensor<T>& gout, bool param_grads = false) {
    Tensor<T> g = gout;
    for (size_t i = layers_.size(); i-- > 0;) {
      g = layers_[i]->backward(g, param_grads);
      if (i < applied_hooks_.size() && applied_hooks_[i] != nullptr) g = applied_hooks_[i]->backward(g);
    }
    return g;
  }

  std::vector<ParamRef<T>> params() {
    std::vector<ParamRef<T>> out;
    for (auto& l : layers_) l->collect_params(out);
    return out;
  }

  void zero_grads() {
    for (auto& p : params())
      if (p.grad != nullptr) p.grad->fill(T(0));
  }

  // Shape walk over {C,H,W} features starting from the raw input shape.
  std::vector<std::vector<int>> feature_shapes(std::vector<int> in_chw) const {
    std::vector<std::vector<int>> shapes;
    shapes.push_back(in_chw);
    for (const auto& l : layers_) {
      in_chw = l->out_shape(in_chw);
      shapes.push_back(in_chw);
    }
    return shapes;
  }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
  std::vector<FeatureHook<T>*> applied_hooks_;
};

}  // namespace ftm::nn
