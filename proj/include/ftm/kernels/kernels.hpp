#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

// Numeric kernels in two flavors: portable scalar references (ftm::kern::ref,
// templated, the semantic ground truth) and AVX2 float variants picked at
// runtime. Elementwise AVX2 kernels use unfused mul/add in the same per-element
// order as the references, so scalar and AVX2 agree bitwise; GEMM and the
// reductions change accumulation order and are equivalence-tested to a
// tolerance instead. double always takes the reference path.

namespace ftm::kern {

enum class Isa { scalar, avx2 };

// Active ISA: FTM_SIMD=scalar|avx2|auto environment override, else best
// supported. set_isa() is for tests and the CLI flag.
Isa active_isa();
void set_isa(Isa isa);
void reset_isa_from_env();
bool avx2_supported();
const char* isa_name(Isa isa);

namespace ref {

// Row-major C[M,N] = alpha * op(A) * op(B) + beta * C.
// op(A) is M x K (A is K x M when ta), op(B) is K x N.
template <class T>
void gemm(bool ta, bool tb, int M, int N, int K, T alpha, const T* A, int lda, const T* B, int ldb, T beta, T* C,
          int ldc) {
  for (int i = 0; i < M; ++i) {
    for (int j = 0; j < N; ++j) {
      T acc = T(0);
      for (int k = 0; k < K; ++k) {
        T a = ta ? A[static_cast<int64_t>(k) * lda + i] : A[static_cast<int64_t>(i) * lda + k];
        T b = tb ? B[static_cast<int64_t>(j) * ldb + k] : B[static_cast<int64_t>(k) * ldb + j];
        acc += a * b;
      }
      T* c = C + static_cast<int64_t>(i) * ldc + j;
      *c = (beta == T(0)) ? alpha * acc : alpha * acc + beta * (*c);
    }
  }
}

template <class T>
void relu_fwd(const T* x, T* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] = (x[i] > T(0)) ? x[i] : T(0);
}

template <class T>
void relu_bwd(const T* x, const T* gout, T* gin, int64_t n) {
  for (int64_t i = 0; i < n; ++i) gin[i] = (x[i] > T(0)) ? gout[i] : T(0);
}

template <class T>
void axpy(int64_t n, T a, const T* x, T* y) {
  for (int64_t i = 0; i < n; ++i) y[i] = y[i] + a * x[i];
}

template <class T>
void scale(int64_t n, T a, T* x) {
  for (int64_t i = 0; i < n; ++i) x[i] = a * x[i];
}

template <class T>
void vadd(int64_t n, const T* x, const T* y, T* z) {
  for (int64_t i = 0; i < n; ++i) z[i] = x[i] + y[i];
}

template <class T>
void vsub(int64_t n, const T* x, const T* y, T* z) {
  for (int64_t i = 0; i < n; ++i) z[i] = x[i] - y[i];
}

template <class T>
void vmul(int64_t n, const T* x, const T* y, T* z) {
  for (int64_t i = 0; i < n; ++i) z[i] = x[i] * y[i];
}

// z = (1 - a) * x + a * y. Evaluated exactly in this form so a = 1 returns y
// bitwise and a = 0 returns x bitwise.
template <class T>
void lerp(int64_t n, T a, const T* x, const T* y, T* z) {
  T one_minus = T(1) - a;
  for (int64_t i = 0; i < n; ++i) z[i] = one_minus * x[i] + a * y[i];
}

// x -= eta * sign(g), sign(0) = 0.
template <class T>
void sign_step(int64_t n, T eta, const T* g, T* x) {
  for (int64_t i = 0; i < n; ++i) {
    T s = (g[i] > T(0)) ? T(1) : ((g[i] < T(0)) ? T(-1) : T(0));
    x[i] = x[i] - eta * s;
  }
}

template <class T>
T asum(int64_t n, const T* x) {
  T s = T(0);
  for (int64_t i = 0; i < n; ++i) s += std::abs(x[i]);
  return s;
}

template <class T>
T sumsq(int64_t n, const T* x) {
  T s = T(0);
  for (int64_t i = 0; i < n; ++i) s += x[i] * x[i];
  return s;
}

template <class T>
T dot(int64_t n, const T* x, const T* y) {
  T s = T(0);
  for (int64_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

template <class T>
T amax(int64_t n, const T* x) {
  T m = T(0);
  for (int64_t i = 0; i < n; ++i) m = std::max(m, std::abs(x[i]));
  return m;
}

// x <- clamp(clamp(x, ref-eps, ref+eps), 0, 1), with the stronger guarantee
// that |x[i] - ref[i]| <= eps holds in exact arithmetic afterward: the clamp
// runs in double and the rounded float is nudged one ulp toward ref if
// rounding pushed it outside the ball.
template <class T>
void eps_ball_clamp(int64_t n, const T* refp, T eps, T* x) {
  double e = static_cast<double>(eps);
  for (int64_t i = 0; i < n; ++i) {
    double r = static_cast<double>(refp[i]);
    double v = static_cast<double>(x[i]);
    v = std::min(std::max(v, r - e), r + e);
    v = std::min(std::max(v, 0.0), 1.0);
    T f = static_cast<T>(v);
    if (static_cast<double>(f) - r > e)
      f = std::nextafter(f, std::numeric_limits<T>::lowest());
    else if (r - static_cast<double>(f) > e)
      f = std::nextafter(f, std::numeric_limits<T>::max());
    x[i] = f;
  }
}

// in [C,H,W] -> col [C*k*k, OH*OW]; zero padding, square kernel/stride.
template <class T>
void im2col(const T* in, int C, int H, int W, int k, int stride, int pad, T* col) {
  int OH = (H + 2 * pad - k) / stride + 1;
  int OW = (W + 2 * pad - k) / stride + 1;
  int64_t ohw = static_cast<int64_t>(OH) * OW;
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* dst = col + ((static_cast<int64_t>(c) * k + ky) * k + kx) * ohw;
        for (int oy = 0; oy < OH; ++oy) {
          int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) {
            for (int ox = 0; ox < OW; ++ox) dst[static_cast<int64_t>(oy) * OW + ox] = T(0);
            continue;
          }
          const T* src_row = in + (static_cast<int64_t>(c) * H + iy) * W;
          for (int ox = 0; ox < OW; ++ox) {
            int ix = ox * stride - pad + kx;
            dst[static_cast<int64_t>(oy) * OW + ox] = (ix < 0 || ix >= W) ? T(0) : src_row[ix];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates col [C*k*k, OH*OW] back into in [C,H,W].
// Caller zeroes `in` first.
template <class T>
void col2im(const T* col, int C, int H, int W, int k, int stride, int pad, T* in) {
  int OH = (H + 2 * pad - k) / stride + 1;
  int OW = (W + 2 * pad - k) / stride + 1;
  int64_t ohw = static_cast<int64_t>(OH) * OW;
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* src = col + ((static_cast<int64_t>(c) * k + ky) * k + kx) * ohw;
        for (int oy = 0; oy < OH; ++oy) {
          int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          T* dst_row = in + (static_cast<int64_t>(c) * H + iy) * W;
          for (int ox = 0; ox < OW; ++ox) {
            int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < W) dst_row[ix] += src[static_cast<int64_t>(oy) * OW + ox];
          }
        }
      }
    }
  }
}

// Depthwise same-padded convolution with one shared [k,k] kernel (gradient
// smoothing). Odd k.
template <class T>
void depthwise_same_conv(const T* in, int C, int H, int W, const T* kernel, int k, T* out) {
  int half = k / 2;
  for (int c = 0; c < C; ++c) {
    const T* src = in + static_cast<int64_t>(c) * H * W;
    T* dst = out + static_cast<int64_t>(c) * H * W;
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        T acc = T(0);
        for (int ky = 0; ky < k; ++ky) {
          int iy = y + ky - half;
          if (iy < 0 || iy >= H) continue;
          for (int kx = 0; kx < k; ++kx) {
            int ix = x + kx - half;
            if (ix < 0 || ix >= W) continue;
            acc += kernel[ky * k + kx] * src[static_cast<int64_t>(iy) * W + ix];
          }
        }
        dst[static_cast<int64_t>(y) * W + x] = acc;
      }
    }
  }
}

// Bilinear resize of one [C,H,W] plane stack (half-pixel centers, the
// align_corners=false convention). Same-size resize degenerates to a copy.
template <class T>
void resize_bilinear(const T* in, int C, int H, int W, int OH, int OW, T* out) {
  if (OH == H && OW == W) {
    std::copy(in, in + static_cast<int64_t>(C) * H * W, out);
    return;
  }
  double sy = static_cast<double>(H) / OH;
  double sx = static_cast<double>(W) / OW;
  for (int oy = 0; oy < OH; ++oy) {
    double fy = (oy + 0.5) * sy - 0.5;
    int y0 = static_cast<int>(std::floor(fy));
    double wy = fy - y0;
    int y0c = std::clamp(y0, 0, H - 1), y1c = std::clamp(y0 + 1, 0, H - 1);
    for (int ox = 0; ox < OW; ++ox) {
      double fx = (ox + 0.5) * sx - 0.5;
      int x0 = static_cast<int>(std::floor(fx));
      double wx = fx - x0;
      int x0c = std::clamp(x0, 0, W - 1), x1c = std::clamp(x0 + 1, 0, W - 1);
      double w00 = (1 - wy) * (1 - wx);
      double w01 = (1 - wy) * wx;
      double w10 = wy * (1 - wx);
      double w11 = wy * wx;
      for (int c = 0; c < C; ++c) {
        const T* p = in + static_cast<int64_t>(c) * H * W;
        // double accumulation keeps convex combinations of [0,1] inputs
        // inside [0,1] after rounding
        double acc = w00 * static_cast<double>(p[static_cast<int64_t>(y0c) * W + x0c]) +
                     w01 * static_cast<double>(p[static_cast<int64_t>(y0c) * W + x1c]) +
                     w10 * static_cast<double>(p[static_cast<int64_t>(y1c) * W + x0c]) +
                     w11 * static_cast<double>(p[static_cast<int64_t>(y1c) * W + x1c]);
        out[(static_cast<int64_t>(c) * OH + oy) * OW + ox] = static_cast<T>(acc);
      }
    }
  }
}

// Adjoint of resize_bilinear: scatters grad [C,OH,OW] into gin [C,H,W].
// Caller zeroes gin.
template <class T>
void resize_bilinear_bwd(const T* gout, int C, int H, int W, int OH, int OW, T* gin) {
  if (OH == H && OW == W) {
    for (int64_t i = 0; i < static_cast<int64_t>(C) * H * W; ++i) gin[i] += gout[i];
    return;
  }
  double sy = static_cast<double>(H) / OH;
  double sx = static_cast<double>(W) / OW;
  for (int oy = 0; oy < OH; ++oy) {
    double fy = (oy + 0.5) * sy - 0.5;
    int y0 = static_cast<int>(std::floor(fy));
    double wy = fy - y0;
    int y0c = std::clamp(y0, 0, H - 1), y1c = std::clamp(y0 + 1, 0, H - 1);
    for (int ox = 0; ox < OW; ++ox) {
      double fx = (ox + 0.5) * sx - 0.5;
      int x0 = static_cast<int>(std::floor(fx));
      double wx = fx - x0;
      int x0c = std::clamp(x0, 0, W - 1), x1c = std::clamp(x0 + 1, 0, W - 1);
      T w00 = static_cast<T>((1 - wy) * (1 - wx));
      T w01 = static_cast<T>((1 - wy) * wx);
      T w10 = static_cast<T>(wy * (1 - wx));
      T w11 = static_cast<T>(wy * wx);
      for (int c = 0; c < C; ++c) {
        T g = gout[(static_cast<int64_t>(c) * OH + oy) * OW + ox];
        T* p = gin + static_cast<int64_t>(c) * H * W;
        p[static_cast<int64_t>(y0c) * W + x0c] += w00 * g;
        p[static_cast<int64_t>(y0c) * W + x1c] += w01 * g;
        p[static_cast<int64_t>(y1c) * W + x0c] += w10 * g;
        p[static_cast<int64_t>(y1c) * W + x1c] += w11 * g;
      }
    }
  }
}

}  // namespace ref

namespace detail {
// float fast paths (dispatch + AVX2 live in src/kernels/).
void sgemm(bool ta, bool tb, int M, int N, int K, float alpha, const float* A, int lda, const float* B, int ldb,
           float beta, float* C, int ldc);
void srelu_fwd(const float* x, float* y, int64_t n);
void srelu_bwd(const float* x, const float* gout, float* gin, int64_t n);
void saxpy(int64_t n, float a, const float* x, float* y);
void sscale(int64_t n, float a, float* x);
void svadd(int64_t n, const float* x, const float* y, float* z);
void svsub(int64_t n, const float* x, const float* y, float* z);
void svmul(int64_t n, const float* x, const float* y, float* z);
void slerp(int64_t n, float a, const float* x, const float* y, float* z);
void ssign_step(int64_t n, float eta, const float* g, float* x);
float sasum(int64_t n, const float* x);
float ssumsq(int64_t n, const float* x);
float sdot(int64_t n, const float* x, const float* y);
float samax(int64_t n, const float* x);
}  // namespace detail

// Dispatching front ends. double (and any other T) runs the references.
template <class T>
inline void gemm(bool ta, bool tb, int M, int N, int K, T alpha, const T* A, int lda, const T* B, int ldb, T beta,
                 T* C, int ldc) {
  ref::gemm(ta, tb, M, N, K, alpha, A, lda, B, ldb, beta, C, ldc);
}
template <>
inline void gemm<float>(bool ta, bool tb, int M, int N, int K, float alpha, const float* A, int lda, const float* B,
                        int ldb, float beta, float* C, int ldc) {
  detail::sgemm(ta, tb, M, N, K, alpha, A, lda, B, ldb, beta, C, ldc);
}

template <class T>
inline void relu_fwd(const T* x, T* y, int64_t n) {
  ref::relu_fwd(x, y, n);
}
template <>
inline void relu_fwd<float>(const float* x, float* y, int64_t n) {
  detail::srelu_fwd(x, y, n);
}

template <class T>
inline void relu_bwd(const T* x, const T* gout, T* gin, int64_t n) {
  ref::relu_bwd(x, gout, gin, n);
}
template <>
inline void relu_bwd<float>(const float* x, const float* gout, float* gin, int64_t n) {
  detail::srelu_bwd(x, gout, gin, n);
}

template <class T>
inline void axpy(int64_t n, T a, const T* x, T* y) {
  ref::axpy(n, a, x, y);
}
template <>
inline void axpy<float>(int64_t n, float a, const float* x, float* y) {
  detail::saxpy(n, a, x, y);
}

template <class T>
inline void scale(int64_t n, T a, T* x) {
  ref::scale(n, a, x);
}
template <>
inline void scale<float>(int64_t n, float a, float* x) {
  detail::sscale(n, a, x);
}

template <class T>
inline void vadd(int64_t n, const T* x, const T* y, T* z) {
  ref::vadd(n, x, y, z);
}
template <>
inline void vadd<float>(int64_t n, const float* x, const float* y, float* z) {
  detail::svadd(n, x, y, z);
}

template <class T>
inline void vsub(int64_t n, const T* x, const T* y, T* z) {
  ref::vsub(n, x, y, z);
}
template <>
inline void vsub<float>(int64_t n, const float* x, const float* y, float* z) {
  detail::svsub(n, x, y, z);
}

template <class T>
inline void vmul(int64_t n, const T* x, const T* y, T* z) {
  ref::vmul(n, x, y, z);
}
template <>
inline void vmul<float>(int64_t n, const float* x, const float* y, float* z) {
  detail::svmul(n, x, y, z);
}

template <class T>
inline void lerp(int64_t n, T a, const T* x, const T* y, T* z) {
  ref::lerp(n, a, x, y, z);
}
template <>
inline void lerp<float>(int64_t n, float a, const float* x, const float* y, float* z) {
  detail::slerp(n, a, x, y, z);
}

template <class T>
inline void sign_step(int64_t n, T eta, const T* g, T* x) {
  ref::sign_step(n, eta, g, x);
}
template <>
inline void sign_step<float>(int64_t n, float eta, const float* g, float* x) {
  detail::ssign_step(n, eta, g, x);
}

template <class T>
inline T asum(int64_t n, const T* x) {
  return ref::asum(n, x);
}
template <>
inline float asum<float>(int64_t n, const float* x) {
  return detail::sasum(n, x);
}

template <class T>
inline T sumsq(int64_t n, const T* x) {
  return ref::sumsq(n, x);
}
template <>
inline float sumsq<float>(int64_t n, const float* x) {
  return detail::ssumsq(n, x);
}

template <class T>
inline T dot(int64_t n, const T* x, const T* y) {
  return ref::dot(n, x, y);
}
template <>
inline float dot<float>(int64_t n, const float* x, const float* y) {
  return detail::sdot(n, x, y);
}

template <class T>
inline T amax(int64_t n, const T* x) {
  return ref::amax(n, x);
}
template <>
inline float amax<float>(int64_t n, const float* x) {
  return detail::samax(n, x);
}

// Memory-bound or double-precision-checked helpers stay on the reference path
// for every T.
template <class T>
inline void eps_ball_clamp(int64_t n, const T* refp, T eps, T* x) {
  ref::eps_ball_clamp(n, refp, eps, x);
}
template <class T>
inline void im2col(const T* in, int C, int H, int W, int k, int stride, int pad, T* col) {
  ref::im2col(in, C, H, W, k, stride, pad, col);
}
template <class T>
inline void col2im(const T* col, int C, int H, int W, int k, int stride, int pad, T* in) {
  ref::col2im(col, C, H, W, k, stride, pad, in);
}
template <class T>
inline void depthwise_same_conv(const T* in, int C, int H, int W, const T* kernel, int k, T* out) {
  ref::depthwise_same_conv(in, C, H, W, kernel, k, out);
}
template <class T>
inline void resize_bilinear(const T* in, int C, int H, int W, int OH, int OW, T* out) {
  ref::resize_bilinear(in, C, H, W, OH, OW, out);
}
template <class T>
inline void resize_bilinear_bwd(const T* gout, int C, int H, int W, int OH, int OW, T* gin) {
  ref::resize_bilinear_bwd(gout, C, H, W, OH, OW, gin);
}

}  // namespace ftm::kern
