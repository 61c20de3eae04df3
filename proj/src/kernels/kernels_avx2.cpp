#include "avx2_impl.hpp"

#ifdef FTM_HAVE_AVX2_TU

#include <immintrin.h>

#include <cstring>
#include <vector>

#include "ftm/kernels/kernels.hpp"

namespace ftm::kern::avx2 {

namespace {

// 4x16 FMA microkernel: C[0..4)[0..16) += alpha * A(4 rows) * B. B rows are
// contiguous float16-blocks at stride ldb.
inline void micro_4x16(int K, float alpha, const float* a0, const float* a1, const float* a2, const float* a3,
                       const float* B, int ldb, float* c0, float* c1, float* c2, float* c3) {
  __m256 acc00 = _mm256_setzero_ps(), acc01 = _mm256_setzero_ps();
  __m256 acc10 = _mm256_setzero_ps(), acc11 = _mm256_setzero_ps();
  __m256 acc20 = _mm256_setzero_ps(), acc21 = _mm256_setzero_ps();
  __m256 acc30 = _mm256_setzero_ps(), acc31 = _mm256_setzero_ps();
  for (int k = 0; k < K; ++k) {
    const float* brow = B + static_cast<int64_t>(k) * ldb;
    __m256 b0 = _mm256_loadu_ps(brow);
    __m256 b1 = _mm256_loadu_ps(brow + 8);
    __m256 va = _mm256_set1_ps(a0[k]);
    acc00 = _mm256_fmadd_ps(va, b0, acc00);
    acc01 = _mm256_fmadd_ps(va, b1, acc01);
    va = _mm256_set1_ps(a1[k]);
    acc10 = _mm256_fmadd_ps(va, b0, acc10);
    acc11 = _mm256_fmadd_ps(va, b1, acc11);
    va = _mm256_set1_ps(a2[k]);
    acc20 = _mm256_fmadd_ps(va, b0, acc20);
    acc21 = _mm256_fmadd_ps(va, b1, acc21);
    va = _mm256_set1_ps(a3[k]);
    acc30 = _mm256_fmadd_ps(va, b0, acc30);
    acc31 = _mm256_fmadd_ps(va, b1, acc31);
  }
  __m256 valpha = _mm256_set1_ps(alpha);
  _mm256_storeu_ps(c0, _mm256_fmadd_ps(valpha, acc00, _mm256_loadu_ps(c0)));
  _mm256_storeu_ps(c0 + 8, _mm256_fmadd_ps(valpha, acc01, _mm256_loadu_ps(c0 + 8)));
  _mm256_storeu_ps(c1, _mm256_fmadd_ps(valpha, acc10, _mm256_loadu_ps(c1)));
  _mm256_storeu_ps(c1 + 8, _mm256_fmadd_ps(valpha, acc11, _mm256_loadu_ps(c1 + 8)));
  _mm256_storeu_ps(c2, _mm256_fmadd_ps(valpha, acc20, _mm256_loadu_ps(c2)));
  _mm256_storeu_ps(c2 + 8, _mm256_fmadd_ps(valpha, acc21, _mm256_loadu_ps(c2 + 8)));
  _mm256_storeu_ps(c3, _mm256_fmadd_ps(valpha, acc30, _mm256_loadu_ps(c3)));
  _mm256_storeu_ps(c3 + 8, _mm256_fmadd_ps(valpha, acc31, _mm256_loadu_ps(c3 + 8)));
}

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  lo = _mm_add_ps(lo, _mm_movehl_ps(lo, lo));
  lo = _mm_add_ss(lo, _mm_shuffle_ps(lo, lo, 1));
  return _mm_cvtss_f32(lo);
}

inline __m256 abs_ps(__m256 v) { return _mm256_and_ps(v, _mm256_castsi256_ps(_mm256_set1_epi32(0x7fffffff))); }

}  // namespace

void sgemm(bool ta, bool tb, int M, int N, int K, float alpha, const float* A, int lda, const float* B, int ldb,
           float beta, float* C, int ldc) {
  // Pre-scale C so the kernel and the tails accumulate with beta = 1.
  for (int i = 0; i < M; ++i) {
    float* crow = C + static_cast<int64_t>(i) * ldc;
    if (beta == 0.0f)
      std::memset(crow, 0, sizeof(float) * static_cast<size_t>(N));
    else if (beta != 1.0f)
      scale(N, beta, crow);
  }
  if (M == 0 || N == 0 || K == 0 || alpha == 0.0f) return;

  // Materialize transposed operands row-major; the microkernel is NN-only.
  std::vector<float> packA, packB;
  const float* Ap = A;
  int As = lda;
  if (ta) {
    packA.resize(static_cast<size_t>(M) * K);
    for (int i = 0; i < M; ++i)
      for (int k = 0; k < K; ++k) packA[static_cast<size_t>(i) * K + k] = A[static_cast<int64_t>(k) * lda + i];
    Ap = packA.data();
    As = K;
  }
  const float* Bp = B;
  int Bs = ldb;
  if (tb) {
    packB.resize(static_cast<size_t>(K) * N);
    for (int k = 0; k < K; ++k)
      for (int j = 0; j < N; ++j) packB[static_cast<size_t>(k) * N + j] = B[static_cast<int64_t>(j) * ldb + k];
    Bp = packB.data();
    Bs = N;
  }

  int M4 = M - (M % 4);
  int N16 = N - (N % 16);
  for (int i = 0; i < M4; i += 4) {
    const float* a0 = Ap + static_cast<int64_t>(i) * As;
    const float* a1 = a0 + As;
    const float* a2 = a1 + As;
    const float* a3 = a2 + As;
    float* c0 = C + static_cast<int64_t>(i) * ldc;
    float* c1 = c0 + ldc;
    float* c2 = c1 + ldc;
    float* c3 = c2 + ldc;
    for (int j = 0; j < N16; j += 16) micro_4x16(K, alpha, a0, a1, a2, a3, Bp + j, Bs, c0 + j, c1 + j, c2 + j, c3 + j);
  }
  if (N16 < N && M4 > 0)
    ref::gemm(false, false, M4, N - N16, K, alpha, Ap, As, Bp + N16, Bs, 1.0f, C + N16, ldc);
  if (M4 < M)
    ref::gemm(false, false, M - M4, N, K, alpha, Ap + static_cast<int64_t>(M4) * As, As, Bp, Bs, 1.0f,
              C + static_cast<int64_t>(M4) * ldc, ldc);
}

void relu_fwd(const float* x, float* y, int64_t n) {
  __m256 zero = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
  for (; i < n; ++i) y[i] = (x[i] > 0.0f) ? x[i] : 0.0f;
}

void relu_bwd(const float* x, const float* gout, float* gin, int64_t n) {
  __m256 zero = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
    _mm256_storeu_ps(gin + i, _mm256_and_ps(mask, _mm256_loadu_ps(gout + i)));
  }
  for (; i < n; ++i) gin[i] = (x[i] > 0.0f) ? gout[i] : 0.0f;
}

// Unfused mul/add on purpose: elementwise kernels match the scalar references
// bitwise, which the equivalence tests assert.
void axpy(int64_t n, float a, const float* x, float* y) {
  __m256 va = _mm256_set1_ps(a);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), _mm256_mul_ps(va, _mm256_loadu_ps(x + i))));
  for (; i < n; ++i) y[i] = y[i] + a * x[i];
}

void scale(int64_t n, float a, float* x) {
  __m256 va = _mm256_set1_ps(a);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(x + i, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) x[i] = a * x[i];
}

void vadd(int64_t n, const float* x, const float* y, float* z) {
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(z + i, _mm256_add_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) z[i] = x[i] + y[i];
}

void vsub(int64_t n, const float* x, const float* y, float* z) {
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(z + i, _mm256_sub_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) z[i] = x[i] - y[i];
}

void vmul(int64_t n, const float* x, const float* y, float* z) {
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(z + i, _mm256_mul_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) z[i] = x[i] * y[i];
}

void lerp(int64_t n, float a, const float* x, const float* y, float* z) {
  float one_minus = 1.0f - a;
  __m256 vom = _mm256_set1_ps(one_minus);
  __m256 va = _mm256_set1_ps(a);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 t = _mm256_add_ps(_mm256_mul_ps(vom, _mm256_loadu_ps(x + i)), _mm256_mul_ps(va, _mm256_loadu_ps(y + i)));
    _mm256_storeu_ps(z + i, t);
  }
  for (; i < n; ++i) z[i] = one_minus * x[i] + a * y[i];
}

void sign_step(int64_t n, float eta, const float* g, float* x) {
  __m256 zero = _mm256_setzero_ps();
  __m256 one = _mm256_set1_ps(1.0f);
  __m256 veta = _mm256_set1_ps(eta);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 vg = _mm256_loadu_ps(g + i);
    __m256 pos = _mm256_and_ps(_mm256_cmp_ps(vg, zero, _CMP_GT_OQ), one);
    __m256 neg = _mm256_and_ps(_mm256_cmp_ps(vg, zero, _CMP_LT_OQ), one);
    __m256 s = _mm256_sub_ps(pos, neg);
    _mm256_storeu_ps(x + i, _mm256_sub_ps(_mm256_loadu_ps(x + i), _mm256_mul_ps(veta, s)));
  }
  for (; i < n; ++i) {
    float s = (g[i] > 0.0f) ? 1.0f : ((g[i] < 0.0f) ? -1.0f : 0.0f);
    x[i] = x[i] - eta * s;
  }
}

float asum(int64_t n, const float* x) {
  __m256 acc0 = _mm256_setzero_ps(), acc1 = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_add_ps(acc0, abs_ps(_mm256_loadu_ps(x + i)));
    acc1 = _mm256_add_ps(acc1, abs_ps(_mm256_loadu_ps(x + i + 8)));
  }
  float s = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) s += std::abs(x[i]);
  return s;
}

float sumsq(int64_t n, const float* x) {
  __m256 acc0 = _mm256_setzero_ps(), acc1 = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 16 <= n; i += 16) {
    __m256 v0 = _mm256_loadu_ps(x + i);
    __m256 v1 = _mm256_loadu_ps(x + i + 8);
    acc0 = _mm256_fmadd_ps(v0, v0, acc0);
    acc1 = _mm256_fmadd_ps(v1, v1, acc1);
  }
  float s = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) s += x[i] * x[i];
  return s;
}

float dot(int64_t n, const float* x, const float* y) {
  __m256 acc0 = _mm256_setzero_ps(), acc1 = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i + 8), _mm256_loadu_ps(y + i + 8), acc1);
  }
  float s = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

float amax(int64_t n, const float* x) {
  __m256 acc = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) acc = _mm256_max_ps(acc, abs_ps(_mm256_loadu_ps(x + i)));
  __m128 lo = _mm_max_ps(_mm256_castps256_ps128(acc), _mm256_extractf128_ps(acc, 1));
  lo = _mm_max_ps(lo, _mm_movehl_ps(lo, lo));
  lo = _mm_max_ss(lo, _mm_shuffle_ps(lo, lo, 1));
  float m = _mm_cvtss_f32(lo);
  for (; i < n; ++i) m = std::max(m, std::abs(x[i]));
  return m;
}

}  // namespace ftm::kern::avx2

#endif  // FTM_HAVE_AVX2_TU
