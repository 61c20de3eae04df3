#pragma once

#include <cstdint>

// AVX2 float kernels, compiled in their own TU with -mavx2 -mfma. When the
// toolchain cannot build AVX2, FTM_HAVE_AVX2_TU is undefined and dispatch
// never routes here.

namespace ftm::kern::avx2 {

void sgemm(bool ta, bool tb, int M, int N, int K, float alpha, const float* A, int lda, const float* B, int ldb,
           float beta, float* C, int ldc);
void relu_fwd(const float* x, float* y, int64_t n);
void relu_bwd(const float* x, const float* gout, float* gin, int64_t n);
void axpy(int64_t n, float a, const float* x, float* y);
void scale(int64_t n, float a, float* x);
void vadd(int64_t n, const float* x, const float* y, float* z);
void vsub(int64_t n, const float* x, const float* y, float* z);
void vmul(int64_t n, const float* x, const float* y, float* z);
void lerp(int64_t n, float a, const float* x, const float* y, float* z);
void sign_step(int64_t n, float eta, const float* g, float* x);
float asum(int64_t n, const float* x);
float sumsq(int64_t n, const float* x);
float dot(int64_t n, const float* x, const float* y);
float amax(int64_t n, const float* x);

}  // namespace ftm::kern::avx2
