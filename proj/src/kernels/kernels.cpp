#include "ftm/kernels/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <string>

#include "avx2_impl.hpp"

namespace ftm::kern {

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64) || defined(__i386__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa resolve_from_env() {
  const char* env = std::getenv("FTM_SIMD");
  if (env != nullptr) {
    std::string v(env);
    if (v == "scalar") return Isa::scalar;
    if (v == "avx2") return Isa::avx2;
    // anything else (incl. "auto") falls through to detection
  }
  return avx2_supported() ? Isa::avx2 : Isa::scalar;
}

std::atomic<int> g_isa{-1};

}  // namespace

bool avx2_supported() {
#ifdef FTM_HAVE_AVX2_TU
  static const bool ok = cpu_has_avx2();
  return ok;
#else
  return false;
#endif
}

Isa active_isa() {
  int v = g_isa.load(std::memory_order_relaxed);
  if (v < 0) {
    Isa r = resolve_from_env();
    g_isa.store(static_cast<int>(r), std::memory_order_relaxed);
    return r;
  }
  return static_cast<Isa>(v);
}

void set_isa(Isa isa) {
  if (isa == Isa::avx2 && !avx2_supported()) isa = Isa::scalar;
  g_isa.store(static_cast<int>(isa), std::memory_order_relaxed);
}

void reset_isa_from_env() { g_isa.store(-1, std::memory_order_relaxed); }

const char* isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

namespace detail {

#ifdef FTM_HAVE_AVX2_TU
#define FTM_DISPATCH(avx2_call, ref_call) \
  do {                                    \
    if (active_isa() == Isa::avx2) {      \
      avx2_call;                          \
    } else {                              \
      ref_call;                           \
    }                                     \
  } while (0)
#else
#define FTM_DISPATCH(avx2_call, ref_call) \
  do {                                    \
    ref_call;                             \
  } while (0)
#endif

void sgemm(bool ta, bool tb, int M, int N, int K, float alpha, const float* A, int lda, const float* B, int ldb,
           float beta, float* C, int ldc) {
  FTM_DISPATCH(avx2::sgemm(ta, tb, M, N, K, alpha, A, lda, B, ldb, beta, C, ldc),
               ref::gemm(ta, tb, M, N, K, alpha, A, lda, B, ldb, beta, C, ldc));
}
void srelu_fwd(const float* x, float* y, int64_t n) { FTM_DISPATCH(avx2::relu_fwd(x, y, n), ref::relu_fwd(x, y, n)); }
void srelu_bwd(const float* x, const float* gout, float* gin, int64_t n) {
  FTM_DISPATCH(avx2::relu_bwd(x, gout, gin, n), ref::relu_bwd(x, gout, gin, n));
}
void saxpy(int64_t n, float a, const float* x, float* y) { FTM_DISPATCH(avx2::axpy(n, a, x, y), ref::axpy(n, a, x, y)); }
void sscale(int64_t n, float a, float* x) { FTM_DISPATCH(avx2::scale(n, a, x), ref::scale(n, a, x)); }
void svadd(int64_t n, const float* x, const float* y, float* z) {
  FTM_DISPATCH(avx2::vadd(n, x, y, z), ref::vadd(n, x, y, z));
}
void svsub(int64_t n, const float* x, const float* y, float* z) {
  FTM_DISPATCH(avx2::vsub(n, x, y, z), ref::vsub(n, x, y, z));
}
void svmul(int64_t n, const float* x, const float* y, float* z) {
  FTM_DISPATCH(avx2::vmul(n, x, y, z), ref::vmul(n, x, y, z));
}
void slerp(int64_t n, float a, const float* x, const float* y, float* z) {
  FTM_DISPATCH(avx2::lerp(n, a, x, y, z), ref::lerp(n, a, x, y, z));
}
void ssign_step(int64_t n, float eta, const float* g, float* x) {
  FTM_DISPATCH(avx2::sign_step(n, eta, g, x), ref::sign_step(n, eta, g, x));
}

float sasum(int64_t n, const float* x) {
#ifdef FTM_HAVE_AVX2_TU
  if (active_isa() == Isa::avx2) return avx2::asum(n, x);
#endif
  return ref::asum(n, x);
}
float ssumsq(int64_t n, const float* x) {
#ifdef FTM_HAVE_AVX2_TU
  if (active_isa() == Isa::avx2) return avx2::sumsq(n, x);
#endif
  return ref::sumsq(n, x);
}
float sdot(int64_t n, const float* x, const float* y) {
#ifdef FTM_HAVE_AVX2_TU
  if (active_isa() == Isa::avx2) return avx2::dot(n, x, y);
#endif
  return ref::dot(n, x, y);
}
float samax(int64_t n, const float* x) {
#ifdef FTM_HAVE_AVX2_TU
  if (active_isa() == Isa::avx2) return avx2::amax(n, x);
#endif
  return ref::amax(n, x);
}

#undef FTM_DISPATCH

}  // namespace detail

}  // namespace ftm::kern
