#include "saol/error.hpp"
#include "saol/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

namespace saol::kernels {
namespace {

Isa detect_isa() {
  const char *forced = std::getenv("SAOL_ISA");
  if (forced != nullptr && std::strcmp(forced, "scalar") == 0) {
    return Isa::kScalar;
  }
  return isa_supported(Isa::kAvx2) ? Isa::kAvx2 : Isa::kScalar;
}

std::atomic<Isa> &active() {
  static std::atomic<Isa> isa{detect_isa()};
  return isa;
}

bool use_avx2() {
#if SAOL_HAVE_AVX2_KERNELS
  return active().load(std::memory_order_relaxed) == Isa::kAvx2;
#else
  return false;
#endif
}

} // namespace

const char *isa_name(Isa isa) { return isa == Isa::kAvx2 ? "avx2" : "scalar"; }

bool isa_supported(Isa isa) {
  if (isa == Isa::kScalar) {
    return true;
  }
#if SAOL_HAVE_AVX2_KERNELS && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa active_isa() { return active().load(); }

void set_active_isa(Isa isa) {
  if (!isa_supported(isa)) {
    throw ArgumentError(std::string("kernel variant not supported on this CPU: ") + isa_name(isa));
  }
  active().store(isa);
}

#if SAOL_HAVE_AVX2_KERNELS
#define SAOL_DISPATCH(fn, ...) (use_avx2() ? avx2::fn(__VA_ARGS__) : scalar::fn(__VA_ARGS__))
#else
#define SAOL_DISPATCH(fn, ...) scalar::fn(__VA_ARGS__)
#endif

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T *a,
          std::size_t lda, const T *b, std::size_t ldb, T *c, std::size_t ldc) {
  if (m == 0 || n == 0 || k == 0) {
    return;
  }
  SAOL_DISPATCH(gemm, trans_a, trans_b, m, n, k, a, lda, b, ldb, c, ldc);
}

template <typename T> void axpy(std::size_t n, T alpha, const T *x, T *y) {
  SAOL_DISPATCH(axpy, n, alpha, x, y);
}

template <typename T> T dot(std::size_t n, const T *x, const T *y) {
  return SAOL_DISPATCH(dot, n, x, y);
}

template <typename T> void mul(std::size_t n, const T *a, const T *b, T *out) {
  SAOL_DISPATCH(mul, n, a, b, out);
}

template <typename T> void relu(std::size_t n, const T *x, T *out) {
  SAOL_DISPATCH(relu, n, x, out);
}

#undef SAOL_DISPATCH

#define SAOL_INSTANTIATE(T)                                                                        \
  template void gemm<T>(bool, bool, std::size_t, std::size_t, std::size_t, const T *, std::size_t, \
                        const T *, std::size_t, T *, std::size_t);                                 \
  template void axpy<T>(std::size_t, T, const T *, T *);                                           \
  template T dot<T>(std::size_t, const T *, const T *);                                            \
  template void mul<T>(std::size_t, const T *, const T *, T *);                                    \
  template void relu<T>(std::size_t, const T *, T *);

SAOL_INSTANTIATE(float)
SAOL_INSTANTIATE(double)
#undef SAOL_INSTANTIATE

} // namespace saol::kernels
