#pragma once

// Dense arithmetic kernels behind the tensor ops.
//
// Every kernel has a portable scalar reference in saol::kernels::scalar and,
// on x86-64, an AVX2+FMA variant in saol::kernels::avx2. The unqualified
// entry points dispatch to whichever variant is active. The active variant is
// picked once from CPUID; SAOL_ISA=scalar in the environment forces the
// reference path.

#include <cstddef>

namespace saol::kernels {

enum class Isa { kScalar, kAvx2 };

const char *isa_name(Isa isa);
bool isa_supported(Isa isa);
Isa active_isa();
// Throws ArgumentError if the requested variant is not supported on this CPU.
void set_active_isa(Isa isa);

// RAII switch used by the equivalence tests.
class ScopedIsa {
public:
  explicit ScopedIsa(Isa isa) : previous_(active_isa()) { set_active_isa(isa); }
  ~ScopedIsa() { set_active_isa(previous_); }
  ScopedIsa(const ScopedIsa &) = delete;
  ScopedIsa &operator=(const ScopedIsa &) = delete;

private:
  Isa previous_;
};

// C[m,n] += op(A)[m,k] * op(B)[k,n], all row-major.
// op(A) = A (stored m x k) or A^T (stored k x m) depending on trans_a;
// likewise for B.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T *a,
          std::size_t lda, const T *b, std::size_t ldb, T *c, std::size_t ldc);

// y += alpha * x
template <typename T> void axpy(std::size_t n, T alpha, const T *x, T *y);

template <typename T> T dot(std::size_t n, const T *x, const T *y);

// out = a * b elementwise
template <typename T> void mul(std::size_t n, const T *a, const T *b, T *out);

// out = max(x, 0)
template <typename T> void relu(std::size_t n, const T *x, T *out);

namespace scalar {
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T *a,
          std::size_t lda, const T *b, std::size_t ldb, T *c, std::size_t ldc);
template <typename T> void axpy(std::size_t n, T alpha, const T *x, T *y);
template <typename T> T dot(std::size_t n, const T *x, const T *y);
template <typename T> void mul(std::size_t n, const T *a, const T *b, T *out);
template <typename T> void relu(std::size_t n, const T *x, T *out);
} // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define SAOL_HAVE_AVX2_KERNELS 1
namespace avx2 {
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T *a,
          std::size_t lda, const T *b, std::size_t ldb, T *c, std::size_t ldc);
template <typename T> void axpy(std::size_t n, T alpha, const T *x, T *y);
template <typename T> T dot(std::size_t n, const T *x, const T *y);
template <typename T> void mul(std::size_t n, const T *a, const T *b, T *out);
template <typename T> void relu(std::size_t n, const T *x, T *out);
} // namespace avx2
#else
#define SAOL_HAVE_AVX2_KERNELS 0
#endif

} // namespace saol::kernels
