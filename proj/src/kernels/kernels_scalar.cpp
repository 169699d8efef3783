#include "saol/kernels.hpp"

#include <algorithm>

namespace saol::kernels::scalar {

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T *a,
          std::size_t lda, const T *b, std::size_t ldb, T *c, std::size_t ldc) {
  if (trans_b) {
    // Rows of the stored B are the columns of op(B): inner products.
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        T acc = 0;
        for (std::size_t p = 0; p < k; ++p) {
          const T av = trans_a ? a[p * lda + i] : a[i * lda + p];
          acc += av * b[j * ldb + p];
        }
        c[i * ldc + j] += acc;
      }
    }
    return;
  }
  for (std::size_t i = 0; i < m; ++i) {
    T *crow = c + i * ldc;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = trans_a ? a[p * lda + i] : a[i * lda + p];
      const T *brow = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) {
        crow[j] += av * brow[j];
      }
    }
  }
}

template <typename T> void axpy(std::size_t n, T alpha, const T *x, T *y) {
  for (std::size_t i = 0; i < n; ++i) {
    y[i] += alpha * x[i];
  }
}

template <typename T> T dot(std::size_t n, const T *x, const T *y) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += x[i] * y[i];
  }
  return acc;
}

template <typename T> void mul(std::size_t n, const T *a, const T *b, T *out) {
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = a[i] * b[i];
  }
}

template <typename T> void relu(std::size_t n, const T *x, T *out) {
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::max(x[i], T(0));
  }
}

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

} // namespace saol::kernels::scalar
