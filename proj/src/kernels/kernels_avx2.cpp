// AVX2 + FMA variants. This translation unit is the only one compiled with
// -mavx2 -mfma; nothing here may be called unless isa_supported(kAvx2).

#include "saol/kernels.hpp"

#include <immintrin.h>

#include <algorithm>

namespace saol::kernels::avx2 {
namespace {

template <typename T> struct Vec;

template <> struct Vec<float> {
  using Reg = __m256;
  static constexpr std::size_t kWidth = 8;
  static Reg zero() { return _mm256_setzero_ps(); }
  static Reg set1(float v) { return _mm256_set1_ps(v); }
  static Reg load(const float *p) { return _mm256_loadu_ps(p); }
  static void store(float *p, Reg v) { _mm256_storeu_ps(p, v); }
  static Reg fmadd(Reg a, Reg b, Reg c) { return _mm256_fmadd_ps(a, b, c); }
  static Reg add(Reg a, Reg b) { return _mm256_add_ps(a, b); }
  static Reg mul(Reg a, Reg b) { return _mm256_mul_ps(a, b); }
  static Reg max(Reg a, Reg b) { return _mm256_max_ps(a, b); }
  static float hsum(Reg v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 shuf = _mm_movehdup_ps(lo);
    __m128 sums = _mm_add_ps(lo, shuf);
    shuf = _mm_movehl_ps(shuf, sums);
    sums = _mm_add_ss(sums, shuf);
    return _mm_cvtss_f32(sums);
  }
};

template <> struct Vec<double> {
  using Reg = __m256d;
  static constexpr std::size_t kWidth = 4;
  static Reg zero() { return _mm256_setzero_pd(); }
  static Reg set1(double v) { return _mm256_set1_pd(v); }
  static Reg load(const double *p) { return _mm256_loadu_pd(p); }
  static void store(double *p, Reg v) { _mm256_storeu_pd(p, v); }
  static Reg fmadd(Reg a, Reg b, Reg c) { return _mm256_fmadd_pd(a, b, c); }
  static Reg add(Reg a, Reg b) { return _mm256_add_pd(a, b); }
  static Reg mul(Reg a, Reg b) { return _mm256_mul_pd(a, b); }
  static Reg max(Reg a, Reg b) { return _mm256_max_pd(a, b); }
  static double hsum(Reg v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d high64 = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, high64));
  }
};

template <typename T> T dot_impl(std::size_t n, const T *x, const T *y) {
  using V = Vec<T>;
  constexpr std::size_t w = V::kWidth;
  auto acc0 = V::zero();
  auto acc1 = V::zero();
  std::size_t i = 0;
  for (; i + 2 * w <= n; i += 2 * w) {
    acc0 = V::fmadd(V::load(x + i), V::load(y + i), acc0);
    acc1 = V::fmadd(V::load(x + i + w), V::load(y + i + w), acc1);
  }
  for (; i + w <= n; i += w) {
    acc0 = V::fmadd(V::load(x + i), V::load(y + i), acc0);
  }
  T acc = V::hsum(V::add(acc0, acc1));
  for (; i < n; ++i) {
    acc += x[i] * y[i];
  }
  return acc;
}

// op(B) = B stored k x n. Register tile: 4 rows of C by two vectors.
template <typename T>
void gemm_nn(bool trans_a, std::size_t m, std::size_t n, std::size_t k, const T *a,
             std::size_t lda, const T *b, std::size_t ldb, T *c, std::size_t ldc) {
  using V = Vec<T>;
  using Reg = typename V::Reg;
  constexpr std::size_t w = V::kWidth;
  const auto a_at = [&](std::size_t i, std::size_t p) {
    return trans_a ? a[p * lda + i] : a[i * lda + p];
  };

  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    std::size_t j = 0;
    for (; j + 2 * w <= n; j += 2 * w) {
      Reg acc[4][2];
      for (std::size_t r = 0; r < 4; ++r) {
        acc[r][0] = V::load(c + (i + r) * ldc + j);
        acc[r][1] = V::load(c + (i + r) * ldc + j + w);
      }
      for (std::size_t p = 0; p < k; ++p) {
        const Reg b0 = V::load(b + p * ldb + j);
        const Reg b1 = V::load(b + p * ldb + j + w);
        for (std::size_t r = 0; r < 4; ++r) {
          const Reg av = V::set1(a_at(i + r, p));
          acc[r][0] = V::fmadd(av, b0, acc[r][0]);
          acc[r][1] = V::fmadd(av, b1, acc[r][1]);
        }
      }
      for (std::size_t r = 0; r < 4; ++r) {
        V::store(c + (i + r) * ldc + j, acc[r][0]);
        V::store(c + (i + r) * ldc + j + w, acc[r][1]);
      }
    }
    for (; j + w <= n; j += w) {
      Reg acc[4];
      for (std::size_t r = 0; r < 4; ++r) {
        acc[r] = V::load(c + (i + r) * ldc + j);
      }
      for (std::size_t p = 0; p < k; ++p) {
        const Reg b0 = V::load(b + p * ldb + j);
        for (std::size_t r = 0; r < 4; ++r) {
          acc[r] = V::fmadd(V::set1(a_at(i + r, p)), b0, acc[r]);
        }
      }
      for (std::size_t r = 0; r < 4; ++r) {
        V::store(c + (i + r) * ldc + j, acc[r]);
      }
    }
    for (; j < n; ++j) {
      for (std::size_t r = 0; r < 4; ++r) {
        T acc = 0;
        for (std::size_t p = 0; p < k; ++p) {
          acc += a_at(i + r, p) * b[p * ldb + j];
        }
        c[(i + r) * ldc + j] += acc;
      }
    }
  }
  for (; i < m; ++i) {
    T *crow = c + i * ldc;
    std::size_t j = 0;
    for (; j + w <= n; j += w) {
      Reg acc = V::load(crow + j);
      for (std::size_t p = 0; p < k; ++p) {
        acc = V::fmadd(V::set1(a_at(i, p)), V::load(b + p * ldb + j), acc);
      }
      V::store(crow + j, acc);
    }
    for (; j < n; ++j) {
      T acc = 0;
      for (std::size_t p = 0; p < k; ++p) {
        acc += a_at(i, p) * b[p * ldb + j];
      }
      crow[j] += acc;
    }
  }
}

// op(B) = B^T with B stored n x k: C[i,j] += dot(A row i, B row j). Tile of
// 2 rows of A against 4 rows of B shares every load.
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T *a, std::size_t lda,
             const T *b, std::size_t ldb, T *c, std::size_t ldc) {
  using V = Vec<T>;
  constexpr std::size_t w = V::kWidth;
  const std::size_t kv = k - k % w;
  std::size_t i = 0;
  for (; i + 2 <= m; i += 2) {
    const T *a0 = a + i * lda;
    const T *a1 = a0 + lda;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      const T *b0 = b + j * ldb;
      const T *b1 = b0 + ldb;
      const T *b2 = b1 + ldb;
      const T *b3 = b2 + ldb;
      auto c00 = V::zero(), c01 = V::zero(), c02 = V::zero(), c03 = V::zero();
      auto c10 = V::zero(), c11 = V::zero(), c12 = V::zero(), c13 = V::zero();
      for (std::size_t p = 0; p < kv; p += w) {
        const auto x0 = V::load(a0 + p);
        const auto x1 = V::load(a1 + p);
        auto y = V::load(b0 + p);
        c00 = V::fmadd(x0, y, c00);
        c10 = V::fmadd(x1, y, c10);
        y = V::load(b1 + p);
        c01 = V::fmadd(x0, y, c01);
        c11 = V::fmadd(x1, y, c11);
        y = V::load(b2 + p);
        c02 = V::fmadd(x0, y, c02);
        c12 = V::fmadd(x1, y, c12);
        y = V::load(b3 + p);
        c03 = V::fmadd(x0, y, c03);
        c13 = V::fmadd(x1, y, c13);
      }
      T s[2][4] = {{V::hsum(c00), V::hsum(c01), V::hsum(c02), V::hsum(c03)},
                   {V::hsum(c10), V::hsum(c11), V::hsum(c12), V::hsum(c13)}};
      for (std::size_t p = kv; p < k; ++p) {
        for (std::size_t q = 0; q < 4; ++q) {
          s[0][q] += a0[p] * b[(j + q) * ldb + p];
          s[1][q] += a1[p] * b[(j + q) * ldb + p];
        }
      }
      for (std::size_t q = 0; q < 4; ++q) {
        c[i * ldc + j + q] += s[0][q];
        c[(i + 1) * ldc + j + q] += s[1][q];
      }
    }
    for (; j < n; ++j) {
      c[i * ldc + j] += dot_impl(k, a0, b + j * ldb);
      c[(i + 1) * ldc + j] += dot_impl(k, a1, b + j * ldb);
    }
  }
  for (; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      c[i * ldc + j] += dot_impl(k, a + i * lda, b + j * ldb);
    }
  }
}

} // namespace

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T *a,
          std::size_t lda, const T *b, std::size_t ldb, T *c, std::size_t ldc) {
  if (!trans_b) {
    gemm_nn(trans_a, m, n, k, a, lda, b, ldb, c, ldc);
    return;
  }
  if (!trans_a) {
    gemm_nt(m, n, k, a, lda, b, ldb, c, ldc);
    return;
  }
  // Both transposed: rare, fall back to the reference loop.
  scalar::gemm(trans_a, trans_b, m, n, k, a, lda, b, ldb, c, ldc);
}

template <typename T> void axpy(std::size_t n, T alpha, const T *x, T *y) {
  using V = Vec<T>;
  constexpr std::size_t w = V::kWidth;
  const auto av = V::set1(alpha);
  std::size_t i = 0;
  for (; i + w <= n; i += w) {
    V::store(y + i, V::fmadd(av, V::load(x + i), V::load(y + i)));
  }
  for (; i < n; ++i) {
    y[i] += alpha * x[i];
  }
}

template <typename T> T dot(std::size_t n, const T *x, const T *y) { return dot_impl(n, x, y); }

template <typename T> void mul(std::size_t n, const T *a, const T *b, T *out) {
  using V = Vec<T>;
  constexpr std::size_t w = V::kWidth;
  std::size_t i = 0;
  for (; i + w <= n; i += w) {
    V::store(out + i, V::mul(V::load(a + i), V::load(b + i)));
  }
  for (; i < n; ++i) {
    out[i] = a[i] * b[i];
  }
}

template <typename T> void relu(std::size_t n, const T *x, T *out) {
  using V = Vec<T>;
  constexpr std::size_t w = V::kWidth;
  const auto z = V::zero();
  std::size_t i = 0;
  for (; i + w <= n; i += w) {
    V::store(out + i, V::max(V::load(x + i), z));
  }
  for (; i < n; ++i) {
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

} // namespace saol::kernels::avx2
