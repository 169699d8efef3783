#include "gradcheck.hpp"

#include "saol/kernels.hpp"
#include "saol/ops.hpp"

#include <doctest.h>

#include <cmath>

using namespace saol;
using namespace saol::kernels;

namespace {

template <typename T> std::vector<T> random_values(std::size_t n, std::mt19937_64 &rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<T> v(n);
  for (auto &x : v) {
    x = static_cast<T>(dist(rng));
  }
  return v;
}

template <typename T> double max_rel_diff(const std::vector<T> &a, const std::vector<T> &b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max(1.0, std::abs(static_cast<double>(a[i])));
    worst = std::max(worst, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])) / scale);
  }
  return worst;
}

template <typename T> double tolerance() { return sizeof(T) == 4 ? 1e-4 : 1e-12; }

template <typename T> void check_gemm_equivalence() {
  std::mt19937_64 rng(11);
  const std::size_t sizes[][3] = {{1, 1, 1},   {3, 5, 7},   {4, 16, 8},   {5, 17, 33},
                                  {8, 9, 100}, {13, 31, 4}, {32, 64, 27}, {7, 3, 300}};
  for (const auto &s : sizes) {
    const std::size_t m = s[0], n = s[1], k = s[2];
    for (int ta = 0; ta < 2; ++ta) {
      for (int tb = 0; tb < 2; ++tb) {
        const auto a = random_values<T>(m * k, rng);
        const auto b = random_values<T>(k * n, rng);
        const auto c0 = random_values<T>(m * n, rng);
        const std::size_t lda = ta ? m : k;
        const std::size_t ldb = tb ? k : n;
        auto ref = c0;
        auto fast = c0;
        scalar::gemm<T>(ta, tb, m, n, k, a.data(), lda, b.data(), ldb, ref.data(), n);
        avx2::gemm<T>(ta, tb, m, n, k, a.data(), lda, b.data(), ldb, fast.data(), n);
        INFO("m=" << m << " n=" << n << " k=" << k << " ta=" << ta << " tb=" << tb);
        CHECK(max_rel_diff(ref, fast) < tolerance<T>() * std::sqrt(static_cast<double>(k)));
      }
    }
  }
}

template <typename T> void check_vector_equivalence() {
  std::mt19937_64 rng(12);
  for (std::size_t n : {0u, 1u, 3u, 7u, 8u, 9u, 15u, 16u, 17u, 31u, 64u, 1000u}) {
    const auto x = random_values<T>(n, rng);
    const auto y0 = random_values<T>(n, rng);
    auto y_ref = y0;
    auto y_fast = y0;
    scalar::axpy<T>(n, T(0.37), x.data(), y_ref.data());
    avx2::axpy<T>(n, T(0.37), x.data(), y_fast.data());
    CHECK(max_rel_diff(y_ref, y_fast) < tolerance<T>());

    const double d_ref = scalar::dot<T>(n, x.data(), y0.data());
    const double d_fast = avx2::dot<T>(n, x.data(), y0.data());
    CHECK(std::abs(d_ref - d_fast) < tolerance<T>() * std::max(1.0, std::sqrt(double(n))));

    std::vector<T> m_ref(n), m_fast(n), r_ref(n), r_fast(n);
    scalar::mul<T>(n, x.data(), y0.data(), m_ref.data());
    avx2::mul<T>(n, x.data(), y0.data(), m_fast.data());
    CHECK(m_ref == m_fast);
    scalar::relu<T>(n, x.data(), r_ref.data());
    avx2::relu<T>(n, x.data(), r_fast.data());
    CHECK(r_ref == r_fast);
  }
}

// conv2d forward and all three gradients under one ISA.
struct ConvResult {
  std::vector<float> out, dx, dw, db;
};

ConvResult run_conv(Isa isa, std::size_t stride, std::size_t pad, std::size_t k) {
  ScopedIsa scope(isa);
  std::mt19937_64 rng(5);
  const auto xv = random_values<float>(2 * 3 * 9 * 9, rng);
  const auto wv = random_values<float>(4 * 3 * k * k, rng);
  const auto bv = random_values<float>(4, rng);
  const auto rv = random_values<float>(2 * 4 * 9 * 9, rng);
  Tensor<float> x({2, 3, 9, 9}, xv, true);
  Tensor<float> w({4, 3, k, k}, wv, true);
  Tensor<float> b({4}, bv, true);
  auto y = conv2d(x, w, b, stride, pad);
  std::vector<float> r(rv.begin(), rv.begin() + static_cast<std::ptrdiff_t>(y.numel()));
  sum(mul(y, Tensor<float>(y.shape(), r))).backward();
  auto vec = [](std::span<const float> s) { return std::vector<float>(s.begin(), s.end()); };
  return {vec(y.data()), vec(x.grad()), vec(w.grad()), vec(b.grad())};
}

} // namespace

TEST_CASE("dispatch reports a supported ISA and honors overrides") {
  CHECK(isa_supported(Isa::kScalar));
  CHECK(isa_supported(active_isa()));
  {
    ScopedIsa scope(Isa::kScalar);
    CHECK(active_isa() == Isa::kScalar);
  }
  CHECK(std::string(isa_name(Isa::kScalar)) == "scalar");
  if (!isa_supported(Isa::kAvx2)) {
    CHECK_THROWS_AS(set_active_isa(Isa::kAvx2), ArgumentError);
  }
}

#if SAOL_HAVE_AVX2_KERNELS
TEST_CASE("avx2 kernels match the scalar reference") {
  if (!isa_supported(Isa::kAvx2)) {
    MESSAGE("CPU lacks AVX2+FMA; equivalence test skipped");
    return;
  }
  check_gemm_equivalence<float>();
  check_gemm_equivalence<double>();
  check_vector_equivalence<float>();
  check_vector_equivalence<double>();
}

TEST_CASE("conv2d forward and backward agree across ISAs") {
  if (!isa_supported(Isa::kAvx2)) {
    return;
  }
  for (auto [stride, pad, k] : {std::tuple{1u, 1u, 3u}, {2u, 1u, 3u}, {1u, 0u, 1u}, {2u, 0u, 1u}}) {
    const auto ref = run_conv(Isa::kScalar, stride, pad, k);
    const auto fast = run_conv(Isa::kAvx2, stride, pad, k);
    CHECK(max_rel_diff(ref.out, fast.out) < 1e-4);
    CHECK(max_rel_diff(ref.dx, fast.dx) < 1e-4);
    CHECK(max_rel_diff(ref.dw, fast.dw) < 1e-4);
    CHECK(max_rel_diff(ref.db, fast.db) < 1e-4);
  }
}
#endif
