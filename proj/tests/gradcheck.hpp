#pragma once

// Central finite-difference gradient checks in 64-bit.

#include "saol/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace saol::test {

inline constexpr double kStep = 1e-5;
inline constexpr double kTolerance = 1e-4;
inline constexpr int kTrials = 30;

struct GradReport {
  double rel_error = 0; // ||analytic - numeric|| / max(||analytic||, ||numeric||)
  double max_abs = 0;
  std::size_t coordinates = 0;
  std::size_t kinks = 0; // coordinates excluded because the stencil crossed a relu kink
};

// Second difference above this means the +-h stencil is not in one smooth
// piece: a kink contributes ~|slope jump| * h, a smooth term ~f'' * h^2.
inline constexpr double kKinkSecondDifference = 1e-9;

// `f` builds a scalar loss from `inputs`; every input must require grad.
// With `skip_kinks`, coordinates whose stencil straddles a nondifferentiable
// point are left out of the comparison and counted.
inline GradReport grad_check(const std::function<Tensor<double>()> &f,
                             std::vector<Tensor<double>> inputs, bool skip_kinks = false) {
  for (auto &in : inputs) {
    in.zero_grad();
  }
  const Tensor<double> base = f();
  base.backward();
  const double center = base.item();
  GradReport report;
  double diff2 = 0, a2 = 0, n2 = 0, max_abs = 0;
  for (auto &in : inputs) {
    const std::vector<double> analytic(in.grad().begin(), in.grad().end());
    auto values = in.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + kStep;
      const double up = f().item();
      values[i] = saved - kStep;
      const double down = f().item();
      values[i] = saved;
      ++report.coordinates;
      if (skip_kinks && std::abs(up - 2 * center + down) > kKinkSecondDifference) {
        ++report.kinks;
        continue;
      }
      const double numeric = (up - down) / (2 * kStep);
      const double d = analytic[i] - numeric;
      diff2 += d * d;
      a2 += analytic[i] * analytic[i];
      n2 += numeric * numeric;
      max_abs = std::max(max_abs, std::abs(d));
    }
  }
  const double denom = std::max(std::sqrt(std::max(a2, n2)), 1e-300);
  report.rel_error = std::sqrt(diff2) / denom;
  report.max_abs = max_abs;
  return report;
}

inline Tensor<double> random_tensor(const Shape &shape, std::mt19937_64 &rng, double lo = -1.0,
                                    double hi = 1.0, bool requires_grad = true) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(numel(shape));
  for (auto &x : v) {
    x = dist(rng);
  }
  return Tensor<double>(shape, std::move(v), requires_grad);
}

// Rows along axis 1 of a [N,K,...] tensor normalized to distributions.
inline Tensor<double> random_distribution(const Shape &shape, std::mt19937_64 &rng,
                                          bool requires_grad = false) {
  std::uniform_real_distribution<double> dist(0.05, 1.0);
  std::vector<double> v(numel(shape));
  for (auto &x : v) {
    x = dist(rng);
  }
  const std::size_t k = shape[1];
  std::size_t inner = 1;
  for (std::size_t a = 2; a < shape.size(); ++a) {
    inner *= shape[a];
  }
  for (std::size_t n = 0; n < shape[0]; ++n) {
    for (std::size_t i = 0; i < inner; ++i) {
      double s = 0;
      for (std::size_t c = 0; c < k; ++c) {
        s += v[(n * k + c) * inner + i];
      }
      for (std::size_t c = 0; c < k; ++c) {
        v[(n * k + c) * inner + i] /= s;
      }
    }
  }
  return Tensor<double>(shape, std::move(v), requires_grad);
}

} // namespace saol::test
