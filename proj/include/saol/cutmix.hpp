#pragma once

// CutMix batch construction and the self-annotated mask labels.
//
// For every sample n the base image x_B = x[n] receives a rectangular patch
// from x_A = x[partner[n]]:
//   x' = M * x_A + (1 - M) * x_B,   y' = lambda * y_A + (1 - lambda) * y_B
// with lambda the realized area fraction of M.

#include "saol/tensor.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace saol {

// Half-open pixel rectangle [y0, y1) x [x0, x1). May be empty.
struct PatchRect {
  std::size_t y0 = 0;
  std::size_t x0 = 0;
  std::size_t y1 = 0;
  std::size_t x1 = 0;

  std::size_t area() const { return (y1 - y0) * (x1 - x0); }
};

enum class PatchPlacement {
  kInside,     // whole patch inside the image, top-left uniform over valid spots
  kCenterClip, // center uniform over the image, patch clipped to the borders
};

struct CutMixOptions {
  double alpha = 1.0;
  PatchPlacement placement = PatchPlacement::kInside;
};

template <typename T> struct CutMixBatch {
  Tensor<T> mixed;  // x'  [N,C,H,W]
  Tensor<T> labels; // y'  [N,K]
  Tensor<T> mask;   // M   [N,1,H,W], 1 where pixels come from x_A
  Tensor<T> source; // x_A [N,C,H,W]
  std::vector<double> lambda;
  std::vector<std::size_t> partner; // x_A[n] = x[partner[n]]
  std::vector<PatchRect> rects;
};

double sample_beta(double a, double b, std::mt19937_64 &rng);

// Patch whose side ratios are sqrt(lambda0) before clipping.
PatchRect sample_patch(std::size_t height, std::size_t width, double lambda0,
                       PatchPlacement placement, std::mt19937_64 &rng);

// Deterministic assembly from explicit pairings and rectangles.
template <typename T>
CutMixBatch<T> make_cutmix(const Tensor<T> &images, const Tensor<T> &labels,
                           const std::vector<std::size_t> &partner,
                           const std::vector<PatchRect> &rects);

// Draws lambda0 ~ Beta(alpha, alpha) per sample and a uniform random pairing
// permutation. images [N,C,H,W], labels [N,K] (rows are distributions).
template <typename T>
CutMixBatch<T> sample_cutmix(const Tensor<T> &images, const Tensor<T> &labels,
                             const CutMixOptions &options, std::mt19937_64 &rng);

template <typename T>
CutMixBatch<T> sample_cutmix(const Tensor<T> &images, const Tensor<T> &labels, double alpha,
                             std::uint64_t seed);

// Area-average pooling of a [N,1,H,W] mask to [N,1,out_h,out_w]; each cell is
// the covered fraction of its footprint.
template <typename T>
Tensor<T> downsample_mask(const Tensor<T> &mask, std::size_t out_h, std::size_t out_w);

} // namespace saol
