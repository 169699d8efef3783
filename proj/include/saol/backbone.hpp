#pragma once

// Small pre-activation residual CNN that exposes every block output.

#include "saol/params.hpp"
#include "saol/tensor.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace saol {

struct BackboneConfig {
  std::size_t in_channels = 3;
  std::vector<std::size_t> channels{16, 32, 64}; // per block, before width_factor
  std::size_t width_factor = 1;
  std::size_t layers_per_block = 1;              // residual units per block
  std::vector<std::size_t> strides{1, 2, 2};     // first unit of each block
  std::size_t input_h = 32;
  std::size_t input_w = 32;

  std::size_t num_blocks() const { return channels.size(); }
  std::size_t block_channels(std::size_t block) const { return channels.at(block) * width_factor; }
};

// Throws ConfigError on an unusable configuration.
void validate(const BackboneConfig &config);

// Shape of every pyramid level for a batch of `batch` images.
std::vector<Shape> pyramid_shapes(const BackboneConfig &config, std::size_t batch);

template <typename T> struct FeaturePyramid {
  std::vector<Tensor<T>> levels; // X^1 .. X^L

  const Tensor<T> &last() const { return levels.back(); }
};

template <typename T>
void init_backbone_params(ParamStore<T> &store, const BackboneConfig &config, std::mt19937_64 &rng);

// Pyramid levels are relu(block output). Input must be [N, in_channels,
// input_h, input_w].
template <typename T>
FeaturePyramid<T> backbone_forward(const Tensor<T> &x, const BackboneConfig &config,
                                   const ParamStore<T> &params);

// FLOPs of one convolution: 2 per multiply-accumulate, plus one add per output
// element when there is a bias.
std::uint64_t conv_flops(std::size_t cin, std::size_t cout, std::size_t kh, std::size_t kw,
                         std::size_t out_h, std::size_t out_w, bool bias);

std::uint64_t count_params(const BackboneConfig &config);
// Per-image FLOPs at the given input resolution.
std::uint64_t count_flops(const BackboneConfig &config, std::size_t height, std::size_t width);

} // namespace saol
