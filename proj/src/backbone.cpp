#include "saol/backbone.hpp"

#include "saol/ops.hpp"

#include <string>

namespace saol {
namespace {

struct UnitLayout {
  std::size_t cin;
  std::size_t cout;
  std::size_t stride;
  bool projection;
  std::string prefix;
};

std::vector<UnitLayout> unit_layout(const BackboneConfig &config) {
  std::vector<UnitLayout> units;
  std::size_t cin = config.block_channels(0);
  for (std::size_t b = 0; b < config.num_blocks(); ++b) {
    const std::size_t cout = config.block_channels(b);
    for (std::size_t u = 0; u < config.layers_per_block; ++u) {
      const std::size_t stride = u == 0 ? config.strides[b] : 1;
      units.push_back({cin, cout, stride, stride != 1 || cin != cout,
                       "backbone.block" + std::to_string(b + 1) + ".unit" + std::to_string(u + 1)});
      cin = cout;
    }
  }
  return units;
}

template <typename T>
void add_conv(ParamStore<T> &store, const std::string &name, std::size_t cin, std::size_t cout,
              std::size_t k, std::mt19937_64 &rng) {
  store.add(name + ".weight", he_uniform<T>({cout, cin, k, k}, cin * k * k, rng));
  store.add(name + ".bias", Tensor<T>::zeros({cout}, true));
}

template <typename T>
Tensor<T> apply_conv(const Tensor<T> &x, const ParamStore<T> &params, const std::string &name,
                     std::size_t stride, std::size_t padding) {
  return conv2d(x, params.get(name + ".weight"), params.get(name + ".bias"), stride, padding);
}

} // namespace

void validate(const BackboneConfig &config) {
  if (config.num_blocks() == 0) {
    throw ConfigError("backbone needs at least one block");
  }
  if (config.strides.size() != config.num_blocks()) {
    throw ConfigError("backbone strides list must have one entry per block");
  }
  if (config.in_channels == 0 || config.width_factor == 0 || config.layers_per_block == 0) {
    throw ConfigError("backbone in_channels, width_factor and layers_per_block must be >= 1");
  }
  std::size_t cumulative = 1;
  for (std::size_t b = 0; b < config.num_blocks(); ++b) {
    if (config.channels[b] == 0) {
      throw ConfigError("backbone channel counts must be >= 1");
    }
    if (config.strides[b] == 0) {
      throw ConfigError("backbone strides must be >= 1");
    }
    cumulative *= config.strides[b];
  }
  if (config.input_h == 0 || config.input_w == 0 || config.input_h % cumulative != 0 ||
      config.input_w % cumulative != 0) {
    throw ConfigError("input resolution " + std::to_string(config.input_h) + "x" +
                      std::to_string(config.input_w) + " not divisible by cumulative stride " +
                      std::to_string(cumulative));
  }
}

std::vector<Shape> pyramid_shapes(const BackboneConfig &config, std::size_t batch) {
  validate(config);
  std::vector<Shape> shapes;
  std::size_t h = config.input_h;
  std::size_t w = config.input_w;
  for (std::size_t b = 0; b < config.num_blocks(); ++b) {
    h /= config.strides[b];
    w /= config.strides[b];
    shapes.push_back({batch, config.block_channels(b), h, w});
  }
  return shapes;
}

template <typename T>
void init_backbone_params(ParamStore<T> &store, const BackboneConfig &config,
                          std::mt19937_64 &rng) {
  validate(config);
  add_conv(store, "backbone.stem", config.in_channels, config.block_channels(0), 3, rng);
  for (const auto &unit : unit_layout(config)) {
    add_conv(store, unit.prefix + ".conv1", unit.cin, unit.cout, 3, rng);
    add_conv(store, unit.prefix + ".conv2", unit.cout, unit.cout, 3, rng);
    if (unit.projection) {
      add_conv(store, unit.prefix + ".skip", unit.cin, unit.cout, 1, rng);
    }
  }
}

template <typename T>
FeaturePyramid<T> backbone_forward(const Tensor<T> &x, const BackboneConfig &config,
                                   const ParamStore<T> &params) {
  validate(config);
  if (x.rank() != 4 || x.dim(1) != config.in_channels || x.dim(2) != config.input_h ||
      x.dim(3) != config.input_w) {
    throw DimensionError("backbone input " + shape_str(x.shape()) + " does not match config");
  }
  FeaturePyramid<T> pyramid;
  Tensor<T> h = apply_conv(x, params, "backbone.stem", 1, 1);
  const auto units = unit_layout(config);
  std::size_t unit_index = 0;
  for (std::size_t b = 0; b < config.num_blocks(); ++b) {
    for (std::size_t u = 0; u < config.layers_per_block; ++u, ++unit_index) {
      const auto &unit = units[unit_index];
      const Tensor<T> act = relu(h);
      Tensor<T> branch = apply_conv(act, params, unit.prefix + ".conv1", unit.stride, 1);
      branch = apply_conv(relu(branch), params, unit.prefix + ".conv2", 1, 1);
      const Tensor<T> skip =
          unit.projection ? apply_conv(act, params, unit.prefix + ".skip", unit.stride, 0) : h;
      h = add(branch, skip);
    }
    pyramid.levels.push_back(relu(h));
  }
  return pyramid;
}

std::uint64_t conv_flops(std::size_t cin, std::size_t cout, std::size_t kh, std::size_t kw,
                         std::size_t out_h, std::size_t out_w, bool bias) {
  const std::uint64_t outputs = static_cast<std::uint64_t>(cout) * out_h * out_w;
  return 2 * outputs * cin * kh * kw + (bias ? outputs : 0);
}

std::uint64_t count_params(const BackboneConfig &config) {
  validate(config);
  const auto conv = [](std::size_t cin, std::size_t cout, std::size_t k) {
    return static_cast<std::uint64_t>(cout) * cin * k * k + cout;
  };
  std::uint64_t total = conv(config.in_channels, config.block_channels(0), 3);
  for (const auto &unit : unit_layout(config)) {
    total += conv(unit.cin, unit.cout, 3) + conv(unit.cout, unit.cout, 3);
    if (unit.projection) {
      total += conv(unit.cin, unit.cout, 1);
    }
  }
  return total;
}

std::uint64_t count_flops(const BackboneConfig &config, std::size_t height, std::size_t width) {
  validate(config);
  std::uint64_t total = conv_flops(config.in_channels, config.block_channels(0), 3, 3, height,
                                   width, true);
  std::size_t h = height;
  std::size_t w = width;
  for (const auto &unit : unit_layout(config)) {
    const std::size_t oh = (h + unit.stride - 1) / unit.stride;
    const std::size_t ow = (w + unit.stride - 1) / unit.stride;
    total += conv_flops(unit.cin, unit.cout, 3, 3, oh, ow, true);
    total += conv_flops(unit.cout, unit.cout, 3, 3, oh, ow, true);
    if (unit.projection) {
      total += conv_flops(unit.cin, unit.cout, 1, 1, oh, ow, true);
    }
    // Residual add.
    total += static_cast<std::uint64_t>(unit.cout) * oh * ow;
    h = oh;
    w = ow;
  }
  return total;
}

template void init_backbone_params<float>(ParamStore<float> &, const BackboneConfig &,
                                          std::mt19937_64 &);
template void init_backbone_params<double>(ParamStore<double> &, const BackboneConfig &,
                                           std::mt19937_64 &);
template FeaturePyramid<float> backbone_forward<float>(const Tensor<float> &,
                                                       const BackboneConfig &,
                                                       const ParamStore<float> &);
template FeaturePyramid<double> backbone_forward<double>(const Tensor<double> &,
                                                         const BackboneConfig &,
                                                         const ParamStore<double> &);

} // namespace saol
