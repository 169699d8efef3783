#include "saol/saol_head.hpp"

#include "saol/ops.hpp"

#include <algorithm>
#include <string>

namespace saol {
namespace {

std::string proj_name(std::size_t block) {
  return "head.logits.proj" + std::to_string(block + 1);
}

template <typename T>
void add_conv(ParamStore<T> &store, const std::string &name, std::size_t cin, std::size_t cout,
              std::size_t k, std::mt19937_64 &rng, bool zero) {
  store.add(name + ".weight", zero ? Tensor<T>::zeros({cout, cin, k, k}, true)
                                   : he_uniform<T>({cout, cin, k, k}, cin * k * k, rng));
  store.add(name + ".bias", Tensor<T>::zeros({cout}, true));
}

template <typename T>
Tensor<T> apply_conv(const Tensor<T> &x, const ParamStore<T> &params, const std::string &name,
                     std::size_t padding) {
  return conv2d(x, params.get(name + ".weight"), params.get(name + ".bias"), 1, padding);
}

template <typename T>
Tensor<T> resize_if_needed(const Tensor<T> &x, std::size_t out_h, std::size_t out_w) {
  if (x.dim(2) == out_h && x.dim(3) == out_w) {
    return x;
  }
  return bilinear_resize(x, out_h, out_w);
}

// conv3x3 -> relu -> conv1x1 to one channel, at the output resolution.
template <typename T>
Tensor<T> single_channel_trunk(const Tensor<T> &last, const ParamStore<T> &params,
                               const std::string &prefix, std::size_t out_h, std::size_t out_w) {
  if (last.rank() != 4) {
    throw DimensionError("head input must be [N,C,H,W], got " + shape_str(last.shape()));
  }
  Tensor<T> h = relu(apply_conv(last, params, prefix + ".conv1", 1));
  h = apply_conv(h, params, prefix + ".conv2", 0);
  return resize_if_needed(h, out_h, out_w);
}

} // namespace

HeadLayout resolve_head(const SaolConfig &head, const BackboneConfig &backbone) {
  validate(backbone);
  if (head.num_classes == 0) {
    throw ConfigError("num_classes must be >= 1");
  }
  const auto shapes = pyramid_shapes(backbone, 1);
  HeadLayout layout;
  layout.num_classes = head.num_classes;
  layout.out_h = head.out_h ? head.out_h : shapes.back()[2];
  layout.out_w = head.out_w ? head.out_w : shapes.back()[3];
  layout.last_channels = shapes.back()[1];
  layout.mid = head.mid_channels ? head.mid_channels : (layout.last_channels + 1) / 2;
  if (head.fused_blocks.empty()) {
    for (std::size_t b = 0; b < backbone.num_blocks(); ++b) {
      layout.fused.push_back(b);
    }
  } else {
    for (const auto id : head.fused_blocks) {
      if (id == 0 || id > backbone.num_blocks()) {
        throw ConfigError("fused block " + std::to_string(id) + " outside 1.." +
                          std::to_string(backbone.num_blocks()));
      }
      layout.fused.push_back(id - 1);
    }
    std::sort(layout.fused.begin(), layout.fused.end());
    layout.fused.erase(std::unique(layout.fused.begin(), layout.fused.end()), layout.fused.end());
  }
  return layout;
}

template <typename T>
void init_head_params(ParamStore<T> &store, const BackboneConfig &backbone, const SaolConfig &head,
                      std::mt19937_64 &rng, bool zero_heads) {
  const auto layout = resolve_head(head, backbone);
  const std::size_t cl = layout.last_channels;
  add_conv(store, "head.attn.conv1", cl, layout.mid, 3, rng, zero_heads);
  // Output layers start at zero, so every head starts out uniform.
  add_conv(store, "head.attn.conv2", layout.mid, 1, 1, rng, true);
  for (const auto b : layout.fused) {
    add_conv(store, proj_name(b), backbone.block_channels(b), layout.mid, 1, rng, zero_heads);
  }
  add_conv(store, "head.logits.fuse", layout.mid * layout.fused.size(), layout.num_classes, 1, rng,
           true);
  add_conv(store, "head.mask.conv1", cl, layout.mid, 3, rng, zero_heads);
  add_conv(store, "head.mask.conv2", layout.mid, 1, 1, rng, true);
  store.add("head.gapfc.weight", Tensor<T>::zeros({cl, layout.num_classes}, true));
}

template <typename T>
Model<T> make_model(const BackboneConfig &backbone, const SaolConfig &head, std::uint64_t seed,
                    bool zero_heads) {
  Model<T> model{backbone, head, {}};
  std::mt19937_64 rng(seed);
  init_backbone_params(model.params, backbone, rng);
  init_head_params(model.params, backbone, head, rng, zero_heads);
  return model;
}

template <typename T> Tensor<T> gap_fc_forward(const Tensor<T> &last, const Tensor<T> &fc_weight) {
  if (last.rank() != 4 || fc_weight.rank() != 2 || fc_weight.dim(0) != last.dim(1)) {
    throw DimensionError("gap_fc shapes " + shape_str(last.shape()) + " and " +
                         shape_str(fc_weight.shape()));
  }
  return softmax(matmul(global_avg_pool(last), fc_weight), {1});
}

template <typename T>
Tensor<T> attention_head_forward(const Tensor<T> &last, const ParamStore<T> &params,
                                 std::size_t out_h, std::size_t out_w) {
  return softmax(single_channel_trunk(last, params, "head.attn", out_h, out_w), {2, 3});
}

template <typename T>
Tensor<T> mask_head_forward(const Tensor<T> &last, const ParamStore<T> &params,
                            std::size_t out_h, std::size_t out_w) {
  return sigmoid(single_channel_trunk(last, params, "head.mask", out_h, out_w));
}

template <typename T>
Tensor<T> spatial_logits_forward(const FeaturePyramid<T> &pyramid, const HeadLayout &layout,
                                 const ParamStore<T> &params) {
  if (layout.fused.empty()) {
    throw ConfigError("spatial logits need at least one fused block");
  }
  std::vector<Tensor<T>> branches;
  for (const auto b : layout.fused) {
    if (b >= pyramid.levels.size()) {
      throw ConfigError("fused block " + std::to_string(b + 1) + " missing from pyramid");
    }
    const Tensor<T> projected = apply_conv(pyramid.levels[b], params, proj_name(b), 0);
    branches.push_back(resize_if_needed(projected, layout.out_h, layout.out_w));
  }
  const Tensor<T> fused = branches.size() == 1 ? branches.front() : concat_channels(branches);
  return softmax(apply_conv(fused, params, "head.logits.fuse", 0), {1});
}

template <typename T> Tensor<T> saol_aggregate(const Tensor<T> &attention, const Tensor<T> &logits) {
  if (attention.rank() != 4 || logits.rank() != 4 || attention.dim(1) != 1 ||
      attention.dim(0) != logits.dim(0) || attention.dim(2) != logits.dim(2) ||
      attention.dim(3) != logits.dim(3)) {
    throw DimensionError("saol_aggregate shapes " + shape_str(attention.shape()) + " and " +
                         shape_str(logits.shape()));
  }
  return sum(mul(attention, logits), {2, 3});
}

template <typename T> SaolOutput<T> saol_forward(const Tensor<T> &x, const Model<T> &model) {
  const auto layout = resolve_head(model.head, model.backbone);
  const auto pyramid = backbone_forward(x, model.backbone, model.params);
  const Tensor<T> &last = pyramid.last();
  SaolOutput<T> out;
  out.attention = attention_head_forward(last, model.params, layout.out_h, layout.out_w);
  out.spatial_logits = spatial_logits_forward(pyramid, layout, model.params);
  out.final_logits = saol_aggregate(out.attention, out.spatial_logits);
  out.mask_pred = mask_head_forward(last, model.params, layout.out_h, layout.out_w);
  out.gapfc_logits = gap_fc_forward(last, model.params.get("head.gapfc.weight"));
  return out;
}

std::uint64_t count_model_params(const BackboneConfig &backbone, const SaolConfig &head) {
  const auto layout = resolve_head(head, backbone);
  const auto conv = [](std::size_t cin, std::size_t cout, std::size_t k) {
    return static_cast<std::uint64_t>(cout) * cin * k * k + cout;
  };
  std::uint64_t total = count_params(backbone);
  total += 2 * (conv(layout.last_channels, layout.mid, 3) + conv(layout.mid, 1, 1));
  for (const auto b : layout.fused) {
    total += conv(backbone.block_channels(b), layout.mid, 1);
  }
  total += conv(layout.mid * layout.fused.size(), layout.num_classes, 1);
  total += static_cast<std::uint64_t>(layout.last_channels) * layout.num_classes;
  return total;
}

std::uint64_t count_model_flops(const BackboneConfig &backbone, const SaolConfig &head) {
  const auto layout = resolve_head(head, backbone);
  const auto shapes = pyramid_shapes(backbone, 1);
  const std::size_t hl = shapes.back()[2];
  const std::size_t wl = shapes.back()[3];
  std::uint64_t total = count_flops(backbone, backbone.input_h, backbone.input_w);
  // Attention and mask trunks.
  total += 2 * (conv_flops(layout.last_channels, layout.mid, 3, 3, hl, wl, true) +
                conv_flops(layout.mid, 1, 1, 1, hl, wl, true));
  for (const auto b : layout.fused) {
    total += conv_flops(backbone.block_channels(b), layout.mid, 1, 1, shapes[b][2], shapes[b][3],
                        true);
  }
  total += conv_flops(layout.mid * layout.fused.size(), layout.num_classes, 1, 1, layout.out_h,
                      layout.out_w, true);
  // Weighted sum and GAP-FC.
  total += 2ull * layout.num_classes * layout.out_h * layout.out_w;
  total += 2ull * layout.last_channels * layout.num_classes;
  return total;
}

#define SAOL_INSTANTIATE(T)                                                                        \
  template void init_head_params<T>(ParamStore<T> &, const BackboneConfig &, const SaolConfig &,   \
                                    std::mt19937_64 &, bool);                                      \
  template Model<T> make_model<T>(const BackboneConfig &, const SaolConfig &, std::uint64_t,       \
                                  bool);                                                           \
  template Tensor<T> gap_fc_forward<T>(const Tensor<T> &, const Tensor<T> &);                      \
  template Tensor<T> attention_head_forward<T>(const Tensor<T> &, const ParamStore<T> &,           \
                                               std::size_t, std::size_t);                          \
  template Tensor<T> mask_head_forward<T>(const Tensor<T> &, const ParamStore<T> &, std::size_t,   \
                                          std::size_t);                                            \
  template Tensor<T> spatial_logits_forward<T>(const FeaturePyramid<T> &, const HeadLayout &,      \
                                               const ParamStore<T> &);                             \
  template Tensor<T> saol_aggregate<T>(const Tensor<T> &, const Tensor<T> &);                      \
  template SaolOutput<T> saol_forward<T>(const Tensor<T> &, const Model<T> &);

SAOL_INSTANTIATE(float)
SAOL_INSTANTIATE(double)
#undef SAOL_INSTANTIATE

} // namespace saol
