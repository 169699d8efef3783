#pragma once

// Output layers on top of the feature pyramid.
//
// The SAOL head produces a spatial attention map A (softmax over positions)
// and spatial logits Y (softmax over classes at every position) and reduces
// them to class probabilities y_k = sum_ij A_ij * Y_k,ij. The baseline GAP-FC
// head and the CutMix mask predictor share the same backbone.

#include "saol/backbone.hpp"
#include "saol/params.hpp"
#include "saol/tensor.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace saol {

struct SaolConfig {
  std::size_t num_classes = 10;
  std::size_t out_h = 0;                 // 0 selects H_L
  std::size_t out_w = 0;                 // 0 selects W_L
  std::vector<std::size_t> fused_blocks; // 1-based block ids; empty selects all
  std::size_t mid_channels = 0;          // 0 selects ceil(C_L / 2)
};

// SaolConfig with defaults filled in against a backbone.
struct HeadLayout {
  std::size_t num_classes;
  std::size_t out_h;
  std::size_t out_w;
  std::vector<std::size_t> fused; // 0-based, ascending
  std::size_t mid;
  std::size_t last_channels;
};

HeadLayout resolve_head(const SaolConfig &head, const BackboneConfig &backbone);

template <typename T> struct SaolOutput {
  Tensor<T> attention;      // [N,1,Ho,Wo]
  Tensor<T> spatial_logits; // [N,K,Ho,Wo]
  Tensor<T> final_logits;   // [N,K]
  Tensor<T> mask_pred;      // [N,1,Ho,Wo]
  Tensor<T> gapfc_logits;   // [N,K]
};

template <typename T> struct Model {
  BackboneConfig backbone;
  SaolConfig head;
  ParamStore<T> params;
};

// He-uniform weights, zero biases. The output layer of every head (attention
// and mask 1x1 convs, logit fusion, FC) starts at zero, so all heads begin
// uniform. With zero_heads every head parameter starts at zero.
template <typename T>
void init_head_params(ParamStore<T> &store, const BackboneConfig &backbone, const SaolConfig &head,
                      std::mt19937_64 &rng, bool zero_heads = false);

template <typename T>
Model<T> make_model(const BackboneConfig &backbone, const SaolConfig &head, std::uint64_t seed,
                    bool zero_heads = false);

// softmax(GAP(X_L) * W_FC), W_FC is [C_L, K].
template <typename T> Tensor<T> gap_fc_forward(const Tensor<T> &last, const Tensor<T> &fc_weight);

// 3x3 conv -> relu -> 1x1 conv -> (resize) -> softmax over (H, W).
template <typename T>
Tensor<T> attention_head_forward(const Tensor<T> &last, const ParamStore<T> &params,
                                 std::size_t out_h, std::size_t out_w);

// Same trunk as the attention head, per-pixel sigmoid output.
template <typename T>
Tensor<T> mask_head_forward(const Tensor<T> &last, const ParamStore<T> &params,
                            std::size_t out_h, std::size_t out_w);

// Per fused block: 1x1 projection, resize to (Ho, Wo); concat; 1x1 fusion;
// softmax over classes.
template <typename T>
Tensor<T> spatial_logits_forward(const FeaturePyramid<T> &pyramid, const HeadLayout &layout,
                                 const ParamStore<T> &params);

// y_k = sum_ij A_ij Y_k,ij. A is [N,1,H,W], Y is [N,K,H,W].
template <typename T> Tensor<T> saol_aggregate(const Tensor<T> &attention, const Tensor<T> &logits);

template <typename T> SaolOutput<T> saol_forward(const Tensor<T> &x, const Model<T> &model);

std::uint64_t count_model_params(const BackboneConfig &backbone, const SaolConfig &head);
std::uint64_t count_model_flops(const BackboneConfig &backbone, const SaolConfig &head);

} // namespace saol
