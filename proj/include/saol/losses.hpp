#pragma once

// Training objectives. All probability inputs are rows/positions of valid
// distributions; logs are taken as log(p + epsilon).

#include "saol/tensor.hpp"

namespace saol {

struct LossConfig {
  bool enable_ss1 = false;      // mask-prediction BCE
  bool enable_ss2 = false;      // masked spatial-logit KL
  bool enable_sd = false;       // self-distillation into the GAP-FC head
  bool enable_gapfc_ce = false; // plain CE on the GAP-FC head (ablation)
  double beta = 0.5;
  double epsilon = 1e-12;
  double weight_sl = 1.0;
  double weight_ss1 = 1.0;
  double weight_ss2 = 1.0;
  double weight_sd = 1.0;
};

void validate(const LossConfig &config);

// -mean_n sum_k y_nk log(p_nk + eps). probs and targets are [N,K].
template <typename T>
Tensor<T> loss_ce(const Tensor<T> &probs, const Tensor<T> &targets, double epsilon = 1e-12);

// Mean binary cross-entropy between a predicted mask and a (possibly
// fractional) target mask, both in [0,1].
template <typename T>
Tensor<T> loss_ss1(const Tensor<T> &mask_pred, const Tensor<T> &mask_target,
                   double epsilon = 1e-12);

// Masked KL(target || pred) between class distributions at each position.
// The per-sample average is weighted by mask_down and normalized by its sum;
// samples with an empty mask contribute 0. The result is the mean over N.
// Gradients reach `pred` only.
template <typename T>
Tensor<T> loss_ss2(const Tensor<T> &pred, const Tensor<T> &target, const Tensor<T> &mask_down,
                   double epsilon = 1e-12);

// mean_n KL(teacher_n || student_n); the teacher is detached.
template <typename T>
Tensor<T> kl_divergence(const Tensor<T> &teacher, const Tensor<T> &student, double epsilon = 1e-12);

// KL(SAOL || GAP-FC) + beta * CE(GAP-FC, y), teacher detached.
template <typename T>
Tensor<T> loss_sd(const Tensor<T> &saol_probs, const Tensor<T> &gapfc_probs,
                  const Tensor<T> &targets, double beta = 0.5, double epsilon = 1e-12);

template <typename T> struct LossParts {
  Tensor<T> sl;
  Tensor<T> ss1;
  Tensor<T> ss2;
  Tensor<T> sd; // self-distillation, or plain GAP-FC CE when that ablation is on
};

// Weighted sum of the defined, enabled parts. L_SL is always included.
template <typename T> Tensor<T> loss_total(const LossParts<T> &parts, const LossConfig &config);

} // namespace saol
