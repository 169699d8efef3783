#include "saol/losses.hpp"

#include "saol/ops.hpp"

#include <cmath>

namespace saol {
namespace {

template <typename T> void require_nonnegative(const Tensor<T> &t, const char *what) {
  for (const auto v : t.data()) {
    if (!(v >= T(0))) {
      throw DomainError(std::string(what) + " contains a negative or NaN entry");
    }
  }
}

template <typename T> void require_unit_interval(const Tensor<T> &t, const char *what) {
  for (const auto v : t.data()) {
    if (!(v >= T(0) && v <= T(1))) {
      throw DomainError(std::string(what) + " has an entry outside [0,1]");
    }
  }
}

template <typename T> void require_same_shape(const Tensor<T> &a, const Tensor<T> &b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("loss operands " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
}

} // namespace

void validate(const LossConfig &config) {
  if (!(config.beta >= 0)) {
    throw ConfigError("beta must be >= 0");
  }
  if (!(config.epsilon > 0)) {
    throw ConfigError("epsilon must be > 0");
  }
}

template <typename T>
Tensor<T> loss_ce(const Tensor<T> &probs, const Tensor<T> &targets, double epsilon) {
  require_same_shape(probs, targets);
  if (probs.rank() != 2) {
    throw DimensionError("loss_ce expects [N,K], got " + shape_str(probs.shape()));
  }
  require_nonnegative(probs, "predicted probabilities");
  require_nonnegative(targets, "target distribution");
  const Tensor<T> log_p = log(add_scalar(probs, static_cast<T>(epsilon)));
  const Tensor<T> total = sum(mul(targets.detach(), log_p));
  return scale(total, T(-1) / static_cast<T>(probs.dim(0)));
}

template <typename T>
Tensor<T> loss_ss1(const Tensor<T> &mask_pred, const Tensor<T> &mask_target, double epsilon) {
  require_same_shape(mask_pred, mask_target);
  require_unit_interval(mask_pred, "predicted mask");
  require_unit_interval(mask_target, "target mask");
  const T eps = static_cast<T>(epsilon);
  const Tensor<T> target = mask_target.detach();
  std::vector<T> complement(target.data().begin(), target.data().end());
  for (auto &v : complement) {
    v = T(1) - v;
  }
  const Tensor<T> target_off(target.shape(), std::move(complement));
  const Tensor<T> log_on = log(add_scalar(mask_pred, eps));
  // (1 - p) + eps, in that order, so eps survives in 32-bit when p rounds to 1.
  const Tensor<T> log_off = log(add_scalar(add_scalar(scale(mask_pred, T(-1)), T(1)), eps));
  const Tensor<T> total = add(sum(mul(target, log_on)), sum(mul(target_off, log_off)));
  return scale(total, T(-1) / static_cast<T>(mask_pred.numel()));
}

template <typename T>
Tensor<T> loss_ss2(const Tensor<T> &pred, const Tensor<T> &target, const Tensor<T> &mask_down,
                   double epsilon) {
  require_same_shape(pred, target);
  if (pred.rank() != 4 || mask_down.rank() != 4 || mask_down.dim(1) != 1 ||
      mask_down.dim(0) != pred.dim(0) || mask_down.dim(2) != pred.dim(2) ||
      mask_down.dim(3) != pred.dim(3)) {
    throw DimensionError("loss_ss2 shapes " + shape_str(pred.shape()) + " and mask " +
                         shape_str(mask_down.shape()));
  }
  require_nonnegative(pred, "predicted spatial logits");
  require_nonnegative(target, "target spatial logits");
  require_unit_interval(mask_down, "mask");
  const std::size_t n = pred.dim(0);
  const std::size_t k = pred.dim(1);
  const std::size_t area = pred.dim(2) * pred.dim(3);
  const T eps = static_cast<T>(epsilon);

  // Per-sample normalized weights and the target's sum p log p, both constant.
  const auto md = mask_down.data();
  const auto pd = target.data();
  std::vector<T> weights(n * area, T(0));
  std::vector<T> neg_entropy(n * area, T(0));
  for (std::size_t s = 0; s < n; ++s) {
    T mass = 0;
    for (std::size_t i = 0; i < area; ++i) {
      mass += md[s * area + i];
    }
    for (std::size_t i = 0; i < area; ++i) {
      weights[s * area + i] = mass > T(0) ? md[s * area + i] / mass : T(0);
      T acc = 0;
      for (std::size_t c = 0; c < k; ++c) {
        const T p = pd[(s * k + c) * area + i];
        acc += p * std::log(p + eps);
      }
      neg_entropy[s * area + i] = acc;
    }
  }
  const Shape map_shape = mask_down.shape();
  const Tensor<T> weight_t(map_shape, std::move(weights));
  const Tensor<T> neg_entropy_t(map_shape, std::move(neg_entropy));
  const Tensor<T> cross = sum(mul(target.detach(), log(add_scalar(pred, eps))), {1}, true);
  const Tensor<T> kl_map = sub(neg_entropy_t, cross);
  return scale(sum(mul(weight_t, kl_map)), T(1) / static_cast<T>(n));
}

template <typename T>
Tensor<T> kl_divergence(const Tensor<T> &teacher, const Tensor<T> &student, double epsilon) {
  require_same_shape(teacher, student);
  if (teacher.rank() != 2) {
    throw DimensionError("kl_divergence expects [N,K], got " + shape_str(teacher.shape()));
  }
  require_nonnegative(teacher, "teacher distribution");
  require_nonnegative(student, "student distribution");
  const T eps = static_cast<T>(epsilon);
  const Tensor<T> p = teacher.detach();
  T neg_entropy = 0;
  for (const auto v : p.data()) {
    neg_entropy += v * std::log(v + eps);
  }
  const Tensor<T> cross = sum(mul(p, log(add_scalar(student, eps))));
  const T inv_n = T(1) / static_cast<T>(teacher.dim(0));
  return scale(sub(Tensor<T>::scalar(neg_entropy), cross), inv_n);
}

template <typename T>
Tensor<T> loss_sd(const Tensor<T> &saol_probs, const Tensor<T> &gapfc_probs,
                  const Tensor<T> &targets, double beta, double epsilon) {
  if (!(beta >= 0)) {
    throw DomainError("beta must be >= 0");
  }
  const Tensor<T> kl = kl_divergence(saol_probs, gapfc_probs, epsilon);
  const Tensor<T> ce = loss_ce(gapfc_probs, targets, epsilon);
  return add(kl, scale(ce, static_cast<T>(beta)));
}

template <typename T> Tensor<T> loss_total(const LossParts<T> &parts, const LossConfig &config) {
  validate(config);
  Tensor<T> total;
  const auto accumulate = [&total](const Tensor<T> &part, double weight) {
    if (!part.defined()) {
      return;
    }
    const Tensor<T> weighted = scale(part, static_cast<T>(weight));
    total = total.defined() ? add(total, weighted) : weighted;
  };
  accumulate(parts.sl, config.weight_sl);
  if (config.enable_ss1) {
    accumulate(parts.ss1, config.weight_ss1);
  }
  if (config.enable_ss2) {
    accumulate(parts.ss2, config.weight_ss2);
  }
  if (config.enable_sd || config.enable_gapfc_ce) {
    accumulate(parts.sd, config.weight_sd);
  }
  return total.defined() ? total : Tensor<T>::scalar(T(0));
}

#define SAOL_INSTANTIATE(T)                                                                        \
  template Tensor<T> loss_ce<T>(const Tensor<T> &, const Tensor<T> &, double);                     \
  template Tensor<T> loss_ss1<T>(const Tensor<T> &, const Tensor<T> &, double);                    \
  template Tensor<T> loss_ss2<T>(const Tensor<T> &, const Tensor<T> &, const Tensor<T> &, double); \
  template Tensor<T> kl_divergence<T>(const Tensor<T> &, const Tensor<T> &, double);               \
  template Tensor<T> loss_sd<T>(const Tensor<T> &, const Tensor<T> &, const Tensor<T> &, double,   \
                                double);                                                           \
  template Tensor<T> loss_total<T>(const LossParts<T> &, const LossConfig &);

SAOL_INSTANTIATE(float)
SAOL_INSTANTIATE(double)
#undef SAOL_INSTANTIATE

} // namespace saol
