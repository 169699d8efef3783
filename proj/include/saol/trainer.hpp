#pragma once

// Training and evaluation driver shared by the command-line tool and tests.

#include "saol/checkpoint.hpp"
#include "saol/config.hpp"
#include "saol/cutmix.hpp"
#include "saol/data.hpp"
#include "saol/losses.hpp"
#include "saol/saol_head.hpp"
#include "saol/wsol.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace saol {

struct Dataset {
  std::vector<LabeledImage> train;
  std::vector<LabeledImage> test;
};

// Synthetic generation or CIFAR-10 loading, then train/test limits.
// Missing files raise IoError, malformed ones FormatError.
Dataset load_dataset(const RunConfig &config);

struct Normalization {
  std::array<double, 3> mean{0, 0, 0};
  std::array<double, 3> stddev{1, 1, 1};
};

Normalization channel_stats(const std::vector<LabeledImage> &images);

// Stacks images[indices] into [B,3,H,W], normalized per channel. With an RNG
// the augmentation is applied per image.
template <typename T>
Tensor<T> make_input(const std::vector<LabeledImage> &images,
                     const std::vector<std::size_t> &indices, const Normalization &norm,
                     Augment augment = Augment::kNone, std::mt19937_64 *rng = nullptr);

template <typename T>
Tensor<T> one_hot(const std::vector<LabeledImage> &images, const std::vector<std::size_t> &indices,
                  std::size_t num_classes);

// 0.5 * base * (1 + cos(pi * step / total_steps)).
double cosine_lr(double base, std::uint64_t step, std::uint64_t total_steps);

struct StepLosses {
  double sl = 0;
  double ss1 = 0;
  double ss2 = 0;
  double sd = 0;
  double total = 0;
  double grad_norm = 0; // before clipping; set only when clipping is on
  bool mixed = false;
};

struct EvalResult {
  double acc_saol = 0;
  double acc_gapfc = 0;
  std::size_t count = 0;
  std::vector<std::size_t> pred_saol;
  std::vector<std::size_t> pred_gapfc;

  double selected(TestHead head) const { return head == TestHead::kSaol ? acc_saol : acc_gapfc; }
};

struct EpochSummary {
  std::size_t epoch = 0; // 1-based
  std::uint64_t step = 0;
  double loss_sl = 0;
  double loss_ss1 = 0;
  double loss_ss2 = 0;
  double loss_sd = 0;
  double loss_total = 0;
  double lr = 0;
  EvalResult eval;

  MetricsRow metrics() const;
};

template <typename T> class Trainer {
public:
  // `config` is finalized here; the model is initialized from config.seed.
  Trainer(RunConfig config, Dataset data);

  const RunConfig &config() const { return config_; }
  const Dataset &data() const { return data_; }
  const Normalization &normalization() const { return norm_; }
  const Model<T> &model() const { return model_; }
  Model<T> &model() { return model_; }
  std::size_t epoch() const { return epoch_; }
  std::uint64_t step_count() const { return step_; }
  std::size_t steps_per_epoch() const;
  std::uint64_t total_steps() const { return steps_per_epoch() * config_.epochs; }
  double current_lr() const;

  // One SGD update on the given training images.
  StepLosses step(const std::vector<std::size_t> &indices);

  // Shuffles, runs every batch, evaluates both heads on the test split.
  EpochSummary train_epoch();

  // Runs the remaining epochs. The callback sees every finished epoch.
  std::vector<EpochSummary> fit(const std::function<void(const EpochSummary &)> &on_epoch = {});

  EvalResult evaluate(const std::vector<LabeledImage> &images) const;

  // Model outputs for images[indices] without recording a graph.
  SaolOutput<T> infer(const std::vector<LabeledImage> &images,
                      const std::vector<std::size_t> &indices) const;

  Checkpoint checkpoint() const;
  // Parameters, optimizer slots, normalization, counters and RNG. Missing or
  // mismatched tensors raise FormatError.
  void restore(const Checkpoint &checkpoint);

private:
  RunConfig config_;
  Dataset data_;
  Normalization norm_;
  Model<T> model_;
  std::vector<std::vector<T>> momentum_;
  std::mt19937_64 rng_;
  std::size_t epoch_ = 0;
  std::uint64_t step_ = 0;
};

// Localization records for every image that has a box. Top-1 uses the SAOL
// prediction.
template <typename T>
std::vector<LocalizationRecord> localize_dataset(const Trainer<T> &trainer,
                                                 const std::vector<LabeledImage> &images);

// Area under the ROC curve of `scores` against binary `labels`, ties counted
// as one half.
double roc_auc(const std::vector<double> &scores, const std::vector<std::uint8_t> &labels);

// Pixel AUC of the mask head on CutMix batches built from `images`; positives
// are output cells whose downsampled mask is >= 0.5.
template <typename T>
double mask_auc(const Trainer<T> &trainer, const std::vector<LabeledImage> &images,
                std::uint64_t seed);

// Writes, for each of the first `count` images: the input (PPM), the attention
// map and each class map A * Y_k (min-max normalized PGM and raw CSV).
// Returns the number of files written.
template <typename T>
std::size_t export_heatmaps(const Trainer<T> &trainer, const std::vector<LabeledImage> &images,
                            std::size_t count, const std::filesystem::path &dir);

} // namespace saol
