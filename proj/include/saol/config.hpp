#pragma once

// Flat `key = value` run configuration. Blank lines and lines starting with
// '#' are ignored; lists are comma-separated. Unknown keys are errors.
//
//   dataset            synthetic | cifar10
//   data_path          CIFAR-10 binary directory
//   train_count        synthetic train images          (2000)
//   test_count         synthetic test images           (500)
//   image_size         synthetic side length           (32)
//   num_classes        K                               (3)
//   data_seed          synthetic generator seed        (1)
//   train_limit        use at most this many train images, 0 = all
//   test_limit         use at most this many test images, 0 = all
//   augment            none | flip | crop_flip         (none)
//   channels           per-block widths                (16,32,64)
//   width_factor       multiplier on channels          (1)
//   layers_per_block   residual units per block        (1)
//   strides            per-block first-unit strides    (1,2,2)
//   saol_out_h         spatial output size, 0 = last block
//   saol_out_w
//   fused_blocks       1-based blocks feeding the spatial logits, empty = all
//   head_mid_channels  attention/mask trunk width, 0 = half of last block
//   enable_ss1         mask-prediction loss            (false)
//   enable_ss2         masked spatial-logit KL         (false)
//   enable_sd          self-distillation               (true)
//   enable_gapfc_ce    plain CE on the GAP-FC head     (false)
//   cutmix             CutMix on training batches      (false)
//   cutmix_alpha       Beta(alpha, alpha) parameter    (1.0)
//   cutmix_prob        per-batch CutMix probability    (1.0)
//   beta               CE weight inside self-distillation (0.5)
//   loss_epsilon       epsilon inside logs             (1e-12)
//   weights            sl,ss1,ss2,sd loss weights      (1,1,1,1)
//   lr                 initial learning rate           (0.1)
//   momentum           SGD momentum                    (0.9)
//   weight_decay       L2 coefficient                  (5e-4)
//   grad_clip          global gradient-norm cap, 0 = off (0)
//   epochs                                             (30)
//   batch_size                                         (64)
//   schedule           cosine | constant               (cosine)
//   seed               model init and training RNG     (0)
//   out_dir            outputs                         (runs/default)
//   test_head          saol | gapfc                    (saol)
//   wsol_threshold     box binarization threshold      (0.2)
//   wsol_upsample      box | bilinear                  (box)
//   wsol_heatmaps      images whose maps are exported  (8)

#include "saol/backbone.hpp"
#include "saol/losses.hpp"
#include "saol/saol_head.hpp"
#include "saol/wsol.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace saol {

enum class DatasetKind { kSynthetic, kCifar10 };
enum class Augment { kNone, kFlip, kCropFlip };
enum class Schedule { kCosine, kConstant };
enum class TestHead { kSaol, kGapFc };

struct RunConfig {
  DatasetKind dataset = DatasetKind::kSynthetic;
  std::filesystem::path data_path;
  std::size_t train_count = 2000;
  std::size_t test_count = 500;
  std::size_t image_size = 32;
  std::size_t num_classes = 3;
  std::uint64_t data_seed = 1;
  std::size_t train_limit = 0;
  std::size_t test_limit = 0;
  Augment augment = Augment::kNone;

  BackboneConfig backbone;
  SaolConfig head;
  LossConfig loss{.enable_sd = true};
  bool cutmix = false;
  double cutmix_alpha = 1.0;
  double cutmix_prob = 1.0;

  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double grad_clip = 0;
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  Schedule schedule = Schedule::kCosine;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "runs/default";
  TestHead test_head = TestHead::kSaol;

  double wsol_threshold = 0.2;
  UpsampleMode wsol_upsample = UpsampleMode::kBox;
  std::size_t wsol_heatmaps = 8;

  // Input resolution of the chosen dataset.
  std::size_t input_size() const;
};

// Applies one key. Unknown key or unparsable value -> ConfigError.
void set_config_value(RunConfig &config, const std::string &key, const std::string &value);

RunConfig parse_config(const std::string &text);
// IoError if the file cannot be read.
RunConfig load_config(const std::filesystem::path &path);

// Fills derived fields (backbone input size, head classes) and checks ranges.
// ConfigError on any violation.
void finalize(RunConfig &config);

// key = value lines that parse back to the same configuration.
std::string to_string(const RunConfig &config);

const char *to_string(TestHead head);

} // namespace saol
