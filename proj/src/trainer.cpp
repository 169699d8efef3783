#include "saol/trainer.hpp"

#include "saol/error.hpp"
#include "saol/ops.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

namespace saol {
namespace {

constexpr const char *kNormalizationName = "data.normalization";
constexpr std::size_t kEvalBatch = 100;
constexpr std::uint64_t kTrainStreamSalt = 0x9e3779b97f4a7c15ULL;

template <typename T> std::size_t argmax_row(std::span<const T> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

std::vector<std::size_t> iota_indices(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> out(end - begin);
  std::iota(out.begin(), out.end(), begin);
  return out;
}

void write_ppm(const std::filesystem::path &path, const LabeledImage &image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  const std::size_t area = image.height * image.width;
  for (std::size_t i = 0; i < area; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const float v = std::clamp(image.pixels[c * area + i], 0.0f, 1.0f);
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0f))));
    }
  }
}

} // namespace

Dataset load_dataset(const RunConfig &config) {
  Dataset data;
  if (config.dataset == DatasetKind::kCifar10) {
    if (!std::filesystem::is_directory(config.data_path)) {
      throw IoError("CIFAR-10 directory not found: " + config.data_path.string());
    }
    data.train = load_cifar10_split(config.data_path, true);
    data.test = load_cifar10_split(config.data_path, false);
  } else {
    data.train = gen_synthetic(config.train_count, config.data_seed, config.image_size,
                               config.num_classes);
    // A distinct stream for the test split.
    data.test = gen_synthetic(config.test_count, config.data_seed ^ kTrainStreamSalt,
                              config.image_size, config.num_classes);
  }
  if (config.train_limit && data.train.size() > config.train_limit) {
    data.train.resize(config.train_limit);
  }
  if (config.test_limit && data.test.size() > config.test_limit) {
    data.test.resize(config.test_limit);
  }
  if (data.train.empty() || data.test.empty()) {
    throw FormatError("dataset has an empty split");
  }
  return data;
}

Normalization channel_stats(const std::vector<LabeledImage> &images) {
  Normalization norm;
  std::array<double, 3> sum{0, 0, 0};
  std::array<double, 3> sq{0, 0, 0};
  std::size_t count = 0;
  for (const auto &image : images) {
    const std::size_t area = image.height * image.width;
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t i = 0; i < area; ++i) {
        const double v = image.pixels[c * area + i];
        sum[c] += v;
        sq[c] += v * v;
      }
    }
    count += area;
  }
  if (count == 0) {
    return norm;
  }
  for (std::size_t c = 0; c < 3; ++c) {
    norm.mean[c] = sum[c] / static_cast<double>(count);
    const double var = sq[c] / static_cast<double>(count) - norm.mean[c] * norm.mean[c];
    norm.stddev[c] = std::sqrt(std::max(var, 1e-12));
  }
  return norm;
}

template <typename T>
Tensor<T> make_input(const std::vector<LabeledImage> &images,
                     const std::vector<std::size_t> &indices, const Normalization &norm,
                     Augment augment, std::mt19937_64 *rng) {
  if (indices.empty()) {
    throw ArgumentError("empty batch");
  }
  const std::size_t h = images.at(indices[0]).height;
  const std::size_t w = images.at(indices[0]).width;
  const std::size_t area = h * w;
  std::vector<T> data(indices.size() * 3 * area);
  constexpr std::size_t kPad = 4;
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto &image = images.at(indices[b]);
    if (image.height != h || image.width != w || image.channels != 3) {
      throw DimensionError("images in a batch must share one 3-channel size");
    }
    bool flip = false;
    long dy = 0, dx = 0;
    if (rng && augment != Augment::kNone) {
      if (augment == Augment::kCropFlip) {
        std::uniform_int_distribution<long> shift(-static_cast<long>(kPad), kPad);
        dy = shift(*rng);
        dx = shift(*rng);
      }
      flip = std::bernoulli_distribution(0.5)(*rng);
    }
    for (std::size_t c = 0; c < 3; ++c) {
      const double mean = norm.mean[c];
      const double inv = 1.0 / norm.stddev[c];
      T *dst = data.data() + (b * 3 + c) * area;
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const long sy = static_cast<long>(y) + dy;
          long sx = static_cast<long>(x) + dx;
          if (flip) {
            sx = static_cast<long>(w) - 1 - sx;
          }
          double v = mean; // zero after normalization outside the image
          if (sy >= 0 && sx >= 0 && sy < static_cast<long>(h) && sx < static_cast<long>(w)) {
            v = image.pixels[c * area + static_cast<std::size_t>(sy) * w +
                             static_cast<std::size_t>(sx)];
          }
          dst[y * w + x] = static_cast<T>((v - mean) * inv);
        }
      }
    }
  }
  return Tensor<T>({indices.size(), 3, h, w}, std::move(data));
}

template <typename T>
Tensor<T> one_hot(const std::vector<LabeledImage> &images, const std::vector<std::size_t> &indices,
                  std::size_t num_classes) {
  std::vector<T> data(indices.size() * num_classes, T(0));
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const std::size_t label = images.at(indices[b]).label;
    if (label >= num_classes) {
      throw ArgumentError("label " + std::to_string(label) + " >= num_classes");
    }
    data[b * num_classes + label] = T(1);
  }
  return Tensor<T>({indices.size(), num_classes}, std::move(data));
}

double cosine_lr(double base, std::uint64_t step, std::uint64_t total_steps) {
  if (total_steps == 0) {
    return base;
  }
  const double t = static_cast<double>(std::min(step, total_steps)) / static_cast<double>(total_steps);
  return 0.5 * base * (1.0 + std::cos(std::numbers::pi * t));
}

MetricsRow EpochSummary::metrics() const {
  return MetricsRow{epoch, step, loss_sl, loss_ss1, loss_ss2, loss_sd, eval.acc_saol, eval.acc_gapfc};
}

template <typename T>
Trainer<T>::Trainer(RunConfig config, Dataset data)
    : config_(std::move(config)), data_(std::move(data)) {
  finalize(config_);
  if (data_.train.empty() || data_.test.empty()) {
    throw ArgumentError("trainer needs non-empty train and test splits");
  }
  for (const auto *split : {&data_.train, &data_.test}) {
    for (const auto &image : *split) {
      if (image.height != config_.input_size() || image.width != config_.input_size()) {
        throw DimensionError("image size does not match the configured input");
      }
      if (image.label >= config_.num_classes) {
        throw FormatError("label " + std::to_string(image.label) + " >= num_classes");
      }
    }
  }
  norm_ = channel_stats(data_.train);
  model_ = make_model<T>(config_.backbone, config_.head, config_.seed);
  for (const auto &[name, t] : model_.params.entries()) {
    momentum_.emplace_back(t.numel(), T(0));
  }
  rng_.seed(config_.seed ^ kTrainStreamSalt);
}

template <typename T> std::size_t Trainer<T>::steps_per_epoch() const {
  const std::size_t n = data_.train.size();
  const std::size_t b = config_.batch_size;
  const std::size_t full = n / b;
  const std::size_t rest = n % b;
  // A trailing batch of one cannot be CutMix-paired; it is dropped.
  return full + (rest >= 2 ? 1 : 0) + (full == 0 && rest == 1 ? 1 : 0);
}

template <typename T> double Trainer<T>::current_lr() const {
  return config_.schedule == Schedule::kCosine ? cosine_lr(config_.lr, step_, total_steps())
                                               : config_.lr;
}

template <typename T> StepLosses Trainer<T>::step(const std::vector<std::size_t> &indices) {
  const auto layout = resolve_head(model_.head, model_.backbone);
  const Tensor<T> x = make_input<T>(data_.train, indices, norm_, config_.augment, &rng_);
  const Tensor<T> y = one_hot<T>(data_.train, indices, config_.num_classes);

  StepLosses result;
  CutMixBatch<T> mix;
  if (config_.cutmix && indices.size() >= 2 &&
      std::bernoulli_distribution(config_.cutmix_prob)(rng_)) {
    mix = sample_cutmix(x, y, CutMixOptions{config_.cutmix_alpha, PatchPlacement::kInside}, rng_);
    result.mixed = true;
  }
  const Tensor<T> &input = result.mixed ? mix.mixed : x;
  const Tensor<T> &targets = result.mixed ? mix.labels : y;
  const double eps = config_.loss.epsilon;

  const SaolOutput<T> out = saol_forward(input, model_);
  LossParts<T> parts;
  parts.sl = loss_ce(out.final_logits, targets, eps);
  if (result.mixed && (config_.loss.enable_ss1 || config_.loss.enable_ss2)) {
    const Tensor<T> mask_down = downsample_mask(mix.mask, layout.out_h, layout.out_w);
    if (config_.loss.enable_ss1) {
      parts.ss1 = loss_ss1(out.mask_pred, mask_down, eps);
    }
    if (config_.loss.enable_ss2) {
      Tensor<T> source_logits;
      {
        NoGradGuard no_grad;
        const auto pyramid = backbone_forward(mix.source, model_.backbone, model_.params);
        source_logits = spatial_logits_forward(pyramid, layout, model_.params);
      }
      parts.ss2 = loss_ss2(out.spatial_logits, source_logits, mask_down, eps);
    }
  }
  if (config_.loss.enable_sd) {
    parts.sd = loss_sd(out.final_logits, out.gapfc_logits, targets, config_.loss.beta, eps);
  } else if (config_.loss.enable_gapfc_ce) {
    parts.sd = loss_ce(out.gapfc_logits, targets, eps);
  }
  const Tensor<T> total = loss_total(parts, config_.loss);

  model_.params.zero_grad();
  total.backward();

  const T lr = static_cast<T>(current_lr());
  const T mu = static_cast<T>(config_.momentum);
  const T decay = static_cast<T>(config_.weight_decay);
  auto &entries = model_.params.entries();
  T scale = 1;
  if (config_.grad_clip > 0) {
    double norm2 = 0;
    for (const auto &entry : entries) {
      for (const T g : entry.second.grad()) {
        norm2 += static_cast<double>(g) * static_cast<double>(g);
      }
    }
    const double norm = std::sqrt(norm2);
    result.grad_norm = norm;
    if (norm > config_.grad_clip) {
      scale = static_cast<T>(config_.grad_clip / norm);
    }
  }
  for (std::size_t p = 0; p < entries.size(); ++p) {
    Tensor<T> &param = entries[p].second;
    auto w = param.mutable_data();
    const auto g = param.grad();
    auto &v = momentum_[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = mu * v[i] + (scale * g[i] + decay * w[i]);
      w[i] -= lr * v[i];
    }
  }
  ++step_;

  result.sl = parts.sl.item();
  result.ss1 = parts.ss1.defined() ? parts.ss1.item() : 0.0;
  result.ss2 = parts.ss2.defined() ? parts.ss2.item() : 0.0;
  result.sd = parts.sd.defined() ? parts.sd.item() : 0.0;
  result.total = total.item();
  return result;
}

template <typename T> EpochSummary Trainer<T>::train_epoch() {
  if (epoch_ >= config_.epochs) {
    throw ArgumentError("training already finished");
  }
  std::vector<std::size_t> order = iota_indices(0, data_.train.size());
  std::shuffle(order.begin(), order.end(), rng_);
  EpochSummary summary;
  summary.lr = current_lr();
  const std::size_t steps = steps_per_epoch();
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t begin = s * config_.batch_size;
    const std::size_t end = std::min(begin + config_.batch_size, order.size());
    const std::vector<std::size_t> batch(order.begin() + static_cast<long>(begin),
                                         order.begin() + static_cast<long>(end));
    const StepLosses l = step(batch);
    summary.loss_sl += l.sl;
    summary.loss_ss1 += l.ss1;
    summary.loss_ss2 += l.ss2;
    summary.loss_sd += l.sd;
    summary.loss_total += l.total;
  }
  const double inv = 1.0 / static_cast<double>(steps);
  summary.loss_sl *= inv;
  summary.loss_ss1 *= inv;
  summary.loss_ss2 *= inv;
  summary.loss_sd *= inv;
  summary.loss_total *= inv;
  ++epoch_;
  summary.epoch = epoch_;
  summary.step = step_;
  summary.eval = evaluate(data_.test);
  return summary;
}

template <typename T>
std::vector<EpochSummary> Trainer<T>::fit(const std::function<void(const EpochSummary &)> &on_epoch) {
  std::vector<EpochSummary> history;
  while (epoch_ < config_.epochs) {
    history.push_back(train_epoch());
    if (on_epoch) {
      on_epoch(history.back());
    }
  }
  return history;
}

template <typename T>
SaolOutput<T> Trainer<T>::infer(const std::vector<LabeledImage> &images,
                                const std::vector<std::size_t> &indices) const {
  NoGradGuard no_grad;
  return saol_forward(make_input<T>(images, indices, norm_), model_);
}

template <typename T> EvalResult Trainer<T>::evaluate(const std::vector<LabeledImage> &images) const {
  EvalResult result;
  result.count = images.size();
  const std::size_t k = config_.num_classes;
  std::size_t hit_saol = 0, hit_gapfc = 0;
  for (std::size_t begin = 0; begin < images.size(); begin += kEvalBatch) {
    const auto indices = iota_indices(begin, std::min(begin + kEvalBatch, images.size()));
    const auto out = infer(images, indices);
    for (std::size_t b = 0; b < indices.size(); ++b) {
      const std::size_t ps = argmax_row(out.final_logits.data().subspan(b * k, k));
      const std::size_t pg = argmax_row(out.gapfc_logits.data().subspan(b * k, k));
      result.pred_saol.push_back(ps);
      result.pred_gapfc.push_back(pg);
      const std::size_t label = images[indices[b]].label;
      hit_saol += ps == label ? 1 : 0;
      hit_gapfc += pg == label ? 1 : 0;
    }
  }
  if (result.count) {
    result.acc_saol = static_cast<double>(hit_saol) / static_cast<double>(result.count);
    result.acc_gapfc = static_cast<double>(hit_gapfc) / static_cast<double>(result.count);
  }
  return result;
}

template <typename T> Checkpoint Trainer<T>::checkpoint() const {
  Checkpoint ck;
  ck.wide = sizeof(T) > sizeof(float);
  ck.tensors = export_params(model_.params);
  const auto &entries = model_.params.entries();
  for (std::size_t p = 0; p < entries.size(); ++p) {
    ck.tensors.push_back({kMomentumPrefix + entries[p].first, entries[p].second.shape(),
                          std::vector<double>(momentum_[p].begin(), momentum_[p].end())});
  }
  std::vector<double> stats(norm_.mean.begin(), norm_.mean.end());
  stats.insert(stats.end(), norm_.stddev.begin(), norm_.stddev.end());
  ck.tensors.push_back({kNormalizationName, {2, 3}, std::move(stats)});
  ck.epoch = static_cast<std::uint32_t>(epoch_);
  ck.step = step_;
  std::ostringstream rng_state;
  rng_state << rng_;
  ck.rng_state = rng_state.str();
  return ck;
}

template <typename T> void Trainer<T>::restore(const Checkpoint &ck) {
  import_params(ck.tensors, model_.params);
  const auto &entries = model_.params.entries();
  for (std::size_t p = 0; p < entries.size(); ++p) {
    const std::string name = kMomentumPrefix + entries[p].first;
    const auto it = std::find_if(ck.tensors.begin(), ck.tensors.end(),
                                 [&](const NamedArray &a) { return a.name == name; });
    if (it == ck.tensors.end() || it->values.size() != momentum_[p].size()) {
      throw FormatError("checkpoint lacks optimizer slot " + name);
    }
    std::transform(it->values.begin(), it->values.end(), momentum_[p].begin(),
                   [](double v) { return static_cast<T>(v); });
  }
  const auto norm = std::find_if(ck.tensors.begin(), ck.tensors.end(),
                                 [](const NamedArray &a) { return a.name == kNormalizationName; });
  if (norm == ck.tensors.end() || norm->values.size() != 6) {
    throw FormatError("checkpoint lacks input normalization");
  }
  for (std::size_t c = 0; c < 3; ++c) {
    norm_.mean[c] = norm->values[c];
    norm_.stddev[c] = norm->values[3 + c];
  }
  if (ck.epoch > config_.epochs) {
    throw FormatError("checkpoint epoch " + std::to_string(ck.epoch) + " beyond configured " +
                      std::to_string(config_.epochs));
  }
  std::istringstream rng_state(ck.rng_state);
  std::mt19937_64 rng;
  rng_state >> rng;
  if (!rng_state) {
    throw FormatError("checkpoint RNG state is unreadable");
  }
  rng_ = rng;
  epoch_ = ck.epoch;
  step_ = ck.step;
}

template <typename T>
std::vector<LocalizationRecord> localize_dataset(const Trainer<T> &trainer,
                                                 const std::vector<LabeledImage> &images) {
  const auto &config = trainer.config();
  const std::size_t k = config.num_classes;
  std::vector<LocalizationRecord> records;
  for (std::size_t begin = 0; begin < images.size(); begin += kEvalBatch) {
    const auto indices = iota_indices(begin, std::min(begin + kEvalBatch, images.size()));
    const auto out = trainer.infer(images, indices);
    for (std::size_t b = 0; b < indices.size(); ++b) {
      const auto &image = images[indices[b]];
      const std::size_t pred = argmax_row(out.final_logits.data().subspan(b * k, k));
      records.push_back(localize(out.attention, out.spatial_logits, b, indices[b], image.label,
                                 pred, image.box, config.wsol_threshold, image.height, image.width,
                                 config.wsol_upsample));
    }
  }
  return records;
}

double roc_auc(const std::vector<double> &scores, const std::vector<std::uint8_t> &labels) {
  if (scores.size() != labels.size()) {
    throw DimensionError("roc_auc: scores and labels differ in length");
  }
  std::vector<std::size_t> order = iota_indices(0, scores.size());
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Mann-Whitney U with average ranks over ties.
  double rank_sum = 0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      ++j;
    }
    const double avg_rank = 0.5 * static_cast<double>(i + j + 1);
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]]) {
        rank_sum += avg_rank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = scores.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw ArgumentError("roc_auc needs both classes");
  }
  const double p = static_cast<double>(positives);
  return (rank_sum - p * (p + 1) / 2) / (p * static_cast<double>(negatives));
}

template <typename T>
double mask_auc(const Trainer<T> &trainer, const std::vector<LabeledImage> &images,
                std::uint64_t seed) {
  const auto &config = trainer.config();
  const auto layout = resolve_head(config.head, config.backbone);
  std::mt19937_64 rng(seed);
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  for (std::size_t begin = 0; begin + 1 < images.size(); begin += kEvalBatch) {
    const auto indices = iota_indices(begin, std::min(begin + kEvalBatch, images.size()));
    if (indices.size() < 2) {
      break;
    }
    const Tensor<T> x = make_input<T>(images, indices, trainer.normalization());
    const Tensor<T> y = one_hot<T>(images, indices, config.num_classes);
    const auto mix =
        sample_cutmix(x, y, CutMixOptions{config.cutmix_alpha, PatchPlacement::kInside}, rng);
    NoGradGuard no_grad;
    const auto out = saol_forward(mix.mixed, trainer.model());
    const auto down = downsample_mask(mix.mask, layout.out_h, layout.out_w);
    for (std::size_t i = 0; i < down.numel(); ++i) {
      scores.push_back(static_cast<double>(out.mask_pred.data()[i]));
      labels.push_back(down.data()[i] >= T(0.5) ? 1 : 0);
    }
  }
  return roc_auc(scores, labels);
}

template <typename T>
std::size_t export_heatmaps(const Trainer<T> &trainer, const std::vector<LabeledImage> &images,
                            std::size_t count, const std::filesystem::path &dir) {
  std::filesystem::create_directories(dir);
  count = std::min(count, images.size());
  if (count == 0) {
    return 0;
  }
  const std::size_t k = trainer.config().num_classes;
  const auto out = trainer.infer(images, iota_indices(0, count));
  const std::size_t h = out.attention.dim(2);
  const std::size_t w = out.attention.dim(3);
  std::size_t written = 0;
  for (std::size_t n = 0; n < count; ++n) {
    const std::string stem = "img" + std::to_string(n);
    write_ppm(dir / (stem + ".ppm"), images[n]);
    ScoreMap attention{h, w, {}};
    for (const auto v : out.attention.data().subspan(n * h * w, h * w)) {
      attention.values.push_back(static_cast<double>(v));
    }
    write_pgm(dir / (stem + "_attention.pgm"), min_max_normalize(attention));
    write_map_csv(dir / (stem + "_attention.csv"), attention);
    written += 3;
    for (std::size_t c = 0; c < k; ++c) {
      const ScoreMap map = class_score_map(out.attention, out.spatial_logits, c, n);
      const std::string name = stem + "_class" + std::to_string(c);
      write_pgm(dir / (name + ".pgm"), min_max_normalize(map));
      write_map_csv(dir / (name + ".csv"), map);
      written += 2;
    }
  }
  return written;
}

#define SAOL_INSTANTIATE(T)                                                                        \
  template Tensor<T> make_input<T>(const std::vector<LabeledImage> &,                              \
                                   const std::vector<std::size_t> &, const Normalization &,        \
                                   Augment, std::mt19937_64 *);                                    \
  template Tensor<T> one_hot<T>(const std::vector<LabeledImage> &,                                 \
                                const std::vector<std::size_t> &, std::size_t);                    \
  template class Trainer<T>;                                                                       \
  template std::vector<LocalizationRecord> localize_dataset<T>(const Trainer<T> &,                 \
                                                               const std::vector<LabeledImage> &); \
  template double mask_auc<T>(const Trainer<T> &, const std::vector<LabeledImage> &,               \
                              std::uint64_t);                                                      \
  template std::size_t export_heatmaps<T>(const Trainer<T> &, const std::vector<LabeledImage> &,   \
                                          std::size_t, const std::filesystem::path &);

SAOL_INSTANTIATE(float)
SAOL_INSTANTIATE(double)
#undef SAOL_INSTANTIATE

} // namespace saol
