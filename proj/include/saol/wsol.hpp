#pragma once

// Weakly-supervised localization from SAOL outputs: class-wise score map
// A * Y_k, min-max normalization, threshold, largest 4-connected component,
// bounding box, IoU scoring.

#include "saol/data.hpp"
#include "saol/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace saol {

// Row-major 2-D map.
struct ScoreMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  double at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
  double &at(std::size_t y, std::size_t x) { return values[y * width + x]; }
};

// A_ij * Y_k,ij for sample `sample`. attention [N,1,H,W], logits [N,K,H,W].
// class_k >= K raises ArgumentError.
template <typename T>
ScoreMap class_score_map(const Tensor<T> &attention, const Tensor<T> &logits, std::size_t class_k,
                         std::size_t sample = 0);

// (v - min) / (max - min). A constant map becomes all zeros.
ScoreMap min_max_normalize(const ScoreMap &map);

// Bilinear resize, align_corners = false.
ScoreMap resize_bilinear(const ScoreMap &map, std::size_t out_h, std::size_t out_w);

// Label image of the 4-connected components of a binary mask, 0 = background,
// components numbered 1.. in raster order of their first pixel.
std::vector<std::size_t> label_components(const std::vector<std::uint8_t> &mask, std::size_t height,
                                          std::size_t width, std::size_t *count = nullptr);

// Tight map-coordinate box of the largest 4-connected component (ties go to
// the component met first in raster order). Empty mask -> nullopt.
std::optional<BoundingBox> largest_component_box(const std::vector<std::uint8_t> &mask,
                                                 std::size_t height, std::size_t width);

enum class UpsampleMode {
  kBox,      // threshold on the map, scale the box by image/map
  kBilinear, // resize the map to the image first, then threshold
};

struct BoxExtraction {
  BoundingBox box;
  bool fallback = false; // nothing reached the threshold; box is the full image
};

// Pixels >= threshold are foreground. Box in image coordinates, clipped to
// [0, image_w] x [0, image_h].
BoxExtraction extract_box_ex(const ScoreMap &norm_map, double threshold, std::size_t image_h,
                             std::size_t image_w, UpsampleMode mode = UpsampleMode::kBox);
BoundingBox extract_box(const ScoreMap &norm_map, double threshold, std::size_t image_h,
                        std::size_t image_w, UpsampleMode mode = UpsampleMode::kBox);

double iou(const BoundingBox &a, const BoundingBox &b);

inline constexpr double kIouPass = 0.5;

struct LocalizationRecord {
  std::size_t image_id = 0;
  std::size_t gt_label = 0;
  std::size_t pred_label = 0;
  std::optional<BoundingBox> gt_box;
  BoundingBox pred_box;    // from the predicted class's map
  BoundingBox gt_cls_box;  // from the ground-truth class's map
  double iou_pred = 0;     // IoU(pred_box, gt_box)
  double iou_gt_cls = 0;   // IoU(gt_cls_box, gt_box)

  bool pass_top1() const { return gt_box && pred_label == gt_label && iou_pred >= kIouPass; }
  bool pass_gtknown() const { return gt_box && iou_gt_cls >= kIouPass; }
};

enum class LocMode { kTop1, kGtKnown };

struct LocAccuracy {
  double accuracy = 0;
  std::size_t evaluated = 0;
  std::size_t skipped = 0; // records without a ground-truth box
};

LocAccuracy loc_accuracy(const std::vector<LocalizationRecord> &records, LocMode mode);

// Fills pred/gt-class boxes and IoUs of a record from one sample's SAOL maps.
template <typename T>
LocalizationRecord localize(const Tensor<T> &attention, const Tensor<T> &logits,
                            std::size_t sample, std::size_t image_id, std::size_t gt_label,
                            std::size_t pred_label, const std::optional<BoundingBox> &gt_box,
                            double threshold, std::size_t image_h, std::size_t image_w,
                            UpsampleMode mode = UpsampleMode::kBox);

// Expected IoU >= 0.5 rate of boxes that share the ground-truth size
// distribution but sit at uniformly random positions. Each trial pairs a
// ground-truth box with the size of a randomly drawn box from the same set.
double random_box_baseline(const std::vector<BoundingBox> &gt_boxes, std::size_t image_h,
                           std::size_t image_w, std::size_t trials, std::uint64_t seed);

// 8-bit binary PGM of a [0,1] map (values are clamped).
void write_pgm(const std::filesystem::path &path, const ScoreMap &map);
// Raw values, one map row per CSV line.
void write_map_csv(const std::filesystem::path &path, const ScoreMap &map);

inline constexpr const char *kLocReportHeader =
    "image_id,gt_label,pred_label,iou,pass_top1,pass_gtknown";

// One row per record; `iou` is the gt-known IoU.
void write_loc_report(const std::filesystem::path &path,
                      const std::vector<LocalizationRecord> &records);

} // namespace saol
