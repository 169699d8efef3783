#include "saol/wsol.hpp"

#include "saol/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace saol {

template <typename T>
ScoreMap class_score_map(const Tensor<T> &attention, const Tensor<T> &logits, std::size_t class_k,
                         std::size_t sample) {
  if (attention.rank() != 4 || logits.rank() != 4 || attention.dim(1) != 1 ||
      attention.dim(0) != logits.dim(0) || attention.dim(2) != logits.dim(2) ||
      attention.dim(3) != logits.dim(3)) {
    throw DimensionError("class_score_map: attention " + shape_str(attention.shape()) +
                         ", logits " + shape_str(logits.shape()));
  }
  const std::size_t k = logits.dim(1);
  if (class_k >= k) {
    throw ArgumentError("class " + std::to_string(class_k) + " out of range for " +
                        std::to_string(k) + " classes");
  }
  if (sample >= logits.dim(0)) {
    throw ArgumentError("sample " + std::to_string(sample) + " out of range");
  }
  ScoreMap map;
  map.height = logits.dim(2);
  map.width = logits.dim(3);
  const std::size_t area = map.height * map.width;
  map.values.resize(area);
  const auto a = attention.data().subspan(sample * area, area);
  const auto y = logits.data().subspan((sample * k + class_k) * area, area);
  for (std::size_t i = 0; i < area; ++i) {
    map.values[i] = static_cast<double>(a[i]) * static_cast<double>(y[i]);
  }
  return map;
}

ScoreMap min_max_normalize(const ScoreMap &map) {
  ScoreMap out = map;
  if (map.values.empty()) {
    return out;
  }
  const auto [lo, hi] = std::minmax_element(map.values.begin(), map.values.end());
  const double min = *lo;
  const double range = *hi - *lo;
  for (auto &v : out.values) {
    v = range > 0 ? (v - min) / range : 0.0;
  }
  return out;
}

ScoreMap resize_bilinear(const ScoreMap &map, std::size_t out_h, std::size_t out_w) {
  ScoreMap out;
  out.height = out_h;
  out.width = out_w;
  out.values.assign(out_h * out_w, 0.0);
  const auto source = [](std::size_t o, std::size_t in, std::size_t out_n, std::size_t &i0,
                         std::size_t &i1, double &frac) {
    const double s = static_cast<double>(in) / static_cast<double>(out_n);
    const double pos = std::max((static_cast<double>(o) + 0.5) * s - 0.5, 0.0);
    i0 = std::min(static_cast<std::size_t>(pos), in - 1);
    i1 = std::min(i0 + 1, in - 1);
    frac = pos - static_cast<double>(i0);
  };
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    std::size_t y0, y1;
    double fy;
    source(oy, map.height, out_h, y0, y1, fy);
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      std::size_t x0, x1;
      double fx;
      source(ox, map.width, out_w, x0, x1, fx);
      const double top = map.at(y0, x0) + fx * (map.at(y0, x1) - map.at(y0, x0));
      const double bottom = map.at(y1, x0) + fx * (map.at(y1, x1) - map.at(y1, x0));
      out.at(oy, ox) = top + fy * (bottom - top);
    }
  }
  return out;
}

std::vector<std::size_t> label_components(const std::vector<std::uint8_t> &mask, std::size_t height,
                                          std::size_t width, std::size_t *count) {
  if (mask.size() != height * width) {
    throw DimensionError("mask size does not match " + std::to_string(height) + "x" +
                         std::to_string(width));
  }
  std::vector<std::size_t> labels(mask.size(), 0);
  std::vector<std::size_t> stack;
  std::size_t next = 0;
  for (std::size_t start = 0; start < mask.size(); ++start) {
    if (!mask[start] || labels[start]) {
      continue;
    }
    ++next;
    labels[start] = next;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const std::size_t y = p / width;
      const std::size_t x = p % width;
      const auto visit = [&](std::size_t q) {
        if (mask[q] && !labels[q]) {
          labels[q] = next;
          stack.push_back(q);
        }
      };
      if (y > 0) visit(p - width);
      if (y + 1 < height) visit(p + width);
      if (x > 0) visit(p - 1);
      if (x + 1 < width) visit(p + 1);
    }
  }
  if (count) {
    *count = next;
  }
  return labels;
}

std::optional<BoundingBox> largest_component_box(const std::vector<std::uint8_t> &mask,
                                                 std::size_t height, std::size_t width) {
  std::size_t count = 0;
  const auto labels = label_components(mask, height, width, &count);
  if (count == 0) {
    return std::nullopt;
  }
  std::vector<std::size_t> sizes(count + 1, 0);
  for (const auto l : labels) {
    ++sizes[l];
  }
  std::size_t best = 1;
  for (std::size_t l = 2; l <= count; ++l) {
    if (sizes[l] > sizes[best]) {
      best = l;
    }
  }
  std::size_t y_min = height, x_min = width, y_max = 0, x_max = 0;
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      if (labels[y * width + x] == best) {
        y_min = std::min(y_min, y);
        x_min = std::min(x_min, x);
        y_max = std::max(y_max, y + 1);
        x_max = std::max(x_max, x + 1);
      }
    }
  }
  return BoundingBox{static_cast<double>(x_min), static_cast<double>(y_min),
                     static_cast<double>(x_max), static_cast<double>(y_max)};
}

BoxExtraction extract_box_ex(const ScoreMap &norm_map, double threshold, std::size_t image_h,
                             std::size_t image_w, UpsampleMode mode) {
  if (norm_map.height == 0 || norm_map.width == 0 || image_h == 0 || image_w == 0) {
    throw ArgumentError("extract_box needs non-empty map and image");
  }
  const ScoreMap map = mode == UpsampleMode::kBilinear
                           ? resize_bilinear(norm_map, image_h, image_w)
                           : norm_map;
  std::vector<std::uint8_t> mask(map.values.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = map.values[i] >= threshold ? 1 : 0;
  }
  const auto box = largest_component_box(mask, map.height, map.width);
  const double w = static_cast<double>(image_w);
  const double h = static_cast<double>(image_h);
  if (!box) {
    return {BoundingBox{0, 0, w, h}, true};
  }
  const double sx = w / static_cast<double>(map.width);
  const double sy = h / static_cast<double>(map.height);
  BoundingBox out{box->x_min * sx, box->y_min * sy, box->x_max * sx, box->y_max * sy};
  out.x_min = std::clamp(out.x_min, 0.0, w);
  out.x_max = std::clamp(out.x_max, 0.0, w);
  out.y_min = std::clamp(out.y_min, 0.0, h);
  out.y_max = std::clamp(out.y_max, 0.0, h);
  return {out, false};
}

BoundingBox extract_box(const ScoreMap &norm_map, double threshold, std::size_t image_h,
                        std::size_t image_w, UpsampleMode mode) {
  return extract_box_ex(norm_map, threshold, image_h, image_w, mode).box;
}

double iou(const BoundingBox &a, const BoundingBox &b) {
  const double iw = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const double ih = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

LocAccuracy loc_accuracy(const std::vector<LocalizationRecord> &records, LocMode mode) {
  LocAccuracy result;
  std::size_t passed = 0;
  for (const auto &r : records) {
    if (!r.gt_box) {
      ++result.skipped;
      continue;
    }
    ++result.evaluated;
    passed += (mode == LocMode::kTop1 ? r.pass_top1() : r.pass_gtknown()) ? 1 : 0;
  }
  result.accuracy = result.evaluated ? static_cast<double>(passed) /
                                           static_cast<double>(result.evaluated)
                                     : 0.0;
  return result;
}

template <typename T>
LocalizationRecord localize(const Tensor<T> &attention, const Tensor<T> &logits,
                            std::size_t sample, std::size_t image_id, std::size_t gt_label,
                            std::size_t pred_label, const std::optional<BoundingBox> &gt_box,
                            double threshold, std::size_t image_h, std::size_t image_w,
                            UpsampleMode mode) {
  LocalizationRecord r;
  r.image_id = image_id;
  r.gt_label = gt_label;
  r.pred_label = pred_label;
  r.gt_box = gt_box;
  const auto box_for = [&](std::size_t k) {
    return extract_box(min_max_normalize(class_score_map(attention, logits, k, sample)), threshold,
                       image_h, image_w, mode);
  };
  r.gt_cls_box = box_for(gt_label);
  r.pred_box = pred_label == gt_label ? r.gt_cls_box : box_for(pred_label);
  if (gt_box) {
    r.iou_gt_cls = iou(r.gt_cls_box, *gt_box);
    r.iou_pred = iou(r.pred_box, *gt_box);
  }
  return r;
}

double random_box_baseline(const std::vector<BoundingBox> &gt_boxes, std::size_t image_h,
                           std::size_t image_w, std::size_t trials, std::uint64_t seed) {
  if (gt_boxes.empty() || trials == 0) {
    throw ArgumentError("random_box_baseline needs boxes and trials");
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, gt_boxes.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double w = static_cast<double>(image_w);
  const double h = static_cast<double>(image_h);
  std::size_t hits = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    const BoundingBox &gt = gt_boxes[pick(rng)];
    const BoundingBox &size = gt_boxes[pick(rng)];
    const double bw = std::min(size.width(), w);
    const double bh = std::min(size.height(), h);
    const double x0 = unit(rng) * (w - bw);
    const double y0 = unit(rng) * (h - bh);
    if (iou(BoundingBox{x0, y0, x0 + bw, y0 + bh}, gt) >= kIouPass) {
      ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(trials);
}

void write_pgm(const std::filesystem::path &path, const ScoreMap &map) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << "P5\n" << map.width << ' ' << map.height << "\n255\n";
  std::vector<char> bytes(map.values.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const double v = std::clamp(map.values[i], 0.0, 1.0);
    bytes[i] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void write_map_csv(const std::filesystem::path &path, const ScoreMap &map) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  char buf[32];
  for (std::size_t y = 0; y < map.height; ++y) {
    for (std::size_t x = 0; x < map.width; ++x) {
      std::snprintf(buf, sizeof(buf), "%.9g", map.at(y, x));
      out << (x ? "," : "") << buf;
    }
    out << '\n';
  }
}

void write_loc_report(const std::filesystem::path &path,
                      const std::vector<LocalizationRecord> &records) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << kLocReportHeader << '\n';
  char buf[64];
  for (const auto &r : records) {
    std::snprintf(buf, sizeof(buf), "%.6f", r.iou_gt_cls);
    out << r.image_id << ',' << r.gt_label << ',' << r.pred_label << ','
        << (r.gt_box ? buf : "") << ',' << (r.pass_top1() ? 1 : 0) << ','
        << (r.pass_gtknown() ? 1 : 0) << '\n';
  }
}

#define SAOL_INSTANTIATE(T)                                                                        \
  template ScoreMap class_score_map<T>(const Tensor<T> &, const Tensor<T> &, std::size_t,          \
                                       std::size_t);                                               \
  template LocalizationRecord localize<T>(const Tensor<T> &, const Tensor<T> &, std::size_t,       \
                                          std::size_t, std::size_t, std::size_t,                   \
                                          const std::optional<BoundingBox> &, double, std::size_t, \
                                          std::size_t, UpsampleMode);

SAOL_INSTANTIATE(float)
SAOL_INSTANTIATE(double)
#undef SAOL_INSTANTIATE

} // namespace saol
