#include "saol/data.hpp"

#include "saol/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>

namespace saol {

std::vector<LabeledImage> load_cifar10(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open CIFAR-10 batch " + path.string());
  }
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  if (bytes.empty() || bytes.size() % kCifarRecordBytes != 0) {
    throw FormatError("CIFAR-10 batch " + path.string() + " has " + std::to_string(bytes.size()) +
                      " bytes, not a multiple of " + std::to_string(kCifarRecordBytes));
  }
  const std::size_t count = bytes.size() / kCifarRecordBytes;
  std::vector<LabeledImage> images;
  images.reserve(count);
  for (std::size_t r = 0; r < count; ++r) {
    const unsigned char *record = bytes.data() + r * kCifarRecordBytes;
    if (record[0] >= kCifarClasses) {
      throw FormatError("CIFAR-10 record " + std::to_string(r) + " has label byte " +
                        std::to_string(record[0]));
    }
    LabeledImage image;
    image.channels = 3;
    image.height = kCifarSide;
    image.width = kCifarSide;
    image.label = record[0];
    image.pixels.resize(kCifarRecordBytes - 1);
    for (std::size_t i = 0; i < image.pixels.size(); ++i) {
      image.pixels[i] = static_cast<float>(record[1 + i]) / 255.0f;
    }
    images.push_back(std::move(image));
  }
  return images;
}

std::vector<LabeledImage> load_cifar10_split(const std::filesystem::path &dir, bool train) {
  if (!train) {
    return load_cifar10(dir / "test_batch.bin");
  }
  std::vector<LabeledImage> all;
  for (int b = 1; b <= 5; ++b) {
    auto part = load_cifar10(dir / ("data_batch_" + std::to_string(b) + ".bin"));
    std::move(part.begin(), part.end(), std::back_inserter(all));
  }
  return all;
}

const char *shape_name(ShapeKind kind) {
  switch (kind) {
  case ShapeKind::kSquare:
    return "square";
  case ShapeKind::kDisk:
    return "disk";
  case ShapeKind::kTriangle:
    return "triangle";
  case ShapeKind::kCross:
    return "cross";
  case ShapeKind::kRing:
    return "ring";
  }
  return "unknown";
}

namespace {

// u, v in the shape's own frame, [-1,1] across its bounding square.
bool inside_shape(ShapeKind kind, double u, double v) {
  const double r2 = u * u + v * v;
  switch (kind) {
  case ShapeKind::kSquare:
    return std::abs(u) <= 1 && std::abs(v) <= 1;
  case ShapeKind::kDisk:
    return r2 <= 1;
  case ShapeKind::kTriangle:
    return v <= 1 && std::abs(u) <= (v + 1) / 2;
  case ShapeKind::kCross:
    return (std::abs(u) <= 1.0 / 3 && std::abs(v) <= 1) ||
           (std::abs(v) <= 1.0 / 3 && std::abs(u) <= 1);
  case ShapeKind::kRing:
    return r2 <= 1 && r2 >= 0.25;
  }
  return false;
}

} // namespace

std::vector<LabeledImage> gen_synthetic(std::size_t count, std::uint64_t seed,
                                        std::size_t image_size, std::size_t num_classes) {
  if (image_size < 16) {
    throw ArgumentError("synthetic image_size must be >= 16");
  }
  if (num_classes < 2 || num_classes > 5) {
    throw ArgumentError("synthetic num_classes must be in 2..5");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t n = image_size;
  const auto min_side = static_cast<std::size_t>(std::lround(0.35 * static_cast<double>(n)));
  const auto max_side = static_cast<std::size_t>(std::lround(0.65 * static_cast<double>(n)));
  std::uniform_int_distribution<std::size_t> label_dist(0, num_classes - 1);
  std::uniform_int_distribution<std::size_t> side_dist(min_side, max_side);

  std::vector<LabeledImage> images;
  images.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    LabeledImage image;
    image.channels = 3;
    image.height = n;
    image.width = n;
    image.label = label_dist(rng);
    image.pixels.assign(3 * n * n, 0.0f);

    // Background: per-channel base, a low-frequency wave, and pixel noise.
    for (std::size_t c = 0; c < 3; ++c) {
      const double base = 0.05 + 0.2 * unit(rng);
      const double fy = 0.1 + 0.4 * unit(rng);
      const double fx = 0.1 + 0.4 * unit(rng);
      const double phase = 2 * std::numbers::pi * unit(rng);
      for (std::size_t y = 0; y < n; ++y) {
        for (std::size_t x = 0; x < n; ++x) {
          const double wave = 0.08 * std::sin(fy * static_cast<double>(y) +
                                              fx * static_cast<double>(x) + phase);
          const double v = base + wave + 0.1 * (unit(rng) - 0.5);
          image.pixels[(c * n + y) * n + x] = static_cast<float>(std::clamp(v, 0.0, 0.45));
        }
      }
    }

    const auto kind = static_cast<ShapeKind>(image.label);
    const std::size_t side = side_dist(rng);
    std::uniform_int_distribution<std::size_t> pos(0, n - side);
    const std::size_t top = pos(rng);
    const std::size_t left = pos(rng);
    double color[3];
    for (auto &c : color) {
      c = 0.6 + 0.35 * unit(rng);
    }
    const double half = static_cast<double>(side) / 2;
    const double cy = static_cast<double>(top) + half;
    const double cx = static_cast<double>(left) + half;
    std::size_t y_min = n, x_min = n, y_max = 0, x_max = 0;
    for (std::size_t y = top; y < top + side; ++y) {
      for (std::size_t x = left; x < left + side; ++x) {
        const double u = (static_cast<double>(x) + 0.5 - cx) / half;
        const double v = (static_cast<double>(y) + 0.5 - cy) / half;
        if (!inside_shape(kind, u, v)) {
          continue;
        }
        for (std::size_t c = 0; c < 3; ++c) {
          const double value = color[c] + 0.05 * (unit(rng) - 0.5);
          image.pixels[(c * n + y) * n + x] = static_cast<float>(std::clamp(value, 0.0, 1.0));
        }
        y_min = std::min(y_min, y);
        x_min = std::min(x_min, x);
        y_max = std::max(y_max, y + 1);
        x_max = std::max(x_max, x + 1);
      }
    }
    image.box = BoundingBox{static_cast<double>(x_min), static_cast<double>(y_min),
                            static_cast<double>(x_max), static_cast<double>(y_max)};
    images.push_back(std::move(image));
  }
  return images;
}

} // namespace saol
