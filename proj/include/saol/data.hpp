#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace saol {

// Pixel box with inclusive minimum and exclusive maximum.
struct BoundingBox {
  double x_min = 0;
  double y_min = 0;
  double x_max = 0;
  double y_max = 0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  bool valid() const { return x_min < x_max && y_min < y_max; }
  bool operator==(const BoundingBox &) const = default;
};

struct LabeledImage {
  std::size_t channels = 3;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels; // [C,H,W], values in [0,1]
  std::size_t label = 0;
  std::optional<BoundingBox> box;
};

inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarRecordBytes = 1 + 3 * kCifarSide * kCifarSide;
inline constexpr std::size_t kCifarClasses = 10;

// One CIFAR-10 binary batch: records of 1 label byte followed by the R, G and
// B planes (32x32, row-major). Pixels are scaled to [0,1].
std::vector<LabeledImage> load_cifar10(const std::filesystem::path &path);

// data_batch_1..5.bin (train) or test_batch.bin (test) from a directory.
std::vector<LabeledImage> load_cifar10_split(const std::filesystem::path &dir, bool train);

enum class ShapeKind { kSquare = 0, kDisk, kTriangle, kCross, kRing };
const char *shape_name(ShapeKind kind);

// One bright shape per image on a dark textured background; label = shape
// kind, box = tight bounds of the painted pixels. image_size >= 16,
// num_classes in 2..5.
std::vector<LabeledImage> gen_synthetic(std::size_t count, std::uint64_t seed,
                                        std::size_t image_size, std::size_t num_classes);

} // namespace saol
