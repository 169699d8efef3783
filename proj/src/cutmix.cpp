#include "saol/cutmix.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace saol {

double sample_beta(double a, double b, std::mt19937_64 &rng) {
  std::gamma_distribution<double> ga(a, 1.0);
  std::gamma_distribution<double> gb(b, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  if (x + y <= 0) {
    return 0.5;
  }
  return x / (x + y);
}

PatchRect sample_patch(std::size_t height, std::size_t width, double lambda0,
                       PatchPlacement placement, std::mt19937_64 &rng) {
  const double side = std::sqrt(std::clamp(lambda0, 0.0, 1.0));
  const auto ph = std::min(height, static_cast<std::size_t>(std::lround(height * side)));
  const auto pw = std::min(width, static_cast<std::size_t>(std::lround(width * side)));
  PatchRect rect;
  if (placement == PatchPlacement::kInside) {
    std::uniform_int_distribution<std::size_t> ydist(0, height - ph);
    std::uniform_int_distribution<std::size_t> xdist(0, width - pw);
    rect.y0 = ydist(rng);
    rect.x0 = xdist(rng);
    rect.y1 = rect.y0 + ph;
    rect.x1 = rect.x0 + pw;
    return rect;
  }
  std::uniform_int_distribution<std::size_t> cy(0, height - 1);
  std::uniform_int_distribution<std::size_t> cx(0, width - 1);
  const auto clip = [](std::ptrdiff_t v, std::size_t hi) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(v, 0, static_cast<std::ptrdiff_t>(hi)));
  };
  const auto yc = static_cast<std::ptrdiff_t>(cy(rng));
  const auto xc = static_cast<std::ptrdiff_t>(cx(rng));
  const auto hh = static_cast<std::ptrdiff_t>(ph);
  const auto hw = static_cast<std::ptrdiff_t>(pw);
  rect.y0 = clip(yc - hh / 2, height);
  rect.y1 = clip(yc - hh / 2 + hh, height);
  rect.x0 = clip(xc - hw / 2, width);
  rect.x1 = clip(xc - hw / 2 + hw, width);
  return rect;
}

template <typename T>
CutMixBatch<T> make_cutmix(const Tensor<T> &images, const Tensor<T> &labels,
                           const std::vector<std::size_t> &partner,
                           const std::vector<PatchRect> &rects) {
  if (images.rank() != 4 || labels.rank() != 2 || labels.dim(0) != images.dim(0)) {
    throw DimensionError("cutmix expects images [N,C,H,W] and labels [N,K], got " +
                         shape_str(images.shape()) + " and " + shape_str(labels.shape()));
  }
  const std::size_t n = images.dim(0);
  const std::size_t c = images.dim(1);
  const std::size_t h = images.dim(2);
  const std::size_t w = images.dim(3);
  const std::size_t k = labels.dim(1);
  if (partner.size() != n || rects.size() != n) {
    throw DimensionError("cutmix pairing/rect count does not match batch size");
  }
  const auto xd = images.data();
  const auto yd = labels.data();
  const std::size_t plane = h * w;
  const std::size_t image = c * plane;

  std::vector<T> mixed(xd.size());
  std::vector<T> source(xd.size());
  std::vector<T> mask(n * plane, T(0));
  std::vector<T> mixed_labels(n * k);
  CutMixBatch<T> batch;
  batch.partner = partner;
  batch.rects = rects;
  batch.lambda.resize(n);
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t a = partner[s];
    if (a >= n) {
      throw ArgumentError("cutmix partner index out of range");
    }
    const PatchRect &r = rects[s];
    if (r.y0 > r.y1 || r.x0 > r.x1 || r.y1 > h || r.x1 > w) {
      throw ArgumentError("cutmix rectangle outside the image");
    }
    T *m = mask.data() + s * plane;
    for (std::size_t y = r.y0; y < r.y1; ++y) {
      std::fill(m + y * w + r.x0, m + y * w + r.x1, T(1));
    }
    std::copy(xd.begin() + a * image, xd.begin() + (a + 1) * image, source.begin() + s * image);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = s * image + ch * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        mixed[base + i] = m[i] != T(0) ? xd[a * image + ch * plane + i] : xd[base + i];
      }
    }
    const double lambda = static_cast<double>(r.area()) / static_cast<double>(plane);
    batch.lambda[s] = lambda;
    for (std::size_t j = 0; j < k; ++j) {
      mixed_labels[s * k + j] =
          static_cast<T>(lambda * yd[a * k + j] + (1.0 - lambda) * yd[s * k + j]);
    }
  }
  batch.mixed = Tensor<T>(images.shape(), std::move(mixed));
  batch.source = Tensor<T>(images.shape(), std::move(source));
  batch.mask = Tensor<T>({n, 1, h, w}, std::move(mask));
  batch.labels = Tensor<T>(labels.shape(), std::move(mixed_labels));
  return batch;
}

template <typename T>
CutMixBatch<T> sample_cutmix(const Tensor<T> &images, const Tensor<T> &labels,
                             const CutMixOptions &options, std::mt19937_64 &rng) {
  if (images.rank() != 4) {
    throw DimensionError("cutmix expects images [N,C,H,W], got " + shape_str(images.shape()));
  }
  const std::size_t n = images.dim(0);
  if (n < 2) {
    throw ArgumentError("cutmix needs a batch of at least 2 images");
  }
  if (!(options.alpha > 0)) {
    throw ArgumentError("cutmix alpha must be > 0");
  }
  std::vector<std::size_t> partner(n);
  std::iota(partner.begin(), partner.end(), std::size_t{0});
  std::shuffle(partner.begin(), partner.end(), rng);
  std::vector<PatchRect> rects(n);
  for (auto &rect : rects) {
    const double lambda0 = sample_beta(options.alpha, options.alpha, rng);
    rect = sample_patch(images.dim(2), images.dim(3), lambda0, options.placement, rng);
  }
  return make_cutmix(images, labels, partner, rects);
}

template <typename T>
CutMixBatch<T> sample_cutmix(const Tensor<T> &images, const Tensor<T> &labels, double alpha,
                             std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_cutmix(images, labels, CutMixOptions{alpha, PatchPlacement::kInside}, rng);
}

template <typename T>
Tensor<T> downsample_mask(const Tensor<T> &mask, std::size_t out_h, std::size_t out_w) {
  if (mask.rank() != 4 || mask.dim(1) != 1) {
    throw DimensionError("mask must be [N,1,H,W], got " + shape_str(mask.shape()));
  }
  if (out_h == 0 || out_w == 0) {
    throw ArgumentError("mask output size must be >= 1");
  }
  const std::size_t n = mask.dim(0);
  const std::size_t h = mask.dim(2);
  const std::size_t w = mask.dim(3);
  // Integer overlaps in a grid refined by out_h (rows) and out_w (cols): input
  // pixel r spans [r*out_h, (r+1)*out_h), output cell i spans [i*h, (i+1)*h).
  const auto overlaps = [](std::size_t in, std::size_t out) {
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> table(out);
    for (std::size_t i = 0; i < out; ++i) {
      const std::size_t lo = i * in;
      const std::size_t hi = (i + 1) * in;
      for (std::size_t r = lo / out; r * out < hi && r < in; ++r) {
        const std::size_t a = std::max(lo, r * out);
        const std::size_t b = std::min(hi, (r + 1) * out);
        if (b > a) {
          table[i].emplace_back(r, b - a);
        }
      }
    }
    return table;
  };
  const auto rows = overlaps(h, out_h);
  const auto cols = overlaps(w, out_w);
  const double norm = static_cast<double>(h) * static_cast<double>(w);
  const auto md = mask.data();
  std::vector<T> out(n * out_h * out_w);
  for (std::size_t s = 0; s < n; ++s) {
    const T *m = md.data() + s * h * w;
    for (std::size_t i = 0; i < out_h; ++i) {
      for (std::size_t j = 0; j < out_w; ++j) {
        double acc = 0;
        for (const auto &[r, wy] : rows[i]) {
          for (const auto &[c, wx] : cols[j]) {
            acc += static_cast<double>(wy * wx) * static_cast<double>(m[r * w + c]);
          }
        }
        out[(s * out_h + i) * out_w + j] = static_cast<T>(std::clamp(acc / norm, 0.0, 1.0));
      }
    }
  }
  return Tensor<T>({n, 1, out_h, out_w}, std::move(out));
}

#define SAOL_INSTANTIATE(T)                                                                        \
  template CutMixBatch<T> make_cutmix<T>(const Tensor<T> &, const Tensor<T> &,                     \
                                         const std::vector<std::size_t> &,                         \
                                         const std::vector<PatchRect> &);                          \
  template CutMixBatch<T> sample_cutmix<T>(const Tensor<T> &, const Tensor<T> &,                   \
                                           const CutMixOptions &, std::mt19937_64 &);              \
  template CutMixBatch<T> sample_cutmix<T>(const Tensor<T> &, const Tensor<T> &, double,           \
                                           std::uint64_t);                                         \
  template Tensor<T> downsample_mask<T>(const Tensor<T> &, std::size_t, std::size_t);

SAOL_INSTANTIATE(float)
SAOL_INSTANTIATE(double)
#undef SAOL_INSTANTIATE

} // namespace saol
