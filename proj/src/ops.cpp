#include "saol/ops.hpp"

#include "saol/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace saol {
namespace {

template <typename T> using NodePtr = std::shared_ptr<detail::Node<T>>;

std::vector<std::size_t> row_major_strides(const Shape &shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) {
    strides[i - 1] = strides[i] * shape[i];
  }
  return strides;
}

// All offsets reachable by varying the listed axes (others fixed at 0), in
// row-major order of those axes.
std::vector<std::size_t> offset_combos(const Shape &shape, const std::vector<std::size_t> &strides,
                                       const std::vector<std::size_t> &axes) {
  std::vector<std::size_t> offsets{0};
  for (const auto axis : axes) {
    std::vector<std::size_t> next;
    next.reserve(offsets.size() * shape[axis]);
    for (const auto base : offsets) {
      for (std::size_t i = 0; i < shape[axis]; ++i) {
        next.push_back(base + i * strides[axis]);
      }
    }
    offsets = std::move(next);
  }
  return offsets;
}

struct AxisGroups {
  std::vector<std::size_t> outer; // one per output element / normalization group
  std::vector<std::size_t> inner; // offsets within a group
};

AxisGroups split_axes(const Shape &shape, std::vector<std::size_t> axes) {
  if (axes.empty()) {
    throw ArgumentError("reduction axis set is empty");
  }
  std::sort(axes.begin(), axes.end());
  if (std::adjacent_find(axes.begin(), axes.end()) != axes.end()) {
    throw ArgumentError("duplicate axis in reduction set");
  }
  if (axes.back() >= shape.size()) {
    throw ArgumentError("axis " + std::to_string(axes.back()) + " out of range for rank " +
                        std::to_string(shape.size()));
  }
  std::vector<std::size_t> kept;
  for (std::size_t a = 0; a < shape.size(); ++a) {
    if (!std::binary_search(axes.begin(), axes.end(), a)) {
      kept.push_back(a);
    }
  }
  const auto strides = row_major_strides(shape);
  return {offset_combos(shape, strides, kept), offset_combos(shape, strides, axes)};
}

struct Broadcast {
  Shape out;
  bool same = true;
  std::vector<std::size_t> a_index;
  std::vector<std::size_t> b_index;
};

Broadcast broadcast(const Shape &a, const Shape &b) {
  if (a.size() != b.size()) {
    throw DimensionError("rank mismatch: " + shape_str(a) + " vs " + shape_str(b));
  }
  Broadcast bc;
  bc.out.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i]) {
      bc.out[i] = a[i];
    } else if (a[i] == 1) {
      bc.out[i] = b[i];
    } else if (b[i] == 1) {
      bc.out[i] = a[i];
    } else {
      throw DimensionError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
  }
  if (a == b) {
    return bc;
  }
  bc.same = false;
  const auto sa = row_major_strides(a);
  const auto sb = row_major_strides(b);
  const std::size_t total = numel(bc.out);
  bc.a_index.resize(total);
  bc.b_index.resize(total);
  std::vector<std::size_t> idx(a.size(), 0);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t oa = 0;
    std::size_t ob = 0;
    for (std::size_t d = 0; d < a.size(); ++d) {
      oa += (a[d] == 1 ? 0 : idx[d]) * sa[d];
      ob += (b[d] == 1 ? 0 : idx[d]) * sb[d];
    }
    bc.a_index[flat] = oa;
    bc.b_index[flat] = ob;
    for (std::size_t d = a.size(); d-- > 0;) {
      if (++idx[d] < bc.out[d]) {
        break;
      }
      idx[d] = 0;
    }
  }
  return bc;
}

template <typename T> void accumulate(detail::Node<T> &target, std::span<const T> g) {
  target.ensure_grad();
  kernels::axpy(g.size(), T(1), g.data(), target.grad.data());
}

} // namespace

template <typename T> Tensor<T> add(const Tensor<T> &a, const Tensor<T> &b) {
  auto bc = broadcast(a.shape(), b.shape());
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<T> out(numel(bc.out));
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = bc.same ? ad[i] + bd[i] : ad[bc.a_index[i]] + bd[bc.b_index[i]];
  }
  Shape out_shape = bc.out;
  return make_result<T>(std::move(out_shape), std::move(out), {a.node(), b.node()},
                        [bc = std::move(bc)](detail::Node<T> &self) {
                          for (std::size_t k = 0; k < 2; ++k) {
                            auto &p = *self.parents[k];
                            if (!p.requires_grad) {
                              continue;
                            }
                            if (bc.same) {
                              accumulate<T>(p, self.grad);
                              continue;
                            }
                            p.ensure_grad();
                            const auto &index = k == 0 ? bc.a_index : bc.b_index;
                            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                              p.grad[index[i]] += self.grad[i];
                            }
                          }
                        });
}

template <typename T> Tensor<T> sub(const Tensor<T> &a, const Tensor<T> &b) {
  return add(a, scale(b, T(-1)));
}

template <typename T> Tensor<T> mul(const Tensor<T> &a, const Tensor<T> &b) {
  auto bc = broadcast(a.shape(), b.shape());
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<T> out(numel(bc.out));
  if (bc.same) {
    kernels::mul(out.size(), ad.data(), bd.data(), out.data());
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = ad[bc.a_index[i]] * bd[bc.b_index[i]];
    }
  }
  Shape out_shape = bc.out;
  return make_result<T>(std::move(out_shape), std::move(out), {a.node(), b.node()},
                        [bc = std::move(bc)](detail::Node<T> &self) {
                          auto &pa = *self.parents[0];
                          auto &pb = *self.parents[1];
                          const auto n = self.grad.size();
                          if (bc.same) {
                            std::vector<T> tmp(n);
                            if (pa.requires_grad) {
                              kernels::mul(n, self.grad.data(), pb.data.data(), tmp.data());
                              accumulate<T>(pa, tmp);
                            }
                            if (pb.requires_grad) {
                              kernels::mul(n, self.grad.data(), pa.data.data(), tmp.data());
                              accumulate<T>(pb, tmp);
                            }
                            return;
                          }
                          if (pa.requires_grad) {
                            pa.ensure_grad();
                            for (std::size_t i = 0; i < n; ++i) {
                              pa.grad[bc.a_index[i]] += self.grad[i] * pb.data[bc.b_index[i]];
                            }
                          }
                          if (pb.requires_grad) {
                            pb.ensure_grad();
                            for (std::size_t i = 0; i < n; ++i) {
                              pb.grad[bc.b_index[i]] += self.grad[i] * pa.data[bc.a_index[i]];
                            }
                          }
                        });
}

template <typename T> Tensor<T> scale(const Tensor<T> &x, T factor) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto &v : out) {
    v *= factor;
  }
  return make_result<T>(x.shape(), std::move(out), {x.node()}, [factor](detail::Node<T> &self) {
    auto &p = *self.parents[0];
    p.ensure_grad();
    kernels::axpy(self.grad.size(), factor, self.grad.data(), p.grad.data());
  });
}

template <typename T> Tensor<T> add_scalar(const Tensor<T> &x, T value) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto &v : out) {
    v += value;
  }
  return make_result<T>(x.shape(), std::move(out), {x.node()},
                        [](detail::Node<T> &self) { accumulate<T>(*self.parents[0], self.grad); });
}

template <typename T> Tensor<T> relu(const Tensor<T> &x) {
  const auto xd = x.data();
  std::vector<T> out(xd.size());
  kernels::relu(xd.size(), xd.data(), out.data());
  return make_result<T>(x.shape(), std::move(out), {x.node()}, [](detail::Node<T> &self) {
    auto &p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (self.data[i] > T(0)) {
        p.grad[i] += self.grad[i];
      }
    }
  });
}

template <typename T> Tensor<T> sigmoid(const Tensor<T> &x) {
  const auto xd = x.data();
  std::vector<T> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) {
    const T v = xd[i];
    if (v >= T(0)) {
      out[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      out[i] = e / (T(1) + e);
    }
  }
  return make_result<T>(x.shape(), std::move(out), {x.node()}, [](detail::Node<T> &self) {
    auto &p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T y = self.data[i];
      p.grad[i] += self.grad[i] * y * (T(1) - y);
    }
  });
}

template <typename T> Tensor<T> log(const Tensor<T> &x) {
  const auto xd = x.data();
  std::vector<T> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) {
    if (!(xd[i] > T(0))) {
      throw DomainError("log of non-positive value " + std::to_string(xd[i]));
    }
    out[i] = std::log(xd[i]);
  }
  return make_result<T>(x.shape(), std::move(out), {x.node()}, [](detail::Node<T> &self) {
    auto &p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      p.grad[i] += self.grad[i] / p.data[i];
    }
  });
}

template <typename T> Tensor<T> matmul(const Tensor<T> &a, const Tensor<T> &b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0);
  const std::size_t k = a.dim(1);
  const std::size_t n = b.dim(1);
  std::vector<T> out(m * n, T(0));
  kernels::gemm(false, false, m, n, k, a.data().data(), k, b.data().data(), n, out.data(), n);
  return make_result<T>({m, n}, std::move(out), {a.node(), b.node()},
                        [m, k, n](detail::Node<T> &self) {
                          auto &pa = *self.parents[0];
                          auto &pb = *self.parents[1];
                          if (pa.requires_grad) {
                            pa.ensure_grad();
                            kernels::gemm(false, true, m, k, n, self.grad.data(), n,
                                          pb.data.data(), n, pa.grad.data(), k);
                          }
                          if (pb.requires_grad) {
                            pb.ensure_grad();
                            kernels::gemm(true, false, k, n, m, pa.data.data(), k,
                                          self.grad.data(), n, pb.grad.data(), n);
                          }
                        });
}

namespace {

struct ConvGeometry {
  std::size_t n, cin, h, w, cout, kh, kw, stride, pad, oh, ow;
  std::size_t col_rows() const { return cin * kh * kw; }
  std::size_t col_cols() const { return oh * ow; }
  bool direct() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

// Output columns [lo, hi) of kernel offset `k` that read inside [0, extent).
inline void valid_range(std::size_t k, std::size_t pad, std::size_t stride, std::size_t extent,
                        std::size_t out, std::size_t &lo, std::size_t &hi) {
  lo = k >= pad ? 0 : (pad - k + stride - 1) / stride;
  const std::size_t limit = extent + pad; // ix + pad < limit
  hi = limit > k ? std::min(out, (limit - k - 1) / stride + 1) : 0;
  lo = std::min(lo, hi);
}

template <typename T> void im2col(const ConvGeometry &g, const T *in, T *col) {
  for (std::size_t c = 0; c < g.cin; ++c) {
    const T *plane = in + c * g.h * g.w;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      std::size_t y_lo, y_hi;
      valid_range(ki, g.pad, g.stride, g.h, g.oh, y_lo, y_hi);
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        std::size_t x_lo, x_hi;
        valid_range(kj, g.pad, g.stride, g.w, g.ow, x_lo, x_hi);
        T *row = col + ((c * g.kh + ki) * g.kw + kj) * g.col_cols();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          T *dst = row + oy * g.ow;
          if (oy < y_lo || oy >= y_hi) {
            std::fill(dst, dst + g.ow, T(0));
            continue;
          }
          const T *src = plane + (oy * g.stride + ki - g.pad) * g.w + kj - g.pad;
          std::fill(dst, dst + x_lo, T(0));
          if (g.stride == 1) {
            std::copy(src + x_lo, src + x_hi, dst + x_lo);
          } else {
            for (std::size_t ox = x_lo; ox < x_hi; ++ox) {
              dst[ox] = src[ox * g.stride];
            }
          }
          std::fill(dst + x_hi, dst + g.ow, T(0));
        }
      }
    }
  }
}

template <typename T> void col2im(const ConvGeometry &g, const T *col, T *in) {
  for (std::size_t c = 0; c < g.cin; ++c) {
    T *plane = in + c * g.h * g.w;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      std::size_t y_lo, y_hi;
      valid_range(ki, g.pad, g.stride, g.h, g.oh, y_lo, y_hi);
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        std::size_t x_lo, x_hi;
        valid_range(kj, g.pad, g.stride, g.w, g.ow, x_lo, x_hi);
        const T *row = col + ((c * g.kh + ki) * g.kw + kj) * g.col_cols();
        for (std::size_t oy = y_lo; oy < y_hi; ++oy) {
          const T *src = row + oy * g.ow;
          T *dst = plane + (oy * g.stride + ki - g.pad) * g.w + kj - g.pad;
          if (g.stride == 1) {
            for (std::size_t ox = x_lo; ox < x_hi; ++ox) {
              dst[ox] += src[ox];
            }
          } else {
            for (std::size_t ox = x_lo; ox < x_hi; ++ox) {
              dst[ox * g.stride] += src[ox];
            }
          }
        }
      }
    }
  }
}

} // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T> &input, const Tensor<T> &weight, const Tensor<T> &bias,
                 std::size_t stride, std::size_t padding) {
  if (input.rank() != 4 || weight.rank() != 4) {
    throw DimensionError("conv2d expects 4-D input and weight, got " + shape_str(input.shape()) +
                         " and " + shape_str(weight.shape()));
  }
  if (input.dim(1) != weight.dim(1)) {
    throw DimensionError("conv2d channel mismatch: input " + shape_str(input.shape()) +
                         ", weight " + shape_str(weight.shape()));
  }
  if (stride == 0) {
    throw ArgumentError("conv2d stride must be >= 1");
  }
  ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), input.dim(3), weight.dim(0),
                 weight.dim(2), weight.dim(3), stride, padding, 0, 0};
  if (g.h + 2 * g.pad < g.kh || g.w + 2 * g.pad < g.kw) {
    throw DimensionError("conv2d kernel larger than padded input");
  }
  g.oh = (g.h + 2 * g.pad - g.kh) / g.stride + 1;
  g.ow = (g.w + 2 * g.pad - g.kw) / g.stride + 1;
  const bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != g.cout)) {
    throw DimensionError("conv2d bias shape " + shape_str(bias.shape()) + " for " +
                         std::to_string(g.cout) + " output channels");
  }

  const std::size_t in_plane = g.cin * g.h * g.w;
  const std::size_t out_plane = g.cout * g.col_cols();
  const std::size_t col_size = g.col_rows() * g.col_cols();
  const T *xd = input.data().data();
  const T *wd = weight.data().data();

  // Columns are kept for the weight gradient.
  auto cols = std::make_shared<std::vector<T>>(g.direct() ? 0 : g.n * col_size);
  std::vector<T> out(g.n * out_plane, T(0));
  for (std::size_t n = 0; n < g.n; ++n) {
    T *o = out.data() + n * out_plane;
    if (has_bias) {
      const auto bd = bias.data();
      for (std::size_t co = 0; co < g.cout; ++co) {
        std::fill(o + co * g.col_cols(), o + (co + 1) * g.col_cols(), bd[co]);
      }
    }
    const T *col = xd + n * in_plane;
    if (!g.direct()) {
      T *dst = cols->data() + n * col_size;
      im2col(g, xd + n * in_plane, dst);
      col = dst;
    }
    kernels::gemm(false, false, g.cout, g.col_cols(), g.col_rows(), wd, g.col_rows(), col,
                  g.col_cols(), o, g.col_cols());
  }

  std::vector<NodePtr<T>> inputs{input.node(), weight.node()};
  if (has_bias) {
    inputs.push_back(bias.node());
  }
  return make_result<T>(
      {g.n, g.cout, g.oh, g.ow}, std::move(out), std::move(inputs),
      [g, cols, has_bias, in_plane, out_plane, col_size](detail::Node<T> &self) {
        auto &px = *self.parents[0];
        auto &pw = *self.parents[1];
        std::vector<T> dcol(px.requires_grad && !g.direct() ? col_size : 0);
        if (pw.requires_grad) {
          pw.ensure_grad();
        }
        if (px.requires_grad) {
          px.ensure_grad();
        }
        for (std::size_t n = 0; n < g.n; ++n) {
          const T *go = self.grad.data() + n * out_plane;
          if (pw.requires_grad) {
            const T *col = g.direct() ? px.data.data() + n * in_plane : cols->data() + n * col_size;
            kernels::gemm(false, true, g.cout, g.col_rows(), g.col_cols(), go, g.col_cols(), col,
                          g.col_cols(), pw.grad.data(), g.col_rows());
          }
          if (has_bias) {
            auto &pb = *self.parents[2];
            if (pb.requires_grad) {
              pb.ensure_grad();
              for (std::size_t co = 0; co < g.cout; ++co) {
                T acc = 0;
                for (std::size_t i = 0; i < g.col_cols(); ++i) {
                  acc += go[co * g.col_cols() + i];
                }
                pb.grad[co] += acc;
              }
            }
          }
          if (px.requires_grad) {
            T *gx = px.grad.data() + n * in_plane;
            if (g.direct()) {
              kernels::gemm(true, false, g.col_rows(), g.col_cols(), g.cout, pw.data.data(),
                            g.col_rows(), go, g.col_cols(), gx, g.col_cols());
            } else {
              std::fill(dcol.begin(), dcol.end(), T(0));
              kernels::gemm(true, false, g.col_rows(), g.col_cols(), g.cout, pw.data.data(),
                            g.col_rows(), go, g.col_cols(), dcol.data(), g.col_cols());
              col2im(g, dcol.data(), gx);
            }
          }
        }
      });
}

template <typename T> Tensor<T> softmax(const Tensor<T> &x, const std::vector<std::size_t> &axes) {
  auto groups = std::make_shared<AxisGroups>(split_axes(x.shape(), axes));
  const auto xd = x.data();
  std::vector<T> out(xd.size());
  for (const auto base : groups->outer) {
    T mx = -std::numeric_limits<T>::infinity();
    for (const auto off : groups->inner) {
      mx = std::max(mx, xd[base + off]);
    }
    T total = 0;
    for (const auto off : groups->inner) {
      const T e = std::exp(xd[base + off] - mx);
      out[base + off] = e;
      total += e;
    }
    for (const auto off : groups->inner) {
      out[base + off] /= total;
    }
  }
  return make_result<T>(x.shape(), std::move(out), {x.node()}, [groups](detail::Node<T> &self) {
    auto &p = *self.parents[0];
    p.ensure_grad();
    for (const auto base : groups->outer) {
      T inner = 0;
      for (const auto off : groups->inner) {
        inner += self.grad[base + off] * self.data[base + off];
      }
      for (const auto off : groups->inner) {
        const auto i = base + off;
        p.grad[i] += self.data[i] * (self.grad[i] - inner);
      }
    }
  });
}

namespace {

struct InterpAxis {
  std::vector<std::size_t> lo;
  std::vector<std::size_t> hi;
  std::vector<double> frac; // weight of `hi`
};

InterpAxis interp_axis(std::size_t in, std::size_t out) {
  InterpAxis axis;
  axis.lo.resize(out);
  axis.hi.resize(out);
  axis.frac.resize(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * ratio - 0.5;
    if (src < 0) {
      src = 0;
    }
    auto lo = static_cast<std::size_t>(src);
    lo = std::min(lo, in - 1);
    axis.lo[i] = lo;
    axis.hi[i] = std::min(lo + 1, in - 1);
    axis.frac[i] = axis.hi[i] == lo ? 0.0 : src - static_cast<double>(lo);
  }
  return axis;
}

} // namespace

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T> &x, std::size_t out_h, std::size_t out_w) {
  if (x.rank() != 4) {
    throw DimensionError("bilinear_resize expects [N,C,H,W], got " + shape_str(x.shape()));
  }
  if (out_h == 0 || out_w == 0) {
    throw ArgumentError("bilinear_resize output size must be >= 1");
  }
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t h = x.dim(2);
  const std::size_t w = x.dim(3);
  auto ys = std::make_shared<InterpAxis>(interp_axis(h, out_h));
  auto xs = std::make_shared<InterpAxis>(interp_axis(w, out_w));
  const auto xd = x.data();
  std::vector<T> out(planes * out_h * out_w);
  for (std::size_t p = 0; p < planes; ++p) {
    const T *src = xd.data() + p * h * w;
    T *dst = out.data() + p * out_h * out_w;
    for (std::size_t i = 0; i < out_h; ++i) {
      const T *r0 = src + ys->lo[i] * w;
      const T *r1 = src + ys->hi[i] * w;
      const T fy = static_cast<T>(ys->frac[i]);
      for (std::size_t j = 0; j < out_w; ++j) {
        const T fx = static_cast<T>(xs->frac[j]);
        const std::size_t c0 = xs->lo[j];
        const std::size_t c1 = xs->hi[j];
        // Difference form keeps constants and identity sizes exact.
        const T top = r0[c0] + fx * (r0[c1] - r0[c0]);
        const T bottom = r1[c0] + fx * (r1[c1] - r1[c0]);
        dst[i * out_w + j] = top + fy * (bottom - top);
      }
    }
  }
  return make_result<T>({x.dim(0), x.dim(1), out_h, out_w}, std::move(out), {x.node()},
                        [ys, xs, planes, h, w, out_h, out_w](detail::Node<T> &self) {
                          auto &p = *self.parents[0];
                          p.ensure_grad();
                          for (std::size_t q = 0; q < planes; ++q) {
                            T *gsrc = p.grad.data() + q * h * w;
                            const T *gdst = self.grad.data() + q * out_h * out_w;
                            for (std::size_t i = 0; i < out_h; ++i) {
                              const T fy = static_cast<T>(ys->frac[i]);
                              for (std::size_t j = 0; j < out_w; ++j) {
                                const T fx = static_cast<T>(xs->frac[j]);
                                const T g = gdst[i * out_w + j];
                                const std::size_t r0 = ys->lo[i] * w;
                                const std::size_t r1 = ys->hi[i] * w;
                                gsrc[r0 + xs->lo[j]] += g * (1 - fy) * (1 - fx);
                                gsrc[r0 + xs->hi[j]] += g * (1 - fy) * fx;
                                gsrc[r1 + xs->lo[j]] += g * fy * (1 - fx);
                                gsrc[r1 + xs->hi[j]] += g * fy * fx;
                              }
                            }
                          }
                        });
}

template <typename T> Tensor<T> global_avg_pool(const Tensor<T> &x) {
  if (x.rank() != 4) {
    throw DimensionError("global_avg_pool expects [N,C,H,W], got " + shape_str(x.shape()));
  }
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t area = x.dim(2) * x.dim(3);
  const auto xd = x.data();
  std::vector<T> out(planes);
  for (std::size_t p = 0; p < planes; ++p) {
    T acc = 0;
    for (std::size_t i = 0; i < area; ++i) {
      acc += xd[p * area + i];
    }
    out[p] = acc / static_cast<T>(area);
  }
  return make_result<T>({x.dim(0), x.dim(1)}, std::move(out), {x.node()},
                        [planes, area](detail::Node<T> &self) {
                          auto &p = *self.parents[0];
                          p.ensure_grad();
                          for (std::size_t q = 0; q < planes; ++q) {
                            const T g = self.grad[q] / static_cast<T>(area);
                            for (std::size_t i = 0; i < area; ++i) {
                              p.grad[q * area + i] += g;
                            }
                          }
                        });
}

template <typename T> Tensor<T> concat_channels(const std::vector<Tensor<T>> &xs) {
  if (xs.empty()) {
    throw ArgumentError("concat of an empty list");
  }
  const Shape &first = xs.front().shape();
  if (first.size() < 2) {
    throw DimensionError("concat_channels needs rank >= 2");
  }
  std::size_t channels = 0;
  for (const auto &t : xs) {
    const Shape &s = t.shape();
    if (s.size() != first.size() || s[0] != first[0] ||
        !std::equal(s.begin() + 2, s.end(), first.begin() + 2)) {
      throw DimensionError("concat_channels shape mismatch: " + shape_str(first) + " vs " +
                           shape_str(s));
    }
    channels += s[1];
  }
  const std::size_t outer = first[0];
  const std::size_t inner = numel(first) / (first[0] * first[1]);
  Shape out_shape = first;
  out_shape[1] = channels;
  std::vector<T> out(numel(out_shape));
  std::vector<std::size_t> widths;
  std::vector<NodePtr<T>> nodes;
  std::size_t offset = 0;
  for (const auto &t : xs) {
    const std::size_t width = t.dim(1) * inner;
    const auto td = t.data();
    for (std::size_t n = 0; n < outer; ++n) {
      std::copy(td.begin() + n * width, td.begin() + (n + 1) * width,
                out.begin() + n * channels * inner + offset);
    }
    widths.push_back(width);
    nodes.push_back(t.node());
    offset += width;
  }
  return make_result<T>(out_shape, std::move(out), std::move(nodes),
                        [widths, outer, row = channels * inner](detail::Node<T> &self) {
                          std::size_t offset = 0;
                          for (std::size_t k = 0; k < widths.size(); ++k) {
                            auto &p = *self.parents[k];
                            if (p.requires_grad) {
                              p.ensure_grad();
                              for (std::size_t n = 0; n < outer; ++n) {
                                const T *g = self.grad.data() + n * row + offset;
                                T *dst = p.grad.data() + n * widths[k];
                                for (std::size_t i = 0; i < widths[k]; ++i) {
                                  dst[i] += g[i];
                                }
                              }
                            }
                            offset += widths[k];
                          }
                        });
}

template <typename T>
Tensor<T> sum(const Tensor<T> &x, const std::vector<std::size_t> &axes, bool keepdim) {
  auto groups = std::make_shared<AxisGroups>(split_axes(x.shape(), axes));
  Shape out_shape;
  for (std::size_t a = 0; a < x.rank(); ++a) {
    const bool reduced = std::find(axes.begin(), axes.end(), a) != axes.end();
    if (!reduced) {
      out_shape.push_back(x.dim(a));
    } else if (keepdim) {
      out_shape.push_back(1);
    }
  }
  if (out_shape.empty()) {
    out_shape.push_back(1);
  }
  const auto xd = x.data();
  std::vector<T> out(groups->outer.size());
  for (std::size_t o = 0; o < groups->outer.size(); ++o) {
    T acc = 0;
    for (const auto off : groups->inner) {
      acc += xd[groups->outer[o] + off];
    }
    out[o] = acc;
  }
  return make_result<T>(out_shape, std::move(out), {x.node()}, [groups](detail::Node<T> &self) {
    auto &p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t o = 0; o < groups->outer.size(); ++o) {
      for (const auto off : groups->inner) {
        p.grad[groups->outer[o] + off] += self.grad[o];
      }
    }
  });
}

template <typename T> Tensor<T> sum(const Tensor<T> &x) {
  const auto xd = x.data();
  T acc = 0;
  for (const auto v : xd) {
    acc += v;
  }
  return make_result<T>({1}, {acc}, {x.node()}, [](detail::Node<T> &self) {
    auto &p = *self.parents[0];
    p.ensure_grad();
    for (auto &g : p.grad) {
      g += self.grad[0];
    }
  });
}

template <typename T> Tensor<T> mean(const Tensor<T> &x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T> Tensor<T> reshape(const Tensor<T> &x, const Shape &shape) {
  if (numel(shape) != x.numel()) {
    throw DimensionError("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return make_result<T>(shape, std::move(out), {x.node()},
                        [](detail::Node<T> &self) { accumulate<T>(*self.parents[0], self.grad); });
}

#define SAOL_INSTANTIATE(T)                                                                        \
  template Tensor<T> add(const Tensor<T> &, const Tensor<T> &);                                    \
  template Tensor<T> sub(const Tensor<T> &, const Tensor<T> &);                                    \
  template Tensor<T> mul(const Tensor<T> &, const Tensor<T> &);                                    \
  template Tensor<T> scale(const Tensor<T> &, T);                                                  \
  template Tensor<T> add_scalar(const Tensor<T> &, T);                                             \
  template Tensor<T> relu(const Tensor<T> &);                                                      \
  template Tensor<T> sigmoid(const Tensor<T> &);                                                   \
  template Tensor<T> log(const Tensor<T> &);                                                       \
  template Tensor<T> matmul(const Tensor<T> &, const Tensor<T> &);                                 \
  template Tensor<T> conv2d(const Tensor<T> &, const Tensor<T> &, const Tensor<T> &, std::size_t,  \
                            std::size_t);                                                          \
  template Tensor<T> softmax(const Tensor<T> &, const std::vector<std::size_t> &);                 \
  template Tensor<T> bilinear_resize(const Tensor<T> &, std::size_t, std::size_t);                 \
  template Tensor<T> global_avg_pool(const Tensor<T> &);                                           \
  template Tensor<T> concat_channels(const std::vector<Tensor<T>> &);                              \
  template Tensor<T> sum(const Tensor<T> &, const std::vector<std::size_t> &, bool);               \
  template Tensor<T> sum(const Tensor<T> &);                                                       \
  template Tensor<T> mean(const Tensor<T> &);                                                      \
  template Tensor<T> reshape(const Tensor<T> &, const Shape &);

SAOL_INSTANTIATE(float)
SAOL_INSTANTIATE(double)
#undef SAOL_INSTANTIATE

} // namespace saol
