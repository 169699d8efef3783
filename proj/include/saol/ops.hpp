#pragma once

// Differentiable primitives. Each one is gradient-checked against central
// finite differences in tests/test_gradients.cpp.

#include "saol/tensor.hpp"

#include <vector>

namespace saol {

// Elementwise binary ops. Operands must have equal rank; each axis must match
// or be 1 on one side (broadcast).
template <typename T> Tensor<T> add(const Tensor<T> &a, const Tensor<T> &b);
template <typename T> Tensor<T> sub(const Tensor<T> &a, const Tensor<T> &b);
template <typename T> Tensor<T> mul(const Tensor<T> &a, const Tensor<T> &b);

template <typename T> Tensor<T> scale(const Tensor<T> &x, T factor);
template <typename T> Tensor<T> add_scalar(const Tensor<T> &x, T value);

template <typename T> Tensor<T> relu(const Tensor<T> &x);
template <typename T> Tensor<T> sigmoid(const Tensor<T> &x);
// Natural log. Non-positive inputs raise DomainError.
template <typename T> Tensor<T> log(const Tensor<T> &x);

// a[M,K] x b[K,N] -> [M,N]
template <typename T> Tensor<T> matmul(const Tensor<T> &a, const Tensor<T> &b);

// Cross-correlation. input [N,Cin,H,W], weight [Cout,Cin,k,k], bias [Cout] or
// undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T> &input, const Tensor<T> &weight, const Tensor<T> &bias,
                 std::size_t stride = 1, std::size_t padding = 0);

// Max-stabilized softmax; the normalized groups are the flattened `axes`.
template <typename T> Tensor<T> softmax(const Tensor<T> &x, const std::vector<std::size_t> &axes);

// Bilinear, align_corners = false, [N,C,H,W] -> [N,C,out_h,out_w].
template <typename T> Tensor<T> bilinear_resize(const Tensor<T> &x, std::size_t out_h, std::size_t out_w);

// [N,C,H,W] -> [N,C]
template <typename T> Tensor<T> global_avg_pool(const Tensor<T> &x);

// Concatenate along axis 1.
template <typename T> Tensor<T> concat_channels(const std::vector<Tensor<T>> &xs);

// Sum over `axes`. With keepdim the reduced axes stay with extent 1.
template <typename T>
Tensor<T> sum(const Tensor<T> &x, const std::vector<std::size_t> &axes, bool keepdim = false);
// Full reductions to shape [1].
template <typename T> Tensor<T> sum(const Tensor<T> &x);
template <typename T> Tensor<T> mean(const Tensor<T> &x);

template <typename T> Tensor<T> reshape(const Tensor<T> &x, const Shape &shape);

template <typename T> Tensor<T> detach(const Tensor<T> &x) { return x.detach(); }

} // namespace saol
