#pragma once

// Dense tensors with reverse-mode automatic differentiation.
//
// A Tensor is a cheap handle onto a shared graph node. Every op that sees at
// least one input with requires_grad() records its inputs and a closure that
// pushes the output adjoint back to them. backward() replays those closures
// in reverse creation order, which is a topological order of the graph.

#include "saol/error.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace saol {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape &shape);
std::string shape_str(const Shape &shape);

namespace detail {

template <typename T> struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad; // empty until the first adjoint arrives
  bool requires_grad = false;
  std::uint64_t seq = 0;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node &)> backward_fn;

  void ensure_grad() {
    if (grad.size() != data.size()) {
      grad.assign(data.size(), T(0));
    }
  }
};

std::uint64_t next_seq();
bool grad_mode_enabled();

} // namespace detail

// Disables graph recording on this thread while alive.
class NoGradGuard {
public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard &) = delete;
  NoGradGuard &operator=(const NoGradGuard &) = delete;

private:
  bool previous_;
};

template <typename T> class Tensor {
public:
  using Node = detail::Node<T>;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor zeros(const Shape &shape, bool requires_grad = false);
  static Tensor full(const Shape &shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape &shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return data().size(); }

  std::span<const T> data() const;
  // Direct write access. Only meaningful on leaves (parameters, inputs); the
  // graph keeps no copy of a leaf's values.
  std::span<T> mutable_data();

  bool requires_grad() const;
  bool has_grad() const;
  // Zero-filled view if no adjoint has been accumulated yet.
  std::span<const T> grad() const;
  std::span<T> mutable_grad();
  void zero_grad();

  T item() const;

  // Same values, no edge back into the graph.
  Tensor detach() const;

  // Reverse-mode sweep from this scalar.
  void backward() const;

  // Used by op implementations.
  static Tensor from_node(std::shared_ptr<Node> node) { return Tensor(std::move(node)); }
  const std::shared_ptr<Node> &node() const { return node_; }

private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  const Node &checked() const;
  Node &checked();

  std::shared_ptr<Node> node_;
};

template <typename T> void backward(const Tensor<T> &loss);

// Builds an op output. When grad mode is on and any input requires grad, the
// output records `inputs` as parents and `fn` as its adjoint rule.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data,
                      std::vector<std::shared_ptr<detail::Node<T>>> inputs,
                      std::function<void(detail::Node<T> &)> fn);

} // namespace saol
