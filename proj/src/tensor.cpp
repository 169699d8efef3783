#include "saol/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

namespace saol {

std::size_t numel(const Shape &shape) {
  std::size_t n = 1;
  for (const auto extent : shape) {
    n *= extent;
  }
  return n;
}

std::string shape_str(const Shape &shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    out << (i ? "," : "") << shape[i];
  }
  out << ']';
  return out.str();
}

namespace detail {
namespace {
thread_local bool t_grad_mode = true;
std::atomic<std::uint64_t> g_seq{0};
} // namespace

std::uint64_t next_seq() { return g_seq.fetch_add(1, std::memory_order_relaxed) + 1; }
bool grad_mode_enabled() { return t_grad_mode; }
void set_grad_mode(bool enabled) { t_grad_mode = enabled; }
} // namespace detail

NoGradGuard::NoGradGuard() : previous_(detail::grad_mode_enabled()) {
  detail::set_grad_mode(false);
}
NoGradGuard::~NoGradGuard() { detail::set_grad_mode(previous_); }

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad) {
  if (shape.empty()) {
    throw DimensionError("tensor shape must have at least one axis");
  }
  for (const auto extent : shape) {
    if (extent == 0) {
      throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
    }
  }
  if (saol::numel(shape) != data.size()) {
    throw DimensionError("shape " + shape_str(shape) + " does not match data length " +
                         std::to_string(data.size()));
  }
  node_ = std::make_shared<Node>();
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
  node_->seq = detail::next_seq();
}

template <typename T> Tensor<T> Tensor<T>::zeros(const Shape &shape, bool requires_grad) {
  return Tensor(shape, std::vector<T>(saol::numel(shape), T(0)), requires_grad);
}

template <typename T> Tensor<T> Tensor<T>::full(const Shape &shape, T value, bool requires_grad) {
  return Tensor(shape, std::vector<T>(saol::numel(shape), value), requires_grad);
}

template <typename T> Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<T>{value}, requires_grad);
}

template <typename T> const typename Tensor<T>::Node &Tensor<T>::checked() const {
  if (!node_) {
    throw ArgumentError("use of an undefined tensor");
  }
  return *node_;
}

template <typename T> typename Tensor<T>::Node &Tensor<T>::checked() {
  if (!node_) {
    throw ArgumentError("use of an undefined tensor");
  }
  return *node_;
}

template <typename T> const Shape &Tensor<T>::shape() const { return checked().shape; }

template <typename T> std::size_t Tensor<T>::dim(std::size_t axis) const {
  const auto &s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  return s[axis];
}

template <typename T> std::span<const T> Tensor<T>::data() const { return checked().data; }
template <typename T> std::span<T> Tensor<T>::mutable_data() { return checked().data; }
template <typename T> bool Tensor<T>::requires_grad() const { return checked().requires_grad; }

template <typename T> bool Tensor<T>::has_grad() const {
  const auto &n = checked();
  return n.grad.size() == n.data.size();
}

template <typename T> std::span<const T> Tensor<T>::grad() const {
  auto &n = const_cast<Node &>(checked());
  n.ensure_grad();
  return n.grad;
}

template <typename T> std::span<T> Tensor<T>::mutable_grad() {
  auto &n = checked();
  n.ensure_grad();
  return n.grad;
}

template <typename T> void Tensor<T>::zero_grad() {
  auto &n = checked();
  std::fill(n.grad.begin(), n.grad.end(), T(0));
}

template <typename T> T Tensor<T>::item() const {
  const auto &n = checked();
  if (n.data.size() != 1) {
    throw ArgumentError("item() on tensor of shape " + shape_str(n.shape));
  }
  return n.data[0];
}

template <typename T> Tensor<T> Tensor<T>::detach() const {
  const auto &n = checked();
  return Tensor(n.shape, n.data, false);
}

template <typename T> void Tensor<T>::backward() const { saol::backward(*this); }

template <typename T> void backward(const Tensor<T> &loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ArgumentError("backward() needs a scalar loss, got " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  if (!loss.requires_grad()) {
    throw ArgumentError("loss is not connected to any tensor that requires grad");
  }
  using NodeT = detail::Node<T>;
  std::vector<NodeT *> order;
  std::unordered_set<NodeT *> seen;
  std::vector<NodeT *> stack{loss.node().get()};
  while (!stack.empty()) {
    NodeT *node = stack.back();
    stack.pop_back();
    if (!seen.insert(node).second) {
      continue;
    }
    order.push_back(node);
    for (const auto &parent : node->parents) {
      if (parent->requires_grad) {
        stack.push_back(parent.get());
      }
    }
  }
  // Creation order is a valid topological order.
  std::sort(order.begin(), order.end(),
            [](const NodeT *a, const NodeT *b) { return a->seq > b->seq; });
  for (NodeT *node : order) {
    node->ensure_grad();
  }
  loss.node()->grad[0] += T(1);
  for (NodeT *node : order) {
    if (node->backward_fn) {
      node->backward_fn(*node);
    }
  }
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data,
                      std::vector<std::shared_ptr<detail::Node<T>>> inputs,
                      std::function<void(detail::Node<T> &)> fn) {
  Tensor<T> out(std::move(shape), std::move(data), false);
  if (!detail::grad_mode_enabled()) {
    return out;
  }
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const auto &in) { return in && in->requires_grad; });
  if (!any) {
    return out;
  }
  auto &node = *out.node();
  node.requires_grad = true;
  node.parents = std::move(inputs);
  node.backward_fn = std::move(fn);
  return out;
}

template class Tensor<float>;
template class Tensor<double>;
template void backward<float>(const Tensor<float> &);
template void backward<double>(const Tensor<double> &);
template Tensor<float> make_result<float>(Shape, std::vector<float>,
                                          std::vector<std::shared_ptr<detail::Node<float>>>,
                                          std::function<void(detail::Node<float> &)>);
template Tensor<double> make_result<double>(Shape, std::vector<double>,
                                            std::vector<std::shared_ptr<detail::Node<double>>>,
                                            std::function<void(detail::Node<double> &)>);

} // namespace saol
