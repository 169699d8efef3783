#pragma once

#include "saol/tensor.hpp"

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace saol {

// Ordered collection of named trainable leaves.
template <typename T> class ParamStore {
public:
  // Registers a new leaf; duplicate names raise ConfigError.
  Tensor<T> &add(const std::string &name, Tensor<T> tensor);

  bool contains(const std::string &name) const { return index_.count(name) != 0; }
  const Tensor<T> &get(const std::string &name) const;
  Tensor<T> &get(const std::string &name);

  std::size_t size() const { return entries_.size(); }
  const std::vector<std::pair<std::string, Tensor<T>>> &entries() const { return entries_; }
  std::vector<std::pair<std::string, Tensor<T>>> &entries() { return entries_; }

  std::size_t total_elements() const;
  void zero_grad();

  // Deep copy of values into fresh leaves.
  ParamStore clone() const;
  template <typename U> ParamStore<U> cast() const;

private:
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
  std::map<std::string, std::size_t> index_;
};

// He-uniform: U(-b, b), b = sqrt(6 / fan_in).
template <typename T>
Tensor<T> he_uniform(const Shape &shape, std::size_t fan_in, std::mt19937_64 &rng);

template <typename T>
template <typename U>
ParamStore<U> ParamStore<T>::cast() const {
  ParamStore<U> out;
  for (const auto &[name, t] : entries_) {
    std::vector<U> values(t.data().begin(), t.data().end());
    out.add(name, Tensor<U>(t.shape(), std::move(values), true));
  }
  return out;
}

} // namespace saol
