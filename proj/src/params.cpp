#include "saol/params.hpp"

#include <cmath>

namespace saol {

template <typename T> Tensor<T> &ParamStore<T>::add(const std::string &name, Tensor<T> tensor) {
  if (contains(name)) {
    throw ConfigError("duplicate parameter name: " + name);
  }
  index_[name] = entries_.size();
  entries_.emplace_back(name, std::move(tensor));
  return entries_.back().second;
}

template <typename T> const Tensor<T> &ParamStore<T>::get(const std::string &name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) {
    throw ConfigError("unknown parameter: " + name);
  }
  return entries_[it->second].second;
}

template <typename T> Tensor<T> &ParamStore<T>::get(const std::string &name) {
  const auto it = index_.find(name);
  if (it == index_.end()) {
    throw ConfigError("unknown parameter: " + name);
  }
  return entries_[it->second].second;
}

template <typename T> std::size_t ParamStore<T>::total_elements() const {
  std::size_t n = 0;
  for (const auto &entry : entries_) {
    n += entry.second.numel();
  }
  return n;
}

template <typename T> void ParamStore<T>::zero_grad() {
  for (auto &entry : entries_) {
    entry.second.zero_grad();
  }
}

template <typename T> ParamStore<T> ParamStore<T>::clone() const { return cast<T>(); }

template <typename T>
Tensor<T> he_uniform(const Shape &shape, std::size_t fan_in, std::mt19937_64 &rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<T> values(numel(shape));
  for (auto &v : values) {
    v = static_cast<T>(dist(rng));
  }
  return Tensor<T>(shape, std::move(values), true);
}

template class ParamStore<float>;
template class ParamStore<double>;
template Tensor<float> he_uniform<float>(const Shape &, std::size_t, std::mt19937_64 &);
template Tensor<double> he_uniform<double>(const Shape &, std::size_t, std::mt19937_64 &);

} // namespace saol
