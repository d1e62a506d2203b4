#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "aren/rng.hpp"
#include "aren/tensor.hpp"

namespace aren {

// Named parameter registry. Insertion order is the canonical iteration order
// everywhere (optimizer, checkpoints, inspect), so runs are reproducible.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> tensor;
    bool trainable;
  };

  Tensor<T> add(const std::string& name, Tensor<T> t, bool trainable = true) {
    if (index_.count(name)) throw ContractError("ParamStore: duplicate parameter name '" + name + "'");
    t.set_requires_grad(trainable);
    index_[name] = entries_.size();
    entries_.push_back(Entry{name, t, trainable});
    return t;
  }

  Tensor<T>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &entries_[it->second].tensor;
  }
  const Tensor<T>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &entries_[it->second].tensor;
  }

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  size_t size() const { return entries_.size(); }

  int64_t count(bool trainable_only = false) const {
    int64_t n = 0;
    for (const auto& e : entries_)
      if (!trainable_only || e.trainable) n += e.tensor.numel();
    return n;
  }

  // Element count of parameters whose name starts with prefix.
  int64_t count_prefix(const std::string& prefix, bool trainable_only = false) const {
    int64_t n = 0;
    for (const auto& e : entries_)
      if ((!trainable_only || e.trainable) && e.name.rfind(prefix, 0) == 0) n += e.tensor.numel();
    return n;
  }

  void zero_grads() {
    for (auto& e : entries_) e.tensor.zero_grad();
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, size_t> index_;
};

// Weight initializers. Conv weights draw from a normal scaled by fan-in
// (He-style, matching the leaky activations); biases start at zero.
template <typename T>
Tensor<T> he_normal(const Shape& s, int64_t fan_in, Rng& rng) {
  auto t = Tensor<T>::zeros(s);
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  T* p = t.data();
  const int64_t n = t.numel();
  for (int64_t i = 0; i < n; ++i) p[i] = static_cast<T>(rng.normal() * stddev);
  return t;
}

template <typename T>
struct AdamConfig {
  T lr = T(1e-4);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
};

// Adam with bias correction. Moments are keyed by parameter name so the
// store may grow between steps and checkpoints can restore exactly.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig<T> cfg) : cfg_(cfg) {}

  // Requires a populated gradient on every trainable entry; clears all
  // gradients afterwards so step pollution cannot leak across phases.
  void step(ParamStore<T>& params) {
    ++step_;
    const double b1 = static_cast<double>(cfg_.beta1);
    const double b2 = static_cast<double>(cfg_.beta2);
    const double corr1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double corr2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    for (auto& e : params.entries()) {
      if (!e.trainable) continue;
      if (!e.tensor.has_grad())
        throw ContractError("Adam: missing gradient for parameter '" + e.name + "'");
      auto& mv = moments_[e.name];
      const size_t n = static_cast<size_t>(e.tensor.numel());
      if (mv.first.empty()) {
        mv.first.assign(n, T(0));
        mv.second.assign(n, T(0));
      }
      const std::vector<T>& g = e.tensor.grad();
      T* p = e.tensor.data();
      T* m = mv.first.data();
      T* v = mv.second.data();
      for (size_t i = 0; i < n; ++i) {
        m[i] = cfg_.beta1 * m[i] + (T(1) - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (T(1) - cfg_.beta2) * g[i] * g[i];
        const double mhat = static_cast<double>(m[i]) / corr1;
        const double vhat = static_cast<double>(v[i]) / corr2;
        p[i] -= static_cast<T>(static_cast<double>(cfg_.lr) * mhat /
                               (std::sqrt(vhat) + static_cast<double>(cfg_.eps)));
      }
    }
    for (auto& e : params.entries()) e.tensor.zero_grad();
  }

  int64_t step_count() const { return step_; }
  void set_step_count(int64_t s) { step_ = s; }
  const AdamConfig<T>& config() const { return cfg_; }
  // Schedules adjust the rate between steps; moments are untouched.
  void set_lr(T lr) { cfg_.lr = lr; }

  // Moment access for checkpointing, in the store's entry order.
  std::pair<std::vector<T>, std::vector<T>>* moments_for(const std::string& name) {
    auto it = moments_.find(name);
    return it == moments_.end() ? nullptr : &it->second;
  }
  void restore_moments(const std::string& name, std::vector<T> m, std::vector<T> v) {
    if (m.size() != v.size()) throw ContractError("Adam: moment size mismatch for '" + name + "'");
    moments_[name] = {std::move(m), std::move(v)};
  }

 private:
  AdamConfig<T> cfg_;
  int64_t step_ = 0;
  std::unordered_map<std::string, std::pair<std::vector<T>, std::vector<T>>> moments_;
};

}  // namespace aren
