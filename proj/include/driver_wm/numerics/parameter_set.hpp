#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "driver_wm/error.hpp"
#include "driver_wm/numerics/rng.hpp"
#include "driver_wm/numerics/tensor.hpp"

namespace dwm {

/// Named tensors in insertion order. Iteration order is the order in which
/// entries were added, which the model builders keep fixed.
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    bool trainable = true;
  };

  void add(std::string name, Tensor value, bool trainable = true) {
    if (index_.count(name)) fail(ErrorCode::kInvalidConfig, "duplicate parameter '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.push_back({std::move(name), std::move(value), trainable});
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const Tensor& at(const std::string& name) const { return entries_[position(name)].value; }
  Tensor& at(const std::string& name) { return entries_[position(name)].value; }

  std::size_t position(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) fail(ErrorCode::kNotFound, "parameter '" + name + "'");
    return it->second;
  }

  std::vector<Entry>& entries() noexcept { return entries_; }
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  /// Same names/shapes, all values zero.
  ParameterSet zeros_like() const {
    ParameterSet out;
    for (const auto& e : entries_) out.add(e.name, Tensor(e.value.shape(), 0.0), e.trainable);
    return out;
  }

  friend bool operator==(const ParameterSet& a, const ParameterSet& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i) {
      const auto& x = a.entries_[i];
      const auto& y = b.entries_[i];
      if (x.name != y.name || x.trainable != y.trainable || !(x.value == y.value)) return false;
    }
    return true;
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
inline Tensor uniform_init(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng) {
  Tensor t = Tensor::matrix(rows, cols);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.storage()) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace dwm
