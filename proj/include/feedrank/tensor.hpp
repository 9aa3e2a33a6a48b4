#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "feedrank/errors.hpp"
#include "feedrank/rng.hpp"

namespace feedrank {

// Dense row-major tensor of doubles. Everything in this codebase is rank 1
// or rank 2; there is no broadcasting beyond row-wise bias addition, which
// the tape implements explicitly.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape)
      : shape_(std::move(shape)), values_(checked_numel(shape_), 0.0) {}

  Tensor(std::vector<int> shape, std::vector<double> values)
      : shape_(std::move(shape)), values_(std::move(values)) {
    if (checked_numel(shape_) != values_.size())
      throw ShapeError("tensor: shape does not match value count");
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, double v) {
    Tensor t(std::move(shape));
    std::fill(t.values_.begin(), t.values_.end(), v);
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int rows() const { return shape_.empty() ? 0 : shape_[0]; }
  int cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }
  std::size_t numel() const { return values_.size(); }
  bool empty() const { return values_.empty(); }
  bool is_scalar() const { return values_.size() == 1; }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double at(int r, int c) const {
    return values_[static_cast<std::size_t>(r) * cols() + c];
  }
  double& at(int r, int c) {
    return values_[static_cast<std::size_t>(r) * cols() + c];
  }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (double v : values_)
      if (!std::isfinite(v)) return false;
    return true;
  }

 private:
  static std::size_t checked_numel(const std::vector<int>& shape) {
    std::size_t n = shape.empty() ? 0 : 1;
    for (int d : shape) {
      if (d <= 0) throw ShapeError("tensor: dimensions must be positive");
      n *= static_cast<std::size_t>(d);
    }
    return n;
  }

  std::vector<int> shape_;
  std::vector<double> values_;
};

inline Tensor random_uniform(std::vector<int> shape, Rng& rng, double lo,
                             double hi) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace feedrank
