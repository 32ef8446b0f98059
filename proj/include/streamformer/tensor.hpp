#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "streamformer/error.hpp"
#include "streamformer/kernels.hpp"
#include "streamformer/rng.hpp"

namespace sf {

enum class DType { f32, f64 };

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::f32; }
template <>
constexpr DType dtype_of<double>() { return DType::f64; }

inline const char* dtype_name(DType d) { return d == DType::f32 ? "f32" : "f64"; }

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << "]";
  return os.str();
}

// Dense row-major array of f32/f64 values. Treated as an immutable value once
// an operation has returned it; data is shared on copy. The var/generation
// pair links a tensor to a live ComputeTape (see autodiff.hpp).
template <typename T>
class Tensor {
 public:
  Tensor() : shape_{0}, data_(std::make_shared<std::vector<T>>()) {}

  explicit Tensor(Shape shape)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<T>>(checked_numel(shape_), T(0))) {}

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)) {
    if (shape_numel(shape_) != static_cast<int64_t>(data.size()))
      throw ShapeError("tensor: shape " + shape_str(shape_) + " does not match data length " +
                       std::to_string(data.size()));
    data_ = std::make_shared<std::vector<T>>(std::move(data));
  }

  static Tensor scalar(T v) { return Tensor({1}, {v}); }

  static Tensor full(Shape shape, T v) {
    Tensor t(std::move(shape));
    for (auto& x : *t.data_) x = v;
    return t;
  }

  static Tensor uniform(Shape shape, Rng& rng, T lo, T hi) {
    Tensor t(std::move(shape));
    for (auto& x : *t.data_) x = static_cast<T>(rng.uniform(double(lo), double(hi)));
    return t;
  }

  static Tensor gaussian(Shape shape, Rng& rng, T sigma) {
    Tensor t(std::move(shape));
    for (auto& x : *t.data_) x = static_cast<T>(rng.normal(double(sigma)));
    return t;
  }

  static Tensor xavier_uniform(Shape shape, Rng& rng, int64_t fan_in, int64_t fan_out) {
    double limit = std::sqrt(6.0 / double(fan_in + fan_out));
    return uniform(std::move(shape), rng, T(-limit), T(limit));
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_[static_cast<size_t>(i < 0 ? rank() + i : i)]; }
  int64_t numel() const { return static_cast<int64_t>(data_->size()); }
  bool defined() const { return numel() > 0; }
  DType dtype() const { return dtype_of<T>(); }

  const T* data() const { return data_->data(); }
  T* data() { return data_->data(); }
  const std::vector<T>& vec() const { return *data_; }

  T item() const {
    if (numel() != 1) throw ShapeError("item: tensor " + shape_str(shape_) + " is not scalar");
    return (*data_)[0];
  }

  T at(int64_t flat) const { return (*data_)[static_cast<size_t>(flat)]; }

  // A tensor with the same storage but a different shape. Tracking does not
  // carry over; use ops::reshape for a differentiable reshape.
  Tensor view_as(Shape shape) const {
    if (shape_numel(shape) != numel())
      throw ShapeError("view: cannot view " + shape_str(shape_) + " as " + shape_str(shape));
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = data_;
    return t;
  }

  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = std::make_shared<std::vector<T>>(*data_);
    return t;
  }

  // ---- autodiff linkage ----
  int64_t var() const { return var_; }
  uint64_t gen() const { return gen_; }
  void set_var(int64_t v, uint64_t gen) {
    var_ = v;
    gen_ = gen;
  }
  bool tracked_in(uint64_t gen) const { return var_ >= 0 && gen_ == gen; }

 private:
  static int64_t checked_numel(const Shape& s) {
    for (int64_t d : s)
      if (d <= 0) throw ShapeError("tensor: non-positive extent in " + shape_str(s));
    return shape_numel(s);
  }

  Shape shape_;
  std::shared_ptr<std::vector<T>> data_;
  int64_t var_ = -1;
  uint64_t gen_ = 0;
};

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (int64_t i = 0; i < t.numel(); ++i)
    if (!std::isfinite(t.data()[i])) return false;
  return true;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("max_abs_diff: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  double worst = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i)
    worst = std::max(worst, std::abs(double(a.data()[i]) - double(b.data()[i])));
  return worst;
}

}  // namespace sf
