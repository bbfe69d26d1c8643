#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ncsn/error.hpp"

namespace ncsn {

// Shape of a dense tensor of rank 0 (scalar), 1 (vector) or 2 (row-major matrix).
class Shape {
public:
  Shape() = default;
  explicit Shape(std::size_t n) : rank_(1), dims_{n, 1} {}
  Shape(std::size_t rows, std::size_t cols) : rank_(2), dims_{rows, cols} {}

  static Shape scalar() { return Shape(); }

  int rank() const { return rank_; }
  std::size_t dim(int i) const { return dims_[static_cast<std::size_t>(i)]; }
  std::size_t numel() const {
    if (rank_ == 0) return 1;
    if (rank_ == 1) return dims_[0];
    return dims_[0] * dims_[1];
  }

  // Rows/cols treat a vector as a single row and a scalar as 1x1.
  std::size_t rows() const { return rank_ == 2 ? dims_[0] : 1; }
  std::size_t cols() const { return rank_ == 0 ? 1 : dims_[rank_ == 2 ? 1 : 0]; }

  bool operator==(const Shape& o) const {
    if (rank_ != o.rank_) return false;
    for (int i = 0; i < rank_; ++i)
      if (dims_[static_cast<std::size_t>(i)] != o.dims_[static_cast<std::size_t>(i)]) return false;
    return true;
  }

  std::string str() const {
    std::string s = "[";
    for (int i = 0; i < rank_; ++i) {
      if (i) s += ",";
      s += std::to_string(dims_[static_cast<std::size_t>(i)]);
    }
    return s + "]";
  }

private:
  int rank_ = 0;
  std::array<std::size_t, 2> dims_{1, 1};
};

// Dense rank<=2 array of doubles. Plain value type.
class Tensor {
public:
  Tensor() : data_(1, 0.0) {}

  explicit Tensor(Shape shape, double fill = 0.0) : shape_(shape), data_(shape.numel(), fill) {}

  Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.numel())
      throw ShapeError("tensor: shape " + shape_.str() + " does not match " +
                       std::to_string(data_.size()) + " values");
  }

  static Tensor scalar(double v) { return Tensor(Shape(), std::vector<double>{v}); }
  static Tensor vector(std::vector<double> v) {
    Shape s(v.size());
    return Tensor(s, std::move(v));
  }
  static Tensor vector(std::initializer_list<double> v) { return vector(std::vector<double>(v)); }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
    return Tensor(Shape(rows, cols), std::move(v));
  }
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
    std::vector<double> v;
    std::size_t cols = rows.size() ? rows.begin()->size() : 0;
    for (const auto& r : rows) {
      if (r.size() != cols) throw ShapeError("tensor: ragged matrix literal");
      v.insert(v.end(), r.begin(), r.end());
    }
    return matrix(rows.size(), cols, std::move(v));
  }
  static Tensor identity(std::size_t n) {
    Tensor t(Shape(n, n));
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return shape_.rank(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const { return shape_.rows(); }
  std::size_t cols() const { return shape_.cols(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  double item() const {
    if (data_.size() != 1) throw ShapeError("tensor: item() on shape " + shape_.str());
    return data_[0];
  }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }

  Tensor row_tensor(std::size_t r) const {
    auto s = row(r);
    return vector(std::vector<double>(s.begin(), s.end()));
  }

  // Reinterpret a vector as a 1xN matrix, or a 1xN matrix as a vector.
  Tensor as_batch() const {
    if (rank() == 2) return *this;
    return Tensor(Shape(1, size()), data_);
  }
  Tensor reshaped(Shape s) const { return Tensor(s, data_); }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  // Bitwise equality: identical shape and identical doubles.
  bool identical(const Tensor& o) const {
    return shape_ == o.shape_ &&
           std::memcmp(data_.data(), o.data_.data(), data_.size() * sizeof(double)) == 0;
  }

private:
  Shape shape_;
  std::vector<double> data_;
};

}  // namespace ncsn
