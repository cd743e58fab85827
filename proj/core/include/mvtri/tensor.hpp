#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mvtri::ad {

// Dense row-major double tensor. The whole engine is double-only: every
// analytic gradient in this project is validated against 64-bit central
// finite differences, so there is one scalar type and no dtype plumbing.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shape);

  static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int64_t> shape, double v);
  static Tensor scalar(double v);
  static Tensor from(std::vector<int64_t> shape, std::vector<double> data);

  const std::vector<int64_t>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  int64_t dim(int i) const;  // negative indices count from the back
  // 2D view used by most row-wise ops: (rows, cols) = (size/last, last)
  int64_t rows() const { return shape_.empty() ? 0 : size() / cols(); }
  int64_t cols() const { return shape_.empty() ? 0 : shape_.back(); }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  std::string shape_str() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }
  double* row(int64_t r) { return data_.data() + r * cols(); }
  const double* row(int64_t r) const { return data_.data() + r * cols(); }

  Tensor reshaped(std::vector<int64_t> shape) const;
  void fill(double v);
  void add_(const Tensor& o);
  void scale_(double s);
  bool all_finite() const;
  double sum() const;

 private:
  std::vector<int64_t> shape_;
  std::vector<double> data_;
};

int64_t shape_size(const std::vector<int64_t>& shape);

}  // namespace mvtri::ad
