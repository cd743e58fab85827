#include "mvtri/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace mvtri::ad {

int64_t shape_size(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw std::invalid_argument("tensor: negative dimension");
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
  data_.assign(static_cast<size_t>(shape_size(shape_)), 0.0);
}

Tensor Tensor::full(std::vector<int64_t> shape, double v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

Tensor Tensor::scalar(double v) {
  Tensor t(std::vector<int64_t>{1});
  t[0] = v;
  return t;
}

Tensor Tensor::from(std::vector<int64_t> shape, std::vector<double> data) {
  if (shape_size(shape) != static_cast<int64_t>(data.size()))
    throw std::invalid_argument("tensor: data size does not match shape");
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(data);
  return t;
}

int64_t Tensor::dim(int i) const {
  int r = rank();
  if (i < 0) i += r;
  if (i < 0 || i >= r) throw std::out_of_range("tensor: dim index");
  return shape_[static_cast<size_t>(i)];
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
  os << ")";
  return os.str();
}

Tensor Tensor::reshaped(std::vector<int64_t> shape) const {
  if (shape_size(shape) != size())
    throw std::invalid_argument("tensor: reshape size mismatch " + shape_str());
  Tensor t = *this;
  t.shape_ = std::move(shape);
  return t;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::add_(const Tensor& o) {
  if (!same_shape(o)) throw std::invalid_argument("tensor: add_ shape mismatch");
  const double* s = o.data();
  double* d = data();
  for (int64_t i = 0, n = size(); i < n; ++i) d[i] += s[i];
}

void Tensor::scale_(double s) {
  for (double& v : data_) v *= s;
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

double Tensor::sum() const {
  double acc = 0.0;
  for (double v : data_) acc += v;
  return acc;
}

}  // namespace mvtri::ad
