#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace vistrack {

// Dense row-major double tensor, rank 1..4.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, double v);
  static Tensor from(std::vector<int> shape, std::vector<double> values);
  static Tensor scalar(double v) { return from({1}, {v}); }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  bool defined() const { return !shape_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // Convenience indexing for the common ranks.
  double& at(int i, int j) { return data_[static_cast<size_t>(i) * shape_[1] + j]; }
  double at(int i, int j) const { return data_[static_cast<size_t>(i) * shape_[1] + j]; }
  double& at(int c, int r, int col) {
    return data_[(static_cast<size_t>(c) * shape_[1] + r) * shape_[2] + col];
  }
  double at(int c, int r, int col) const {
    return data_[(static_cast<size_t>(c) * shape_[1] + r) * shape_[2] + col];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  void fill(double v);
  void zero() { fill(0.0); }

  double item() const { return data_.at(0); }

  std::string shape_str() const;

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

int64_t shape_numel(const std::vector<int>& shape);

}  // namespace vistrack
