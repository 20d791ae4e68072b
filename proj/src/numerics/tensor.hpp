#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace diar {

// Dense row-major tensor of 64-bit floats. Everything the model touches is
// rank 2 (scalars are 1x1, vectors 1xN); the shape is kept as a general
// dimension list so callers can carry it around uninterpreted.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols);
  explicit Tensor(std::vector<std::size_t> shape);

  static Tensor scalar(double v);
  static Tensor zeros(std::size_t rows, std::size_t cols);
  static Tensor ones(std::size_t rows, std::size_t cols);
  static Tensor full(std::size_t rows, std::size_t cols, double v);
  // Row-major literal, e.g. Tensor::of({{1,2},{3,4}}).
  static Tensor of(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rank() const { return shape_.size(); }
  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double* row(std::size_t r) { return data_.data() + r * cols(); }
  const double* row(std::size_t r) const { return data_.data() + r * cols(); }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  std::string shape_str() const;

  void fill(double v);

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// Pure forward ops. Shape mismatches throw DimensionError; outputs of every
// op on finite inputs are finite (softmax/sigmoid are computed in their
// stable forms).
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor add_row(const Tensor& a, const Tensor& row);
Tensor sigmoid(const Tensor& a);
Tensor tanh_t(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor softmax_rows(const Tensor& a);
Tensor log_t(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t n);
Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t n);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
double sum_all(const Tensor& a);
double trace(const Tensor& a);

double sigmoid_scalar(double x);

}  // namespace diar
