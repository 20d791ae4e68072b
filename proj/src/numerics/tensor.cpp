#include "numerics/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "common/error.hpp"

namespace diar {

Tensor::Tensor(std::size_t rows, std::size_t cols)
    : shape_{rows, cols}, data_(rows * cols, 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
  std::size_t n = 1;
  for (std::size_t d : shape_) n *= d;
  data_.assign(n, 0.0);
}

Tensor Tensor::scalar(double v) {
  Tensor t(1, 1);
  t.data_[0] = v;
  return t;
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols) {
  return Tensor(rows, cols);
}

Tensor Tensor::ones(std::size_t rows, std::size_t cols) {
  return full(rows, cols, 1.0);
}

Tensor Tensor::full(std::size_t rows, std::size_t cols, double v) {
  Tensor t(rows, cols);
  t.fill(v);
  return t;
}

Tensor Tensor::of(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  Tensor t(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged tensor literal");
    for (double v : row) t.data_[i++] = v;
  }
  return t;
}

std::size_t Tensor::rows() const {
  if (shape_.size() != 2) throw DimensionError("rows() on rank-" + std::to_string(shape_.size()) + " tensor");
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (shape_.size() != 2) throw DimensionError("cols() on rank-" + std::to_string(shape_.size()) + " tensor");
  return shape_[1];
}

double& Tensor::at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
double Tensor::at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << "x";
    os << shape_[i];
  }
  os << "]";
  return os.str();
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

namespace {

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw DimensionError(std::string(op) + ": rank-2 tensor required, got " + t.shape_str());
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
}

template <typename F>
Tensor map(const Tensor& a, F f) {
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(out[i]);
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dims disagree " + a.shape_str() + " vs " + b.shape_str());
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out(m, n);
  // ikj order keeps both inner accesses sequential.
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a.row(i);
    double* orow = out.row(i);
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      if (av == 0.0) continue;
      const double* brow = b.row(kk);
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  Tensor out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

Tensor scale(const Tensor& a, double s) {
  return map(a, [s](double v) { return v * s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return map(a, [s](double v) { return v + s; });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  require_rank2(a, "add_row");
  require_rank2(row, "add_row");
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw DimensionError("add_row: row shape " + row.shape_str() + " does not broadcast over " + a.shape_str());
  }
  Tensor out = a;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* orow = out.row(i);
    const double* r = row.row(0);
    for (std::size_t j = 0; j < a.cols(); ++j) orow[j] += r[j];
  }
  return out;
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor sigmoid(const Tensor& a) {
  return map(a, sigmoid_scalar);
}

Tensor tanh_t(const Tensor& a) {
  return map(a, [](double v) { return std::tanh(v); });
}

Tensor relu(const Tensor& a) {
  return map(a, [](double v) { return v > 0.0 ? v : 0.0; });
}

Tensor softmax_rows(const Tensor& a) {
  require_rank2(a, "softmax_rows");
  Tensor out = a;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* r = out.row(i);
    double mx = r[0];
    for (std::size_t j = 1; j < a.cols(); ++j) mx = std::max(mx, r[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) {
      r[j] = std::exp(r[j] - mx);
      sum += r[j];
    }
    for (std::size_t j = 0; j < a.cols(); ++j) r[j] /= sum;
  }
  return out;
}

Tensor log_t(const Tensor& a) {
  return map(a, [](double v) { return std::log(v); });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  return map(a, [lo, hi](double v) { return std::min(hi, std::max(lo, v)); });
}

Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t n) {
  require_rank2(a, "slice_rows");
  if (r0 + n > a.rows()) throw DimensionError("slice_rows out of range");
  Tensor out(n, a.cols());
  for (std::size_t i = 0; i < n; ++i)
    std::copy(a.row(r0 + i), a.row(r0 + i) + a.cols(), out.row(i));
  return out;
}

Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t n) {
  require_rank2(a, "slice_cols");
  if (c0 + n > a.cols()) throw DimensionError("slice_cols out of range");
  Tensor out(a.rows(), n);
  for (std::size_t i = 0; i < a.rows(); ++i)
    std::copy(a.row(i) + c0, a.row(i) + c0 + n, out.row(i));
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: empty");
  std::size_t rows = 0;
  for (const Tensor& p : parts) {
    require_rank2(p, "concat_rows");
    if (p.cols() != parts[0].cols()) throw DimensionError("concat_rows: column mismatch");
    rows += p.rows();
  }
  Tensor out(rows, parts[0].cols());
  std::size_t r = 0;
  for (const Tensor& p : parts) {
    for (std::size_t i = 0; i < p.rows(); ++i, ++r)
      std::copy(p.row(i), p.row(i) + p.cols(), out.row(r));
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: empty");
  std::size_t cols = 0;
  for (const Tensor& p : parts) {
    require_rank2(p, "concat_cols");
    if (p.rows() != parts[0].rows()) throw DimensionError("concat_cols: row mismatch");
    cols += p.cols();
  }
  Tensor out(parts[0].rows(), cols);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    std::size_t c = 0;
    for (const Tensor& p : parts) {
      std::copy(p.row(i), p.row(i) + p.cols(), out.row(i) + c);
      c += p.cols();
    }
  }
  return out;
}

double sum_all(const Tensor& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i];
  return s;
}

double trace(const Tensor& a) {
  require_rank2(a, "trace");
  const std::size_t n = std::min(a.rows(), a.cols());
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a.at(i, i);
  return s;
}

}  // namespace diar
