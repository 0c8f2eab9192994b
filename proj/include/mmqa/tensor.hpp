#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mmqa/error.hpp"

namespace mmqa {

/// Dense row-major matrix of doubles. Vectors are stored as 1×n rows.
///
/// A default-constructed tensor is empty (0×0) and only serves as a
/// placeholder; every operation rejects empty operands.
class Tensor {
 public:
  Tensor() = default;

  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(checked_size(rows, cols), fill) {}

  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != checked_size(rows, cols)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_string(rows, cols));
    }
  }

  static Tensor row(std::initializer_list<double> values) {
    return Tensor(1, values.size(), std::vector<double>(values));
  }

  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw ShapeError("ragged rows in tensor literal");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor(r, c, std::move(data));
  }

  static Tensor identity(std::size_t n) {
    Tensor t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const double& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  const double& operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  std::span<const double> row_span(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * cols_, cols_);
  }

  bool same_shape(const Tensor& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  std::string shape_string() const { return shape_string(rows_, cols_); }

  static std::string shape_string(std::size_t r, std::size_t c) {
    return "[" + std::to_string(r) + "x" + std::to_string(c) + "]";
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  static std::size_t checked_size(std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0) {
      throw ShapeError("tensor extents must be positive, got " + shape_string(rows, cols));
    }
    return rows * cols;
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline void require_nonempty(const Tensor& t, std::string_view op) {
  if (t.empty()) throw ShapeError(std::string(op) + ": empty input");
}

inline void require_same_shape(const Tensor& a, const Tensor& b, std::string_view op) {
  require_nonempty(a, op);
  require_nonempty(b, op);
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
  }
}

// Forward kernels. The differentiable versions in autodiff.hpp call these.

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  require_nonempty(a, "matmul");
  require_nonempty(b, "matmul");
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner extents disagree " + a.shape_string() + " * " +
                     b.shape_string());
  }
  Tensor out(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* dst = &out(i, 0);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* src = &b(k, 0);
      for (std::size_t j = 0; j < n; ++j) dst[j] += aik * src[j];
    }
  }
  return out;
}

inline Tensor transpose(const Tensor& a) {
  require_nonempty(a, "transpose");
  Tensor out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

template <typename F>
Tensor map(const Tensor& a, F&& f) {
  require_nonempty(a, "map");
  Tensor out = a;
  for (double& v : out.data()) v = f(v);
  return out;
}

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, std::string_view op, F&& f) {
  require_same_shape(a, b, op);
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Tensor relu(const Tensor& a) { return map(a, [](double v) { return v > 0 ? v : 0.0; }); }
inline Tensor sigmoid(const Tensor& a) { return map(a, [](double v) { return sigmoid(v); }); }
inline Tensor tanh(const Tensor& a) { return map(a, [](double v) { return std::tanh(v); }); }
inline Tensor add(const Tensor& a, const Tensor& b) {
  return zip(a, b, "add", [](double x, double y) { return x + y; });
}
inline Tensor mul(const Tensor& a, const Tensor& b) {
  return zip(a, b, "mul", [](double x, double y) { return x * y; });
}

inline Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    require_nonempty(p, "concat_cols");
    if (p.rows() != rows) {
      throw ShapeError("concat_cols: row counts disagree " + parts.front().shape_string() +
                       " vs " + p.shape_string());
    }
    cols += p.cols();
  }
  Tensor out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t offset = 0;
    for (const auto& p : parts) {
      std::copy_n(&p(r, 0), p.cols(), &out(r, offset));
      offset += p.cols();
    }
  }
  return out;
}

inline Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require_nonempty(p, "concat_rows");
    if (p.cols() != cols) {
      throw ShapeError("concat_rows: column counts disagree " + parts.front().shape_string() +
                       " vs " + p.shape_string());
    }
    rows += p.rows();
  }
  std::vector<double> data;
  data.reserve(rows * cols);
  for (const auto& p : parts) data.insert(data.end(), p.data().begin(), p.data().end());
  return Tensor(rows, cols, std::move(data));
}

inline Tensor softmax_rows(const Tensor& m) {
  require_nonempty(m, "softmax_rows");
  Tensor out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto row = m.row_span(i);
    const double peak = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) {
      out(i, j) = std::exp(row[j] - peak);
      total += out(i, j);
    }
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) /= total;
  }
  return out;
}

inline Tensor mean_rows(const Tensor& m) {
  require_nonempty(m, "mean_rows");
  Tensor out(1, m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(0, j) += m(i, j);
  for (double& v : out.data()) v /= static_cast<double>(m.rows());
  return out;
}

/// Row index of each column's maximum; the first maximal row wins ties.
inline std::vector<std::size_t> argmax_rows(const Tensor& m) {
  require_nonempty(m, "argmax_rows");
  std::vector<std::size_t> arg(m.cols(), 0);
  for (std::size_t i = 1; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j)
      if (m(i, j) > m(arg[j], j)) arg[j] = i;
  return arg;
}

inline Tensor max_pool_rows(const Tensor& m) {
  const auto arg = argmax_rows(m);
  Tensor out(1, m.cols());
  for (std::size_t j = 0; j < m.cols(); ++j) out(0, j) = m(arg[j], j);
  return out;
}

/// Row-wise log-softmax, stable under large logits.
inline Tensor log_softmax_rows(const Tensor& m) {
  require_nonempty(m, "log_softmax_rows");
  Tensor out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto row = m.row_span(i);
    const double peak = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (double v : row) total += std::exp(v - peak);
    const double log_z = peak + std::log(total);
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = row[j] - log_z;
  }
  return out;
}

inline double cross_entropy(const Tensor& logits, std::span<const std::size_t> targets) {
  require_nonempty(logits, "cross_entropy");
  if (targets.size() != logits.rows()) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                     logits.shape_string());
  }
  const Tensor logp = log_softmax_rows(logits);
  double total = 0.0;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (targets[t] >= logits.cols()) {
      throw ValidationError("cross_entropy: target id " + std::to_string(targets[t]) +
                            " out of range for vocabulary of " + std::to_string(logits.cols()));
    }
    total -= logp(t, targets[t]);
  }
  return total / static_cast<double>(targets.size());
}

enum class ElementwiseKind { relu, sigmoid, tanh, mul, add, concat_cols };

inline ElementwiseKind parse_elementwise_kind(std::string_view name) {
  if (name == "relu") return ElementwiseKind::relu;
  if (name == "sigmoid") return ElementwiseKind::sigmoid;
  if (name == "tanh") return ElementwiseKind::tanh;
  if (name == "mul") return ElementwiseKind::mul;
  if (name == "add") return ElementwiseKind::add;
  if (name == "concat_cols") return ElementwiseKind::concat_cols;
  throw ValidationError("unknown elementwise kind '" + std::string(name) + "'");
}

/// Dispatches one pointwise primitive by kind.
inline Tensor elementwise(ElementwiseKind kind, std::span<const Tensor> args) {
  auto arity = [&](std::size_t n) {
    if (args.size() != n) {
      throw ShapeError("elementwise: expected " + std::to_string(n) + " operands, got " +
                       std::to_string(args.size()));
    }
  };
  switch (kind) {
    case ElementwiseKind::relu: arity(1); return relu(args[0]);
    case ElementwiseKind::sigmoid: arity(1); return sigmoid(args[0]);
    case ElementwiseKind::tanh: arity(1); return tanh(args[0]);
    case ElementwiseKind::mul: arity(2); return mul(args[0], args[1]);
    case ElementwiseKind::add: arity(2); return add(args[0], args[1]);
    case ElementwiseKind::concat_cols: return concat_cols(args);
  }
  throw ValidationError("unknown elementwise kind");
}

}  // namespace mmqa
