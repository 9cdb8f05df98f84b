#pragma once

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tractnet {

/// Raised when operand shapes do not conform. The message names the
/// primitive and both shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major matrix of doubles. Column vectors are n x 1.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  static Matrix column(const std::vector<double>& v) {
    Matrix m(v.size(), 1);
    m.data = v;
    return m;
  }
  static Matrix row(const std::vector<double>& v) {
    Matrix m(1, v.size());
    m.data = v;
    return m;
  }
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rs) {
    Matrix m;
    m.rows = rs.size();
    m.cols = m.rows ? rs.begin()->size() : 0;
    for (const auto& r : rs) {
      if (r.size() != m.cols) throw ShapeError("from_rows: ragged initializer");
      m.data.insert(m.data.end(), r.begin(), r.end());
    }
    return m;
  }
  static Matrix scalar(double v) { return Matrix(1, 1, v); }

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  std::size_t size() const { return data.size(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  bool operator==(const Matrix& o) const = default;
};

inline std::string shape_str(std::size_t r, std::size_t c) {
  std::ostringstream os;
  os << r << "x" << c;
  return os.str();
}
inline std::string shape_str(const Matrix& m) { return shape_str(m.rows, m.cols); }

[[noreturn]] inline void throw_shape(const char* prim, const Matrix& a, const Matrix& b) {
  throw ShapeError(std::string(prim) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

/// out = a * b (+ bias broadcast over columns when bias is non-null).
/// Accumulation order is fixed (k ascending, starting from 0, bias last) so
/// that batched and single-column evaluations agree bit for bit.
inline Matrix matmul_kernel(const Matrix& a, const Matrix& b, const Matrix* bias = nullptr) {
  if (a.cols != b.rows) throw_shape("matmul", a, b);
  Matrix out(a.rows, b.cols, 0.0);
  for (std::size_t i = 0; i < a.rows; ++i) {
    double* orow = &out.data[i * out.cols];
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a.data[i * a.cols + k];
      const double* brow = &b.data[k * b.cols];
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
    if (bias) {
      const double bi = bias->data[i];
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += bi;
    }
  }
  return out;
}

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
  return t;
}

/// out += a * b^T
inline void add_matmul_bt(Matrix& out, const Matrix& a, const Matrix& b) {
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.rows; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) s += a(i, k) * b(j, k);
      out(i, j) += s;
    }
}

/// out += a^T * b
inline void add_matmul_at(Matrix& out, const Matrix& a, const Matrix& b) {
  for (std::size_t k = 0; k < a.rows; ++k)
    for (std::size_t i = 0; i < a.cols; ++i) {
      const double aki = a(k, i);
      if (aki == 0.0) continue;
      double* orow = &out.data[i * out.cols];
      const double* brow = &b.data[k * b.cols];
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aki * brow[j];
    }
}

inline void axpy(Matrix& y, double alpha, const Matrix& x) {
  for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += alpha * x.data[i];
}

inline double max_abs(const Matrix& m) {
  double v = 0.0;
  for (double x : m.data) v = std::max(v, x < 0 ? -x : x);
  return v;
}

}  // namespace tractnet
