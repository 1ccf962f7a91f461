#ifndef GRAPENER_MATRIX_HPP
#define GRAPENER_MATRIX_HPP

#include <cassert>
#include <cmath>
#include <cstddef>
#include <vector>

namespace grapener {

// Dense row-major double matrix. The model is desk-scale, so plain loops
// beat pulling in a linear algebra dependency.
struct Matrix {
  size_t rows = 0, cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(size_t r, size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

  double& operator()(size_t r, size_t c) {
    assert(r < rows && c < cols);
    return a[r * cols + c];
  }
  double operator()(size_t r, size_t c) const {
    assert(r < rows && c < cols);
    return a[r * cols + c];
  }

  size_t size() const { return a.size(); }
  void zero() { a.assign(a.size(), 0.0); }
  Matrix like_zero() const { return Matrix(rows, cols); }

  bool finite() const {
    for (double v : a)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

// out = x * w, shapes (n x k) (k x m) -> (n x m)
inline Matrix matmul(const Matrix& x, const Matrix& w) {
  assert(x.cols == w.rows);
  Matrix out(x.rows, w.cols);
  for (size_t i = 0; i < x.rows; ++i)
    for (size_t k = 0; k < x.cols; ++k) {
      double v = x(i, k);
      if (v == 0.0) continue;
      for (size_t j = 0; j < w.cols; ++j) out(i, j) += v * w(k, j);
    }
  return out;
}

// out += x^T * y
inline void add_at_b(Matrix& out, const Matrix& x, const Matrix& y) {
  assert(x.rows == y.rows && out.rows == x.cols && out.cols == y.cols);
  for (size_t k = 0; k < x.rows; ++k)
    for (size_t i = 0; i < x.cols; ++i) {
      double v = x(k, i);
      if (v == 0.0) continue;
      for (size_t j = 0; j < y.cols; ++j) out(i, j) += v * y(k, j);
    }
}

// out = x * w^T
inline Matrix matmul_bt(const Matrix& x, const Matrix& w) {
  assert(x.cols == w.cols);
  Matrix out(x.rows, w.rows);
  for (size_t i = 0; i < x.rows; ++i)
    for (size_t j = 0; j < w.rows; ++j) {
      double s = 0.0;
      for (size_t k = 0; k < x.cols; ++k) s += x(i, k) * w(j, k);
      out(i, j) = s;
    }
  return out;
}

inline void add_row_bias(Matrix& x, const Matrix& bias) {
  assert(bias.rows == 1 && bias.cols == x.cols);
  for (size_t i = 0; i < x.rows; ++i)
    for (size_t j = 0; j < x.cols; ++j) x(i, j) += bias(0, j);
}

// Per-row softmax, numerically stabilized.
inline Matrix row_softmax(const Matrix& x) {
  Matrix out(x.rows, x.cols);
  for (size_t i = 0; i < x.rows; ++i) {
    double mx = x(i, 0);
    for (size_t j = 1; j < x.cols; ++j) mx = std::max(mx, x(i, j));
    double sum = 0.0;
    for (size_t j = 0; j < x.cols; ++j) sum += (out(i, j) = std::exp(x(i, j) - mx));
    for (size_t j = 0; j < x.cols; ++j) out(i, j) /= sum;
  }
  return out;
}

// Backward of y = row_softmax(x): dx_i = y_i * (dy_i - <dy_i, y_i>).
inline Matrix row_softmax_backward(const Matrix& y, const Matrix& dy) {
  Matrix dx(y.rows, y.cols);
  for (size_t i = 0; i < y.rows; ++i) {
    double dot = 0.0;
    for (size_t j = 0; j < y.cols; ++j) dot += dy(i, j) * y(i, j);
    for (size_t j = 0; j < y.cols; ++j) dx(i, j) = y(i, j) * (dy(i, j) - dot);
  }
  return dx;
}

}  // namespace grapener

#endif
