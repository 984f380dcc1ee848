#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "mbgnn/common.hpp"

namespace mbgnn {

// Row-major dense matrix. resize() keeps capacity so scratch buffers grow
// once and are reused across minibatches.
template <typename Real>
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Real> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) { resize(r, c); }

  void resize(std::size_t r, std::size_t c) {
    rows = r;
    cols = c;
    data.resize(r * c);
  }
  void zero() { std::fill(data.begin(), data.end(), Real(0)); }
  void fill(Real v) { std::fill(data.begin(), data.end(), v); }

  Real* row(std::size_t r) { return data.data() + r * cols; }
  const Real* row(std::size_t r) const { return data.data() + r * cols; }
  Real& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  Real at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

// Accumulating kernels add into the first m rows of `out`, which may be
// taller than m (reused gradient buffers); non-accumulating calls shape and
// zero it.
template <typename Real>
void prepare_out(Matrix<Real>& out, std::size_t m, std::size_t n, bool accumulate,
                 const char* who) {
  if (!accumulate) {
    out.resize(m, n);
    out.zero();
  } else if (out.cols != n || out.rows < m) {
    throw DimensionError(std::string(who) + ": accumulate target shape mismatch");
  }
}

// out[0:m) = a[0:m) * b, with a (m x k) read as the first m rows of `a`.
// Plain ikj kernel; adequate at desk scale.
template <typename Real>
void matmul(const Matrix<Real>& a, std::size_t m, const Matrix<Real>& b, Matrix<Real>& out,
            bool accumulate = false) {
  if (a.cols != b.rows) throw DimensionError("matmul: inner dimensions differ");
  const std::size_t k = a.cols, n = b.cols;
  prepare_out(out, m, n, accumulate, "matmul");
  for (std::size_t i = 0; i < m; ++i) {
    const Real* arow = a.row(i);
    Real* orow = out.row(i);
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = arow[p];
      if (av == Real(0)) continue;
      const Real* brow = b.row(p);
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

// out = a[0:m)^T * b[0:m): (k x m)*(m x n) accumulation of row outer products.
template <typename Real>
void matmul_at_b(const Matrix<Real>& a, const Matrix<Real>& b, std::size_t m, Matrix<Real>& out,
                 bool accumulate = false) {
  const std::size_t k = a.cols, n = b.cols;
  prepare_out(out, k, n, accumulate, "matmul_at_b");
  for (std::size_t i = 0; i < m; ++i) {
    const Real* arow = a.row(i);
    const Real* brow = b.row(i);
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = arow[p];
      if (av == Real(0)) continue;
      Real* orow = out.row(p);
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

// out[0:m) = a[0:m) * b^T, b given as (n x k).
template <typename Real>
void matmul_a_bt(const Matrix<Real>& a, std::size_t m, const Matrix<Real>& b, Matrix<Real>& out,
                 bool accumulate = false) {
  if (a.cols != b.cols) throw DimensionError("matmul_a_bt: inner dimensions differ");
  const std::size_t k = a.cols, n = b.rows;
  prepare_out(out, m, n, accumulate, "matmul_a_bt");
  for (std::size_t i = 0; i < m; ++i) {
    const Real* arow = a.row(i);
    Real* orow = out.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      const Real* brow = b.row(j);
      Real acc = Real(0);
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      orow[j] += acc;
    }
  }
}

}  // namespace mbgnn
