#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace simt {

// Dense row-major matrix. All kernels below use explicit loops with a fixed
// accumulation order (ascending k), so results for a given row never depend
// on how many other rows the operand has. Several invariants in this project
// (prefix equality, masked-perturbation equality) are asserted bit-exactly
// and rely on that.
template <typename S>
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols) : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, S(0)) {
    assert(rows >= 0 && cols >= 0);
  }

  static Matrix zeros(int rows, int cols) { return Matrix(rows, cols); }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  S& operator()(int r, int c) {
    assert(r >= 0 && r < rows_ && c >= 0 && c < cols_);
    return data_[static_cast<size_t>(r) * cols_ + c];
  }
  S operator()(int r, int c) const {
    assert(r >= 0 && r < rows_ && c >= 0 && c < cols_);
    return data_[static_cast<size_t>(r) * cols_ + c];
  }

  S* row(int r) { return data_.data() + static_cast<size_t>(r) * cols_; }
  const S* row(int r) const { return data_.data() + static_cast<size_t>(r) * cols_; }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }

  void fill(S v) { data_.assign(data_.size(), v); }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<S> data_;
};

template <typename S>
inline S dot_span(const S* a, const S* b, int n) {
  S acc = S(0);
  for (int k = 0; k < n; ++k) acc += a[k] * b[k];
  return acc;
}

// C = A (m x k) * B (k x n)
template <typename S>
Matrix<S> matmul(const Matrix<S>& a, const Matrix<S>& b) {
  assert(a.cols() == b.rows());
  Matrix<S> c(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i) {
    const S* arow = a.row(i);
    S* crow = c.row(i);
    for (int k = 0; k < a.cols(); ++k) {
      const S av = arow[k];
      const S* brow = b.row(k);
      for (int j = 0; j < b.cols(); ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

// C = A (m x k) * B^T where B is (n x k)
template <typename S>
Matrix<S> matmul_transb(const Matrix<S>& a, const Matrix<S>& b) {
  assert(a.cols() == b.cols());
  Matrix<S> c(a.rows(), b.rows());
  for (int i = 0; i < a.rows(); ++i) {
    const S* arow = a.row(i);
    for (int j = 0; j < b.rows(); ++j) c(i, j) = dot_span(arow, b.row(j), a.cols());
  }
  return c;
}

// C = A^T (k x m -> m x k transposed) * B, with A (k x m), B (k x n)
template <typename S>
Matrix<S> matmul_transa(const Matrix<S>& a, const Matrix<S>& b) {
  assert(a.rows() == b.rows());
  Matrix<S> c(a.cols(), b.cols());
  for (int k = 0; k < a.rows(); ++k) {
    const S* arow = a.row(k);
    const S* brow = b.row(k);
    for (int i = 0; i < a.cols(); ++i) {
      const S av = arow[i];
      S* crow = c.row(i);
      for (int j = 0; j < b.cols(); ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

template <typename S>
void add_inplace(Matrix<S>& a, const Matrix<S>& b) {
  assert(a.same_shape(b));
  S* pa = a.data();
  const S* pb = b.data();
  for (size_t i = 0; i < a.size(); ++i) pa[i] += pb[i];
}

template <typename S>
void scale_inplace(Matrix<S>& a, S v) {
  S* pa = a.data();
  for (size_t i = 0; i < a.size(); ++i) pa[i] *= v;
}

}  // namespace simt
