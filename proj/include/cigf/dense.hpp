#pragma once

#include <atomic>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace cigf {

// Peak-allocation counters used by tests to assert that no dense
// (M+N)x(M+N) matrix is ever materialized during propagation.
struct AllocStats {
  static inline std::atomic<std::size_t> peak_dense_elems{0};
  static inline std::atomic<std::size_t> peak_sparse_nnz{0};

  static void note_dense(std::size_t elems) { bump(peak_dense_elems, elems); }
  static void note_sparse(std::size_t nnz) { bump(peak_sparse_nnz, nnz); }
  static void reset() {
    peak_dense_elems.store(0);
    peak_sparse_nnz.store(0);
  }

 private:
  static void bump(std::atomic<std::size_t>& a, std::size_t v) {
    std::size_t cur = a.load(std::memory_order_relaxed);
    while (cur < v && !a.compare_exchange_weak(cur, v)) {
    }
  }
};

// Row-major dense matrix of doubles. Embedding tables and propagated
// node representations are the only dense data in the pipeline, so this
// stays deliberately small: no expression templates, no views.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {
    AllocStats::note_dense(data_.size());
  }

  static DenseMatrix zeros(std::size_t rows, std::size_t cols) {
    return DenseMatrix(rows, cols);
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  void add(const DenseMatrix& o) { add_scaled(o, 1.0); }

  void add_scaled(const DenseMatrix& o, double w) {
    check_same_shape(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += w * o.data_[i];
  }

  void scale(double w) {
    for (double& v : data_) v *= w;
  }

  DenseMatrix hadamard(const DenseMatrix& o) const {
    check_same_shape(o);
    DenseMatrix out(rows_, cols_);
    for (std::size_t i = 0; i < data_.size(); ++i) out.data_[i] = data_[i] * o.data_[i];
    return out;
  }

  double max_abs_diff(const DenseMatrix& o) const {
    check_same_shape(o);
    double m = 0.0;
    for (std::size_t i = 0; i < data_.size(); ++i) {
      const double d = std::abs(data_[i] - o.data_[i]);
      if (d > m) m = d;
    }
    return m;
  }

 private:
  void check_same_shape(const DenseMatrix& o) const {
    if (rows_ != o.rows_ || cols_ != o.cols_)
      throw std::invalid_argument("DenseMatrix: shape mismatch");
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// out = a * b, useful only for small right-hand factors (d x d transforms).
inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: shape mismatch");
  DenseMatrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double av = a(i, k);
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += av * b(k, j);
    }
  }
  return out;
}

// out += a^T * b where a and b share their row count. Accumulates d x d
// (or K x d) gradients from node-wise signals.
inline void add_transpose_matmul(DenseMatrix& out, const DenseMatrix& a,
                                 const DenseMatrix& b) {
  if (a.rows() != b.rows() || out.rows() != a.cols() || out.cols() != b.cols())
    throw std::invalid_argument("add_transpose_matmul: shape mismatch");
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double av = a(r, i);
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += av * b(r, j);
    }
  }
}

// per-row dot products: out[i] = a.row(i) . b.row(i)
inline std::vector<double> row_dots(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("row_dots: shape mismatch");
  std::vector<double> out(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j) * b(i, j);
    out[i] = s;
  }
  return out;
}

}  // namespace cigf
