#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cigf/dense.hpp"

namespace cigf {

enum class Normalization { None, RowStochastic, Symmetric };

// Compressed sparse row matrix. Immutable after construction except for
// in-place value rewrites (row_vals_mut), which keep the pattern fixed.
// Column indices are strictly increasing within each row.
class SparseMatrix {
 public:
  struct Triplet {
    std::uint32_t row;
    std::uint32_t col;
    double value;
  };

  SparseMatrix() = default;
  SparseMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), row_offsets_(rows + 1, 0) {}

  // Builds from unordered triplets; duplicates are summed.
  static SparseMatrix from_triplets(std::size_t rows, std::size_t cols,
                                    std::vector<Triplet> entries);

  // Binary matrix from (row, col) pairs; duplicates collapse to a single 1.
  static SparseMatrix from_pairs(
      std::size_t rows, std::size_t cols,
      const std::vector<std::pair<std::uint32_t, std::uint32_t>>& pairs);

  static SparseMatrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t nnz() const { return values_.size(); }

  std::span<const std::uint32_t> row_cols(std::size_t i) const {
    return {col_indices_.data() + row_offsets_[i],
            row_offsets_[i + 1] - row_offsets_[i]};
  }
  std::span<const double> row_vals(std::size_t i) const {
    return {values_.data() + row_offsets_[i],
            row_offsets_[i + 1] - row_offsets_[i]};
  }
  std::span<double> row_vals_mut(std::size_t i) {
    return {values_.data() + row_offsets_[i],
            row_offsets_[i + 1] - row_offsets_[i]};
  }

  const std::vector<std::size_t>& row_offsets() const { return row_offsets_; }
  const std::vector<std::uint32_t>& col_indices() const { return col_indices_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values_mut() { return values_; }

  // Value at (i, j), 0.0 when the entry is not stored.
  double at(std::size_t i, std::size_t j) const;

  SparseMatrix transpose() const;

  // Sum of stored values per row.
  std::vector<double> row_sums() const;

  bool pattern_symmetric() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_offsets_;
  std::vector<std::uint32_t> col_indices_;
  std::vector<double> values_;
};

// y = m * v  (v dense, n_cols x d). Rows with no stored entries map to
// zero rows. Parallelized across output rows when a thread budget is set.
DenseMatrix matvec(const SparseMatrix& m, const DenseMatrix& v);
void matvec_into(const SparseMatrix& m, const DenseMatrix& v, DenseMatrix& out);

// Applies the whole chain to v right-to-left as nested matvecs. Never
// materializes the product matrix itself.
DenseMatrix chain_matvec(std::span<const SparseMatrix* const> chain,
                         const DenseMatrix& v);

SparseMatrix normalize(const SparseMatrix& m, Normalization scheme);

// value(i, j) <- s[i] * value(i, j); pattern unchanged.
SparseMatrix row_scale(const SparseMatrix& m, std::span<const double> s);

// value(i, j) <- s[j] * value(i, j); pattern unchanged.
SparseMatrix col_scale(const SparseMatrix& m, std::span<const double> s);

// Weighted elementwise sum over the union pattern.
SparseMatrix sparse_add(const SparseMatrix& a, const SparseMatrix& b, double wa,
                        double wb);

// Global thread budget for row-parallel kernels (1 = serial). Small
// matrices always run serial regardless of the budget.
void set_max_threads(int n);
int max_threads();

}  // namespace cigf
