#include "cigf/sparse.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <string>
#include <thread>

namespace cigf {

namespace {

std::atomic<int> g_max_threads{1};

constexpr std::size_t kParallelRowThreshold = 2048;

void check(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

void set_max_threads(int n) { g_max_threads.store(n < 1 ? 1 : n); }
int max_threads() { return g_max_threads.load(); }

SparseMatrix SparseMatrix::from_triplets(std::size_t rows, std::size_t cols,
                                         std::vector<Triplet> entries) {
  for (const Triplet& t : entries) {
    check(t.row < rows && t.col < cols, "from_triplets: index out of range");
  }
  std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });

  SparseMatrix m(rows, cols);
  m.col_indices_.reserve(entries.size());
  m.values_.reserve(entries.size());
  for (std::size_t i = 0; i < entries.size();) {
    const std::uint32_t r = entries[i].row;
    const std::uint32_t c = entries[i].col;
    double v = 0.0;
    while (i < entries.size() && entries[i].row == r && entries[i].col == c) {
      v += entries[i].value;
      ++i;
    }
    m.col_indices_.push_back(c);
    m.values_.push_back(v);
    m.row_offsets_[r + 1] += 1;
  }
  for (std::size_t r = 0; r < rows; ++r) m.row_offsets_[r + 1] += m.row_offsets_[r];
  AllocStats::note_sparse(m.nnz());
  return m;
}

SparseMatrix SparseMatrix::from_pairs(
    std::size_t rows, std::size_t cols,
    const std::vector<std::pair<std::uint32_t, std::uint32_t>>& pairs) {
  std::vector<Triplet> entries;
  entries.reserve(pairs.size());
  for (const auto& [r, c] : pairs) entries.push_back({r, c, 1.0});
  SparseMatrix m = from_triplets(rows, cols, std::move(entries));
  // duplicates summed above; clamp back to binary
  for (double& v : m.values_) v = 1.0;
  return m;
}

SparseMatrix SparseMatrix::identity(std::size_t n) {
  SparseMatrix m(n, n);
  m.col_indices_.resize(n);
  m.values_.assign(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    m.col_indices_[i] = static_cast<std::uint32_t>(i);
    m.row_offsets_[i + 1] = i + 1;
  }
  AllocStats::note_sparse(n);
  return m;
}

double SparseMatrix::at(std::size_t i, std::size_t j) const {
  const auto cols = row_cols(i);
  const auto it = std::lower_bound(cols.begin(), cols.end(),
                                   static_cast<std::uint32_t>(j));
  if (it == cols.end() || *it != j) return 0.0;
  return values_[row_offsets_[i] + static_cast<std::size_t>(it - cols.begin())];
}

SparseMatrix SparseMatrix::transpose() const {
  SparseMatrix t(cols_, rows_);
  t.col_indices_.resize(nnz());
  t.values_.resize(nnz());
  for (std::uint32_t c : col_indices_) t.row_offsets_[c + 1] += 1;
  for (std::size_t r = 0; r < cols_; ++r) t.row_offsets_[r + 1] += t.row_offsets_[r];
  std::vector<std::size_t> cursor(t.row_offsets_.begin(), t.row_offsets_.end() - 1);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t p = row_offsets_[r]; p < row_offsets_[r + 1]; ++p) {
      const std::uint32_t c = col_indices_[p];
      const std::size_t q = cursor[c]++;
      t.col_indices_[q] = static_cast<std::uint32_t>(r);
      t.values_[q] = values_[p];
    }
  }
  AllocStats::note_sparse(t.nnz());
  return t;
}

std::vector<double> SparseMatrix::row_sums() const {
  std::vector<double> sums(rows_, 0.0);
  for (std::size_t r = 0; r < rows_; ++r) {
    double s = 0.0;
    for (double v : row_vals(r)) s += v;
    sums[r] = s;
  }
  return sums;
}

bool SparseMatrix::pattern_symmetric() const {
  if (rows_ != cols_) return false;
  const SparseMatrix t = transpose();
  return t.row_offsets_ == row_offsets_ && t.col_indices_ == col_indices_;
}

void matvec_into(const SparseMatrix& m, const DenseMatrix& v, DenseMatrix& out) {
  check(m.cols() == v.rows(), "matvec: shape mismatch (" + std::to_string(m.cols()) +
                                  " vs " + std::to_string(v.rows()) + ")");
  if (out.rows() != m.rows() || out.cols() != v.cols())
    out = DenseMatrix(m.rows(), v.cols());

  const std::size_t d = v.cols();
  auto run_rows = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t r = lo; r < hi; ++r) {
      auto dst = out.row(r);
      std::fill(dst.begin(), dst.end(), 0.0);
      const auto cols = m.row_cols(r);
      const auto vals = m.row_vals(r);
      for (std::size_t p = 0; p < cols.size(); ++p) {
        const auto src = v.row(cols[p]);
        const double w = vals[p];
        for (std::size_t j = 0; j < d; ++j) dst[j] += w * src[j];
      }
    }
  };

  const int threads = max_threads();
  if (threads <= 1 || m.rows() < kParallelRowThreshold) {
    run_rows(0, m.rows());
    return;
  }
  // output rows are disjoint, so the split is race-free and deterministic
  std::vector<std::thread> pool;
  const std::size_t n = m.rows();
  const std::size_t chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const std::size_t lo = std::min(n, static_cast<std::size_t>(t) * chunk);
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo < hi) pool.emplace_back(run_rows, lo, hi);
  }
  for (auto& th : pool) th.join();
}

DenseMatrix matvec(const SparseMatrix& m, const DenseMatrix& v) {
  DenseMatrix out(m.rows(), v.cols());
  matvec_into(m, v, out);
  return out;
}

DenseMatrix chain_matvec(std::span<const SparseMatrix* const> chain,
                         const DenseMatrix& v) {
  check(!chain.empty(), "chain_matvec: empty chain");
  for (std::size_t i = 0; i + 1 < chain.size(); ++i) {
    check(chain[i]->cols() == chain[i + 1]->rows(),
          "chain_matvec: shape mismatch between chain links");
  }
  check(chain.back()->cols() == v.rows(), "chain_matvec: shape mismatch with vector");

  DenseMatrix acc = matvec(*chain.back(), v);
  for (std::size_t i = chain.size() - 1; i-- > 0;) {
    acc = matvec(*chain[i], acc);
  }
  return acc;
}

SparseMatrix normalize(const SparseMatrix& m, Normalization scheme) {
  if (scheme == Normalization::None) return m;

  SparseMatrix out = m;
  const std::vector<double> deg = m.row_sums();
  if (scheme == Normalization::RowStochastic) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
      if (deg[r] <= 0.0) continue;  // zero-degree rows stay zero rows
      for (double& v : out.row_vals_mut(r)) v /= deg[r];
    }
    return out;
  }

  // symmetric: value(i,j) = v / sqrt(deg(i) * deg(j))
  check(m.rows() == m.cols(), "normalize: symmetric scheme requires square matrix");
  check(m.pattern_symmetric(),
        "normalize: symmetric scheme requires symmetric sparsity pattern");
  std::vector<double> inv_sqrt(deg.size(), 0.0);
  for (std::size_t i = 0; i < deg.size(); ++i)
    inv_sqrt[i] = deg[i] > 0.0 ? 1.0 / std::sqrt(deg[i]) : 0.0;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto cols = out.row_cols(r);
    auto vals = out.row_vals_mut(r);
    for (std::size_t p = 0; p < cols.size(); ++p)
      vals[p] *= inv_sqrt[r] * inv_sqrt[cols[p]];
  }
  return out;
}

SparseMatrix row_scale(const SparseMatrix& m, std::span<const double> s) {
  check(s.size() == m.rows(), "row_scale: length mismatch");
  SparseMatrix out = m;
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (double& v : out.row_vals_mut(r)) v *= s[r];
  return out;
}

SparseMatrix col_scale(const SparseMatrix& m, std::span<const double> s) {
  check(s.size() == m.cols(), "col_scale: length mismatch");
  SparseMatrix out = m;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto cols = out.row_cols(r);
    auto vals = out.row_vals_mut(r);
    for (std::size_t p = 0; p < cols.size(); ++p) vals[p] *= s[cols[p]];
  }
  return out;
}

SparseMatrix sparse_add(const SparseMatrix& a, const SparseMatrix& b, double wa,
                        double wb) {
  check(a.rows() == b.rows() && a.cols() == b.cols(), "sparse_add: shape mismatch");
  std::vector<SparseMatrix::Triplet> entries;
  entries.reserve(a.nnz() + b.nnz());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto ac = a.row_cols(r);
    const auto av = a.row_vals(r);
    const auto bc = b.row_cols(r);
    const auto bv = b.row_vals(r);
    std::size_t i = 0, j = 0;
    while (i < ac.size() || j < bc.size()) {
      const std::uint32_t rr = static_cast<std::uint32_t>(r);
      if (j >= bc.size() || (i < ac.size() && ac[i] < bc[j])) {
        entries.push_back({rr, ac[i], wa * av[i]});
        ++i;
      } else if (i >= ac.size() || bc[j] < ac[i]) {
        entries.push_back({rr, bc[j], wb * bv[j]});
        ++j;
      } else {
        entries.push_back({rr, ac[i], wa * av[i] + wb * bv[j]});
        ++i;
        ++j;
      }
    }
  }
  return SparseMatrix::from_triplets(a.rows(), a.cols(), std::move(entries));
}

}  // namespace cigf
