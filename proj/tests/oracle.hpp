#pragma once

// Test-only reference implementations. Everything here goes through plain
// dense linear algebra and scalar loops, independent of the sparse chain
// evaluation path it is used to check.

#include <functional>
#include <string>
#include <vector>

#include "cigf/cigcn.hpp"
#include "cigf/mbgraph.hpp"
#include "cigf/train.hpp"

namespace cigf::oracle {

using Dense = std::vector<std::vector<double>>;

Dense to_dense(const SparseMatrix& m);
Dense dense_matmul(const Dense& a, const Dense& b);
Dense dense_from(const DenseMatrix& m);
double max_abs_diff(const Dense& a, const DenseMatrix& b);

// Reference normalization (row sums / symmetric degree scaling).
Dense dense_normalize(const Dense& a, Normalization scheme);

// Literal dense re-implementation of the full propagation: materializes
// every order-l chain product as a dense matrix, mixes behaviors row by
// row, and applies aggregator, residual and layer-sum directly.
Representations dense_propagate(const MultiplexGraph& g, const DenseMatrix& user_emb,
                                const DenseMatrix& item_emb,
                                const AttentionParams& attn,
                                const AggregatorTransforms& transforms,
                                const CigcnConfig& cfg);

struct FdReport {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::string worst_tensor;
  double worst_analytic = 0.0;
  double worst_fd = 0.0;
};

// Central finite differences over every tensor entry of params; relative
// error uses max(|analytic|, |fd|, denom_floor) as denominator.
FdReport fd_check(ModelParams& params, const std::function<double()>& loss,
                  const ModelParams& analytic, double step = 1e-5,
                  double denom_floor = 1e-8);

}  // namespace cigf::oracle
