#include "oracle.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace cigf::oracle {

namespace {

double lrelu(double x, double slope) { return x >= 0.0 ? x : slope * x; }

Dense zeros(std::size_t rows, std::size_t cols) {
  return Dense(rows, std::vector<double>(cols, 0.0));
}

// dense behavior adjacency [[0, Y], [Y^T, 0]]
Dense dense_adjacency(const MultiplexGraph& g, std::size_t k) {
  const std::size_t M = g.n_users, N = g.n_items;
  Dense a = zeros(M + N, M + N);
  const SparseMatrix& y = g.interactions[k];
  for (std::size_t u = 0; u < M; ++u)
    for (std::uint32_t i : y.row_cols(u)) {
      a[u][M + i] = 1.0;
      a[M + i][u] = 1.0;
    }
  return a;
}

}  // namespace

Dense to_dense(const SparseMatrix& m) {
  Dense a = zeros(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto cols = m.row_cols(r);
    const auto vals = m.row_vals(r);
    for (std::size_t p = 0; p < cols.size(); ++p) a[r][cols[p]] = vals[p];
  }
  return a;
}

Dense dense_matmul(const Dense& a, const Dense& b) {
  if (a.empty() || b.empty() || a[0].size() != b.size())
    throw std::invalid_argument("dense_matmul: shape mismatch");
  Dense c = zeros(a.size(), b[0].size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k) {
      const double v = a[i][k];
      if (v == 0.0) continue;
      for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += v * b[k][j];
    }
  return c;
}

Dense dense_from(const DenseMatrix& m) {
  Dense a = zeros(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) a[i][j] = m(i, j);
  return a;
}

double max_abs_diff(const Dense& a, const DenseMatrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j)
      m = std::max(m, std::abs(a[i][j] - b(i, j)));
  return m;
}

Dense dense_normalize(const Dense& a, Normalization scheme) {
  if (scheme == Normalization::None) return a;
  const std::size_t n = a.size();
  std::vector<double> deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (double v : a[i]) deg[i] += v;

  Dense out = a;
  if (scheme == Normalization::RowStochastic) {
    for (std::size_t i = 0; i < n; ++i) {
      if (deg[i] <= 0.0) continue;
      for (double& v : out[i]) v /= deg[i];
    }
    return out;
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) {
      if (out[i][j] == 0.0) continue;
      out[i][j] /= std::sqrt(deg[i]) * std::sqrt(deg[j]);
    }
  return out;
}

Representations dense_propagate(const MultiplexGraph& g, const DenseMatrix& user_emb,
                                const DenseMatrix& item_emb,
                                const AttentionParams& attn,
                                const AggregatorTransforms& transforms,
                                const CigcnConfig& cfg) {
  const std::size_t M = g.n_users, N = g.n_items, K = g.n_behaviors();
  const std::size_t n = M + N;
  const std::size_t d = user_emb.cols();

  Dense emb = zeros(n, d);
  for (std::size_t u = 0; u < M; ++u)
    for (std::size_t c = 0; c < d; ++c) emb[u][c] = user_emb(u, c);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t c = 0; c < d; ++c) emb[M + i][c] = item_emb(i, c);

  std::vector<Dense> adj;
  for (std::size_t k = 0; k < K; ++k)
    adj.push_back(dense_normalize(dense_adjacency(g, k), cfg.normalization));

  // alpha(v, j) for one (start, order, head), scalar by scalar
  auto attention_alpha = [&](std::size_t start, int order, int head) {
    const AttentionParams::Slot& slot =
        attn.slot(static_cast<int>(start), order, head);
    Dense alpha = zeros(n, K);
    for (std::size_t v = 0; v < n; ++v)
      for (std::size_t j = 0; j < K; ++j) {
        double z = slot.bias[j];
        if (!slot.weight.empty())
          for (std::size_t c = 0; c < d; ++c) z += slot.weight(j, c) * emb[v][c];
        alpha[v][j] = lrelu(z, cfg.leaky_slope);
      }
    return alpha;
  };

  auto apply_transform = [&](const Dense& x, const DenseMatrix& w) {
    Dense out = zeros(x.size(), w.cols());
    for (std::size_t i = 0; i < x.size(); ++i)
      for (std::size_t a = 0; a < w.rows(); ++a)
        for (std::size_t b = 0; b < w.cols(); ++b) out[i][b] += x[i][a] * w(a, b);
    return out;
  };

  Representations reps;
  for (std::size_t start = 0; start < K; ++start) {
    std::vector<Dense> chains{adj[start]};  // materialized order-l products
    Dense x_prev = emb;
    Dense xstar = emb;

    for (int order = 1; order <= cfg.layers; ++order) {
      if (order >= 2) {
        std::vector<Dense> mixed;
        if (cfg.bypass_compression) {
          mixed.push_back(adj[start]);
        } else {
          for (int h = 0; h < cfg.heads; ++h) {
            const Dense alpha = attention_alpha(start, order, h);
            Dense m = zeros(n, n);
            for (std::size_t j = 0; j < K; ++j)
              for (std::size_t a = 0; a < n; ++a)
                for (std::size_t b = 0; b < n; ++b)
                  m[a][b] += (cfg.column_attention ? alpha[b][j] : alpha[a][j]) *
                             adj[j][a][b];
            mixed.push_back(std::move(m));
          }
        }
        std::vector<Dense> next;
        for (const Dense& c : chains)
          for (const Dense& m : mixed) next.push_back(dense_matmul(c, m));
        chains = std::move(next);
      }

      Dense message = zeros(n, d);
      for (const Dense& c : chains) {
        const Dense neighbor = dense_matmul(c, emb);
        Dense t;
        switch (cfg.aggregator) {
          case Aggregator::LightGCN:
            t = neighbor;
            break;
          case Aggregator::LRGCCF:
            t = apply_transform(neighbor, transforms.w1[order - 1]);
            break;
          case Aggregator::GCN: {
            t = apply_transform(neighbor, transforms.w1[order - 1]);
            for (auto& row : t)
              for (double& v : row) v = lrelu(v, cfg.leaky_slope);
            break;
          }
          case Aggregator::NGCF: {
            Dense self = neighbor;
            for (std::size_t v = 0; v < n; ++v)
              for (std::size_t c = 0; c < d; ++c) self[v][c] *= emb[v][c];
            t = apply_transform(neighbor, transforms.w1[order - 1]);
            const Dense t2 = apply_transform(self, transforms.w2[order - 1]);
            for (std::size_t v = 0; v < n; ++v)
              for (std::size_t c = 0; c < d; ++c)
                t[v][c] = lrelu(t[v][c] + t2[v][c], cfg.leaky_slope);
            break;
          }
        }
        for (std::size_t v = 0; v < n; ++v)
          for (std::size_t c = 0; c < d; ++c) message[v][c] += t[v][c];
      }

      for (std::size_t v = 0; v < n; ++v)
        for (std::size_t c = 0; c < d; ++c) {
          x_prev[v][c] = message[v][c] + x_prev[v][c];
          xstar[v][c] += x_prev[v][c];
        }
    }

    DenseMatrix user(M, d), item(N, d);
    for (std::size_t u = 0; u < M; ++u)
      for (std::size_t c = 0; c < d; ++c) user(u, c) = xstar[u][c];
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t c = 0; c < d; ++c) item(i, c) = xstar[M + i][c];
    reps.user.push_back(std::move(user));
    reps.item.push_back(std::move(item));
  }
  return reps;
}

FdReport fd_check(ModelParams& params, const std::function<double()>& loss,
                  const ModelParams& analytic, double step, double denom_floor) {
  std::vector<const std::vector<double>*> grads;
  analytic.for_each_tensor([&](const std::string&, const std::vector<double>& v) {
    grads.push_back(&v);
  });

  // resolution limit of the central difference at this loss magnitude:
  // cancellation noise in (up - down) is a small multiple of eps * |loss|
  const double loss_scale = std::max(1.0, std::abs(loss()));
  const double noise_floor =
      64.0 * std::numeric_limits<double>::epsilon() * loss_scale / (2.0 * step);

  FdReport report;
  std::size_t ix = 0;
  params.for_each_tensor([&](const std::string& name, std::vector<double>& v) {
    const std::vector<double>& g = *grads[ix++];
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double keep = v[i];
      v[i] = keep + step;
      const double up = loss();
      v[i] = keep - step;
      const double down = loss();
      v[i] = keep;
      const double fd = (up - down) / (2.0 * step);
      const double a = g[i];
      const double abs_err = std::abs(a - fd);
      // central differences cannot resolve discrepancies below their own
      // cancellation noise; such entries agree to the oracle's precision
      if (abs_err <= noise_floor || (std::abs(a) < 1e-9 && std::abs(fd) < 1e-9)) {
        report.max_abs_err = std::max(report.max_abs_err, abs_err);
        continue;
      }
      const double rel = abs_err / std::max({std::abs(a), std::abs(fd), denom_floor});
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_tensor = name + "[" + std::to_string(i) + "]";
        report.worst_analytic = a;
        report.worst_fd = fd;
      }
      report.max_abs_err = std::max(report.max_abs_err, abs_err);
    }
  });
  return report;
}

}  // namespace cigf::oracle
