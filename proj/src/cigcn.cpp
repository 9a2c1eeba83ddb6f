#include "cigf/cigcn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace cigf {

namespace {

void check(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

double lrelu(double x, double slope) { return x >= 0.0 ? x : slope * x; }

std::vector<double> column(const DenseMatrix& m, std::size_t j) {
  std::vector<double> out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) out[i] = m(i, j);
  return out;
}

void track_min_abs(double& acc, const DenseMatrix& m) {
  for (double v : m.data()) acc = std::min(acc, std::abs(v));
}

// Attention-mixed matrices for one (start behavior, order): one per head,
// plus the alpha / pre-activation matrices the backward pass needs.
struct MixedSet {
  std::vector<std::shared_ptr<const SparseMatrix>> mats;
  std::vector<DenseMatrix> alpha;
  std::vector<DenseMatrix> preact;
};

MixedSet build_mixed(int order, int start_behavior, const DenseMatrix& embeddings,
                     const GraphMatrices& gm, const AttentionParams& params,
                     const CigcnConfig& cfg) {
  MixedSet out;
  const std::size_t n_behaviors = gm.adj.size();
  for (int h = 0; h < cfg.heads; ++h) {
    DenseMatrix z;
    DenseMatrix alpha = attention_matrix(embeddings, order, start_behavior, h, params,
                                         cfg.leaky_slope, &z);
    SparseMatrix mixed;
    for (std::size_t j = 0; j < n_behaviors; ++j) {
      const std::vector<double> w = column(alpha, j);
      SparseMatrix term = cfg.column_attention ? col_scale(*gm.adj[j], w)
                                               : row_scale(*gm.adj[j], w);
      mixed = j == 0 ? std::move(term) : sparse_add(mixed, term, 1.0, 1.0);
    }
    out.mats.push_back(std::make_shared<SparseMatrix>(std::move(mixed)));
    out.alpha.push_back(std::move(alpha));
    out.preact.push_back(std::move(z));
  }
  return out;
}

}  // namespace

void CigcnConfig::validate() const {
  check(layers >= 0 && layers <= 5, "CigcnConfig: layers must lie in [0, 5]");
  check(heads >= 1, "CigcnConfig: heads must be >= 1");
  check(leaky_slope > 0.0 && leaky_slope < 1.0,
        "CigcnConfig: leaky_slope must lie in (0, 1)");
}

AttentionParams AttentionParams::create(AttentionVariant variant, int n_behaviors,
                                        int layers, int heads, int dim) {
  AttentionParams p;
  p.variant = variant;
  p.n_behaviors = n_behaviors;
  p.layers = layers;
  p.heads = heads;
  p.dim = dim;

  const int n_orders = std::max(0, layers - 1);  // orders 2..L
  std::size_t n_slots = 0;
  switch (variant) {
    case AttentionVariant::Node:
      n_slots = static_cast<std::size_t>(heads);
      break;
    case AttentionVariant::NodeLayer:
      n_slots = static_cast<std::size_t>(n_orders) * heads;
      break;
    case AttentionVariant::NodeBehavior:
      n_slots = static_cast<std::size_t>(n_behaviors) * heads;
      break;
    case AttentionVariant::Global:
    case AttentionVariant::NodeBehaviorLayer:
      n_slots = static_cast<std::size_t>(n_behaviors) * n_orders * heads;
      break;
  }
  for (std::size_t s = 0; s < n_slots; ++s) {
    Slot slot;
    if (variant != AttentionVariant::Global)
      slot.weight = DenseMatrix(static_cast<std::size_t>(n_behaviors),
                                static_cast<std::size_t>(dim));
    slot.bias.assign(static_cast<std::size_t>(n_behaviors), 0.0);
    p.slots.push_back(std::move(slot));
  }
  return p;
}

std::size_t AttentionParams::slot_index(int start_behavior, int order, int head) const {
  check(order >= 2 && order <= layers, "AttentionParams: order out of range");
  check(start_behavior >= 0 && start_behavior < n_behaviors,
        "AttentionParams: behavior out of range");
  check(head >= 0 && head < heads, "AttentionParams: head out of range");
  const std::size_t l = static_cast<std::size_t>(order - 2);
  const std::size_t k = static_cast<std::size_t>(start_behavior);
  const std::size_t h = static_cast<std::size_t>(head);
  const std::size_t n_orders = static_cast<std::size_t>(layers - 1);
  const std::size_t H = static_cast<std::size_t>(heads);
  switch (variant) {
    case AttentionVariant::Node:
      return h;
    case AttentionVariant::NodeLayer:
      return l * H + h;
    case AttentionVariant::NodeBehavior:
      return k * H + h;
    case AttentionVariant::Global:
    case AttentionVariant::NodeBehaviorLayer:
      return (k * n_orders + l) * H + h;
  }
  return 0;
}

AggregatorTransforms AggregatorTransforms::create(Aggregator kind, int layers, int dim) {
  AggregatorTransforms t;
  t.kind = kind;
  if (kind == Aggregator::LightGCN) return t;
  for (int l = 0; l < layers; ++l) {
    t.w1.emplace_back(static_cast<std::size_t>(dim), static_cast<std::size_t>(dim));
    if (kind == Aggregator::NGCF)
      t.w2.emplace_back(static_cast<std::size_t>(dim), static_cast<std::size_t>(dim));
  }
  return t;
}

DenseMatrix attention_matrix(const DenseMatrix& embeddings, int order,
                             int start_behavior, int head,
                             const AttentionParams& params, double leaky_slope,
                             DenseMatrix* preact_out) {
  const AttentionParams::Slot& slot = params.slot(start_behavior, order, head);
  const std::size_t n = embeddings.rows();
  const std::size_t K = slot.bias.size();
  DenseMatrix z(n, K);
  for (std::size_t v = 0; v < n; ++v) {
    const auto x = embeddings.row(v);
    for (std::size_t j = 0; j < K; ++j) {
      double s = slot.bias[j];
      if (!slot.weight.empty()) {
        check(slot.weight.cols() == x.size(), "attention: embedding dim mismatch");
        for (std::size_t c = 0; c < x.size(); ++c) s += slot.weight(j, c) * x[c];
      }
      z(v, j) = s;
    }
  }
  DenseMatrix alpha(n, K);
  for (std::size_t i = 0; i < z.data().size(); ++i)
    alpha.data()[i] = lrelu(z.data()[i], leaky_slope);
  if (preact_out) *preact_out = std::move(z);
  return alpha;
}

std::vector<double> attention_weights(std::span<const double> node_embedding,
                                      int order, int start_behavior, int head,
                                      const AttentionParams& params,
                                      double leaky_slope) {
  DenseMatrix e(1, node_embedding.size());
  std::copy(node_embedding.begin(), node_embedding.end(), e.row(0).begin());
  const DenseMatrix a =
      attention_matrix(e, order, start_behavior, head, params, leaky_slope);
  return {a.row(0).begin(), a.row(0).end()};
}

InteractionSetSize interaction_set_size(int n_behaviors, int n_heads, int order) {
  check(order >= 1, "interaction_set_size: order must be >= 1");
  check(n_behaviors >= 1 && n_heads >= 1, "interaction_set_size: counts must be >= 1");
  auto pow_u64 = [](std::uint64_t base, int exp) {
    std::uint64_t r = 1;
    for (int i = 0; i < exp; ++i) {
      check(r <= std::numeric_limits<std::uint64_t>::max() / base,
            "interaction_set_size: overflow");
      r *= base;
    }
    return r;
  };
  return {pow_u64(static_cast<std::uint64_t>(n_behaviors), order - 1),
          pow_u64(static_cast<std::uint64_t>(n_heads), order - 1)};
}

GraphMatrices GraphMatrices::build(const MultiplexGraph& g, Normalization scheme) {
  GraphMatrices gm;
  gm.n_users = g.n_users;
  gm.n_items = g.n_items;
  for (std::size_t k = 0; k < g.n_behaviors(); ++k) {
    SparseMatrix a = normalize(build_adjacency(g, k), scheme);
    gm.adj_t.push_back(std::make_shared<SparseMatrix>(a.transpose()));
    gm.adj.push_back(std::make_shared<SparseMatrix>(std::move(a)));
  }
  return gm;
}

std::vector<MatrixChain> compressed_step(const std::vector<MatrixChain>& prev_chains,
                                         int order, int start_behavior,
                                         const DenseMatrix& embeddings,
                                         const GraphMatrices& gm,
                                         const AttentionParams& params,
                                         const CigcnConfig& cfg) {
  check(order >= 2, "compressed_step: order must be >= 2");
  check(!prev_chains.empty(), "compressed_step: previous chain set is empty");

  std::vector<MatrixChain> next;
  if (cfg.bypass_compression) {
    for (const MatrixChain& c : prev_chains) {
      MatrixChain ext = c;
      ext.mats.push_back(gm.adj[static_cast<std::size_t>(start_behavior)]);
      ext.heads.push_back(0);
      next.push_back(std::move(ext));
    }
    return next;
  }

  const MixedSet mixed = build_mixed(order, start_behavior, embeddings, gm, params, cfg);
  for (const MatrixChain& c : prev_chains) {
    for (int h = 0; h < cfg.heads; ++h) {
      MatrixChain ext = c;
      ext.mats.push_back(mixed.mats[static_cast<std::size_t>(h)]);
      ext.heads.push_back(h);
      next.push_back(std::move(ext));
    }
  }
  return next;
}

ForwardCache propagate_cached(const GraphMatrices& gm, const DenseMatrix& embeddings,
                              const AttentionParams& params,
                              const AggregatorTransforms& transforms,
                              const CigcnConfig& cfg) {
  cfg.validate();
  const std::size_t n = gm.n_nodes();
  check(embeddings.rows() == n, "propagate: embedding row count != M+N");
  const std::size_t K = gm.adj.size();
  const std::size_t d = embeddings.cols();

  ForwardCache cache;
  cache.min_abs_preact = std::numeric_limits<double>::infinity();
  cache.starts.resize(K);

  for (std::size_t k = 0; k < K; ++k) {
    StartBehaviorCache& sc = cache.starts[k];
    DenseMatrix x_prev = embeddings;  // x^0
    DenseMatrix xstar = embeddings;   // running sum over layers

    std::vector<MatrixChain> chains;
    chains.push_back({{gm.adj[k]}, {}});

    for (int order = 1; order <= cfg.layers; ++order) {
      LayerCache lc;
      if (order >= 2) {
        if (!cfg.bypass_compression) {
          MixedSet mixed =
              build_mixed(order, static_cast<int>(k), embeddings, gm, params, cfg);
          for (const DenseMatrix& z : mixed.preact) track_min_abs(cache.min_abs_preact, z);
          std::vector<MatrixChain> next;
          for (const MatrixChain& c : chains) {
            for (int h = 0; h < cfg.heads; ++h) {
              MatrixChain ext = c;
              ext.mats.push_back(mixed.mats[static_cast<std::size_t>(h)]);
              ext.heads.push_back(h);
              next.push_back(std::move(ext));
            }
          }
          chains = std::move(next);
          lc.alpha = std::move(mixed.alpha);
          lc.preact_z = std::move(mixed.preact);
        } else {
          chains = compressed_step(chains, order, static_cast<int>(k), embeddings, gm,
                                   params, cfg);
        }
      }
      lc.chains = chains;

      DenseMatrix message(n, d);
      for (const MatrixChain& chain : chains) {
        ChainEval ev;
        ev.heads = chain.heads;
        const std::size_t len = chain.mats.size();
        ev.suffix.resize(len);
        ev.suffix[len - 1] = matvec(*chain.mats[len - 1], embeddings);
        for (std::size_t p = len - 1; p-- > 0;)
          ev.suffix[p] = matvec(*chain.mats[p], ev.suffix[p + 1]);
        const DenseMatrix& neighbor = ev.suffix[0];

        switch (transforms.kind) {
          case Aggregator::LightGCN:
            message.add(neighbor);
            break;
          case Aggregator::LRGCCF:
            message.add(matmul(neighbor, transforms.w1[order - 1]));
            break;
          case Aggregator::GCN: {
            DenseMatrix s = matmul(neighbor, transforms.w1[order - 1]);
            track_min_abs(cache.min_abs_preact, s);
            DenseMatrix t(n, d);
            for (std::size_t i = 0; i < s.data().size(); ++i)
              t.data()[i] = lrelu(s.data()[i], cfg.leaky_slope);
            ev.preact = std::move(s);
            message.add(t);
            break;
          }
          case Aggregator::NGCF: {
            DenseMatrix s = matmul(neighbor, transforms.w1[order - 1]);
            s.add(matmul(neighbor.hadamard(embeddings), transforms.w2[order - 1]));
            track_min_abs(cache.min_abs_preact, s);
            DenseMatrix t(n, d);
            for (std::size_t i = 0; i < s.data().size(); ++i)
              t.data()[i] = lrelu(s.data()[i], cfg.leaky_slope);
            ev.preact = std::move(s);
            message.add(t);
            break;
          }
        }
        lc.evals.push_back(std::move(ev));
      }
      lc.message = message;

      DenseMatrix x_cur = message;  // residual update
      x_cur.add(x_prev);
      xstar.add(x_cur);  // layer aggregation
      x_prev = std::move(x_cur);
      sc.layers.push_back(std::move(lc));
    }
    sc.xstar = std::move(xstar);
  }
  return cache;
}

Representations split_representations(const ForwardCache& cache, std::size_t n_users,
                                      std::size_t n_items) {
  Representations reps;
  for (const StartBehaviorCache& sc : cache.starts) {
    const std::size_t d = sc.xstar.cols();
    DenseMatrix user(n_users, d), item(n_items, d);
    for (std::size_t u = 0; u < n_users; ++u)
      std::copy(sc.xstar.row(u).begin(), sc.xstar.row(u).end(), user.row(u).begin());
    for (std::size_t i = 0; i < n_items; ++i)
      std::copy(sc.xstar.row(n_users + i).begin(), sc.xstar.row(n_users + i).end(),
                item.row(i).begin());
    reps.user.push_back(std::move(user));
    reps.item.push_back(std::move(item));
  }
  return reps;
}

Representations propagate(const GraphMatrices& gm, const DenseMatrix& embeddings,
                          const AttentionParams& params,
                          const AggregatorTransforms& transforms,
                          const CigcnConfig& cfg) {
  const ForwardCache cache = propagate_cached(gm, embeddings, params, transforms, cfg);
  return split_representations(cache, gm.n_users, gm.n_items);
}

std::string behavior_letters(std::size_t n_behaviors) {
  if (n_behaviors == 3) return "VCP";
  if (n_behaviors == 4) return "VFCP";
  check(n_behaviors <= 26, "behavior_letters: too many behaviors");
  std::string s;
  for (std::size_t k = 0; k < n_behaviors; ++k)
    s.push_back(static_cast<char>('A' + k));
  return s;
}

std::vector<std::string> enumerate_relations(std::size_t n_behaviors,
                                             int start_behavior, int order) {
  check(order >= 1, "enumerate_relations: order must be >= 1");
  const std::string letters = behavior_letters(n_behaviors);
  std::vector<std::string> out{std::string(1, letters[start_behavior])};
  for (int step = 2; step <= order; ++step) {
    std::vector<std::string> next;
    for (const std::string& prefix : out)
      for (std::size_t j = 0; j < n_behaviors; ++j) next.push_back(prefix + letters[j]);
    out = std::move(next);
  }
  return out;
}

std::vector<RelationScore> attention_report(const GraphMatrices& gm,
                                            const DenseMatrix& embeddings,
                                            const AttentionParams& params,
                                            const CigcnConfig& cfg) {
  cfg.validate();
  const std::size_t K = gm.adj.size();
  const std::size_t M = gm.n_users;
  const std::string letters = behavior_letters(K);

  // avg_mass[k][order-2][j]: mean attention weight on behavior j over all
  // user nodes (and heads) for chains starting at k, at this order.
  std::vector<std::vector<std::vector<double>>> avg_mass(K);
  for (std::size_t k = 0; k < K; ++k) {
    for (int order = 2; order <= cfg.layers; ++order) {
      std::vector<double> mean(K, 0.0);
      for (int h = 0; h < cfg.heads; ++h) {
        const DenseMatrix alpha = attention_matrix(
            embeddings, order, static_cast<int>(k), h, params, cfg.leaky_slope);
        for (std::size_t u = 0; u < M; ++u)
          for (std::size_t j = 0; j < K; ++j) mean[j] += alpha(u, j);
      }
      for (double& v : mean) v /= static_cast<double>(M) * cfg.heads;
      avg_mass[k].push_back(std::move(mean));
    }
  }

  std::vector<RelationScore> report;
  for (int order = 1; order <= cfg.layers; ++order) {
    struct Scored {
      std::string relation;
      double score;
    };
    std::vector<Scored> all;
    for (std::size_t k = 0; k < K; ++k) {
      for (const std::string& rel : enumerate_relations(K, static_cast<int>(k), order)) {
        double score = 1.0;
        for (int step = 2; step <= order; ++step) {
          const std::size_t j = letters.find(rel[static_cast<std::size_t>(step - 1)]);
          score *= avg_mass[k][static_cast<std::size_t>(step - 2)][j];
        }
        all.push_back({rel, score});
      }
    }
    std::sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.relation < b.relation;
    });
    const std::size_t n = all.size();
    const std::size_t top = std::min<std::size_t>(3, n);
    for (std::size_t i = 0; i < top; ++i)
      report.push_back({order, all[i].relation, all[i].score, static_cast<int>(i + 1)});
    // bottom-3, skipping entries already reported in the top block
    const std::size_t bottom_from = std::max(top, n >= 3 ? n - 3 : 0);
    for (std::size_t i = bottom_from; i < n; ++i)
      report.push_back({order, all[i].relation, all[i].score, static_cast<int>(i + 1)});
  }
  return report;
}

}  // namespace cigf
