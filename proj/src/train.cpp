#include "cigf/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cigf {

namespace {

void check(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// subgradient convention: slope 1 at exactly zero
double lrelu_deriv(double z, double slope) { return z >= 0.0 ? 1.0 : slope; }

double xavier_limit(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

void xavier_fill(DenseMatrix& m, Rng& rng) {
  const double lim = xavier_limit(m.rows(), m.cols());
  for (double& v : m.data()) v = rng.uniform(-lim, lim);
}

// indices of batch triples in sorted (u, pos, neg) order; pins the
// summation order of loss and gradients
std::vector<std::size_t> sorted_order(const std::vector<Triple>& triples) {
  std::vector<std::size_t> order(triples.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const Triple& x = triples[a];
    const Triple& y = triples[b];
    if (x.user != y.user) return x.user < y.user;
    if (x.pos != y.pos) return x.pos < y.pos;
    return x.neg < y.neg;
  });
  return order;
}

void scale_rows(DenseMatrix& m, const DenseMatrix& alpha, std::size_t col) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double w = alpha(r, col);
    for (double& v : m.row(r)) v *= w;
  }
}

// out = x * w^T for a small square transform w
DenseMatrix matmul_wt(const DenseMatrix& x, const DenseMatrix& w) {
  DenseMatrix out(x.rows(), w.rows());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t a = 0; a < w.rows(); ++a) {
      double s = 0.0;
      for (std::size_t b = 0; b < w.cols(); ++b) s += x(r, b) * w(a, b);
      out(r, a) = s;
    }
  return out;
}

// Accumulates head gradients for one scored (u, i, task) with upstream
// dscore, writing representation gradients into the stacked per-behavior
// buffers.
void head_backward(const Representations& reps, std::size_t n_users, std::uint32_t u,
                   std::uint32_t i, std::size_t task, double dscore,
                   const HeadParams& head, HeadParams& head_grads,
                   std::vector<DenseMatrix>& gstar) {
  const std::size_t K = reps.n_behaviors();
  const std::size_t d = reps.user[0].cols();
  const double inv_d = 1.0 / static_cast<double>(d);
  const double inv_k = 1.0 / static_cast<double>(K);

  auto xrow = [&](std::size_t k) { return reps.user[k].row(u); };
  auto yrow = [&](std::size_t k) { return reps.item[k].row(i); };

  auto averaged = [&]() {
    std::vector<double> x(d, 0.0), y(d, 0.0);
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t c = 0; c < d; ++c) {
        x[c] += xrow(k)[c] * inv_k;
        y[c] += yrow(k)[c] * inv_k;
      }
    return std::make_pair(x, y);
  };

  // spreads a gradient on the averaged pair back to every behavior block
  auto spread_avg = [&](const std::vector<double>& dx, const std::vector<double>& dy) {
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t c = 0; c < d; ++c) {
        gstar[k](u, c) += dx[c] * inv_k;
        gstar[k](n_users + i, c) += dy[c] * inv_k;
      }
  };

  switch (head.kind) {
    case HeadKind::Mesi: {
      const auto xt = xrow(task);
      const auto yt = yrow(task);
      const std::vector<double> g = gate(xt, yt, head.gate_for(task));
      const double w = dscore * inv_d;

      // experts: d mix / d f^j = g[j]
      std::vector<double> dg(K, 0.0);
      for (std::size_t j = 0; j < K; ++j) {
        const auto xj = xrow(j);
        const auto yj = yrow(j);
        double fdot = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          gstar[j](u, c) += w * g[j] * yj[c];
          gstar[j](n_users + i, c) += w * g[j] * xj[c];
          fdot += xj[c] * yj[c];
        }
        dg[j] = w * fdot;  // sum_c (dL/dmix_c) * f^j_c
      }

      // softmax jacobian
      double gd = 0.0;
      for (std::size_t j = 0; j < K; ++j) gd += g[j] * dg[j];
      std::vector<double> da(K);
      for (std::size_t j = 0; j < K; ++j) da[j] = g[j] * (dg[j] - gd);

      GateParams& gg = head_grads.gate_for(task);
      const GateParams& gp = head.gate_for(task);
      for (std::size_t j = 0; j < K; ++j) {
        gg.bias[j] += da[j];
        for (std::size_t c = 0; c < d; ++c) {
          gg.weight(j, c) += da[j] * xt[c];
          gg.weight(j, d + c) += da[j] * yt[c];
          gstar[task](u, c) += da[j] * gp.weight(j, c);
          gstar[task](n_users + i, c) += da[j] * gp.weight(j, d + c);
        }
      }
      break;
    }
    case HeadKind::MesiSameInput: {
      // identical experts make the gated mixture equal x (had) y exactly,
      // so the gate path carries no gradient at all
      const auto [x, y] = averaged();
      const double w = dscore * inv_d;
      std::vector<double> dx(d), dy(d);
      for (std::size_t c = 0; c < d; ++c) {
        dx[c] = w * y[c];
        dy[c] = w * x[c];
      }
      spread_avg(dx, dy);
      break;
    }
    case HeadKind::Bilinear: {
      const auto [x, y] = averaged();
      const std::vector<double>& r = head.bilinear.r[task];
      std::vector<double>& dr = head_grads.bilinear.r[task];
      std::vector<double> dx(d), dy(d);
      for (std::size_t c = 0; c < d; ++c) {
        dr[c] += dscore * x[c] * y[c];
        dx[c] = dscore * r[c] * y[c];
        dy[c] = dscore * r[c] * x[c];
      }
      spread_avg(dx, dy);
      break;
    }
    case HeadKind::SharedBottom: {
      const auto [x, y] = averaged();
      const DenseMatrix& t = head.shared_bottom.transform[task];
      DenseMatrix& dt = head_grads.shared_bottom.transform[task];
      const double w = dscore * inv_d;
      std::vector<double> dz(d, 0.0);
      for (std::size_t row = 0; row < d; ++row)
        for (std::size_t c = 0; c < d; ++c) {
          dt(row, c) += w * x[c] * y[c];
          dz[c] += w * t(row, c);
        }
      std::vector<double> dx(d), dy(d);
      for (std::size_t c = 0; c < d; ++c) {
        dx[c] = dz[c] * y[c];
        dy[c] = dz[c] * x[c];
      }
      spread_avg(dx, dy);
      break;
    }
  }
}

}  // namespace

void TrainConfig::validate() const {
  check(learning_rate >= 0.0, "TrainConfig: learning rate must be >= 0");
  check(batch_size >= 1, "TrainConfig: batch size must be >= 1");
  check(dim >= 1, "TrainConfig: embedding dim must be >= 1");
  check(l2 >= 0.0, "TrainConfig: l2 coefficient must be >= 0");
  check(negatives_per_positive >= 1, "TrainConfig: negatives per positive must be >= 1");
  check(epochs >= 0, "TrainConfig: epochs must be >= 0");
}

TripleBatch sample_triples(const MultiplexGraph& g, std::size_t per_behavior,
                           int negatives_per_positive, Rng& rng) {
  const std::size_t K = g.n_behaviors();
  TripleBatch batch;
  batch.per_behavior.resize(K);

  for (std::size_t k = 0; k < K; ++k) {
    const SparseMatrix& y = g.interactions[k];
    // flat positive list for uniform draws
    std::vector<Triple> positives;
    positives.reserve(y.nnz());
    for (std::size_t u = 0; u < y.rows(); ++u)
      for (std::uint32_t i : y.row_cols(u))
        positives.push_back({static_cast<std::uint32_t>(u), i, 0});
    if (positives.empty()) {
      batch.warnings.push_back("behavior " + std::to_string(k) + ": no positives, skipped");
      continue;
    }

    bool saturated_seen = false;
    for (std::size_t n = 0; n < per_behavior; ++n) {
      const Triple& p = positives[rng.below(positives.size())];
      const std::size_t user_deg = y.row_cols(p.user).size();
      if (user_deg >= g.n_items) {
        saturated_seen = true;
        continue;  // no valid negative exists for this user
      }
      for (int r = 0; r < negatives_per_positive; ++r) {
        std::uint32_t neg;
        do {
          neg = static_cast<std::uint32_t>(rng.below(g.n_items));
        } while (y.at(p.user, neg) != 0.0);
        batch.per_behavior[k].push_back({p.user, p.pos, neg});
      }
    }
    if (saturated_seen)
      batch.warnings.push_back("behavior " + std::to_string(k) +
                               ": user with all items positive, no negative sampled");
    if (batch.per_behavior[k].empty() && saturated_seen)
      batch.warnings.push_back("behavior " + std::to_string(k) +
                               ": contributed no triples");
  }
  return batch;
}

ModelParams ModelParams::init(std::size_t n_users, std::size_t n_items,
                              std::size_t n_behaviors, const TrainConfig& tcfg,
                              const CigcnConfig& ccfg, HeadKind head_kind,
                              bool shared_gates) {
  tcfg.validate();
  ccfg.validate();
  const std::size_t d = static_cast<std::size_t>(tcfg.dim);

  ModelParams p;
  Rng rng = Rng::stream(tcfg.seed, "init");
  p.user_emb = DenseMatrix(n_users, d);
  p.item_emb = DenseMatrix(n_items, d);
  xavier_fill(p.user_emb, rng);
  xavier_fill(p.item_emb, rng);

  p.attention = AttentionParams::create(ccfg.attention, static_cast<int>(n_behaviors),
                                        ccfg.layers, ccfg.heads, tcfg.dim);
  for (auto& slot : p.attention.slots) {
    if (!slot.weight.empty()) xavier_fill(slot.weight, rng);
    // placeholder; biases are set per slot role below
    for (double& b : slot.bias) b = rng.uniform(0.45, 0.55);
  }
  // Behavior-specific slots start as a near-selector on their own start
  // behavior, so compressed propagation begins at the unmixed model and
  // learns cross-behavior mass from there. Variants whose slots are
  // shared across behaviors have no self entry and keep the uniform
  // mixing start above.
  const bool behavior_specific = ccfg.attention == AttentionVariant::Global ||
                                 ccfg.attention == AttentionVariant::NodeBehavior ||
                                 ccfg.attention == AttentionVariant::NodeBehaviorLayer;
  if (behavior_specific) {
    for (int k = 0; k < static_cast<int>(n_behaviors); ++k)
      for (int order = 2; order <= ccfg.layers; ++order)
        for (int h = 0; h < ccfg.heads; ++h) {
          auto& slot = p.attention.slots[p.attention.slot_index(k, order, h)];
          for (std::size_t j = 0; j < slot.bias.size(); ++j)
            slot.bias[j] = (static_cast<int>(j) == k ? 1.0 : 0.1) +
                           rng.uniform(-0.05, 0.05);
        }
  }

  p.transforms = AggregatorTransforms::create(ccfg.aggregator, ccfg.layers, tcfg.dim);
  for (DenseMatrix& w : p.transforms.w1) xavier_fill(w, rng);
  for (DenseMatrix& w : p.transforms.w2) xavier_fill(w, rng);

  p.head = HeadParams::create(head_kind, n_behaviors, d, shared_gates);
  for (GateParams& gp : p.head.gates) xavier_fill(gp.weight, rng);
  for (auto& r : p.head.bilinear.r) {
    const double lim = xavier_limit(1, d);
    for (double& v : r) v = rng.uniform(-lim, lim);
  }
  for (DenseMatrix& t : p.head.shared_bottom.transform) xavier_fill(t, rng);
  return p;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z = *this;
  z.for_each_tensor([](const std::string&, std::vector<double>& v) {
    std::fill(v.begin(), v.end(), 0.0);
  });
  return z;
}

double ModelParams::squared_norm() const {
  double s = 0.0;
  for_each_tensor([&](const std::string&, const std::vector<double>& v) {
    for (double x : v) s += x * x;
  });
  return s;
}

DenseMatrix ModelParams::stacked_embeddings() const {
  const std::size_t M = user_emb.rows();
  const std::size_t N = item_emb.rows();
  const std::size_t d = user_emb.cols();
  DenseMatrix e(M + N, d);
  for (std::size_t u = 0; u < M; ++u)
    std::copy(user_emb.row(u).begin(), user_emb.row(u).end(), e.row(u).begin());
  for (std::size_t i = 0; i < N; ++i)
    std::copy(item_emb.row(i).begin(), item_emb.row(i).end(), e.row(M + i).begin());
  return e;
}

BatchScores score_batch(const Representations& reps, const TripleBatch& batch,
                        const HeadParams& head) {
  BatchScores scores;
  scores.per_behavior.resize(batch.per_behavior.size());
  for (std::size_t k = 0; k < batch.per_behavior.size(); ++k) {
    for (const Triple& t : batch.per_behavior[k]) {
      scores.per_behavior[k].push_back({predict(reps, t.user, t.pos, k, head),
                                        predict(reps, t.user, t.neg, k, head)});
    }
  }
  return scores;
}

double bpr_loss(const TripleBatch& batch, const BatchScores& scores,
                const ModelParams& params, double l2,
                const std::vector<double>& task_weights) {
  check(scores.per_behavior.size() == batch.per_behavior.size(),
        "bpr_loss: scores do not match batch");
  double loss = 0.0;
  for (std::size_t k = 0; k < batch.per_behavior.size(); ++k) {
    const auto& triples = batch.per_behavior[k];
    const auto& sc = scores.per_behavior[k];
    check(sc.size() == triples.size(), "bpr_loss: scores do not match batch");
    const double w = task_weights.empty() ? 1.0 : task_weights.at(k);
    for (std::size_t idx : sorted_order(triples)) {
      const auto& [pos, neg] = sc[idx];
      check(std::isfinite(pos) && std::isfinite(neg), "bpr_loss: non-finite score");
      loss += w * softplus(-(pos - neg));
    }
  }
  return loss + l2 * params.squared_norm();
}

ModelParams backward(const GraphMatrices& gm, const ForwardCache& cache,
                     const ModelParams& params, const TripleBatch& batch,
                     const CigcnConfig& cfg, const TrainConfig& tcfg) {
  const std::size_t K = gm.adj.size();
  const std::size_t n = gm.n_nodes();
  const std::size_t M = gm.n_users;
  const std::size_t d = params.user_emb.cols();
  const DenseMatrix embeddings = params.stacked_embeddings();
  const Representations reps = split_representations(cache, M, gm.n_items);

  ModelParams grads = params.zeros_like();

  // dL/dX*_k, stacked per start behavior
  std::vector<DenseMatrix> gstar(K, DenseMatrix(n, d));

  // ---- head + loss backward -------------------------------------------
  for (std::size_t k = 0; k < batch.per_behavior.size(); ++k) {
    const auto& triples = batch.per_behavior[k];
    const double w = tcfg.task_weight(k);
    for (std::size_t idx : sorted_order(triples)) {
      const Triple& t = triples[idx];
      const double pos = predict(reps, t.user, t.pos, k, params.head);
      const double neg = predict(reps, t.user, t.neg, k, params.head);
      const double ddelta = -sigmoid(-(pos - neg)) * w;
      head_backward(reps, M, t.user, t.pos, k, ddelta, params.head, grads.head, gstar);
      head_backward(reps, M, t.user, t.neg, k, -ddelta, params.head, grads.head, gstar);
    }
  }

  // ---- CIGCN backward ---------------------------------------------------
  DenseMatrix demb(n, d);  // dL/dE
  const int L = cfg.layers;

  for (std::size_t k = 0; k < K; ++k) {
    const StartBehaviorCache& sc = cache.starts[k];
    const DenseMatrix& S = gstar[k];

    // X*_k = (L+1) E + sum_l (L-l+1) message^l
    demb.add_scaled(S, static_cast<double>(L + 1));

    // per-(order, head) attention gradients for this start behavior
    std::vector<std::vector<DenseMatrix>> dalpha(static_cast<std::size_t>(
        std::max(0, L - 1)));
    for (auto& per_head : dalpha)
      per_head.assign(static_cast<std::size_t>(cfg.heads),
                      DenseMatrix(n, K));

    for (int order = 1; order <= L; ++order) {
      const LayerCache& lc = sc.layers[static_cast<std::size_t>(order - 1)];
      const double weight = static_cast<double>(L - order + 1);

      for (std::size_t chain_ix = 0; chain_ix < lc.evals.size(); ++chain_ix) {
        const ChainEval& ev = lc.evals[chain_ix];
        // dL/d(transformed chain output)
        DenseMatrix dt = S;
        dt.scale(weight);

        // aggregator backward -> dn = dL/d(neighbor output)
        DenseMatrix dn;
        const DenseMatrix& neighbor = ev.suffix[0];
        switch (cfg.aggregator) {
          case Aggregator::LightGCN:
            dn = std::move(dt);
            break;
          case Aggregator::LRGCCF:
            add_transpose_matmul(grads.transforms.w1[order - 1], neighbor, dt);
            dn = matmul_wt(dt, params.transforms.w1[order - 1]);
            break;
          case Aggregator::GCN:
          case Aggregator::NGCF: {
            DenseMatrix ds = dt;
            for (std::size_t i = 0; i < ds.data().size(); ++i)
              ds.data()[i] *= lrelu_deriv(ev.preact.data()[i], cfg.leaky_slope);
            add_transpose_matmul(grads.transforms.w1[order - 1], neighbor, ds);
            dn = matmul_wt(ds, params.transforms.w1[order - 1]);
            if (cfg.aggregator == Aggregator::NGCF) {
              add_transpose_matmul(grads.transforms.w2[order - 1],
                                   neighbor.hadamard(embeddings), ds);
              // s += (n (had) E) W2: both hadamard factors get a share
              const DenseMatrix dsw2 = matmul_wt(ds, params.transforms.w2[order - 1]);
              for (std::size_t i = 0; i < dn.data().size(); ++i) {
                dn.data()[i] += dsw2.data()[i] * embeddings.data()[i];
                demb.data()[i] += dsw2.data()[i] * neighbor.data()[i];
              }
            }
            break;
          }
        }

        // chain product backward, left to right over positions
        const MatrixChain& chain = lc.chains[chain_ix];
        DenseMatrix g = std::move(dn);
        const std::size_t len = chain.mats.size();
        for (std::size_t p = 0; p < len; ++p) {
          const DenseMatrix& v_next = p + 1 < len ? ev.suffix[p + 1] : embeddings;
          if (p == 0 || cfg.bypass_compression) {
            // raw behavior matrix, values constant
            g = matvec(*gm.adj_t[k], g);
            continue;
          }
          const int order_here = static_cast<int>(p) + 1;
          const int head = chain.heads[p - 1];
          const LayerCache& mix_lc = sc.layers[static_cast<std::size_t>(order_here - 1)];
          const DenseMatrix& alpha = mix_lc.alpha[static_cast<std::size_t>(head)];
          DenseMatrix& da =
              dalpha[static_cast<std::size_t>(order_here - 2)][static_cast<std::size_t>(head)];

          DenseMatrix g_next(n, d);
          for (std::size_t j = 0; j < K; ++j) {
            if (!cfg.column_attention) {
              // d alpha(a, j) = g(a, :) . (A^j v_next)(a, :)
              const DenseMatrix w = matvec(*gm.adj[j], v_next);
              const std::vector<double> dots = row_dots(g, w);
              for (std::size_t a = 0; a < n; ++a) da(a, j) += dots[a];
              DenseMatrix scaled = g;
              scale_rows(scaled, alpha, j);
              g_next.add(matvec(*gm.adj_t[j], scaled));
            } else {
              // d alpha(b, j) = v_next(b, :) . (A^j^T g)(b, :)
              DenseMatrix w = matvec(*gm.adj_t[j], g);
              const std::vector<double> dots = row_dots(v_next, w);
              for (std::size_t b = 0; b < n; ++b) da(b, j) += dots[b];
              scale_rows(w, alpha, j);
              g_next.add(w);
            }
          }
          g = std::move(g_next);
        }
        demb.add(g);
      }
    }

    // attention parameters: through LeakyReLU into W, b and the embeddings
    if (!cfg.bypass_compression) {
      for (int order = 2; order <= L; ++order) {
        const LayerCache& lc = sc.layers[static_cast<std::size_t>(order - 1)];
        for (int h = 0; h < cfg.heads; ++h) {
          DenseMatrix dz =
              dalpha[static_cast<std::size_t>(order - 2)][static_cast<std::size_t>(h)];
          const DenseMatrix& z = lc.preact_z[static_cast<std::size_t>(h)];
          for (std::size_t i = 0; i < dz.data().size(); ++i)
            dz.data()[i] *= lrelu_deriv(z.data()[i], cfg.leaky_slope);

          const std::size_t slot_ix =
              params.attention.slot_index(static_cast<int>(k), order, h);
          AttentionParams::Slot& gslot = grads.attention.slots[slot_ix];
          const AttentionParams::Slot& pslot = params.attention.slots[slot_ix];

          for (std::size_t v = 0; v < n; ++v)
            for (std::size_t j = 0; j < K; ++j) gslot.bias[j] += dz(v, j);
          if (!pslot.weight.empty()) {
            add_transpose_matmul(gslot.weight, dz, embeddings);
            // dE += dz W
            for (std::size_t v = 0; v < n; ++v)
              for (std::size_t c = 0; c < d; ++c) {
                double s = 0.0;
                for (std::size_t j = 0; j < K; ++j) s += dz(v, j) * pslot.weight(j, c);
                demb(v, c) += s;
              }
          }
        }
      }
    }
  }

  // split stacked embedding gradient into P and Q
  for (std::size_t u = 0; u < M; ++u)
    for (std::size_t c = 0; c < d; ++c) grads.user_emb(u, c) += demb(u, c);
  for (std::size_t i = 0; i < gm.n_items; ++i)
    for (std::size_t c = 0; c < d; ++c) grads.item_emb(i, c) += demb(M + i, c);

  // L2 term: d(lambda ||theta||^2) = 2 lambda theta
  if (tcfg.l2 != 0.0) {
    auto reg = [&](std::vector<double>& gv, const std::vector<double>& pv) {
      for (std::size_t i = 0; i < gv.size(); ++i) gv[i] += 2.0 * tcfg.l2 * pv[i];
    };
    std::vector<std::vector<double>*> gtensors;
    grads.for_each_tensor([&](const std::string&, std::vector<double>& v) {
      gtensors.push_back(&v);
    });
    std::size_t ix = 0;
    params.for_each_tensor([&](const std::string&, const std::vector<double>& v) {
      reg(*gtensors[ix++], v);
    });
  }
  return grads;
}

AdamState AdamState::like(const ModelParams& params) {
  AdamState s;
  params.for_each_tensor([&](const std::string&, const std::vector<double>& v) {
    s.m.emplace_back(v.size(), 0.0);
    s.v.emplace_back(v.size(), 0.0);
  });
  return s;
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state,
               double lr, double beta1, double beta2, double eps) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));

  std::vector<const std::vector<double>*> gtensors;
  grads.for_each_tensor([&](const std::string&, const std::vector<double>& v) {
    gtensors.push_back(&v);
  });

  std::size_t ix = 0;
  params.for_each_tensor([&](const std::string& name, std::vector<double>& p) {
    const std::vector<double>& g = *gtensors[ix];
    check(g.size() == p.size(), "adam_step: tensor shape mismatch at " + name);
    std::vector<double>& m = state.m[ix];
    std::vector<double>& v = state.v[ix];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
    ++ix;
  });
}

FitResult fit(const SplitGraph& split, const TrainConfig& tcfg,
              const CigcnConfig& ccfg, HeadKind head_kind,
              const EvalOptions& eval_opts, bool shared_gates) {
  tcfg.validate();
  ccfg.validate();
  const MultiplexGraph& g = split.train;
  const GraphMatrices gm = GraphMatrices::build(g, ccfg.normalization);

  FitResult result;
  result.params = ModelParams::init(g.n_users, g.n_items, g.n_behaviors(), tcfg, ccfg,
                                    head_kind, shared_gates);
  AdamState adam = AdamState::like(result.params);

  // fixed probe batch: the reported loss is a pure function of the
  // parameters, so an lr=0 run traces a constant
  Rng probe_rng = Rng::stream(tcfg.seed, "probe");
  const TripleBatch probe =
      sample_triples(g, tcfg.batch_size, tcfg.negatives_per_positive, probe_rng);

  std::size_t max_pos = 0;
  for (const SparseMatrix& m : g.interactions) max_pos = std::max(max_pos, m.nnz());
  const std::size_t batches_per_epoch =
      std::max<std::size_t>(1, (max_pos + tcfg.batch_size - 1) / tcfg.batch_size);

  auto forward = [&]() {
    return propagate_cached(gm, result.params.stacked_embeddings(),
                            result.params.attention, result.params.transforms, ccfg);
  };

  for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      Rng rng = Rng::stream(tcfg.seed, "batch", static_cast<std::uint64_t>(epoch), b);
      const TripleBatch batch =
          sample_triples(g, tcfg.batch_size, tcfg.negatives_per_positive, rng);
      const ForwardCache cache = forward();
      const Representations reps = split_representations(cache, g.n_users, g.n_items);
      const BatchScores scores = score_batch(reps, batch, result.params.head);
      double loss;
      try {
        loss = bpr_loss(batch, scores, result.params, tcfg.l2, tcfg.task_weights);
      } catch (const std::invalid_argument&) {
        loss = std::numeric_limits<double>::quiet_NaN();
      }
      if (!std::isfinite(loss)) {
        result.diverged = true;
        result.message = "loss diverged at epoch " + std::to_string(epoch);
        return result;
      }
      const ModelParams grads = backward(gm, cache, result.params, batch, ccfg, tcfg);
      adam_step(result.params, grads, adam, tcfg.learning_rate);
    }

    const ForwardCache cache = forward();
    const Representations reps = split_representations(cache, g.n_users, g.n_items);
    const BatchScores probe_scores = score_batch(reps, probe, result.params.head);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = bpr_loss(probe, probe_scores, result.params, tcfg.l2, tcfg.task_weights);
    if (!split.test_positives.empty()) {
      const RankingResults ranks = evaluate(split, reps, result.params.head, eval_opts);
      rec.hr10 = hr_at_n(ranks, eval_opts.cutoff);
      rec.ndcg10 = ndcg_at_n(ranks, eval_opts.cutoff);
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.trace.push_back(rec);
  }
  return result;
}

}  // namespace cigf
