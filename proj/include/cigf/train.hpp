#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cigf/analysis.hpp"
#include "cigf/cigcn.hpp"
#include "cigf/mbgraph.hpp"
#include "cigf/mesi.hpp"
#include "cigf/rng.hpp"

namespace cigf {

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 256;
  int dim = 16;
  double l2 = 0.0;  // lambda; no default claimed, callers should set it
  int negatives_per_positive = 1;
  int epochs = 50;
  std::uint64_t seed = 1;
  std::vector<double> task_weights;  // empty = all ones

  double task_weight(std::size_t k) const {
    return task_weights.empty() ? 1.0 : task_weights.at(k);
  }
  void validate() const;
};

struct Triple {
  std::uint32_t user;
  std::uint32_t pos;
  std::uint32_t neg;
};

struct TripleBatch {
  std::vector<std::vector<Triple>> per_behavior;
  std::vector<std::string> warnings;

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& v : per_behavior) n += v.size();
    return n;
  }
};

// Uniform positives per behavior, negatives uniform with rejection
// against that behavior's observed interactions. Behaviors with no
// positives (or only saturated users) contribute nothing and leave a
// warning record.
TripleBatch sample_triples(const MultiplexGraph& g, std::size_t per_behavior,
                           int negatives_per_positive, Rng& rng);

// All trainable tensors. The walk order of for_each_tensor is fixed and
// shared by the Adam state, the finite-difference checker and the
// regularizer.
struct ModelParams {
  DenseMatrix user_emb;  // P, M x d
  DenseMatrix item_emb;  // Q, N x d
  AttentionParams attention;
  AggregatorTransforms transforms;
  HeadParams head;

  static ModelParams init(std::size_t n_users, std::size_t n_items,
                          std::size_t n_behaviors, const TrainConfig& tcfg,
                          const CigcnConfig& ccfg, HeadKind head_kind,
                          bool shared_gates = false);

  ModelParams zeros_like() const;
  double squared_norm() const;
  DenseMatrix stacked_embeddings() const;  // [P; Q], (M+N) x d

  template <typename F>
  void for_each_tensor(F&& f) {
    f("user_emb", user_emb.data());
    f("item_emb", item_emb.data());
    for (std::size_t s = 0; s < attention.slots.size(); ++s) {
      auto& slot = attention.slots[s];
      const std::string base = "attn.slot" + std::to_string(s);
      if (!slot.weight.empty()) f(base + ".weight", slot.weight.data());
      f(base + ".bias", slot.bias);
    }
    for (std::size_t l = 0; l < transforms.w1.size(); ++l)
      f("agg.w1." + std::to_string(l), transforms.w1[l].data());
    for (std::size_t l = 0; l < transforms.w2.size(); ++l)
      f("agg.w2." + std::to_string(l), transforms.w2[l].data());
    for (std::size_t k = 0; k < head.gates.size(); ++k) {
      f("gate" + std::to_string(k) + ".weight", head.gates[k].weight.data());
      f("gate" + std::to_string(k) + ".bias", head.gates[k].bias);
    }
    for (std::size_t k = 0; k < head.bilinear.r.size(); ++k)
      f("bilinear.r" + std::to_string(k), head.bilinear.r[k]);
    for (std::size_t k = 0; k < head.shared_bottom.transform.size(); ++k)
      f("sb.transform" + std::to_string(k), head.shared_bottom.transform[k].data());
  }

  template <typename F>
  void for_each_tensor(F&& f) const {
    const_cast<ModelParams*>(this)->for_each_tensor(
        [&](const std::string& name, std::vector<double>& v) {
          f(name, static_cast<const std::vector<double>&>(v));
        });
  }
};

// Per-triple scores (positive, negative), aligned with the batch layout.
struct BatchScores {
  std::vector<std::vector<std::pair<double, double>>> per_behavior;
};

BatchScores score_batch(const Representations& reps, const TripleBatch& batch,
                        const HeadParams& head);

// Eq-style pairwise ranking loss: -sum ln sigmoid(pos - neg), summed in
// sorted triple order, plus l2 * ||params||^2. Computed via softplus for
// stability.
double bpr_loss(const TripleBatch& batch, const BatchScores& scores,
                const ModelParams& params, double l2,
                const std::vector<double>& task_weights = {});

// Hand-derived reverse-mode gradients of bpr_loss with respect to every
// tensor in ModelParams.
ModelParams backward(const GraphMatrices& gm, const ForwardCache& cache,
                     const ModelParams& params, const TripleBatch& batch,
                     const CigcnConfig& cfg, const TrainConfig& tcfg);

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  long step = 0;

  static AdamState like(const ModelParams& params);
};

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state,
               double lr, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8);

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;  // probe-batch loss, a pure function of the params
  double hr10 = 0.0;
  double ndcg10 = 0.0;
  double seconds = 0.0;
};

struct FitResult {
  ModelParams params;
  std::vector<EpochRecord> trace;
  bool diverged = false;
  std::string message;
};

FitResult fit(const SplitGraph& split, const TrainConfig& tcfg,
              const CigcnConfig& ccfg, HeadKind head_kind,
              const EvalOptions& eval_opts = {}, bool shared_gates = false);

}  // namespace cigf
