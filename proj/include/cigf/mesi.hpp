#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cigf/cigcn.hpp"
#include "cigf/dense.hpp"

namespace cigf {

// Prediction heads on top of the K per-behavior representations.
//   Mesi:          experts + task-aware gates + averaging tower
//   Bilinear:      behavior-aware bilinear score on the averaged input
//   SharedBottom:  per-task linear map on the averaged input
//   MesiSameInput: MESI with every expert input replaced by the average
enum class HeadKind { Mesi, Bilinear, SharedBottom, MesiSameInput };

struct GateParams {
  DenseMatrix weight;        // K x 2d
  std::vector<double> bias;  // K
};

struct BilinearParams {
  std::vector<std::vector<double>> r;  // K vectors of length d
};

struct SharedBottomParams {
  std::vector<DenseMatrix> transform;  // K matrices, d x d
};

struct HeadParams {
  HeadKind kind = HeadKind::Mesi;
  std::vector<GateParams> gates;  // per task; a single entry when shared
  bool shared_gates = false;
  BilinearParams bilinear;
  SharedBottomParams shared_bottom;

  const GateParams& gate_for(std::size_t task) const {
    return shared_gates ? gates.at(0) : gates.at(task);
  }
  GateParams& gate_for(std::size_t task) {
    return shared_gates ? gates.at(0) : gates.at(task);
  }

  static HeadParams create(HeadKind kind, std::size_t n_behaviors, std::size_t dim,
                           bool shared_gates = false);
  // Throws when the stored parameters do not match the head kind.
  void validate(std::size_t n_behaviors, std::size_t dim) const;
};

// f = x (hadamard) y
std::vector<double> expert(std::span<const double> x, std::span<const double> y);

// softmax(W [x||y] + b); strictly positive, sums to 1.
std::vector<double> gate(std::span<const double> x, std::span<const double> y,
                         const GateParams& gp);

double predict(const Representations& reps, std::size_t u, std::size_t i,
               std::size_t task, const HeadParams& head);

// MESI scoring with the gate output replaced by a fixed vector
// (decoupling analysis uses one-hot gates here).
double predict_with_gates(const Representations& reps, std::size_t u, std::size_t i,
                          std::size_t task, std::span<const double> fixed_gate);

struct UtilizationReport {
  std::vector<double> avg_gate;  // mean gate weight per expert
  double entropy = 0.0;          // natural-log entropy of avg_gate
};

UtilizationReport expert_utilization(
    const Representations& reps, const HeadParams& head,
    std::span<const std::pair<std::uint32_t, std::uint32_t>> samples,
    std::size_t task);

}  // namespace cigf
