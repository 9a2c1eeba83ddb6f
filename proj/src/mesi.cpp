#include "cigf/mesi.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cigf {

namespace {

void check(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

// Averaged user/item vectors across the K separate representations; the
// "same input" consumed by the baseline heads.
std::pair<std::vector<double>, std::vector<double>> averaged_input(
    const Representations& reps, std::size_t u, std::size_t i) {
  const std::size_t K = reps.n_behaviors();
  const std::size_t d = reps.user[0].cols();
  std::vector<double> x(d, 0.0), y(d, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    const auto xu = reps.user[k].row(u);
    const auto yi = reps.item[k].row(i);
    for (std::size_t c = 0; c < d; ++c) {
      x[c] += xu[c];
      y[c] += yi[c];
    }
  }
  for (std::size_t c = 0; c < d; ++c) {
    x[c] /= static_cast<double>(K);
    y[c] /= static_cast<double>(K);
  }
  return {std::move(x), std::move(y)};
}

double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

HeadParams HeadParams::create(HeadKind kind, std::size_t n_behaviors, std::size_t dim,
                              bool shared_gates) {
  HeadParams h;
  h.kind = kind;
  h.shared_gates = shared_gates;
  if (kind == HeadKind::Mesi || kind == HeadKind::MesiSameInput) {
    const std::size_t n_gates = shared_gates ? 1 : n_behaviors;
    for (std::size_t k = 0; k < n_gates; ++k) {
      GateParams gp;
      gp.weight = DenseMatrix(n_behaviors, 2 * dim);
      gp.bias.assign(n_behaviors, 0.0);
      h.gates.push_back(std::move(gp));
    }
  } else if (kind == HeadKind::Bilinear) {
    h.bilinear.r.assign(n_behaviors, std::vector<double>(dim, 0.0));
  } else {
    for (std::size_t k = 0; k < n_behaviors; ++k)
      h.shared_bottom.transform.emplace_back(dim, dim);
  }
  return h;
}

void HeadParams::validate(std::size_t n_behaviors, std::size_t dim) const {
  switch (kind) {
    case HeadKind::Mesi:
    case HeadKind::MesiSameInput: {
      const std::size_t n_gates = shared_gates ? 1 : n_behaviors;
      check(gates.size() == n_gates, "HeadParams: gate count does not match head kind");
      for (const GateParams& gp : gates) {
        check(gp.weight.rows() == n_behaviors && gp.weight.cols() == 2 * dim,
              "HeadParams: gate weight shape mismatch");
        check(gp.bias.size() == n_behaviors, "HeadParams: gate bias shape mismatch");
      }
      break;
    }
    case HeadKind::Bilinear:
      check(bilinear.r.size() == n_behaviors,
            "HeadParams: bilinear head needs K transformation vectors");
      for (const auto& r : bilinear.r)
        check(r.size() == dim, "HeadParams: bilinear vector length mismatch");
      break;
    case HeadKind::SharedBottom:
      check(shared_bottom.transform.size() == n_behaviors,
            "HeadParams: shared-bottom head needs K transforms");
      for (const DenseMatrix& t : shared_bottom.transform)
        check(t.rows() == dim && t.cols() == dim,
              "HeadParams: shared-bottom transform shape mismatch");
      break;
  }
}

std::vector<double> expert(std::span<const double> x, std::span<const double> y) {
  check(x.size() == y.size(), "expert: length mismatch");
  std::vector<double> f(x.size());
  for (std::size_t c = 0; c < x.size(); ++c) f[c] = x[c] * y[c];
  return f;
}

std::vector<double> gate(std::span<const double> x, std::span<const double> y,
                         const GateParams& gp) {
  check(gp.weight.cols() == x.size() + y.size(), "gate: concat length mismatch");
  const std::size_t K = gp.bias.size();
  std::vector<double> logits(K);
  for (std::size_t j = 0; j < K; ++j) {
    double s = gp.bias[j];
    for (std::size_t c = 0; c < x.size(); ++c) s += gp.weight(j, c) * x[c];
    for (std::size_t c = 0; c < y.size(); ++c) s += gp.weight(j, x.size() + c) * y[c];
    logits[j] = s;
  }
  // exp-normalize with max shift
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t j = 0; j < K; ++j) {
    logits[j] = std::exp(logits[j] - m);
    z += logits[j];
  }
  for (double& v : logits) v /= z;
  return logits;
}

double predict(const Representations& reps, std::size_t u, std::size_t i,
               std::size_t task, const HeadParams& head) {
  const std::size_t K = reps.n_behaviors();
  const std::size_t d = reps.user[0].cols();
  head.validate(K, d);
  check(task < K, "predict: task index out of range");

  switch (head.kind) {
    case HeadKind::Mesi: {
      const auto xk = reps.user[task].row(u);
      const auto yk = reps.item[task].row(i);
      const std::vector<double> g = gate(xk, yk, head.gate_for(task));
      std::vector<double> mix(d, 0.0);
      for (std::size_t j = 0; j < K; ++j) {
        const auto xj = reps.user[j].row(u);
        const auto yj = reps.item[j].row(i);
        for (std::size_t c = 0; c < d; ++c) mix[c] += g[j] * xj[c] * yj[c];
      }
      return mean(mix);
    }
    case HeadKind::MesiSameInput: {
      const auto [x, y] = averaged_input(reps, u, i);
      const std::vector<double> g = gate(x, y, head.gate_for(task));
      std::vector<double> mix(d, 0.0);
      for (std::size_t j = 0; j < K; ++j)
        for (std::size_t c = 0; c < d; ++c) mix[c] += g[j] * x[c] * y[c];
      return mean(mix);
    }
    case HeadKind::Bilinear: {
      const auto [x, y] = averaged_input(reps, u, i);
      const std::vector<double>& r = head.bilinear.r[task];
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += x[c] * y[c] * r[c];
      return s;
    }
    case HeadKind::SharedBottom: {
      const auto [x, y] = averaged_input(reps, u, i);
      const DenseMatrix& t = head.shared_bottom.transform[task];
      double s = 0.0;
      for (std::size_t rix = 0; rix < d; ++rix)
        for (std::size_t c = 0; c < d; ++c) s += t(rix, c) * x[c] * y[c];
      return s / static_cast<double>(d);
    }
  }
  return 0.0;
}

double predict_with_gates(const Representations& reps, std::size_t u, std::size_t i,
                          std::size_t task, std::span<const double> fixed_gate) {
  const std::size_t K = reps.n_behaviors();
  const std::size_t d = reps.user[0].cols();
  check(fixed_gate.size() == K, "predict_with_gates: gate length mismatch");
  check(task < K, "predict_with_gates: task index out of range");
  std::vector<double> mix(d, 0.0);
  for (std::size_t j = 0; j < K; ++j) {
    const auto xj = reps.user[j].row(u);
    const auto yj = reps.item[j].row(i);
    for (std::size_t c = 0; c < d; ++c) mix[c] += fixed_gate[j] * xj[c] * yj[c];
  }
  return mean(mix);
}

UtilizationReport expert_utilization(
    const Representations& reps, const HeadParams& head,
    std::span<const std::pair<std::uint32_t, std::uint32_t>> samples,
    std::size_t task) {
  check(!samples.empty(), "expert_utilization: empty sample set");
  check(head.kind == HeadKind::Mesi || head.kind == HeadKind::MesiSameInput,
        "expert_utilization: head has no gates");
  const std::size_t K = reps.n_behaviors();

  UtilizationReport rep;
  rep.avg_gate.assign(K, 0.0);
  for (const auto& [u, i] : samples) {
    std::vector<double> g;
    if (head.kind == HeadKind::Mesi) {
      g = gate(reps.user[task].row(u), reps.item[task].row(i), head.gate_for(task));
    } else {
      const auto [x, y] = averaged_input(reps, u, i);
      g = gate(x, y, head.gate_for(task));
    }
    for (std::size_t j = 0; j < K; ++j) rep.avg_gate[j] += g[j];
  }
  for (double& v : rep.avg_gate) v /= static_cast<double>(samples.size());

  double h = 0.0;
  for (double p : rep.avg_gate)
    if (p > 0.0) h -= p * std::log(p);
  rep.entropy = h;
  return rep;
}

}  // namespace cigf
