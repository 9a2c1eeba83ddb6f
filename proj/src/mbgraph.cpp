#include "cigf/mbgraph.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "cigf/rng.hpp"

namespace cigf {

namespace {

using Pair = std::pair<std::uint32_t, std::uint32_t>;

[[noreturn]] void parse_fail(const std::filesystem::path& path, std::size_t line_no,
                             const std::string& what) {
  throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + what);
}

}  // namespace

void MultiplexGraph::validate() const {
  if (n_users == 0 || n_items == 0 || interactions.empty())
    throw std::invalid_argument("MultiplexGraph: M, N, K must all be >= 1");
  for (const SparseMatrix& m : interactions) {
    if (m.rows() != n_users || m.cols() != n_items)
      throw std::invalid_argument("MultiplexGraph: interaction matrix shape mismatch");
    for (double v : m.values())
      if (v != 1.0) throw std::invalid_argument("MultiplexGraph: interactions must be binary");
  }
}

MultiplexGraph load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_dataset: cannot open " + path.string());

  std::size_t header_users = 0, header_items = 0, header_behaviors = 0;
  bool have_header = false;

  std::vector<std::array<std::uint32_t, 3>> rows;
  std::uint32_t max_user = 0, max_item = 0, max_behavior = 0;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::size_t u, i, k;
      if (std::sscanf(line.c_str(), "#users=%zu items=%zu behaviors=%zu", &u, &i, &k) == 3) {
        header_users = u;
        header_items = i;
        header_behaviors = k;
        have_header = true;
      }
      continue;
    }
    std::istringstream ss(line);
    long long u = -1, i = -1, k = -1;
    if (!(ss >> u >> i >> k) || u < 0 || i < 0 || k < 0)
      parse_fail(path, line_no, "expected 'user item behavior' integer triple");
    std::string trailing;
    if (ss >> trailing) parse_fail(path, line_no, "trailing tokens after triple");
    if (have_header) {
      if (static_cast<std::size_t>(u) >= header_users ||
          static_cast<std::size_t>(i) >= header_items)
        parse_fail(path, line_no, "user/item index out of declared range");
      if (static_cast<std::size_t>(k) >= header_behaviors)
        parse_fail(path, line_no, "behavior index out of range");
    }
    rows.push_back({static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(i),
                    static_cast<std::uint32_t>(k)});
    max_user = std::max(max_user, static_cast<std::uint32_t>(u));
    max_item = std::max(max_item, static_cast<std::uint32_t>(i));
    max_behavior = std::max(max_behavior, static_cast<std::uint32_t>(k));
  }
  if (rows.empty() && !have_header)
    throw std::runtime_error("load_dataset: empty dataset " + path.string());

  MultiplexGraph g;
  g.n_users = have_header ? header_users : max_user + 1;
  g.n_items = have_header ? header_items : max_item + 1;
  const std::size_t n_behaviors = have_header ? header_behaviors : max_behavior + 1;

  std::vector<std::vector<Pair>> per_behavior(n_behaviors);
  for (const auto& r : rows) per_behavior[r[2]].push_back({r[0], r[1]});
  for (std::size_t k = 0; k < n_behaviors; ++k)
    g.interactions.push_back(
        SparseMatrix::from_pairs(g.n_users, g.n_items, per_behavior[k]));
  g.validate();
  return g;
}

void save_dataset(const MultiplexGraph& g, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_dataset: cannot open " + path.string());
  out << "#users=" << g.n_users << " items=" << g.n_items
      << " behaviors=" << g.n_behaviors() << "\n";
  for (std::size_t k = 0; k < g.n_behaviors(); ++k) {
    const SparseMatrix& m = g.interactions[k];
    for (std::size_t u = 0; u < m.rows(); ++u)
      for (std::uint32_t i : m.row_cols(u)) out << u << " " << i << " " << k << "\n";
  }
  if (!out) throw std::runtime_error("save_dataset: write failed " + path.string());
}

SparseMatrix build_adjacency(const MultiplexGraph& g, std::size_t k) {
  if (k >= g.n_behaviors())
    throw std::out_of_range("build_adjacency: behavior index out of range");
  const SparseMatrix& y = g.interactions[k];
  const std::uint32_t m = static_cast<std::uint32_t>(g.n_users);
  std::vector<SparseMatrix::Triplet> entries;
  entries.reserve(2 * y.nnz());
  for (std::size_t u = 0; u < y.rows(); ++u) {
    const auto cols = y.row_cols(u);
    const auto vals = y.row_vals(u);
    for (std::size_t p = 0; p < cols.size(); ++p) {
      const std::uint32_t uu = static_cast<std::uint32_t>(u);
      entries.push_back({uu, m + cols[p], vals[p]});
      entries.push_back({m + cols[p], uu, vals[p]});
    }
  }
  const std::size_t n = g.n_users + g.n_items;
  return SparseMatrix::from_triplets(n, n, std::move(entries));
}

SplitGraph leave_one_out_split(const MultiplexGraph& g, std::uint64_t seed) {
  const std::size_t target = g.target_index();

  // interaction counts over all behaviors, used to avoid orphaning nodes
  std::vector<std::size_t> user_deg(g.n_users, 0), item_deg(g.n_items, 0);
  for (const SparseMatrix& m : g.interactions) {
    for (std::size_t u = 0; u < m.rows(); ++u) {
      user_deg[u] += m.row_cols(u).size();
      for (std::uint32_t i : m.row_cols(u)) item_deg[i] += 1;
    }
  }

  SplitGraph split;
  split.seed = seed;
  Rng rng = Rng::stream(seed, "split");

  std::vector<Pair> train_target;
  const SparseMatrix& y = g.interactions[target];
  for (std::size_t u = 0; u < g.n_users; ++u) {
    const auto cols = y.row_cols(u);
    if (cols.empty()) continue;
    // pick uniformly, then walk forward until the holdout leaves both
    // endpoints with at least one remaining training interaction
    const std::size_t start = rng.below(cols.size());
    std::optional<std::size_t> chosen;
    for (std::size_t step = 0; step < cols.size(); ++step) {
      const std::size_t p = (start + step) % cols.size();
      if (user_deg[u] >= 2 && item_deg[cols[p]] >= 2) {
        chosen = p;
        break;
      }
    }
    for (std::size_t p = 0; p < cols.size(); ++p) {
      if (chosen && p == *chosen) continue;
      train_target.push_back({static_cast<std::uint32_t>(u), cols[p]});
    }
    if (chosen) {
      split.test_positives[static_cast<std::uint32_t>(u)] = cols[*chosen];
      user_deg[u] -= 1;
      item_deg[cols[*chosen]] -= 1;
    }
  }

  split.train.n_users = g.n_users;
  split.train.n_items = g.n_items;
  for (std::size_t k = 0; k < g.n_behaviors(); ++k) {
    if (k == target) {
      split.train.interactions.push_back(
          SparseMatrix::from_pairs(g.n_users, g.n_items, train_target));
    } else {
      split.train.interactions.push_back(g.interactions[k]);
    }
  }
  return split;
}

double SynthConfig::density_for(std::size_t k) const {
  if (density.empty()) return 0.02;
  if (density.size() == 1) return density[0];
  return density.at(k);
}

void SynthConfig::validate() const {
  if (n_users == 0 || n_items == 0 || n_behaviors == 0)
    throw std::invalid_argument("SynthConfig: M, N, K must be >= 1");
  if (correlation < -1.0 || correlation > 1.0)
    throw std::invalid_argument("SynthConfig: correlation must be in [-1, 1]");
  if (density.size() > 1 && density.size() != n_behaviors)
    throw std::invalid_argument("SynthConfig: density list must match behavior count");
  for (std::size_t k = 0; k < n_behaviors; ++k) {
    const double d = density_for(k);
    if (d <= 0.0 || d > 1.0)
      throw std::invalid_argument("SynthConfig: densities must lie in (0, 1]");
    if (d * static_cast<double>(n_users) * static_cast<double>(n_items) < 1.0)
      throw std::invalid_argument("SynthConfig: density too small to expect any interaction");
  }
}

MultiplexGraph synth_generate(const SynthConfig& c) {
  c.validate();
  const std::size_t M = c.n_users, N = c.n_items, K = c.n_behaviors;

  // latent preference scores; desk scale, the full M x N sweep is fine
  Rng factor_rng = Rng::stream(c.seed, "synth-factors");
  std::vector<double> uf(M * c.latent_dim), vf(N * c.latent_dim);
  for (double& x : uf) x = factor_rng.normal();
  for (double& x : vf) x = factor_rng.normal();

  std::vector<double> scores(M * N);
  for (std::size_t u = 0; u < M; ++u)
    for (std::size_t i = 0; i < N; ++i) {
      double s = 0.0;
      for (std::size_t f = 0; f < c.latent_dim; ++f)
        s += uf[u * c.latent_dim + f] * vf[i * c.latent_dim + f];
      scores[u * N + i] = s;
    }

  // target support = top-density quantile of the scores
  const double target_density = c.density_for(K - 1);
  const std::size_t want =
      std::max<std::size_t>(1, static_cast<std::size_t>(
                                   std::llround(target_density * static_cast<double>(M * N))));
  std::vector<std::size_t> order(M * N);
  std::iota(order.begin(), order.end(), 0);
  std::nth_element(order.begin(), order.begin() + (want - 1), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<char> target_mask(M * N, 0);
  for (std::size_t p = 0; p < want; ++p) target_mask[order[p]] = 1;

  MultiplexGraph g;
  g.n_users = M;
  g.n_items = N;
  g.interactions.resize(K);

  const double target_p = static_cast<double>(want) / static_cast<double>(M * N);

  // Fresh aux draws are preference-shaped: the acceptance rate scales
  // with the latent-score percentile (mean weight 1), the way auxiliary
  // interactions track genuine preferences without implying the target.
  // The draws stay independent of the target's support realization, so
  // correlation 0 still yields near-zero empirical Pearson.
  std::vector<double> pct(M * N);
  {
    std::vector<std::size_t> by_score(M * N);
    std::iota(by_score.begin(), by_score.end(), 0);
    std::sort(by_score.begin(), by_score.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    for (std::size_t r = 0; r < by_score.size(); ++r)
      pct[by_score[r]] = static_cast<double>(r + 1) / static_cast<double>(M * N);
  }

  for (std::size_t k = 0; k + 1 < K; ++k) {
    Rng rng = Rng::stream(c.seed, "synth-aux", k);
    const double pk = c.density_for(k);
    // fresh-draw rate chosen so the marginal density stays pk after the
    // copied target mass is accounted for
    const double rho = std::abs(c.correlation);
    const double q_pos =
        rho < 1.0 ? std::clamp((pk - rho * target_p) / (1.0 - rho), 0.0, 1.0) : 0.0;
    const double q_neg = target_p < 1.0 ? std::min(1.0, pk / (1.0 - target_p)) : 0.0;
    std::vector<Pair> pairs;
    for (std::size_t u = 0; u < M; ++u) {
      for (std::size_t i = 0; i < N; ++i) {
        const bool tgt = target_mask[u * N + i] != 0;
        const double w = 2.0 * pct[u * N + i];  // linear preference weight
        bool on;
        if (c.correlation >= 0.0) {
          // copy the target entry with prob rho, else draw fresh; with
          // equal densities the per-entry correlation is close to rho
          const bool mix = rng.uniform() < rho;
          on = mix ? tgt : (rng.uniform() < q_pos * w);
        } else {
          // anti-correlated branch avoids the target support
          const bool mix = rng.uniform() < rho;
          on = mix ? (!tgt && rng.uniform() < q_neg * w) : (rng.uniform() < pk * w);
        }
        if (on)
          pairs.push_back({static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(i)});
      }
    }
    g.interactions[k] = SparseMatrix::from_pairs(M, N, pairs);
  }

  std::vector<Pair> target_pairs;
  target_pairs.reserve(want);
  for (std::size_t u = 0; u < M; ++u)
    for (std::size_t i = 0; i < N; ++i)
      if (target_mask[u * N + i])
        target_pairs.push_back({static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(i)});
  g.interactions[K - 1] = SparseMatrix::from_pairs(M, N, target_pairs);
  return g;
}

std::map<std::string, std::uint64_t> label_cooccurrence(const MultiplexGraph& g) {
  const std::size_t K = g.n_behaviors();
  std::map<Pair, std::uint32_t> bits;  // (u,i) -> behavior bitmask
  for (std::size_t k = 0; k < K; ++k) {
    const SparseMatrix& m = g.interactions[k];
    for (std::size_t u = 0; u < m.rows(); ++u)
      for (std::uint32_t i : m.row_cols(u))
        bits[{static_cast<std::uint32_t>(u), i}] |= 1u << k;
  }
  std::map<std::string, std::uint64_t> counts;
  for (const auto& [pair, mask] : bits) {
    std::string pattern(K, '0');
    for (std::size_t k = 0; k < K; ++k)
      if (mask & (1u << k)) pattern[k] = '1';
    counts[pattern] += 1;
  }
  return counts;
}

}  // namespace cigf
