#include "cigf/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "cigf/analysis.hpp"
#include "cigf/mbgraph.hpp"
#include "cigf/train.hpp"

namespace cigf::cli {

namespace {

namespace fs = std::filesystem;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct RuntimeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

const std::map<std::string, std::string>& default_config() {
  static const std::map<std::string, std::string> defaults = {
      {"data.path", ""},
      {"synth.users", "200"},
      {"synth.items", "300"},
      {"synth.behaviors", "3"},
      {"synth.density", "0.05,0.05,0.02"},
      {"synth.correlation", "0.7"},
      {"synth.seed", "1"},
      {"split.seed", "1"},
      {"train.lr", "0.001"},
      {"train.batch", "256"},
      {"train.dim", "16"},
      {"train.l2", ""},  // required for training runs, no claimed default
      {"train.negatives", "1"},
      {"train.epochs", "50"},
      {"train.seed", "1"},
      {"train.task_weights", ""},  // comma list; empty = all ones
      {"cigcn.layers", "2"},
      {"cigcn.heads", "1"},
      {"cigcn.aggregator", "lightgcn"},
      {"cigcn.leaky_slope", "0.2"},
      {"cigcn.attention", "node+behavior+layer"},
      {"cigcn.normalization", "symmetric"},
      {"cigcn.column_attention", "false"},
      {"cigcn.disable", "false"},
      {"head.kind", "mesi"},
      {"head.shared_gates", "false"},
      {"eval.negatives", "99"},
      {"eval.cutoff", "10"},
      {"eval.tiebreak", "index"},
      {"analysis.loss", "square"},
      {"analysis.match_degree", "0"},
      {"analysis.samples", "50"},
      {"out.dir", "out"},
  };
  return defaults;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------
// output directory plumbing
// ---------------------------------------------------------------------

class DirLock {
 public:
  explicit DirLock(const fs::path& dir) : path_(dir / ".cigf.lock") {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw RuntimeError("cannot create output directory " + dir.string());
    if (fs::exists(path_))
      throw RuntimeError("output directory is locked by another run: " + path_.string());
    std::ofstream f(path_);
    if (!f) throw RuntimeError("cannot create lock file " + path_.string());
  }
  ~DirLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  fs::path path_;
};

void atomic_write(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw RuntimeError("cannot write " + tmp.string());
    f << content;
    if (!f) throw RuntimeError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

// ---------------------------------------------------------------------
// config -> library structs
// ---------------------------------------------------------------------

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    out.push_back(std::stod(tok));
  }
  return out;
}

Aggregator parse_aggregator(const std::string& s) {
  if (s == "gcn") return Aggregator::GCN;
  if (s == "ngcf") return Aggregator::NGCF;
  if (s == "lr-gccf" || s == "lrgccf") return Aggregator::LRGCCF;
  if (s == "lightgcn") return Aggregator::LightGCN;
  throw ConfigError("unknown aggregator: " + s);
}

AttentionVariant parse_attention(const std::string& s) {
  if (s == "global") return AttentionVariant::Global;
  if (s == "node") return AttentionVariant::Node;
  if (s == "node+layer") return AttentionVariant::NodeLayer;
  if (s == "node+behavior") return AttentionVariant::NodeBehavior;
  if (s == "node+behavior+layer") return AttentionVariant::NodeBehaviorLayer;
  throw ConfigError("unknown attention variant: " + s);
}

Normalization parse_normalization(const std::string& s) {
  if (s == "none") return Normalization::None;
  if (s == "row") return Normalization::RowStochastic;
  if (s == "symmetric" || s == "sym") return Normalization::Symmetric;
  throw ConfigError("unknown normalization: " + s);
}

HeadKind parse_head(const std::string& s) {
  if (s == "mesi") return HeadKind::Mesi;
  if (s == "bilinear") return HeadKind::Bilinear;
  if (s == "shared-bottom") return HeadKind::SharedBottom;
  if (s == "mesi-same-input") return HeadKind::MesiSameInput;
  throw ConfigError("unknown head kind: " + s);
}

struct RunContext {
  KvConfig cfg;
  fs::path out_dir;
  std::ostream* out = nullptr;

  MultiplexGraph dataset() const {
    const std::string path = cfg.get("data.path");
    if (!path.empty()) return load_dataset(path);
    SynthConfig sc;
    sc.n_users = static_cast<std::size_t>(cfg.get_int("synth.users"));
    sc.n_items = static_cast<std::size_t>(cfg.get_int("synth.items"));
    sc.n_behaviors = static_cast<std::size_t>(cfg.get_int("synth.behaviors"));
    sc.density = parse_double_list(cfg.get("synth.density"));
    sc.correlation = cfg.get_double("synth.correlation");
    sc.seed = static_cast<std::uint64_t>(cfg.get_int("synth.seed"));
    return synth_generate(sc);
  }

  TrainConfig train_config() const {
    TrainConfig t;
    t.learning_rate = cfg.get_double("train.lr");
    t.batch_size = static_cast<std::size_t>(cfg.get_int("train.batch"));
    t.dim = static_cast<int>(cfg.get_int("train.dim"));
    if (cfg.get("train.l2").empty())
      throw ConfigError("train.l2 is required (no default is claimed)");
    t.l2 = cfg.get_double("train.l2");
    t.negatives_per_positive = static_cast<int>(cfg.get_int("train.negatives"));
    t.epochs = static_cast<int>(cfg.get_int("train.epochs"));
    t.seed = static_cast<std::uint64_t>(cfg.get_int("train.seed"));
    t.task_weights = parse_double_list(cfg.get("train.task_weights"));
    t.validate();
    return t;
  }

  CigcnConfig cigcn_config() const {
    CigcnConfig c;
    c.layers = static_cast<int>(cfg.get_int("cigcn.layers"));
    c.heads = static_cast<int>(cfg.get_int("cigcn.heads"));
    c.aggregator = parse_aggregator(cfg.get("cigcn.aggregator"));
    c.leaky_slope = cfg.get_double("cigcn.leaky_slope");
    c.attention = parse_attention(cfg.get("cigcn.attention"));
    c.normalization = parse_normalization(cfg.get("cigcn.normalization"));
    c.column_attention = cfg.get_bool("cigcn.column_attention");
    c.bypass_compression = cfg.get_bool("cigcn.disable");
    c.validate();
    return c;
  }

  EvalOptions eval_options() const {
    EvalOptions e;
    e.negatives = static_cast<std::size_t>(cfg.get_int("eval.negatives"));
    e.cutoff = static_cast<std::size_t>(cfg.get_int("eval.cutoff"));
    const std::string tb = cfg.get("eval.tiebreak");
    if (tb == "index")
      e.tiebreak = TieBreak::ByIndex;
    else if (tb == "random")
      e.tiebreak = TieBreak::RandomPermutation;
    else
      throw ConfigError("unknown tiebreak: " + tb);
    return e;
  }

  HeadKind head_kind() const { return parse_head(cfg.get("head.kind")); }

  void write_manifest(const std::string& subcommand) const {
    std::ostringstream m;
    m << "_version=" << kVersion << "\n";
    m << "_subcommand=" << subcommand << "\n";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(cfg.hash()));
    m << "_config_hash=" << buf << "\n";
    m << cfg.canonical();
    atomic_write(out_dir / "manifest.txt", m.str());
  }
};

// ---------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------

int cmd_synth(RunContext& ctx) {
  const MultiplexGraph g = ctx.dataset();
  std::ostringstream body;
  body << "#users=" << g.n_users << " items=" << g.n_items
       << " behaviors=" << g.n_behaviors() << "\n";
  for (std::size_t k = 0; k < g.n_behaviors(); ++k)
    for (std::size_t u = 0; u < g.n_users; ++u)
      for (std::uint32_t i : g.interactions[k].row_cols(u))
        body << u << " " << i << " " << k << "\n";
  atomic_write(ctx.out_dir / "dataset.txt", body.str());
  *ctx.out << "wrote " << (ctx.out_dir / "dataset.txt").string() << "\n";
  return 0;
}

int run_fit(RunContext& ctx, FitResult& result, SplitGraph& split,
            std::optional<HeadKind> head_override = {},
            std::optional<bool> disable_cigcn = {}) {
  const MultiplexGraph g = ctx.dataset();
  split = leave_one_out_split(g, static_cast<std::uint64_t>(ctx.cfg.get_int("split.seed")));
  CigcnConfig ccfg = ctx.cigcn_config();
  if (disable_cigcn) ccfg.bypass_compression = *disable_cigcn;
  const HeadKind head = head_override.value_or(ctx.head_kind());
  result = fit(split, ctx.train_config(), ccfg, head, ctx.eval_options(),
               ctx.cfg.get_bool("head.shared_gates"));
  return result.diverged ? 3 : 0;
}

std::string trace_csv(const FitResult& r) {
  std::ostringstream os;
  os << "epoch,loss,hr10,ndcg10\n";
  for (const EpochRecord& e : r.trace)
    os << e.epoch << "," << format_double(e.loss) << "," << format_double(e.hr10)
       << "," << format_double(e.ndcg10) << "\n";
  return os.str();
}

std::string timing_csv(const FitResult& r) {
  std::ostringstream os;
  os << "epoch,seconds\n";
  for (const EpochRecord& e : r.trace)
    os << e.epoch << "," << format_double(e.seconds) << "\n";
  return os.str();
}

int cmd_train(RunContext& ctx) {
  FitResult result;
  SplitGraph split;
  const int rc = run_fit(ctx, result, split);
  atomic_write(ctx.out_dir / "trace.csv", trace_csv(result));
  atomic_write(ctx.out_dir / "timing.csv", timing_csv(result));
  if (rc != 0) {
    *ctx.out << "diverged: " << result.message << "\n";
    return rc;
  }
  if (!result.trace.empty())
    *ctx.out << "final loss " << format_double(result.trace.back().loss) << " hr10 "
             << result.trace.back().hr10 << " ndcg10 " << result.trace.back().ndcg10
             << "\n";
  return 0;
}

int cmd_timing(RunContext& ctx) {
  FitResult result;
  SplitGraph split;
  const int rc = run_fit(ctx, result, split);
  atomic_write(ctx.out_dir / "timing.csv", timing_csv(result));
  if (rc != 0) return rc;
  double total = 0.0;
  for (const EpochRecord& e : result.trace) total += e.seconds;
  if (!result.trace.empty())
    *ctx.out << "mean seconds/epoch "
             << format_double(total / static_cast<double>(result.trace.size())) << "\n";
  return 0;
}

int cmd_eval(RunContext& ctx) {
  FitResult result;
  SplitGraph split;
  const int rc = run_fit(ctx, result, split);
  if (rc != 0) return rc;

  const GraphMatrices gm =
      GraphMatrices::build(split.train, ctx.cigcn_config().normalization);
  const Representations reps =
      propagate(gm, result.params.stacked_embeddings(), result.params.attention,
                result.params.transforms, ctx.cigcn_config());
  const RankingResults ranks = evaluate(split, reps, result.params.head,
                                        ctx.eval_options());

  std::ostringstream ranks_os;
  ranks_os << "user,rank,candidates\n";
  for (const RankEntry& r : ranks)
    ranks_os << r.user << "," << r.rank << "," << r.candidates << "\n";
  atomic_write(ctx.out_dir / "ranks.csv", ranks_os.str());

  const std::size_t cutoff = ctx.eval_options().cutoff;
  std::ostringstream metrics;
  metrics << "metric,value\n";
  metrics << "hr" << cutoff << "," << format_double(hr_at_n(ranks, cutoff)) << "\n";
  metrics << "ndcg" << cutoff << "," << format_double(ndcg_at_n(ranks, cutoff)) << "\n";
  atomic_write(ctx.out_dir / "metrics.csv", metrics.str());
  *ctx.out << "hr" << cutoff << " " << hr_at_n(ranks, cutoff) << " ndcg" << cutoff
           << " " << ndcg_at_n(ranks, cutoff) << "\n";
  return 0;
}

int cmd_ablate(RunContext& ctx) {
  struct Variant {
    const char* name;
    bool disable_cigcn;
    HeadKind head;
  };
  const HeadKind full_head = ctx.head_kind();
  const std::vector<Variant> variants = {
      {"base", true, HeadKind::Bilinear},
      {"wo_cigcn", true, full_head},
      {"wo_mesi", false, HeadKind::Bilinear},
      {"cigf", false, full_head},
  };
  std::ostringstream os;
  os << "variant,hr10,ndcg10\n";
  for (const Variant& v : variants) {
    FitResult result;
    SplitGraph split;
    const int rc = run_fit(ctx, result, split, v.head, v.disable_cigcn);
    if (rc != 0) {
      *ctx.out << "variant " << v.name << " diverged\n";
      return rc;
    }
    const EpochRecord& last = result.trace.back();
    os << v.name << "," << format_double(last.hr10) << ","
       << format_double(last.ndcg10) << "\n";
    *ctx.out << v.name << " hr10 " << last.hr10 << " ndcg10 " << last.ndcg10 << "\n";
  }
  atomic_write(ctx.out_dir / "ablation.csv", os.str());
  return 0;
}

int cmd_attention(RunContext& ctx) {
  FitResult result;
  SplitGraph split;
  const int rc = run_fit(ctx, result, split);
  if (rc != 0) return rc;
  const GraphMatrices gm =
      GraphMatrices::build(split.train, ctx.cigcn_config().normalization);
  const std::vector<RelationScore> report =
      attention_report(gm, result.params.stacked_embeddings(), result.params.attention,
                       ctx.cigcn_config());
  std::ostringstream os;
  os << "order,relation,avg_weight,rank\n";
  for (const RelationScore& r : report)
    os << r.order << "," << r.relation << "," << format_double(r.score) << "," << r.rank
       << "\n";
  atomic_write(ctx.out_dir / "attention.csv", os.str());
  *ctx.out << "wrote " << (ctx.out_dir / "attention.csv").string() << "\n";
  return 0;
}

int cmd_conflict(RunContext& ctx) {
  FitResult result;
  SplitGraph split;
  const int rc = run_fit(ctx, result, split);
  if (rc != 0) return rc;

  const CigcnConfig ccfg = ctx.cigcn_config();
  const GraphMatrices gm = GraphMatrices::build(split.train, ccfg.normalization);
  const Representations reps =
      propagate(gm, result.params.stacked_embeddings(), result.params.attention,
                result.params.transforms, ccfg);
  const MultiplexGraph& g = split.train;
  const std::size_t K = g.n_behaviors();

  const ConflictLoss loss_kind = ctx.cfg.get("analysis.loss") == "logistic"
                                     ? ConflictLoss::Logistic
                                     : ConflictLoss::Square;

  // average pairwise cosines over sampled interacting (u, i) pairs
  const std::size_t samples =
      static_cast<std::size_t>(ctx.cfg.get_int("analysis.samples"));
  Rng rng = Rng::stream(split.seed, "conflict");
  std::vector<std::vector<double>> cosine_sums(K, std::vector<double>(K, 0.0));
  std::vector<std::vector<std::size_t>> cosine_counts(K, std::vector<std::size_t>(K, 0));
  for (std::size_t s = 0; s < samples; ++s) {
    const auto u = static_cast<std::uint32_t>(rng.below(g.n_users));
    const auto i = static_cast<std::uint32_t>(rng.below(g.n_items));
    std::vector<double> labels(K, 0.0);
    for (std::size_t k = 0; k < K; ++k) labels[k] = g.interactions[k].at(u, i);
    const ConflictReport rep =
        conflict_report(result.params.head, reps, u, i, labels, loss_kind);
    for (const auto& pc : rep.cosines)
      if (pc.cosine) {
        cosine_sums[pc.s][pc.t] += *pc.cosine;
        cosine_counts[pc.s][pc.t] += 1;
      }
  }
  std::ostringstream pairs_os;
  pairs_os << "pair,s,t,cosine\n";
  for (std::size_t s = 0; s < K; ++s)
    for (std::size_t t = s + 1; t < K; ++t)
      if (cosine_counts[s][t] > 0)
        pairs_os << s << "-" << t << "," << s << "," << t << ","
                 << format_double(cosine_sums[s][t] /
                                  static_cast<double>(cosine_counts[s][t]))
                 << "\n";
  atomic_write(ctx.out_dir / "conflict_pairs.csv", pairs_os.str());

  // group sweep: per-group metrics on the trained model
  const UserGroups groups = group_users(
      g, {}, static_cast<std::size_t>(ctx.cfg.get_int("analysis.match_degree")));
  const RankingResults all_ranks =
      evaluate(split, reps, result.params.head, ctx.eval_options());
  std::map<std::uint32_t, const RankEntry*> by_user;
  for (const RankEntry& r : all_ranks) by_user[r.user] = &r;

  std::ostringstream groups_os;
  groups_os << "group,lo,hi,count,hr10,ndcg10\n";
  for (std::size_t gi = 0; gi < groups.groups.size(); ++gi) {
    const double lo = gi == 0 ? -1.0 : groups.boundaries[gi - 1];
    const double hi = gi == groups.boundaries.size() ? 1.0 : groups.boundaries[gi];
    RankingResults members;
    for (std::uint32_t u : groups.groups[gi]) {
      const auto it = by_user.find(u);
      if (it != by_user.end()) members.push_back(*it->second);
    }
    groups_os << gi << "," << format_double(lo) << "," << format_double(hi) << ","
              << members.size() << ",";
    if (members.empty()) {
      groups_os << "," << "\n";
    } else {
      groups_os << format_double(hr_at_n(members, ctx.eval_options().cutoff)) << ","
                << format_double(ndcg_at_n(members, ctx.eval_options().cutoff)) << "\n";
    }
  }
  atomic_write(ctx.out_dir / "groups.csv", groups_os.str());

  // expert utilization for the target task (gate-based heads only)
  if (result.params.head.kind == HeadKind::Mesi ||
      result.params.head.kind == HeadKind::MesiSameInput) {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
    for (const auto& [u, i] : split.test_positives) pairs.push_back({u, i});
    if (!pairs.empty()) {
      const UtilizationReport rep = expert_utilization(
          reps, result.params.head, pairs, g.target_index());
      std::ostringstream os;
      os << "task,expert,avg_weight\n";
      for (std::size_t j = 0; j < rep.avg_gate.size(); ++j)
        os << g.target_index() << "," << j << "," << format_double(rep.avg_gate[j])
           << "\n";
      os << g.target_index() << ",entropy," << format_double(rep.entropy) << "\n";
      atomic_write(ctx.out_dir / "experts.csv", os.str());
    }
  }
  *ctx.out << "wrote conflict_pairs.csv, groups.csv\n";
  return 0;
}

int cmd_cooccur(RunContext& ctx) {
  const MultiplexGraph g = ctx.dataset();
  const auto counts = label_cooccurrence(g);
  std::ostringstream os;
  os << "pattern,count\n";
  for (const auto& [pattern, count] : counts) os << pattern << "," << count << "\n";
  atomic_write(ctx.out_dir / "cooccur.csv", os.str());
  *ctx.out << "wrote " << (ctx.out_dir / "cooccur.csv").string() << "\n";
  return 0;
}

}  // namespace

KvConfig KvConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  KvConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path.string() + ":" + std::to_string(line_no) +
                        ": expected key=value");
    cfg.values[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return cfg;
}

void KvConfig::apply_override(const std::string& key_eq_value) {
  const std::size_t eq = key_eq_value.find('=');
  if (eq == std::string::npos)
    throw ConfigError("--set expects key=value, got " + key_eq_value);
  values[key_eq_value.substr(0, eq)] = key_eq_value.substr(eq + 1);
}

std::string KvConfig::get(const std::string& key) const {
  const auto it = values.find(key);
  if (it == values.end()) throw ConfigError("missing config key " + key);
  return it->second;
}

double KvConfig::get_double(const std::string& key) const {
  try {
    return std::stod(get(key));
  } catch (const std::logic_error&) {
    throw ConfigError("config key " + key + " is not a number");
  }
}

std::int64_t KvConfig::get_int(const std::string& key) const {
  try {
    return std::stoll(get(key));
  } catch (const std::logic_error&) {
    throw ConfigError("config key " + key + " is not an integer");
  }
}

bool KvConfig::get_bool(const std::string& key) const {
  const std::string v = get(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key " + key + " is not a boolean");
}

std::string KvConfig::canonical() const {
  std::ostringstream os;
  for (const auto& [k, v] : values) os << k << "=" << v << "\n";
  return os.str();
}

std::uint64_t KvConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [k, v] : values) {
    if (k == "out.dir") continue;
    feed(k);
    feed("=");
    feed(v);
    feed("\n");
  }
  return h;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Compressed interaction graph framework for multi-behavior "
               "recommendation"};
  app.set_version_flag("--version", kVersion);
  app.fallthrough(true);

  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "key=value config file");
  app.add_option("--set", overrides, "override a config value (key=value)");

  const std::vector<std::string> subcommands = {"train",     "eval",    "ablate",
                                                "attention", "conflict", "cooccur",
                                                "synth",     "timing"};
  for (const std::string& name : subcommands) app.add_subcommand(name);
  app.require_subcommand(0, 1);

  std::vector<const char*> argv;
  argv.push_back("cigf");
  for (const std::string& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  const auto parsed = app.get_subcommands();
  if (parsed.empty()) {
    err << "error: expected a subcommand (train, eval, ablate, attention, "
           "conflict, cooccur, synth, timing)\n";
    return 1;
  }
  const std::string subcommand = parsed[0]->get_name();

  try {
    KvConfig cfg;
    cfg.values = default_config();
    if (!config_path.empty()) {
      const KvConfig file_cfg = KvConfig::load(config_path);
      for (const auto& [k, v] : file_cfg.values) {
        if (!cfg.values.count(k)) throw ConfigError("unknown config key " + k);
        cfg.values[k] = v;
      }
    }
    for (const std::string& o : overrides) {
      KvConfig tmp;
      tmp.apply_override(o);
      for (const auto& [k, v] : tmp.values) {
        if (!cfg.values.count(k)) throw ConfigError("unknown config key " + k);
        cfg.values[k] = v;
      }
    }

    if (const char* threads = std::getenv("CIGF_THREADS"))
      set_max_threads(std::atoi(threads));

    RunContext ctx;
    ctx.cfg = cfg;
    ctx.out_dir = cfg.get("out.dir");
    ctx.out = &out;

    const DirLock lock(ctx.out_dir);
    ctx.write_manifest(subcommand);

    if (subcommand == "synth") return cmd_synth(ctx);
    if (subcommand == "train") return cmd_train(ctx);
    if (subcommand == "eval") return cmd_eval(ctx);
    if (subcommand == "ablate") return cmd_ablate(ctx);
    if (subcommand == "attention") return cmd_attention(ctx);
    if (subcommand == "conflict") return cmd_conflict(ctx);
    if (subcommand == "cooccur") return cmd_cooccur(ctx);
    if (subcommand == "timing") return cmd_timing(ctx);
    err << "error: unknown subcommand " << subcommand << "\n";
    return 1;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace cigf::cli
