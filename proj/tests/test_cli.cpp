#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cigf/cli.hpp"

using namespace cigf;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

int run_cli(const std::vector<std::string>& args, std::string* out_text = nullptr,
            std::string* err_text = nullptr) {
  std::ostringstream out, err;
  const int rc = cli::run(args, out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return rc;
}

// tiny synthetic run configuration shared by the CLI tests
std::vector<std::string> base_args(const std::string& out_dir) {
  return {
      "--set", "synth.users=24",   "--set", "synth.items=30",
      "--set", "synth.density=0.15,0.15,0.1", "--set", "train.epochs=2",
      "--set", "train.batch=16",  "--set", "train.dim=4",
      "--set", "train.l2=0.0001", "--set", "eval.negatives=20",
      "--set", "out.dir=" + out_dir,
  };
}

}  // namespace

TEST_CASE("KvConfig: file parsing, overrides, canonical form") {
  const fs::path p = fs::temp_directory_path() / "cigf_cfg_test.txt";
  {
    std::ofstream f(p);
    f << "# comment line\n";
    f << "train.lr=0.5\n";
    f << "out.dir=somewhere\n";
  }
  cli::KvConfig cfg = cli::KvConfig::load(p);
  CHECK(cfg.get("train.lr") == "0.5");
  CHECK(cfg.get_double("train.lr") == 0.5);
  cfg.apply_override("train.lr=0.25");
  CHECK(cfg.get_double("train.lr") == 0.25);
  CHECK_THROWS(cfg.get("missing.key"));

  // the hash ignores out.dir so relocated runs compare equal
  cli::KvConfig a = cfg, b = cfg;
  b.values["out.dir"] = "elsewhere";
  CHECK(a.hash() == b.hash());
  b.values["train.lr"] = "0.5";
  CHECK(a.hash() != b.hash());
  fs::remove(p);
}

TEST_CASE("cli: unknown subcommand and unknown keys are config errors") {
  std::string err;
  CHECK(run_cli({"definitely-not-a-subcommand"}, nullptr, &err) == 1);

  TempDir dir("cigf_cli_unknown");
  auto args = base_args(dir.str());
  args.insert(args.begin(), "synth");
  args.push_back("--set");
  args.push_back("not.a.key=1");
  CHECK(run_cli(args, nullptr, &err) == 1);
  CHECK(err.find("not.a.key") != std::string::npos);
}

TEST_CASE("cli: synth is deterministic and writes a manifest") {
  TempDir a("cigf_cli_synth_a"), b("cigf_cli_synth_b");
  auto args_a = base_args(a.str());
  args_a.insert(args_a.begin(), "synth");
  auto args_b = base_args(b.str());
  args_b.insert(args_b.begin(), "synth");

  REQUIRE(run_cli(args_a) == 0);
  REQUIRE(run_cli(args_b) == 0);
  CHECK(slurp(a.path / "dataset.txt") == slurp(b.path / "dataset.txt"));
  CHECK(!slurp(a.path / "dataset.txt").empty());

  const std::string manifest = slurp(a.path / "manifest.txt");
  CHECK(manifest.find("_version=") != std::string::npos);
  CHECK(manifest.find("_subcommand=synth") != std::string::npos);
  CHECK(manifest.find("_config_hash=") != std::string::npos);
  CHECK(manifest.find("synth.users=24") != std::string::npos);
}

TEST_CASE("cli: train writes trace and timing, reruns are bitwise identical") {
  TempDir dir("cigf_cli_train");
  auto args = base_args(dir.str());
  args.insert(args.begin(), "train");

  REQUIRE(run_cli(args) == 0);
  const std::string first = slurp(dir.path / "trace.csv");
  CHECK(first.find("epoch,loss,hr10,ndcg10") == 0);
  CHECK(!slurp(dir.path / "timing.csv").empty());

  REQUIRE(run_cli(args) == 0);  // lock released, outputs replaced atomically
  CHECK(slurp(dir.path / "trace.csv") == first);
}

TEST_CASE("cli: train with lr=0 produces a constant loss column") {
  TempDir dir("cigf_cli_lr0");
  auto args = base_args(dir.str());
  args.insert(args.begin(), "train");
  args.push_back("--set");
  args.push_back("train.lr=0");
  REQUIRE(run_cli(args) == 0);

  std::istringstream trace(slurp(dir.path / "trace.csv"));
  std::string line;
  std::getline(trace, line);  // header
  std::string first_loss;
  while (std::getline(trace, line)) {
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    const std::string loss = line.substr(c1 + 1, c2 - c1 - 1);
    if (first_loss.empty())
      first_loss = loss;
    else
      CHECK(loss == first_loss);
  }
  CHECK(!first_loss.empty());
}

TEST_CASE("cli: train.l2 is required") {
  TempDir dir("cigf_cli_nol2");
  std::vector<std::string> args = {
      "train", "--set", "synth.users=10",  "--set", "synth.items=12",
      "--set", "train.epochs=1", "--set", "out.dir=" + dir.str(),
  };
  std::string err;
  CHECK(run_cli(args, nullptr, &err) == 1);
  CHECK(err.find("train.l2") != std::string::npos);
}

TEST_CASE("cli: ablate emits the four-variant comparison table") {
  TempDir dir("cigf_cli_ablate");
  auto args = base_args(dir.str());
  args.insert(args.begin(), "ablate");
  args.push_back("--set");
  args.push_back("train.epochs=1");
  REQUIRE(run_cli(args) == 0);

  std::istringstream table(slurp(dir.path / "ablation.csv"));
  std::string line;
  std::getline(table, line);
  CHECK(line == "variant,hr10,ndcg10");
  std::vector<std::string> names;
  while (std::getline(table, line))
    names.push_back(line.substr(0, line.find(',')));
  CHECK(names == std::vector<std::string>{"base", "wo_cigcn", "wo_mesi", "cigf"});
}

TEST_CASE("cli: cooccur and attention and eval write their reports") {
  TempDir dir("cigf_cli_reports");

  auto cooccur = base_args(dir.str() + "/cooccur");
  cooccur.insert(cooccur.begin(), "cooccur");
  REQUIRE(run_cli(cooccur) == 0);
  const std::string patterns = slurp(dir.path / "cooccur" / "cooccur.csv");
  CHECK(patterns.find("pattern,count") == 0);

  auto attention = base_args(dir.str() + "/attention");
  attention.insert(attention.begin(), "attention");
  REQUIRE(run_cli(attention) == 0);
  const std::string att = slurp(dir.path / "attention" / "attention.csv");
  CHECK(att.find("order,relation,avg_weight,rank") == 0);
  CHECK(att.find("V") != std::string::npos);  // K=3 alphabet

  auto eval = base_args(dir.str() + "/eval");
  eval.insert(eval.begin(), "eval");
  REQUIRE(run_cli(eval) == 0);
  CHECK(slurp(dir.path / "eval" / "metrics.csv").find("metric,value") == 0);
  CHECK(slurp(dir.path / "eval" / "ranks.csv").find("user,rank,candidates") == 0);
}

TEST_CASE("cli: conflict writes pair cosines, groups and expert utilization") {
  TempDir dir("cigf_cli_conflict");
  auto args = base_args(dir.str());
  args.insert(args.begin(), "conflict");
  args.push_back("--set");
  args.push_back("analysis.samples=10");
  REQUIRE(run_cli(args) == 0);
  CHECK(slurp(dir.path / "conflict_pairs.csv").find("pair,s,t,cosine") == 0);
  CHECK(slurp(dir.path / "groups.csv").find("group,lo,hi,count,hr10,ndcg10") == 0);
  CHECK(slurp(dir.path / "experts.csv").find("task,expert,avg_weight") == 0);
}

TEST_CASE("cli: lock file blocks concurrent runs into one directory") {
  TempDir dir("cigf_cli_lock");
  {
    std::ofstream lock(dir.path / ".cigf.lock");
  }
  auto args = base_args(dir.str());
  args.insert(args.begin(), "synth");
  std::string err;
  CHECK(run_cli(args, nullptr, &err) == 2);
  CHECK(err.find("locked") != std::string::npos);
}

TEST_CASE("cli: config file feeds a full train run") {
  TempDir dir("cigf_cli_cfgfile");
  const fs::path cfg_path = dir.path / "run.cfg";
  {
    std::ofstream f(cfg_path);
    f << "synth.users=16\nsynth.items=20\nsynth.density=0.2,0.2,0.15\n";
    f << "train.epochs=1\ntrain.batch=8\ntrain.dim=4\ntrain.l2=0.001\n";
    f << "eval.negatives=10\n";
    f << "out.dir=" << (dir.path / "run").string() << "\n";
  }
  CHECK(run_cli({"train", "--config", cfg_path.string()}) == 0);
  CHECK(!slurp(dir.path / "run" / "trace.csv").empty());
}
