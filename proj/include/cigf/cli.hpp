#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace cigf::cli {

inline constexpr const char* kVersion = "cigf 0.1.0";

// Flat key=value configuration with section prefixes (train.lr=0.001).
// CLI --set overrides file values; unknown keys are rejected.
struct KvConfig {
  std::map<std::string, std::string> values;

  static KvConfig load(const std::filesystem::path& path);
  void apply_override(const std::string& key_eq_value);

  bool has(const std::string& key) const { return values.count(key) != 0; }
  std::string get(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  // sorted key=value lines; the config hash is FNV-1a over these,
  // excluding out.dir so runs into different directories compare equal
  std::string canonical() const;
  std::uint64_t hash() const;
};

// Entry point shared by the binary and in-process tests. Exit codes:
// 0 ok, 1 config error, 2 runtime error, 3 divergence.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cigf::cli
