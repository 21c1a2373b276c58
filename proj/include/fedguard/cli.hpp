#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fedguard::cli {

inline constexpr const char* kVersion = "fedguard 0.1.0";

// Exit codes: 0 success, 1 runtime failure, 2 malformed config or arguments.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

struct RunOptions {
  std::string config_path;
  std::vector<std::string> overrides;       // repeated --set dotted.key=value
  std::optional<std::string> out_dir;       // --out
  std::optional<std::uint64_t> seed;        // --seed
};

struct SweepOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::string param;                 // dotted key to sweep
  std::vector<std::string> values;   // one experiment per value
  bool reseed = false;               // derive a distinct sub-seed per point
};

struct ReportOptions {
  std::vector<std::string> records_paths;
  std::optional<std::string> out_path;  // default: stdout only
};

int cmd_run(const RunOptions& opts);
int cmd_sweep(const SweepOptions& opts);
int cmd_report(const ReportOptions& opts);

// Worker-thread resolution: the config's request, capped by the
// FEDGUARD_THREADS environment variable when set.
int resolve_threads(int configured);

}  // namespace fedguard::cli
