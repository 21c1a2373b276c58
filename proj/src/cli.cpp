#include "fedguard/cli.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>

#include "fedguard/config.hpp"
#include "fedguard/records.hpp"

namespace fedguard::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string iso_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return std::string(buf);
}

// Runs one parsed config and writes records/summary/manifest/images under
// out_dir. Returns the exit code.
int run_to_dir(const ExperimentConfig& cfg, const std::string& out_dir,
               metrics::Summary* summary_out = nullptr) {
  try {
    fs::create_directories(out_dir);

    harness::ExperimentResult result = harness::run_experiment(cfg);

    records::Header header;
    header.rule = config::rule_name(cfg.rule.name);
    header.attack = config::attack_name(cfg.attack.kind);
    header.attack_start = cfg.attack.start_round;
    header.rounds = cfg.rounds;
    header.config_hash = config::config_hash(cfg);

    const std::string records_path = (fs::path(out_dir) / "records.jsonl").string();
    records::write_records(records_path, header, result.records);

    const bool attacked = cfg.attack.kind != AttackKind::none;
    const int window_start = attacked ? cfg.attack.start_round : cfg.rounds;
    const metrics::Summary summary =
        metrics::summarize(result.records, window_start, cfg.rounds);
    const std::string summary_path = (fs::path(out_dir) / "summary.csv").string();
    records::write_text_file(summary_path, records::render_summary_csv(header.rule, summary));

    std::string images_dir;
    if (result.reference) {
      images_dir = (fs::path(out_dir) / "images").string();
      fs::create_directories(images_dir);
      records::export_pgm(*result.reference, (fs::path(images_dir) / "reference.pgm").string());
      for (std::size_t i = 0; i < result.last_generated.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "generated_%03zu.pgm", i);
        records::export_pgm(result.last_generated[i], (fs::path(images_dir) / name).string());
      }
    }

    json manifest;
    manifest["version"] = kVersion;
    manifest["config_hash"] = header.config_hash;
    manifest["started_at"] = iso_timestamp();
    manifest["records"] = "records.jsonl";
    manifest["summary"] = "summary.csv";
    manifest["images_dir"] = images_dir.empty() ? json(nullptr) : json("images");
    manifest["config"] = config::to_canonical_json(cfg);
    records::write_text_file((fs::path(out_dir) / "manifest.json").string(),
                             manifest.dump(2) + "\n");

    if (summary_out != nullptr) *summary_out = summary;
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

// Loads the config file, applies overrides, and parses. Throws ConfigError.
ExperimentConfig prepare_config(const std::string& path,
                                const std::vector<std::string>& overrides,
                                const std::optional<std::string>& out_dir,
                                const std::optional<std::uint64_t>& seed) {
  json doc = config::load_config_file(path);
  for (const std::string& o : overrides) config::apply_override(doc, o);
  if (seed) doc["seed"] = *seed;
  ExperimentConfig cfg = config::parse_config(doc);
  if (out_dir) cfg.out_dir = *out_dir;
  cfg.threads = resolve_threads(cfg.threads);
  return cfg;
}

// Parameter keys drop their dots; values only lose path separators, so a
// lambda sweep lands in "rule_lambda=0.5".
std::string sanitize_key(const std::string& s) {
  std::string out = s;
  for (char& c : out) {
    if (c == '.' || c == '/' || c == '\\') c = '_';
  }
  return out;
}

std::string sanitize_value(const std::string& s) {
  std::string out = s;
  for (char& c : out) {
    if (c == '/' || c == '\\') c = '_';
  }
  return out;
}

}  // namespace

int resolve_threads(int configured) {
  // FEDGUARD_THREADS, when set, bounds the worker count regardless of the
  // config; results are identical either way.
  if (const char* env = std::getenv("FEDGUARD_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || cap < 1 || cap > 1024) {
      throw ConfigError("config: FEDGUARD_THREADS must be a positive integer");
    }
    return static_cast<int>(cap);
  }
  return configured >= 1 ? configured : 1;
}

int cmd_run(const RunOptions& opts) {
  try {
    const ExperimentConfig cfg =
        prepare_config(opts.config_path, opts.overrides, opts.out_dir, opts.seed);
    metrics::Summary summary;
    const int rc = run_to_dir(cfg, cfg.out_dir, &summary);
    if (rc == kExitOk) {
      std::cout << "run complete: " << cfg.out_dir << "/records.jsonl ("
                << cfg.rounds << " rounds)\n";
    }
    return rc;
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  }
}

int cmd_sweep(const SweepOptions& opts) {
  try {
    if (opts.param.empty()) throw ConfigError("config: sweep requires --param");
    if (opts.values.empty()) throw ConfigError("config: sweep requires at least one value");

    const ExperimentConfig base =
        prepare_config(opts.config_path, opts.overrides, opts.out_dir, opts.seed);
    std::string csv = "value," + std::string("rule,mean_accuracy,min_accuracy,")
                      + "max_accuracy,final_accuracy,indicator_rate,mean_psnr,mean_ssim,lpips\n";

    for (std::size_t i = 0; i < opts.values.size(); ++i) {
      const std::string& value = opts.values[i];
      std::vector<std::string> overrides = opts.overrides;
      overrides.push_back(opts.param + "=" + value);
      ExperimentConfig cfg =
          prepare_config(opts.config_path, overrides, opts.out_dir, opts.seed);
      if (opts.reseed) {
        cfg.seed = rng::mix64(base.seed ^ rng::hash_tag("sweep-point") ^ i);
      }
      const std::string point_dir =
          (std::filesystem::path(base.out_dir) /
           (sanitize_key(opts.param) + "=" + sanitize_value(value)))
              .string();
      cfg.out_dir = point_dir;

      metrics::Summary summary;
      const int rc = run_to_dir(cfg, point_dir, &summary);
      if (rc != kExitOk) return rc;

      const std::string row = records::render_summary_csv(
          config::rule_name(cfg.rule.name), summary);
      // Append the data row (second line) of the per-point summary.
      const auto nl = row.find('\n');
      csv += value + "," + row.substr(nl + 1);
    }
    std::filesystem::create_directories(base.out_dir);
    const std::string sweep_path =
        (std::filesystem::path(base.out_dir) / "sweep_summary.csv").string();
    records::write_text_file(sweep_path, csv);
    std::cout << "sweep complete: " << sweep_path << "\n";
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_report(const ReportOptions& opts) {
  try {
    if (opts.records_paths.empty()) {
      std::cerr << "report: at least one records file is required\n";
      return kExitConfig;
    }
    std::vector<records::RecordsFile> runs;
    for (const std::string& path : opts.records_paths) {
      records::RecordsFile run = records::read_records(path);
      if (run.header.schema_version != records::kSchemaVersion) {
        std::cerr << "report: schema version mismatch in " << path << " (got "
                  << run.header.schema_version << ", want " << records::kSchemaVersion
                  << ")\n";
        return kExitConfig;
      }
      runs.push_back(std::move(run));
    }
    const std::string table = records::render_report_csv(runs);
    std::cout << table;
    if (opts.out_path) records::write_text_file(*opts.out_path, table);
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace fedguard::cli
