#include <CLI11.hpp>

#include <sstream>

#include "fedguard/cli.hpp"

namespace {

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated-learning robustness simulator"};
  app.set_version_flag("--version", fedguard::cli::kVersion);
  app.require_subcommand(1);

  fedguard::cli::RunOptions run_opts;
  auto* run = app.add_subcommand("run", "Run one experiment from a config file");
  run->add_option("--config", run_opts.config_path, "JSON experiment config")->required();
  run->add_option("--set", run_opts.overrides, "Override, dotted.key=value (repeatable)");
  std::string run_out, sweep_out;
  std::uint64_t run_seed = 0, sweep_seed = 0;
  auto* run_out_opt = run->add_option("--out", run_out, "Output directory");
  auto* run_seed_opt = run->add_option("--seed", run_seed, "Master seed override");

  fedguard::cli::SweepOptions sweep_opts;
  std::string values_csv;
  auto* sweep = app.add_subcommand("sweep", "Run one experiment per parameter value");
  sweep->add_option("--config", sweep_opts.config_path, "JSON experiment config")->required();
  sweep->add_option("--set", sweep_opts.overrides, "Override, dotted.key=value (repeatable)");
  sweep->add_option("--param", sweep_opts.param, "Dotted key to sweep, e.g. rule.lambda")
      ->required();
  sweep->add_option("--values", values_csv, "Comma-separated values")->required();
  sweep->add_flag("--reseed", sweep_opts.reseed, "Derive a distinct sub-seed per point");
  auto* sweep_out_opt = sweep->add_option("--out", sweep_out, "Output directory");
  auto* sweep_seed_opt = sweep->add_option("--seed", sweep_seed, "Master seed override");

  fedguard::cli::ReportOptions report_opts;
  std::string report_out;
  auto* report = app.add_subcommand("report", "Join runs into one table");
  report->add_option("records", report_opts.records_paths, "records.jsonl files")
      ->required();
  auto* report_out_opt = report->add_option("--out", report_out, "Write the table here too");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return fedguard::cli::kExitConfig;
  }

  if (run->parsed()) {
    if (*run_out_opt) run_opts.out_dir = run_out;
    if (*run_seed_opt) run_opts.seed = run_seed;
    return fedguard::cli::cmd_run(run_opts);
  }
  if (sweep->parsed()) {
    if (*sweep_out_opt) sweep_opts.out_dir = sweep_out;
    if (*sweep_seed_opt) sweep_opts.seed = sweep_seed;
    sweep_opts.values = split_csv(values_csv);
    return fedguard::cli::cmd_sweep(sweep_opts);
  }
  if (report->parsed()) {
    if (*report_out_opt) report_opts.out_path = report_out;
    return fedguard::cli::cmd_report(report_opts);
  }
  return fedguard::cli::kExitConfig;
}
