// Acceptance suite: one self-contained check per criterion, one line each.
// Run with --only N to execute a single criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "fedguard/aggregation.hpp"
#include "fedguard/cli.hpp"
#include "fedguard/harness.hpp"
#include "fedguard/metrics.hpp"
#include "fedguard/models.hpp"
#include "fedguard/records.hpp"

using namespace fedguard;
namespace fs = std::filesystem;

namespace {

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  bool (*run)();
};

ParamVector pv(std::vector<double> v) { return ParamVector(std::move(v)); }

std::vector<ClientUpdate> batch_of(std::vector<std::vector<double>> deltas) {
  std::vector<ClientUpdate> out;
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    out.push_back(ClientUpdate{static_cast<int>(i), 0, pv(deltas[i])});
  }
  return out;
}

std::vector<ParamVector> random_vectors(rng::Stream& rng, int n, int dim) {
  std::vector<ParamVector> out;
  for (int i = 0; i < n; ++i) {
    std::vector<double> v(static_cast<std::size_t>(dim));
    for (double& x : v) x = rng.uniform(-5.0, 5.0);
    out.push_back(pv(std::move(v)));
  }
  return out;
}

bool check(bool ok, const char* what) {
  if (!ok) std::printf("       failed: %s\n", what);
  return ok;
}

// ---------------------------------------------------------------- criterion 1

bool c1_inferguard_exactness() {
  bool ok = true;
  const auto out = agg::infer_guard(batch_of({{1, 0}, {0, 1}, {10, 10}}), 2.0);
  ok &= check(out.anchor && *out.anchor == pv({1, 1}), "anchor must be [1,1]");
  ok &= check(out.accepted == std::vector<int>{0, 1}, "H must be {0,1}");
  ok &= check(out.aggregate == pv({0.5, 0.5}), "aggregate must be [0.5,0.5]");

  const auto fb = agg::infer_guard(batch_of({{1, 1}, {-1, -1}}), 2.0);
  ok &= check(fb.accepted == std::vector<int>{0}, "fallback must select client 0");
  ok &= check(fb.aggregate == pv({1, 1}), "fallback aggregate must be [1,1]");
  return ok;
}

// ---------------------------------------------------------------- criterion 2

bool c2_median_trim_oracles() {
  rng::Stream rng(1002);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(rng.next_below(9));
    const int dim = 1 + static_cast<int>(rng.next_below(16));
    const auto batch = random_vectors(rng, n, dim);

    // Median oracle: per-coordinate full sort.
    std::vector<double> want(static_cast<std::size_t>(dim));
    for (int j = 0; j < dim; ++j) {
      std::vector<double> col;
      for (const auto& u : batch) col.push_back(u[static_cast<std::size_t>(j)]);
      std::sort(col.begin(), col.end());
      want[static_cast<std::size_t>(j)] =
          n % 2 == 1 ? col[static_cast<std::size_t>(n / 2)]
                     : (col[static_cast<std::size_t>(n / 2 - 1)] +
                        col[static_cast<std::size_t>(n / 2)]) /
                           2.0;
    }
    if (!(vecmath::coordinate_median(batch) == pv(want))) {
      return check(false, "median diverged from the sort oracle");
    }

    const std::size_t k = rng.next_below(static_cast<std::uint64_t>((n + 1) / 2));
    if (n > static_cast<int>(2 * k)) {
      // Oracle: full (value, index) sort picks the dropped entries; survivors
      // are then summed in input order, which is the contract.
      std::vector<double> twant(static_cast<std::size_t>(dim));
      for (int j = 0; j < dim; ++j) {
        std::vector<std::pair<double, std::size_t>> col;
        for (std::size_t i = 0; i < batch.size(); ++i) {
          col.emplace_back(batch[i][static_cast<std::size_t>(j)], i);
        }
        std::sort(col.begin(), col.end());
        std::vector<char> dropped(batch.size(), 0);
        for (std::size_t i = 0; i < k; ++i) {
          dropped[col[i].second] = 1;
          dropped[col[col.size() - 1 - i].second] = 1;
        }
        double acc = 0.0;
        for (std::size_t i = 0; i < batch.size(); ++i) {
          if (!dropped[i]) acc += batch[i][static_cast<std::size_t>(j)];
        }
        twant[static_cast<std::size_t>(j)] =
            acc / static_cast<double>(static_cast<std::size_t>(n) - 2 * k);
      }
      if (!(vecmath::coordinate_trimmed_mean(batch, k) == pv(twant))) {
        return check(false, "trimmed mean diverged from the sort oracle");
      }
    }
  }
  return true;
}

// ---------------------------------------------------------------- criterion 3

bool c3_filter_monotonicity() {
  rng::Stream rng(1003);
  const std::vector<double> grid = {0.5, 1.0, 2.0, 2.5, 3.0, 5.0, 7.0, 10.0};
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng.next_below(9));
    const int dim = 1 + static_cast<int>(rng.next_below(6));
    auto vecs = random_vectors(rng, n, dim);
    if (trial % 5 == 0) {
      // Opposing pair forces a zero anchor and the fallback path.
      for (int j = 0; j < dim; ++j) {
        vecs[1][static_cast<std::size_t>(j)] = -vecs[0][static_cast<std::size_t>(j)];
      }
    }
    std::vector<ClientUpdate> updates;
    for (int i = 0; i < n; ++i) updates.push_back(ClientUpdate{i, 0, vecs[static_cast<std::size_t>(i)]});

    std::set<int> prev;
    for (double lambda : grid) {
      const auto out = agg::infer_guard(updates, lambda);
      std::set<int> cur(out.accepted.begin(), out.accepted.end());
      if (!std::includes(cur.begin(), cur.end(), prev.begin(), prev.end())) {
        return check(false, "accepted set shrank as lambda grew");
      }
      prev = cur;
    }
  }
  return true;
}

// ---------------------------------------------------------------- criterion 4

bool c4_krum_bulyan_oracles() {
  rng::Stream rng(1004);
  int done = 0;
  while (done < 500) {
    const int n = 3 + static_cast<int>(rng.next_below(5));
    const int f = static_cast<int>(rng.next_below(3));
    if (n < f + 3) continue;
    const int dim = 1 + static_cast<int>(rng.next_below(4));
    const int m = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n - f - 2)));
    auto vecs = random_vectors(rng, n, dim);
    std::vector<ClientUpdate> updates;
    for (int i = 0; i < n; ++i) updates.push_back(ClientUpdate{i, 0, vecs[static_cast<std::size_t>(i)]});

    // Exhaustive score table.
    std::vector<std::pair<double, int>> scored;
    for (int i = 0; i < n; ++i) {
      std::vector<double> row;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        const double d = vecmath::l2_distance(vecs[static_cast<std::size_t>(i)],
                                              vecs[static_cast<std::size_t>(j)]);
        row.push_back(d * d);
      }
      std::sort(row.begin(), row.end());
      double acc = 0.0;
      for (int t = 0; t < n - f - 2; ++t) acc += row[static_cast<std::size_t>(t)];
      scored.emplace_back(acc, i);
    }
    std::sort(scored.begin(), scored.end());
    std::vector<int> want;
    for (int t = 0; t < m; ++t) want.push_back(scored[static_cast<std::size_t>(t)].second);
    std::sort(want.begin(), want.end());
    if (agg::multi_krum(updates, f, m).accepted != want) {
      return check(false, "multi_krum selection diverged from the oracle");
    }
    ++done;
  }

  // Bulyan at its smallest legal scale: n = 7, f = 1.
  for (int trial = 0; trial < 500; ++trial) {
    const int dim = 1 + static_cast<int>(rng.next_below(4));
    auto vecs = random_vectors(rng, 7, dim);
    std::vector<ClientUpdate> updates;
    for (int i = 0; i < 7; ++i) updates.push_back(ClientUpdate{i, 0, vecs[static_cast<std::size_t>(i)]});

    std::vector<int> alive = {0, 1, 2, 3, 4, 5, 6};
    std::vector<int> want;
    for (int pick = 0; pick < 5; ++pick) {
      const int nr = static_cast<int>(alive.size());
      double best_score = std::numeric_limits<double>::infinity();
      int best = -1;
      for (int i : alive) {
        std::vector<double> row;
        for (int j : alive) {
          if (j == i) continue;
          const double d = vecmath::l2_distance(vecs[static_cast<std::size_t>(i)],
                                                vecs[static_cast<std::size_t>(j)]);
          row.push_back(d * d);
        }
        std::sort(row.begin(), row.end());
        double acc = 0.0;
        for (int t = 0; t < std::max(nr - 3, 0); ++t) acc += row[static_cast<std::size_t>(t)];
        if (acc < best_score) {
          best_score = acc;
          best = i;
        }
      }
      want.push_back(best);
      alive.erase(std::find(alive.begin(), alive.end(), best));
    }
    std::sort(want.begin(), want.end());
    if (agg::bulyan(updates, 1).accepted != want) {
      return check(false, "bulyan selection diverged from the oracle");
    }
  }
  return true;
}

// ---------------------------------------------------------------- criterion 5

bool c5_gradient_correctness() {
  rng::Stream rng(1005);
  for (int kind = 0; kind < 2; ++kind) {
    const ModelSpec spec = kind == 0 ? ModelSpec{ModelKind::logistic, 6, 0, 3}
                                     : ModelSpec{ModelKind::mlp, 5, 4, 3};
    for (int point = 0; point < 100; ++point) {
      const int batch = 2 + static_cast<int>(rng.next_below(5));
      std::vector<double> samples(static_cast<std::size_t>(batch) * static_cast<std::size_t>(spec.input_dim));
      std::vector<int> labels(static_cast<std::size_t>(batch));
      for (double& v : samples) v = rng.uniform();
      for (int& y : labels) y = static_cast<int>(rng.next_below(3));
      const auto data = make_dataset(std::move(samples), std::move(labels), 3, 1,
                                     spec.input_dim);
      std::vector<int> idx(static_cast<std::size_t>(batch));
      for (int i = 0; i < batch; ++i) idx[static_cast<std::size_t>(i)] = i;

      std::vector<double> p(spec.param_count());
      for (double& v : p) v = rng.uniform(-0.8, 0.8);
      const ParamVector params(p);

      const auto grad = models::backward(spec, params, data, idx);
      const double h = 1e-5;
      double err2 = 0.0, ref2 = 0.0;
      for (std::size_t i = 0; i < params.dim(); ++i) {
        ParamVector plus = params, minus = params;
        plus[i] += h;
        minus[i] -= h;
        const double fd = (models::forward_loss(spec, plus, data, idx).loss -
                           models::forward_loss(spec, minus, data, idx).loss) /
                          (2.0 * h);
        const double d = grad[i] - fd;
        err2 += d * d;
        ref2 += fd * fd;
      }
      if (std::sqrt(err2) / std::max(std::sqrt(ref2), 1e-12) >= 1e-4) {
        return check(false, "analytic gradient disagreed with finite differences");
      }
    }
  }
  return true;
}

// ---------------------------------------------------------------- criterion 6

ExperimentConfig byzantine_task() {
  ExperimentConfig cfg;
  cfg.seed = 7;
  cfg.rounds = 150;
  cfg.eval_every = 10;
  cfg.n_clients = 10;
  cfg.malicious = {9};
  cfg.dataset.kind = DatasetConfig::Kind::synthetic;
  cfg.dataset.classes = 10;
  cfg.dataset.per_class_train = 100;
  cfg.dataset.per_class_test = 50;
  cfg.dataset.height = 4;
  cfg.dataset.width = 4;
  cfg.dataset.spread = 0.10;
  cfg.partition.mode = PartitionConfig::Mode::label_to_k;
  cfg.partition.k = 8;
  cfg.model_kind = ModelKind::logistic;
  cfg.train = TrainConfig{0.05, 32, 1};
  cfg.rule.name = RuleKind::fedavg;
  cfg.attack.kind = AttackKind::none;
  cfg.attack.start_round = 50;
  cfg.attack.scale = 10.0;
  return cfg;
}

bool c6_byzantine_convergence() {
  ExperimentConfig clean = byzantine_task();
  const auto fa_none = harness::run_experiment(clean);

  ExperimentConfig attacked = byzantine_task();
  attacked.attack.kind = AttackKind::sign_flip;
  const auto fa_atk = harness::run_experiment(attacked);

  ExperimentConfig guarded = attacked;
  guarded.rule.name = RuleKind::infer_guard;
  guarded.rule.lambda = 2.0;
  const auto ig_atk = harness::run_experiment(guarded);

  const double acc_clean = *fa_none.records.back().accuracy;
  const double acc_attacked = *fa_atk.records.back().accuracy;
  const double acc_guarded = *ig_atk.records.back().accuracy;

  int post = 0, hits = 0;
  for (const auto& rec : ig_atk.records) {
    if (rec.round < 50) continue;
    ++post;
    hits += rec.indicator;
  }
  const double clean_rate = 1.0 - static_cast<double>(hits) / post;

  std::printf("       fedavg none=%.3f attacked=%.3f | inferguard attacked=%.3f | "
              "indicator clean rate=%.3f\n",
              acc_clean, acc_attacked, acc_guarded, clean_rate);
  bool ok = true;
  ok &= check(std::fabs(acc_guarded - acc_clean) <= 0.02,
              "(a) guarded accuracy within 0.02 of the no-attack run");
  ok &= check(acc_clean - acc_attacked >= 0.10,
              "(b) unguarded accuracy at least 0.10 worse under attack");
  ok &= check(clean_rate >= 0.95, "(c) indicator zero in at least 95% of attack rounds");
  return ok;
}

// ---------------------------------------------------------------- criterion 7

bool c7_determinism_across_threads() {
  const auto dir = fs::temp_directory_path() / "fedguard_acceptance_c7";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto config_path = (dir / "config.json").string();
  {
    std::ofstream out(config_path);
    out << R"({
      "seed": 21,
      "rounds": 40,
      "eval_every": 10,
      "n_clients": 10,
      "malicious": [9],
      "dataset": {"kind": "synthetic", "classes": 6, "per_class_train": 60,
                  "per_class_test": 20, "height": 4, "width": 4, "spread": 0.12},
      "partition": {"mode": "label_to_k", "k": 5},
      "rule": {"name": "infer_guard", "lambda": 2.0,
               "post": [{"kind": "dp", "clip": 1.0, "sigma": 0.01}]},
      "attack": {"kind": "sign_flip", "start_round": 10, "scale": 10.0}
    })";
  }

  auto run_with_threads = [&](const char* threads, const std::string& out_dir) {
    setenv("FEDGUARD_THREADS", threads, 1);
    cli::RunOptions opts;
    opts.config_path = config_path;
    opts.out_dir = out_dir;
    const int rc = cli::cmd_run(opts);
    unsetenv("FEDGUARD_THREADS");
    return rc;
  };

  bool ok = true;
  ok &= check(run_with_threads("1", (dir / "t1").string()) == 0, "single-thread run");
  ok &= check(run_with_threads("4", (dir / "t4").string()) == 0, "four-thread run");
  ok &= check(run_with_threads("1", (dir / "t1b").string()) == 0, "second execution");
  if (!ok) return false;

  auto slurp = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
  };
  const auto a = slurp((dir / "t1" / "records.jsonl").string());
  const auto b = slurp((dir / "t4" / "records.jsonl").string());
  const auto c = slurp((dir / "t1b" / "records.jsonl").string());
  ok &= check(!a.empty(), "records written");
  ok &= check(a == b, "records byte-identical across FEDGUARD_THREADS 1 vs 4");
  ok &= check(a == c, "records byte-identical across executions");
  ok &= check(slurp((dir / "t1" / "summary.csv").string()) ==
                  slurp((dir / "t4" / "summary.csv").string()),
              "summary byte-identical across thread counts");
  return ok;
}

// ---------------------------------------------------------------- criterion 8

bool c8_metric_sanity() {
  rng::Stream rng(1008);
  std::vector<double> px(12 * 12);
  for (double& v : px) v = rng.uniform();
  const auto x = make_image(px, 12, 12);

  bool ok = true;
  ok &= check(std::isinf(metrics::psnr(x, x)) && metrics::psnr(x, x) > 0,
              "psnr(x,x) must be +infinity");
  ok &= check(metrics::ssim(x, x) == 1.0, "ssim(x,x) must be exactly 1");

  std::vector<double> base(16 * 16);
  for (int r = 0; r < 16; ++r) {
    for (int c = 0; c < 16; ++c) base[static_cast<std::size_t>(r * 16 + c)] = 0.25 + 0.5 * (r + c) / 30.0;
  }
  const auto smooth = make_image(base, 16, 16);
  double prev = 1.0;
  for (double amp : {0.02, 0.05, 0.1, 0.2, 0.4}) {
    rng::Stream noise(2024);
    std::vector<double> noisy = base;
    for (double& v : noisy) v = std::clamp(v + amp * noise.gaussian(), 0.0, 1.0);
    const double s = metrics::ssim(smooth, make_image(noisy, 16, 16));
    ok &= check(s < prev, "ssim must fall at every noise amplitude");
    prev = s;
  }
  return ok;
}

// ---------------------------------------------------------------- criterion 9

ExperimentConfig gan_task(std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.seed = seed;
  cfg.rounds = 60;
  cfg.eval_every = 20;
  cfg.n_clients = 10;
  cfg.dataset.kind = DatasetConfig::Kind::synthetic;
  cfg.dataset.classes = 2;
  cfg.dataset.per_class_train = 300;
  cfg.dataset.per_class_test = 50;
  cfg.dataset.height = 8;
  cfg.dataset.width = 8;
  cfg.dataset.spread = 0.10;
  cfg.partition.mode = PartitionConfig::Mode::label_to_k;
  cfg.partition.k = 9;
  cfg.model_kind = ModelKind::logistic;
  cfg.train = TrainConfig{0.05, 32, 1};
  cfg.rule.name = RuleKind::fedavg;
  cfg.attack.kind = AttackKind::gan_infer;
  cfg.attack.start_round = 20;
  cfg.attack.target_label = 0;
  cfg.attack.latent_dim = 8;
  cfg.attack.gen_hidden = 16;
  cfg.attack.gen_steps = 5;
  cfg.attack.gen_lr = 0.1;
  cfg.attack.gen_batch = 8;
  cfg.attack.poison_copies = 4;
  return cfg;
}

// With k = 9 exactly one client lacks each label; that client attacks.
int attacker_for(const ExperimentConfig& cfg) {
  ExperimentConfig probe = cfg;
  probe.attack.kind = AttackKind::none;
  probe.rounds = 1;
  harness::Federation fed(probe);
  for (int c = 0; c < cfg.n_clients; ++c) {
    const auto& labels = fed.shards()[static_cast<std::size_t>(c)].labels;
    if (std::find(labels.begin(), labels.end(), cfg.attack.target_label) == labels.end()) {
      return c;
    }
  }
  return -1;
}

double tail_mean_ssim(const harness::ExperimentResult& result) {
  double acc = 0.0;
  int n = 0;
  for (const auto& rec : result.records) {
    if (rec.round >= 40 && rec.ssim) {
      acc += *rec.ssim;
      ++n;
    }
  }
  return n > 0 ? acc / n : -2.0;
}

bool c9_inference_attack_direction() {
  const std::uint64_t seeds[3] = {2, 5, 6};
  int wins = 0;
  for (std::uint64_t seed : seeds) {
    ExperimentConfig cfg = gan_task(seed);
    const int attacker = attacker_for(cfg);
    if (!check(attacker >= 0, "partition must leave one client without the target")) {
      return false;
    }
    cfg.malicious = {attacker};

    const auto fedavg_run = harness::run_experiment(cfg);
    ExperimentConfig guarded = cfg;
    guarded.rule.name = RuleKind::infer_guard;
    guarded.rule.lambda = 2.0;
    const auto guarded_run = harness::run_experiment(guarded);

    const double open_ssim = tail_mean_ssim(fedavg_run);
    const double guarded_ssim = tail_mean_ssim(guarded_run);
    const bool win = open_ssim - guarded_ssim >= 0.05;
    std::printf("       seed %llu: fedavg ssim=%.3f inferguard ssim=%.3f gap=%.3f %s\n",
                static_cast<unsigned long long>(seed), open_ssim, guarded_ssim,
                open_ssim - guarded_ssim, win ? "(win)" : "(miss)");
    wins += win ? 1 : 0;
  }
  return check(wins >= 2, "majority of seeds must show a gap of at least 0.05");
}

// --------------------------------------------------------------- criterion 10

bool c10_adaptive_linf_bound() {
  ExperimentConfig cfg = gan_task(2);
  cfg.rounds = 40;
  cfg.attack.kind = AttackKind::adaptive_gan_infer;
  cfg.attack.start_round = 10;
  cfg.attack.tau = 0.0016;
  const int attacker = attacker_for(cfg);
  if (!check(attacker >= 0, "partition must leave one client without the target")) {
    return false;
  }
  cfg.malicious = {attacker};

  const auto result = harness::run_experiment(cfg);
  int active = 0;
  for (const auto& rec : result.records) {
    if (!rec.attack_active) continue;
    ++active;
    if (!rec.malicious_linf || !(*rec.malicious_linf <= cfg.attack.tau)) {
      return check(false, "an emitted delta violated the l-infinity bound");
    }
  }
  return check(active == 30, "attack must be active for the expected rounds");
}

const Criterion kCriteria[] = {
    {1, "inferguard fixture exactness", 1.0, c1_inferguard_exactness},
    {2, "median/trim oracle equivalence", 5.0, c2_median_trim_oracles},
    {3, "filter-set monotonicity in lambda", 30.0, c3_filter_monotonicity},
    {4, "krum/bulyan oracle equivalence", 30.0, c4_krum_bulyan_oracles},
    {5, "gradient vs finite differences", 10.0, c5_gradient_correctness},
    {6, "byzantine convergence under sign flip", 60.0, c6_byzantine_convergence},
    {7, "byte-identical records across threads", 30.0, c7_determinism_across_threads},
    {8, "psnr/ssim null-case and noise monotonicity", 30.0, c8_metric_sanity},
    {9, "inference-attack ssim ordering", 300.0, c9_inference_attack_direction},
    {10, "adaptive attack l-infinity bound", 60.0, c10_adaptive_linf_bound},
};

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
      only = std::atoi(argv[i + 1]);
      ++i;
    }
  }

  int failures = 0;
  for (const Criterion& c : kCriteria) {
    if (only != 0 && c.id != only) continue;
    const auto start = std::chrono::steady_clock::now();
    bool ok = false;
    try {
      ok = c.run();
    } catch (const std::exception& e) {
      std::printf("       exception: %s\n", e.what());
      ok = false;
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (seconds > c.budget_seconds) {
      std::printf("       over budget: %.2fs > %.0fs\n", seconds, c.budget_seconds);
      ok = false;
    }
    std::printf("[%s] C%-2d %s (%.2fs)\n", ok ? "PASS" : "FAIL", c.id, c.name, seconds);
    failures += ok ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
