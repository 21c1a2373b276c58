#include "fedguard/harness.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace fedguard::harness {
namespace {

Dataset gather_rows(const Dataset& data, const std::vector<int>& rows) {
  const std::size_t d = data.dim();
  std::vector<double> samples;
  samples.reserve(rows.size() * d);
  std::vector<int> labels;
  labels.reserve(rows.size());
  for (int r : rows) {
    const auto row = data.row(static_cast<std::size_t>(r));
    samples.insert(samples.end(), row.begin(), row.end());
    labels.push_back(data.labels[static_cast<std::size_t>(r)]);
  }
  return make_dataset(std::move(samples), std::move(labels), data.num_classes,
                      data.height, data.width);
}

std::vector<std::vector<int>> rows_by_label(const Dataset& data) {
  std::vector<std::vector<int>> by_label(static_cast<std::size_t>(data.num_classes));
  for (std::size_t i = 0; i < data.size(); ++i) {
    by_label[static_cast<std::size_t>(data.labels[i])].push_back(static_cast<int>(i));
  }
  return by_label;
}

// Splits `rows` (already in dataset order) equally among `owners` (ascending
// ids); the remainder goes one extra row each to the lowest-id owners.
void split_label_rows(const std::vector<int>& rows, const std::vector<int>& owners,
                      std::vector<std::vector<int>>& client_rows) {
  const std::size_t k = owners.size();
  const std::size_t base = rows.size() / k;
  const std::size_t rem = rows.size() % k;
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t take = base + (i < rem ? 1 : 0);
    auto& dst = client_rows[static_cast<std::size_t>(owners[i])];
    dst.insert(dst.end(), rows.begin() + static_cast<std::ptrdiff_t>(cursor),
               rows.begin() + static_cast<std::ptrdiff_t>(cursor + take));
    cursor += take;
  }
}

}  // namespace

std::vector<Dataset> partition(const Dataset& data, const PartitionConfig& cfg,
                               int n_clients, rng::Stream rng) {
  if (n_clients < 1) throw std::invalid_argument("partition: n_clients must be >= 1");
  if (data.size() == 0) throw std::invalid_argument("partition: empty dataset");
  const auto by_label = rows_by_label(data);
  std::vector<std::vector<int>> client_rows(static_cast<std::size_t>(n_clients));

  if (cfg.mode == PartitionConfig::Mode::label_to_k) {
    if (cfg.k < 1 || cfg.k > n_clients) {
      throw std::invalid_argument("partition: k must be in [1, n_clients]");
    }
    for (int label = 0; label < data.num_classes; ++label) {
      auto sub = rng::Stream::derive(rng.next_u64(), "label-owners",
                                     static_cast<std::uint64_t>(label));
      std::vector<int> owners = sub.sample_indices(n_clients, cfg.k);
      std::sort(owners.begin(), owners.end());
      const auto& rows = by_label[static_cast<std::size_t>(label)];
      if (!rows.empty()) split_label_rows(rows, owners, client_rows);
    }
  } else {
    const int count = cfg.labels_per_client;
    if (count < 1 || count > data.num_classes) {
      throw std::invalid_argument("partition: labels_per_client must be in [1, num_classes]");
    }
    std::vector<std::vector<int>> owners_of(static_cast<std::size_t>(data.num_classes));
    for (int c = 0; c < n_clients; ++c) {
      auto sub = rng::Stream::derive(rng.next_u64(), "client-labels",
                                     static_cast<std::uint64_t>(c));
      for (int label : sub.sample_indices(data.num_classes, count)) {
        owners_of[static_cast<std::size_t>(label)].push_back(c);
      }
    }
    for (int label = 0; label < data.num_classes; ++label) {
      const auto& rows = by_label[static_cast<std::size_t>(label)];
      if (rows.empty()) continue;
      auto& owners = owners_of[static_cast<std::size_t>(label)];
      if (owners.empty()) {
        throw std::runtime_error("partition: label " + std::to_string(label) +
                                 " drawn by no client");
      }
      std::sort(owners.begin(), owners.end());
      split_label_rows(rows, owners, client_rows);
    }
  }

  std::vector<Dataset> shards;
  shards.reserve(static_cast<std::size_t>(n_clients));
  for (int c = 0; c < n_clients; ++c) {
    const auto& rows = client_rows[static_cast<std::size_t>(c)];
    if (rows.empty()) {
      throw std::runtime_error("partition: client " + std::to_string(c) +
                               " received no samples");
    }
    shards.push_back(gather_rows(data, rows));
  }
  return shards;
}

RootSplit build_root_dataset(const Dataset& data, int size, rng::Stream rng) {
  if (size < 1) throw std::invalid_argument("build_root_dataset: size must be >= 1");
  if (static_cast<std::size_t>(size) > data.size()) {
    throw std::invalid_argument("build_root_dataset: size exceeds dataset");
  }
  const auto by_label = rows_by_label(data);
  const int classes = data.num_classes;
  // Spread the request across classes as evenly as possible; remainders go to
  // the lowest class ids.
  std::vector<int> want(static_cast<std::size_t>(classes), size / classes);
  for (int c = 0; c < size % classes; ++c) ++want[static_cast<std::size_t>(c)];

  std::vector<char> taken(data.size(), 0);
  std::vector<int> root_rows;
  for (int c = 0; c < classes; ++c) {
    const auto& rows = by_label[static_cast<std::size_t>(c)];
    const int w = want[static_cast<std::size_t>(c)];
    if (w == 0) continue;
    if (static_cast<std::size_t>(w) > rows.size()) {
      throw std::invalid_argument("build_root_dataset: class " + std::to_string(c) +
                                  " has too few samples");
    }
    auto sub = rng::Stream::derive(rng.next_u64(), "root-class",
                                   static_cast<std::uint64_t>(c));
    for (int pick : sub.sample_indices(static_cast<int>(rows.size()), w)) {
      const int row = rows[static_cast<std::size_t>(pick)];
      root_rows.push_back(row);
      taken[static_cast<std::size_t>(row)] = 1;
    }
  }
  std::sort(root_rows.begin(), root_rows.end());

  std::vector<int> rest;
  rest.reserve(data.size() - root_rows.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!taken[i]) rest.push_back(static_cast<int>(i));
  }
  return RootSplit{gather_rows(data, root_rows), gather_rows(data, rest)};
}

Image reference_image(const std::vector<Dataset>& shards,
                      const std::vector<int>& malicious, int target_label) {
  if (shards.empty()) throw std::invalid_argument("reference_image: no shards");
  const std::size_t d = shards.front().dim();
  std::vector<double> acc(d, 0.0);
  std::size_t count = 0;
  for (std::size_t c = 0; c < shards.size(); ++c) {
    if (std::find(malicious.begin(), malicious.end(), static_cast<int>(c)) !=
        malicious.end()) {
      continue;
    }
    const Dataset& shard = shards[c];
    for (std::size_t i = 0; i < shard.size(); ++i) {
      if (shard.labels[i] != target_label) continue;
      const auto row = shard.row(i);
      for (std::size_t j = 0; j < d; ++j) acc[j] += row[j];
      ++count;
    }
  }
  if (count == 0) {
    throw std::runtime_error("reference_image: no benign samples of the target label");
  }
  for (double& v : acc) v /= static_cast<double>(count);
  return make_image(std::move(acc), shards.front().height, shards.front().width);
}

namespace {

// Splits a class-major synthetic dataset into train/test slices per class.
void split_synthetic(const Dataset& full, int per_class_train, int per_class_test,
                     Dataset& train, Dataset& test) {
  std::vector<int> train_rows, test_rows;
  const int per_class = per_class_train + per_class_test;
  for (int c = 0; c < full.num_classes; ++c) {
    const int base = c * per_class;
    for (int i = 0; i < per_class_train; ++i) train_rows.push_back(base + i);
    for (int i = 0; i < per_class_test; ++i) test_rows.push_back(base + per_class_train + i);
  }
  train = gather_rows(full, train_rows);
  test = gather_rows(full, test_rows);
}

}  // namespace

struct Federation::Impl {
  ExperimentConfig cfg;
  ModelSpec spec;
  Dataset train_all;  // after removing the root set, if any
  Dataset test;
  Dataset root;
  std::vector<Dataset> shards;
  std::vector<int> malicious;
  ParamVector global{ParamVector::zeros(1)};
  std::optional<GeneratorState> gen;
  std::optional<Image> reference;
  std::vector<Image> last_generated;
  int rounds_run = 0;

  explicit Impl(const ExperimentConfig& c) : cfg(c) {
    if (cfg.rounds < 1) throw std::invalid_argument("experiment: rounds must be >= 1");
    if (cfg.n_clients < 1) throw std::invalid_argument("experiment: n_clients must be >= 1");
    if (cfg.eval_every < 1) throw std::invalid_argument("experiment: eval_every must be >= 1");
    if (cfg.threads < 1) cfg.threads = 1;

    malicious = cfg.attack.kind == AttackKind::none ? std::vector<int>{} : cfg.malicious;
    if (malicious.empty() && cfg.attack.kind != AttackKind::none) {
      malicious = {cfg.n_clients - 1};
    }
    std::sort(malicious.begin(), malicious.end());
    for (std::size_t i = 0; i < malicious.size(); ++i) {
      if (malicious[i] < 0 || malicious[i] >= cfg.n_clients) {
        throw std::invalid_argument("experiment: malicious id out of range");
      }
      if (i > 0 && malicious[i] == malicious[i - 1]) {
        throw std::invalid_argument("experiment: duplicate malicious id");
      }
    }

    load_data();
    spec = ModelSpec{cfg.model_kind, static_cast<int>(train_all.dim()), cfg.hidden,
                     train_all.num_classes};

    if (cfg.rule.name == RuleKind::fltrust) {
      if (cfg.rule.root_size < 1) {
        throw std::invalid_argument("experiment: fltrust requires rule.root_size >= 1");
      }
      RootSplit split = build_root_dataset(
          train_all, cfg.rule.root_size, rng::Stream::derive(cfg.seed, "root-pick"));
      root = std::move(split.root);
      train_all = std::move(split.remainder);
    }

    shards = partition(train_all, cfg.partition, cfg.n_clients,
                       rng::Stream::derive(cfg.seed, "partition"));

    if (gan_attack()) {
      if (malicious.empty()) {
        throw std::invalid_argument("experiment: gan attack requires a malicious client");
      }
      if (cfg.attack.target_label < 0 || cfg.attack.target_label >= train_all.num_classes) {
        throw std::invalid_argument("experiment: attack.target_label out of range");
      }
      for (int m : malicious) {
        for (int y : shards[static_cast<std::size_t>(m)].labels) {
          if (y == cfg.attack.target_label) {
            throw std::invalid_argument(
                "experiment: target label present in attacker shard (client " +
                std::to_string(m) + ")");
          }
        }
      }
      reference = reference_image(shards, malicious, cfg.attack.target_label);
      gen = attacks::init_generator(cfg.attack.latent_dim, cfg.attack.gen_hidden,
                                    spec.input_dim,
                                    rng::Stream::derive(cfg.seed, "gen-init"));
    }

    global = models::init_params(spec, rng::Stream::derive(cfg.seed, "init"));
  }

  bool gan_attack() const {
    return cfg.attack.kind == AttackKind::gan_infer ||
           cfg.attack.kind == AttackKind::adaptive_gan_infer;
  }

  bool is_malicious(int c) const {
    return std::binary_search(malicious.begin(), malicious.end(), c);
  }

  void load_data() {
    if (cfg.dataset.kind == DatasetConfig::Kind::synthetic) {
      const auto& d = cfg.dataset;
      if (d.per_class_train < 1) {
        throw std::invalid_argument("dataset: per_class_train must be >= 1");
      }
      if (d.per_class_test < 1) {
        throw std::invalid_argument("dataset: per_class_test must be >= 1");
      }
      Dataset full = models::synth_blobs(d.classes, d.per_class_train + d.per_class_test,
                                         d.height * d.width, d.spread,
                                         rng::Stream::derive(cfg.seed, "synth"));
      full = models::with_shape(std::move(full), d.height, d.width);
      split_synthetic(full, d.per_class_train, d.per_class_test, train_all, test);
    } else {
      train_all = models::load_idx(cfg.dataset.train_images, cfg.dataset.train_labels);
      test = models::load_idx(cfg.dataset.test_images, cfg.dataset.test_labels);
      if (test.num_classes > train_all.num_classes) {
        train_all.num_classes = test.num_classes;
      } else {
        test.num_classes = train_all.num_classes;
      }
      if (test.dim() != train_all.dim()) {
        throw std::invalid_argument("dataset: train/test image shapes differ");
      }
    }
  }

  RoundRecord run_round(int t);
};

RoundRecord Federation::Impl::run_round(int t) {
  const bool attack_active = cfg.attack.kind != AttackKind::none &&
                             !malicious.empty() && t >= cfg.attack.start_round;

  // Serial attacker pre-phase: one generator round shared by all colluding
  // clients, plus the per-client poisoned shards.
  std::optional<Dataset> generated;
  std::vector<std::optional<Dataset>> poisoned(static_cast<std::size_t>(cfg.n_clients));
  if (attack_active && gan_attack()) {
    attacks::GeneratorRound gr = attacks::generator_round(
        global, spec, std::move(*gen), cfg.attack, shards.front(),
        rng::Stream::derive(cfg.seed, "gen", static_cast<std::uint64_t>(t)));
    gen = std::move(gr.gen);
    generated = std::move(gr.generated);
    for (int m : malicious) {
      poisoned[static_cast<std::size_t>(m)] =
          attacks::poison_shard(shards[static_cast<std::size_t>(m)], *generated,
                                cfg.attack.poison_copies);
    }
  }

  // Parallel client phase. Every client's work depends only on the global
  // params and its own derived substreams, so scheduling cannot change the
  // result.
  std::vector<std::optional<ParamVector>> deltas(static_cast<std::size_t>(cfg.n_clients));
  std::vector<std::optional<ParamVector>> emitted(static_cast<std::size_t>(cfg.n_clients));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(cfg.n_clients));

  auto client_work = [&](int c) {
    auto train_rng = rng::Stream::derive(cfg.seed, "shuffle", static_cast<std::uint64_t>(c),
                                         static_cast<std::uint64_t>(t));
    const Dataset& shard = shards[static_cast<std::size_t>(c)];
    ParamVector delta = ParamVector::zeros(spec.param_count());
    if (!attack_active || !is_malicious(c)) {
      delta = models::local_train(spec, global, shard, cfg.train, train_rng).delta;
    } else {
      switch (cfg.attack.kind) {
        case AttackKind::sign_flip:
          delta = attacks::craft_sign_flip(
              models::local_train(spec, global, shard, cfg.train, train_rng).delta,
              cfg.attack.scale);
          break;
        case AttackKind::scale:
          delta = attacks::craft_scale(
              models::local_train(spec, global, shard, cfg.train, train_rng).delta,
              cfg.attack.scale);
          break;
        case AttackKind::gan_infer:
        case AttackKind::adaptive_gan_infer: {
          delta = models::local_train(spec, global, *poisoned[static_cast<std::size_t>(c)],
                                      cfg.train, train_rng)
                      .delta;
          if (cfg.attack.kind == AttackKind::adaptive_gan_infer) {
            delta = attacks::clamp_delta_linf(delta, cfg.attack.tau);
          }
          break;
        }
        case AttackKind::none:
          break;
      }
    }
    emitted[static_cast<std::size_t>(c)] = delta;
    if (!cfg.rule.post.empty()) {
      delta = agg::apply_post_chain(
          cfg.rule.post, std::move(delta),
          rng::Stream::derive(cfg.seed, "dp", static_cast<std::uint64_t>(c),
                              static_cast<std::uint64_t>(t)));
    }
    deltas[static_cast<std::size_t>(c)] = std::move(delta);
  };

  const int workers = std::min(cfg.threads, cfg.n_clients);
  if (workers <= 1) {
    for (int c = 0; c < cfg.n_clients; ++c) {
      try {
        client_work(c);
      } catch (...) {
        errors[static_cast<std::size_t>(c)] = std::current_exception();
      }
    }
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w]() {
        for (int c = w; c < cfg.n_clients; c += workers) {
          try {
            client_work(c);
          } catch (...) {
            errors[static_cast<std::size_t>(c)] = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
  }
  for (int c = 0; c < cfg.n_clients; ++c) {
    if (errors[static_cast<std::size_t>(c)]) {
      try {
        std::rethrow_exception(errors[static_cast<std::size_t>(c)]);
      } catch (const std::exception& e) {
        throw std::runtime_error("round " + std::to_string(t) + ", client " +
                                 std::to_string(c) + ": " + e.what());
      }
    }
  }

  std::vector<ClientUpdate> updates;
  updates.reserve(static_cast<std::size_t>(cfg.n_clients));
  for (int c = 0; c < cfg.n_clients; ++c) {
    updates.push_back(ClientUpdate{c, t, std::move(*deltas[static_cast<std::size_t>(c)])});
  }

  std::optional<ParamVector> root_update;
  if (cfg.rule.name == RuleKind::fltrust) {
    auto root_rng = rng::Stream::derive(cfg.seed, "root", static_cast<std::uint64_t>(t));
    root_update = models::local_train(spec, global, root, cfg.train, root_rng).delta;
  }

  std::optional<AggregationOutcome> outcome;
  try {
    outcome = agg::apply_rule(cfg.rule, updates,
                              root_update ? &*root_update : nullptr);
  } catch (const std::exception& e) {
    throw std::runtime_error("round " + std::to_string(t) + ": " + e.what());
  }
  global = vecmath::add(global, outcome->aggregate);

  RoundRecord rec;
  rec.round = t;
  rec.accepted = outcome->accepted;
  rec.no_selection = !agg::rule_has_selection(cfg.rule.name);
  rec.attack_active = attack_active;
  rec.distances = outcome->scores;
  if (outcome->anchor) rec.anchor_norm = vecmath::l2_norm(*outcome->anchor);
  for (int m : malicious) {
    if (std::binary_search(rec.accepted.begin(), rec.accepted.end(), m)) {
      rec.indicator = 1;
      break;
    }
  }
  if (attack_active) {
    double linf = 0.0;
    for (int m : malicious) {
      linf = std::max(linf, vecmath::linf_norm(*emitted[static_cast<std::size_t>(m)]));
    }
    rec.malicious_linf = linf;
  }
  if (generated && generated->size() > 0 && reference) {
    double psnr_sum = 0.0;
    double ssim_sum = 0.0;
    last_generated.clear();
    for (std::size_t i = 0; i < generated->size(); ++i) {
      const auto row = generated->row(i);
      Image img = make_image(std::vector<double>(row.begin(), row.end()),
                             generated->height, generated->width);
      psnr_sum += metrics::psnr(img, *reference);
      ssim_sum += metrics::ssim(img, *reference);
      last_generated.push_back(std::move(img));
    }
    rec.psnr = psnr_sum / static_cast<double>(generated->size());
    rec.ssim = ssim_sum / static_cast<double>(generated->size());
  }
  if ((t + 1) % cfg.eval_every == 0 || t == cfg.rounds - 1) {
    rec.accuracy = models::evaluate(spec, global, test);
  }
  rounds_run = t + 1;
  return rec;
}

Federation::Federation(const ExperimentConfig& cfg) : impl_(std::make_unique<Impl>(cfg)) {}
Federation::~Federation() = default;

RoundRecord Federation::run_round(int t) { return impl_->run_round(t); }

ExperimentResult Federation::run_all() {
  ExperimentResult result{{}, impl_->global, impl_->reference, {}};
  result.records.reserve(static_cast<std::size_t>(impl_->cfg.rounds));
  for (int t = 0; t < impl_->cfg.rounds; ++t) {
    result.records.push_back(impl_->run_round(t));
  }
  result.final_params = impl_->global;
  result.reference = impl_->reference;
  result.last_generated = impl_->last_generated;
  return result;
}

const ParamVector& Federation::global_params() const { return impl_->global; }
const ModelSpec& Federation::model_spec() const { return impl_->spec; }
const std::vector<Dataset>& Federation::shards() const { return impl_->shards; }
const Dataset& Federation::test_set() const { return impl_->test; }
const Dataset& Federation::root_set() const { return impl_->root; }
const std::optional<Image>& Federation::reference() const { return impl_->reference; }

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  Federation fed(cfg);
  return fed.run_all();
}

}  // namespace fedguard::harness
