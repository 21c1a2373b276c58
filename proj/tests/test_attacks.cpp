#include <doctest.h>

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "fedguard/attacks.hpp"
#include "fedguard/models.hpp"

using fedguard::AttackConfig;
using fedguard::AttackKind;
using fedguard::Dataset;
using fedguard::GeneratorState;
using fedguard::ModelKind;
using fedguard::ModelSpec;
using fedguard::ParamVector;
using fedguard::TrainConfig;
using fedguard::make_dataset;
namespace attacks = fedguard::attacks;
namespace models = fedguard::models;
namespace vm = fedguard::vecmath;

namespace {

ParamVector pv(std::vector<double> v) { return ParamVector(std::move(v)); }

// A 2x2 two-class task where the attacker owns only label 1.
Dataset attacker_shard() {
  return make_dataset({0.9, 0.9, 0.1, 0.1, 0.8, 0.8, 0.2, 0.2,
                       0.85, 0.9, 0.15, 0.1, 0.95, 0.8, 0.05, 0.2},
                      {1, 1, 1, 1}, 2, 2, 2);
}

AttackConfig gan_config() {
  AttackConfig cfg;
  cfg.kind = AttackKind::gan_infer;
  cfg.start_round = 5;
  cfg.target_label = 0;
  cfg.latent_dim = 3;
  cfg.gen_hidden = 4;
  cfg.gen_steps = 2;
  cfg.gen_lr = 0.1;
  cfg.gen_batch = 4;
  cfg.poison_copies = 1;
  return cfg;
}

}  // namespace

TEST_CASE("craft_sign_flip examples") {
  CHECK(attacks::craft_sign_flip(pv({1, -2}), 10.0) == pv({-10, 20}));
  CHECK(attacks::craft_sign_flip(pv({3, 4}), 0.0) == pv({0, 0}));
  const auto d = pv({0.5, -1.25});
  CHECK(attacks::craft_sign_flip(attacks::craft_sign_flip(d, 1.0), 1.0) == d);
}

TEST_CASE("craft_scale examples") {
  CHECK(attacks::craft_scale(pv({1}), 2.0) == pv({2}));
  const auto d = pv({0.5, -3});
  CHECK(attacks::craft_scale(d, 1.0) == d);
  CHECK(attacks::craft_scale(pv({0, 3}), -1.0) == pv({0, -3}));
}

TEST_CASE("adaptive_project clamps into the ball around the global weights") {
  const auto global = pv({0.0, 1.0, -2.0});

  SUBCASE("points inside the ball are untouched") {
    const auto w = pv({0.001, 1.0005, -2.0012});
    CHECK(attacks::adaptive_project(w, global, 0.0016) == w);
  }

  SUBCASE("the default radius clamps a far point onto the boundary") {
    CHECK(attacks::adaptive_project(pv({5.0}), pv({0.0}), 0.0016) == pv({0.0016}));
  }

  SUBCASE("a huge radius is the identity") {
    const auto w = pv({100.0, -50.0, 7.0});
    CHECK(attacks::adaptive_project(w, global, 1e12) == w);
  }

  SUBCASE("projection is idempotent") {
    const auto w = pv({5.0, -5.0, 5.0});
    const auto once = attacks::adaptive_project(w, global, 0.0016);
    CHECK(attacks::adaptive_project(once, global, 0.0016) == once);
  }

  SUBCASE("every coordinate lands inside the representable bounds") {
    fedguard::rng::Stream rng(71);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<double> w(4), g(4);
      for (double& x : w) x = rng.uniform(-3.0, 3.0);
      for (double& x : g) x = rng.uniform(-3.0, 3.0);
      const double tau = 0.0016;
      const auto gv = pv(g);
      const auto out = attacks::adaptive_project(pv(w), gv, tau);
      for (std::size_t i = 0; i < out.dim(); ++i) {
        CHECK(out[i] >= gv[i] - tau);
        CHECK(out[i] <= gv[i] + tau);
      }
    }
  }

  CHECK_THROWS_AS(attacks::adaptive_project(pv({1}), pv({1, 2}), 0.0016),
                  std::invalid_argument);
}

TEST_CASE("clamp_delta_linf bounds the emitted update exactly") {
  fedguard::rng::Stream rng(72);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> d(5);
    for (double& x : d) x = rng.uniform(-2.0, 2.0);
    const double tau = 0.0016;
    const auto out = attacks::clamp_delta_linf(pv(d), tau);
    CHECK(vm::linf_norm(out) <= tau);
  }
}

TEST_CASE("gan_infer_step behaves as benign training before the start round") {
  const auto shard = attacker_shard();
  const ModelSpec spec{ModelKind::logistic, 4, 0, 2};
  const auto global = models::init_params(spec, fedguard::rng::Stream(73));
  const auto cfg = gan_config();
  auto gen = attacks::init_generator(cfg.latent_dim, cfg.gen_hidden, spec.input_dim,
                                     fedguard::rng::Stream(74));
  const TrainConfig tc{0.05, 2, 1};

  auto train_rng_a = fedguard::rng::Stream::derive(1, "shuffle", 9, 2);
  const auto step = attacks::gan_infer_step(global, spec, gen, shard, cfg, /*round=*/2,
                                            tc, fedguard::rng::Stream(75), train_rng_a);
  CHECK(!step.attacked);
  CHECK(step.generated.size() == 0);

  auto train_rng_b = fedguard::rng::Stream::derive(1, "shuffle", 9, 2);
  const auto benign = models::local_train(spec, global, shard, tc, train_rng_b);
  CHECK(step.delta == benign.delta);
}

TEST_CASE("gan_infer_step is deterministic under fixed seed material") {
  const auto shard = attacker_shard();
  const ModelSpec spec{ModelKind::logistic, 4, 0, 2};
  const auto global = models::init_params(spec, fedguard::rng::Stream(76));
  const auto cfg = gan_config();
  const auto gen = attacks::init_generator(cfg.latent_dim, cfg.gen_hidden, spec.input_dim,
                                           fedguard::rng::Stream(77));
  const TrainConfig tc{0.05, 2, 1};

  auto ra = fedguard::rng::Stream(80);
  const auto a = attacks::gan_infer_step(global, spec, gen, shard, cfg, 10, tc,
                                         fedguard::rng::Stream(79), ra);
  auto rb = fedguard::rng::Stream(80);
  const auto b = attacks::gan_infer_step(global, spec, gen, shard, cfg, 10, tc,
                                         fedguard::rng::Stream(79), rb);
  CHECK(a.attacked);
  CHECK(a.delta == b.delta);
  CHECK(a.generated.samples == b.generated.samples);
  CHECK(a.gen.params == b.gen.params);
}

TEST_CASE("gan_infer_step rejects a shard that already has the target label") {
  const auto bad = make_dataset({0.1, 0.1, 0.2, 0.2}, {0}, 2, 2, 2);
  const ModelSpec spec{ModelKind::logistic, 4, 0, 2};
  const auto global = models::init_params(spec, fedguard::rng::Stream(81));
  const auto cfg = gan_config();
  auto gen = attacks::init_generator(cfg.latent_dim, cfg.gen_hidden, spec.input_dim,
                                     fedguard::rng::Stream(82));
  auto rng = fedguard::rng::Stream(83);
  TrainConfig tc{0.05, 2, 1};
  CHECK_THROWS_AS(attacks::gan_infer_step(global, spec, gen, bad, cfg, 10, tc,
                                          fedguard::rng::Stream(84), rng),
                  std::invalid_argument);
}

TEST_CASE("gan_infer_step output is independent of any victim data") {
  // The signature only admits the attacker's own shard; this pins that no
  // global state sneaks victim samples in.
  const auto shard = attacker_shard();
  const ModelSpec spec{ModelKind::logistic, 4, 0, 2};
  const auto global = models::init_params(spec, fedguard::rng::Stream(85));
  const auto cfg = gan_config();
  const auto gen = attacks::init_generator(cfg.latent_dim, cfg.gen_hidden, spec.input_dim,
                                           fedguard::rng::Stream(86));
  const TrainConfig tc{0.05, 2, 1};

  const auto victim_a = models::synth_blobs(2, 50, 4, 0.1, fedguard::rng::Stream(87));
  const auto victim_b = models::synth_blobs(2, 50, 4, 0.3, fedguard::rng::Stream(88));
  (void)victim_a;
  (void)victim_b;

  auto ra = fedguard::rng::Stream(90);
  const auto a = attacks::gan_infer_step(global, spec, gen, shard, cfg, 10, tc,
                                         fedguard::rng::Stream(89), ra);
  auto rb = fedguard::rng::Stream(90);
  const auto b = attacks::gan_infer_step(global, spec, gen, shard, cfg, 10, tc,
                                         fedguard::rng::Stream(89), rb);
  CHECK(a.generated.samples == b.generated.samples);
  CHECK(a.delta == b.delta);
}

TEST_CASE("adaptive_gan_infer_step matches gan_infer_step when tau is huge") {
  const auto shard = attacker_shard();
  const ModelSpec spec{ModelKind::logistic, 4, 0, 2};
  const auto global = models::init_params(spec, fedguard::rng::Stream(91));
  auto cfg = gan_config();
  cfg.kind = AttackKind::adaptive_gan_infer;
  cfg.tau = 1e15;
  const auto gen = attacks::init_generator(cfg.latent_dim, cfg.gen_hidden, spec.input_dim,
                                           fedguard::rng::Stream(92));
  const TrainConfig tc{0.05, 2, 1};

  auto ra = fedguard::rng::Stream(94);
  const auto adaptive = attacks::adaptive_gan_infer_step(global, spec, gen, shard, cfg,
                                                         10, tc, fedguard::rng::Stream(93), ra);
  auto rb = fedguard::rng::Stream(94);
  const auto plain = attacks::gan_infer_step(global, spec, gen, shard, cfg, 10, tc,
                                             fedguard::rng::Stream(93), rb);
  CHECK(adaptive.delta == plain.delta);
}

TEST_CASE("adaptive_gan_infer_step always satisfies the l-infinity bound") {
  const auto shard = attacker_shard();
  const ModelSpec spec{ModelKind::logistic, 4, 0, 2};
  auto cfg = gan_config();
  cfg.kind = AttackKind::adaptive_gan_infer;
  cfg.tau = 0.0016;
  auto gen = attacks::init_generator(cfg.latent_dim, cfg.gen_hidden, spec.input_dim,
                                     fedguard::rng::Stream(95));
  auto global = models::init_params(spec, fedguard::rng::Stream(96));
  const TrainConfig tc{0.05, 2, 1};
  for (int round = 5; round < 15; ++round) {
    auto rng = fedguard::rng::Stream::derive(4, "shuffle", 9,
                                             static_cast<std::uint64_t>(round));
    auto step = attacks::adaptive_gan_infer_step(
        global, spec, gen, shard, cfg, round, tc,
        fedguard::rng::Stream::derive(4, "gen", static_cast<std::uint64_t>(round)), rng);
    CHECK(vm::linf_norm(step.delta) <= cfg.tau);
    gen = step.gen;
    global = vm::add(global, step.delta);
  }
}

TEST_CASE("decoy label is the attacker's most populous class") {
  CHECK(attacks::decoy_label(attacker_shard()) == 1);
  const auto mixed = make_dataset({0.1, 0.1, 0.2, 0.2, 0.3, 0.3}, {2, 1, 2}, 3, 1, 2);
  CHECK(attacks::decoy_label(mixed) == 2);
  const auto tie = make_dataset({0.1, 0.1, 0.2, 0.2}, {2, 1}, 3, 1, 2);
  CHECK(attacks::decoy_label(tie) == 1);  // tie resolves to the lowest label
}

TEST_CASE("poison_shard appends decoy-labeled copies") {
  const auto shard = attacker_shard();
  const auto generated = make_dataset({0.5, 0.5, 0.5, 0.5}, {0}, 2, 2, 2);
  const auto poisoned = attacks::poison_shard(shard, generated, 3);
  CHECK(poisoned.size() == shard.size() + 3);
  for (std::size_t i = shard.size(); i < poisoned.size(); ++i) {
    CHECK(poisoned.labels[i] == 1);
  }
}

TEST_CASE("under FedAvg the generator's target confidence rises over rounds") {
  // Desk-scale 8x8 two-class task: client 9 owns only label 1 and chases
  // label 0. Mean p(target | generated) must exceed its round-0 value after
  // the adversarial loop has run.
  const int dim = 64;
  auto full = models::synth_blobs(2, 110, dim, 0.1, fedguard::rng::Stream(97));
  full = models::with_shape(std::move(full), 8, 8);
  std::vector<Dataset> shards;
  for (int c = 0; c < 10; ++c) {
    const int label = c < 5 ? 0 : 1;
    std::vector<double> samples;
    std::vector<int> labels;
    for (int s = 0; s < 20; ++s) {
      const std::size_t row = static_cast<std::size_t>(label * 110 + (c % 5) * 20 + s);
      const auto r = full.row(row);
      samples.insert(samples.end(), r.begin(), r.end());
      labels.push_back(label);
    }
    shards.push_back(make_dataset(std::move(samples), std::move(labels), 2, 8, 8));
  }

  const ModelSpec spec{ModelKind::logistic, dim, 0, 2};
  auto cfg = gan_config();
  cfg.start_round = 0;
  cfg.latent_dim = 8;
  cfg.gen_hidden = 16;
  cfg.gen_steps = 5;
  cfg.gen_batch = 8;
  cfg.poison_copies = 4;
  auto gen = attacks::init_generator(cfg.latent_dim, cfg.gen_hidden, dim,
                                     fedguard::rng::Stream(98));
  auto global = models::init_params(spec, fedguard::rng::Stream(99));
  const TrainConfig tc{0.05, 16, 1};

  auto mean_confidence = [&](const Dataset& generated, const ParamVector& params) {
    double acc = 0.0;
    for (std::size_t i = 0; i < generated.size(); ++i) {
      acc += models::predict_proba(spec, params, generated.row(i))[0];
    }
    return acc / static_cast<double>(generated.size());
  };

  double first_conf = -1.0;
  double last_conf = -1.0;
  for (int round = 0; round < 40; ++round) {
    std::vector<ParamVector> deltas;
    for (int c = 0; c < 9; ++c) {
      auto rng = fedguard::rng::Stream::derive(6, "shuffle", static_cast<std::uint64_t>(c),
                                               static_cast<std::uint64_t>(round));
      deltas.push_back(models::local_train(spec, global, shards[static_cast<std::size_t>(c)],
                                           tc, rng)
                           .delta);
    }
    auto rng = fedguard::rng::Stream::derive(6, "shuffle", 9,
                                             static_cast<std::uint64_t>(round));
    auto step = attacks::gan_infer_step(
        global, spec, gen, shards[9], cfg, round, tc,
        fedguard::rng::Stream::derive(6, "gen", static_cast<std::uint64_t>(round)), rng);
    deltas.push_back(step.delta);
    gen = step.gen;
    global = vm::add(global, vm::mean(deltas));
    const double conf = mean_confidence(step.generated, global);
    if (round == 0) first_conf = conf;
    last_conf = conf;
  }
  CHECK(last_conf > first_conf);
  CHECK(last_conf > 0.5);
}
