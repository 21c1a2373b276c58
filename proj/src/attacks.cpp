#include "fedguard/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace fedguard::attacks {
namespace {

// Generator layout: W1 (hidden x latent), b1, W2 (out x hidden), b2. Hidden
// activation is tanh, output is a sigmoid so images land in (0, 1).
struct GenOffsets {
  std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0;
  GenOffsets(int latent, int hidden, int out) {
    const auto l = static_cast<std::size_t>(latent);
    const auto h = static_cast<std::size_t>(hidden);
    w1 = 0;
    b1 = h * l;
    w2 = b1 + h;
    b2 = w2 + static_cast<std::size_t>(out) * h;
  }
};

std::size_t gen_param_count(int latent, int hidden, int out) {
  return (static_cast<std::size_t>(latent) + 1) * static_cast<std::size_t>(hidden) +
         (static_cast<std::size_t>(hidden) + 1) * static_cast<std::size_t>(out);
}

void gen_forward(const GeneratorState& gen, std::span<const double> z,
                 std::vector<double>& hidden, std::vector<double>& out) {
  const GenOffsets off(gen.latent_dim, gen.hidden, gen.out_dim);
  for (int k = 0; k < gen.hidden; ++k) {
    double acc = gen.params[off.b1 + static_cast<std::size_t>(k)];
    const std::size_t row = off.w1 + static_cast<std::size_t>(k) * static_cast<std::size_t>(gen.latent_dim);
    for (int j = 0; j < gen.latent_dim; ++j) {
      acc += gen.params[row + static_cast<std::size_t>(j)] * z[static_cast<std::size_t>(j)];
    }
    hidden[static_cast<std::size_t>(k)] = std::tanh(acc);
  }
  for (int d = 0; d < gen.out_dim; ++d) {
    double acc = gen.params[off.b2 + static_cast<std::size_t>(d)];
    const std::size_t row = off.w2 + static_cast<std::size_t>(d) * static_cast<std::size_t>(gen.hidden);
    for (int k = 0; k < gen.hidden; ++k) {
      acc += gen.params[row + static_cast<std::size_t>(k)] * hidden[static_cast<std::size_t>(k)];
    }
    out[static_cast<std::size_t>(d)] = 1.0 / (1.0 + std::exp(-acc));
  }
}

void require_target_absent(const Dataset& shard, int target) {
  for (int y : shard.labels) {
    if (y == target) {
      throw std::invalid_argument("gan_infer: target label present in attacker shard");
    }
  }
}

}  // namespace

GeneratorState init_generator(int latent_dim, int hidden, int out_dim, rng::Stream rng) {
  if (latent_dim < 1 || hidden < 1 || out_dim < 1) {
    throw std::invalid_argument("init_generator: dimensions must be >= 1");
  }
  std::vector<double> p(gen_param_count(latent_dim, hidden, out_dim), 0.0);
  const GenOffsets off(latent_dim, hidden, out_dim);
  const double a1 = 1.0 / std::sqrt(static_cast<double>(latent_dim));
  for (std::size_t i = 0; i < static_cast<std::size_t>(hidden) * static_cast<std::size_t>(latent_dim); ++i) {
    p[off.w1 + i] = rng.uniform(-a1, a1);
  }
  const double a2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (std::size_t i = 0; i < static_cast<std::size_t>(out_dim) * static_cast<std::size_t>(hidden); ++i) {
    p[off.w2 + i] = rng.uniform(-a2, a2);
  }
  return GeneratorState{ParamVector(std::move(p)), latent_dim, hidden, out_dim};
}

ParamVector craft_sign_flip(const ParamVector& benign_delta, double scale) {
  return vecmath::scaled(benign_delta, -scale);
}

ParamVector craft_scale(const ParamVector& benign_delta, double scale) {
  return vecmath::scaled(benign_delta, scale);
}

ParamVector adaptive_project(const ParamVector& w_mal, const ParamVector& w_global,
                             double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("adaptive_project: tau must be > 0");
  if (w_mal.dim() != w_global.dim()) {
    throw std::invalid_argument("adaptive_project: dimension mismatch");
  }
  std::vector<double> out(w_mal.dim());
  for (std::size_t i = 0; i < w_mal.dim(); ++i) {
    out[i] = std::clamp(w_mal[i], w_global[i] - tau, w_global[i] + tau);
  }
  return ParamVector(std::move(out));
}

ParamVector clamp_delta_linf(const ParamVector& delta, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("clamp_delta_linf: tau must be > 0");
  std::vector<double> out(delta.dim());
  for (std::size_t i = 0; i < delta.dim(); ++i) {
    out[i] = std::clamp(delta[i], -tau, tau);
  }
  return ParamVector(std::move(out));
}

GeneratorRound generator_round(const ParamVector& global_params, const ModelSpec& spec,
                               GeneratorState gen, const AttackConfig& cfg,
                               const Dataset& shape_like, rng::Stream rng) {
  if (gen.out_dim != spec.input_dim) {
    throw std::invalid_argument("generator_round: generator output does not match model input");
  }
  if (cfg.target_label < 0 || cfg.target_label >= spec.num_classes) {
    throw std::invalid_argument("generator_round: target label out of range");
  }
  const int batch = cfg.gen_batch;
  if (batch < 1 || cfg.gen_steps < 0) {
    throw std::invalid_argument("generator_round: bad generator schedule");
  }

  const GenOffsets off(gen.latent_dim, gen.hidden, gen.out_dim);
  std::vector<double> z(static_cast<std::size_t>(gen.latent_dim));
  std::vector<double> hidden(static_cast<std::size_t>(gen.hidden));
  std::vector<double> image(static_cast<std::size_t>(gen.out_dim));
  std::vector<double> grad(gen.params.dim());
  std::vector<double> dhidden(static_cast<std::size_t>(gen.hidden));
  const double inv_b = 1.0 / static_cast<double>(batch);

  for (int step = 0; step < cfg.gen_steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (int s = 0; s < batch; ++s) {
      for (double& v : z) v = rng.gaussian();
      gen_forward(gen, z, hidden, image);
      // Loss is -log p(target | G(z)) through the frozen global model.
      std::vector<double> dx =
          models::input_gradient(spec, global_params, image, cfg.target_label);
      std::fill(dhidden.begin(), dhidden.end(), 0.0);
      for (int d = 0; d < gen.out_dim; ++d) {
        const double x = image[static_cast<std::size_t>(d)];
        const double g = dx[static_cast<std::size_t>(d)] * x * (1.0 - x) * inv_b;
        const std::size_t row = off.w2 + static_cast<std::size_t>(d) * static_cast<std::size_t>(gen.hidden);
        for (int k = 0; k < gen.hidden; ++k) {
          grad[row + static_cast<std::size_t>(k)] += g * hidden[static_cast<std::size_t>(k)];
          dhidden[static_cast<std::size_t>(k)] += gen.params[row + static_cast<std::size_t>(k)] * g;
        }
        grad[off.b2 + static_cast<std::size_t>(d)] += g;
      }
      for (int k = 0; k < gen.hidden; ++k) {
        const double hk = hidden[static_cast<std::size_t>(k)];
        const double g = dhidden[static_cast<std::size_t>(k)] * (1.0 - hk * hk);
        const std::size_t row = off.w1 + static_cast<std::size_t>(k) * static_cast<std::size_t>(gen.latent_dim);
        for (int j = 0; j < gen.latent_dim; ++j) {
          grad[row + static_cast<std::size_t>(j)] += g * z[static_cast<std::size_t>(j)];
        }
        grad[off.b1 + static_cast<std::size_t>(k)] += g;
      }
    }
    for (std::size_t i = 0; i < gen.params.dim(); ++i) {
      gen.params[i] -= cfg.gen_lr * grad[i];
    }
  }

  // Emit a fresh batch for poisoning and metric logging.
  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(batch) * static_cast<std::size_t>(gen.out_dim));
  std::vector<int> labels(static_cast<std::size_t>(batch), cfg.target_label);
  for (int s = 0; s < batch; ++s) {
    for (double& v : z) v = rng.gaussian();
    gen_forward(gen, z, hidden, image);
    samples.insert(samples.end(), image.begin(), image.end());
  }
  Dataset generated = make_dataset(std::move(samples), std::move(labels),
                                   spec.num_classes, shape_like.height, shape_like.width);
  return GeneratorRound{std::move(gen), std::move(generated)};
}

int decoy_label(const Dataset& own_shard) {
  if (own_shard.size() == 0) {
    throw std::invalid_argument("decoy_label: empty shard");
  }
  std::vector<int> counts(static_cast<std::size_t>(own_shard.num_classes), 0);
  for (int y : own_shard.labels) ++counts[static_cast<std::size_t>(y)];
  int best = 0;
  for (int c = 1; c < own_shard.num_classes; ++c) {
    if (counts[static_cast<std::size_t>(c)] > counts[static_cast<std::size_t>(best)]) best = c;
  }
  return best;
}

Dataset poison_shard(const Dataset& own_shard, const Dataset& generated, int copies) {
  if (copies < 0) throw std::invalid_argument("poison_shard: copies must be >= 0");
  if (own_shard.dim() != generated.dim()) {
    throw std::invalid_argument("poison_shard: sample dimension mismatch");
  }
  const int decoy = decoy_label(own_shard);
  Dataset out = own_shard;
  for (int c = 0; c < copies; ++c) {
    out.samples.insert(out.samples.end(), generated.samples.begin(), generated.samples.end());
    out.labels.insert(out.labels.end(), generated.size(), decoy);
  }
  return out;
}

GanStepResult gan_infer_step(const ParamVector& global_params, const ModelSpec& spec,
                             GeneratorState gen, const Dataset& own_shard,
                             const AttackConfig& cfg, int round, const TrainConfig& tc,
                             rng::Stream gen_rng, rng::Stream& train_rng) {
  if (round < cfg.start_round) {
    auto result = models::local_train(spec, global_params, own_shard, tc, train_rng);
    Dataset empty = make_dataset({}, {}, own_shard.num_classes, own_shard.height,
                                 own_shard.width);
    return GanStepResult{std::move(result.delta), std::move(empty), std::move(gen), false};
  }
  require_target_absent(own_shard, cfg.target_label);
  GeneratorRound gr = generator_round(global_params, spec, std::move(gen), cfg,
                                      own_shard, gen_rng);
  Dataset poisoned = poison_shard(own_shard, gr.generated, cfg.poison_copies);
  auto result = models::local_train(spec, global_params, poisoned, tc, train_rng);
  return GanStepResult{std::move(result.delta), std::move(gr.generated),
                       std::move(gr.gen), true};
}

GanStepResult adaptive_gan_infer_step(const ParamVector& global_params,
                                      const ModelSpec& spec, GeneratorState gen,
                                      const Dataset& own_shard, const AttackConfig& cfg,
                                      int round, const TrainConfig& tc,
                                      rng::Stream gen_rng, rng::Stream& train_rng) {
  GanStepResult result = gan_infer_step(global_params, spec, std::move(gen), own_shard,
                                        cfg, round, tc, gen_rng, train_rng);
  if (result.attacked) {
    result.delta = clamp_delta_linf(result.delta, cfg.tau);
  }
  return result;
}

}  // namespace fedguard::attacks
