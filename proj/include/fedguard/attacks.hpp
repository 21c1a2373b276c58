#pragma once

#include "fedguard/models.hpp"
#include "fedguard/rng.hpp"
#include "fedguard/vecmath.hpp"

namespace fedguard {

enum class AttackKind { none, sign_flip, scale, gan_infer, adaptive_gan_infer };

struct AttackConfig {
  AttackKind kind = AttackKind::none;
  int start_round = 50;
  int target_label = 3;    // gan variants: the class the attacker reconstructs
  double scale = 10.0;     // sign_flip / scale
  double tau = 0.0016;     // adaptive: l-infinity radius around the global weights
  int latent_dim = 8;      // generator input dimension
  int gen_hidden = 16;     // generator hidden width
  int gen_steps = 5;       // generator SGD steps per round
  double gen_lr = 0.1;
  int gen_batch = 8;       // latents per step; also the emitted batch size
  int poison_copies = 1;   // how many copies of the batch to plant in the shard
};

// Generator parameters persist across rounds for one attacking client
// (shared read-only when several malicious clients collude).
struct GeneratorState {
  ParamVector params;
  int latent_dim = 0;
  int hidden = 0;
  int out_dim = 0;
};

namespace attacks {

GeneratorState init_generator(int latent_dim, int hidden, int out_dim, rng::Stream rng);

ParamVector craft_sign_flip(const ParamVector& benign_delta, double scale);
ParamVector craft_scale(const ParamVector& benign_delta, double scale);

// Coordinate-wise clamp of w_mal into [w_global - tau, w_global + tau].
ParamVector adaptive_project(const ParamVector& w_mal, const ParamVector& w_global,
                             double tau);

// Clamps an update so the weights it implies stay inside the l-infinity ball
// of radius tau around the global weights. Clamping in delta space keeps the
// emitted update's |delta|_inf <= tau exact in floating point.
ParamVector clamp_delta_linf(const ParamVector& delta, double tau);

// One round of generator training against the frozen global model: sample
// latents, push generated images toward the target class's decision region,
// then emit a fresh batch for poisoning and metric logging.
struct GeneratorRound {
  GeneratorState gen;
  Dataset generated;  // labeled with the target class, shaped like `shape_like`
};
GeneratorRound generator_round(const ParamVector& global_params, const ModelSpec& spec,
                               GeneratorState gen, const AttackConfig& cfg,
                               const Dataset& shape_like, rng::Stream rng);

// The attacker's most-populous owned class (ties to the lowest label).
int decoy_label(const Dataset& own_shard);

// Appends `copies` copies of the generated batch to the shard, labeled with
// the decoy class.
Dataset poison_shard(const Dataset& own_shard, const Dataset& generated, int copies);

struct GanStepResult {
  ParamVector delta;
  Dataset generated;
  GeneratorState gen;
  bool attacked = false;  // false before start_round (plain benign training)
};

// Full malicious-client step: generator round, decoy-label poisoning of the
// attacker's own shard, then local training from the global weights. Behaves
// as benign local training before cfg.start_round. The training stream is
// advanced exactly as a benign client's would be.
GanStepResult gan_infer_step(const ParamVector& global_params, const ModelSpec& spec,
                             GeneratorState gen, const Dataset& own_shard,
                             const AttackConfig& cfg, int round, const TrainConfig& tc,
                             rng::Stream gen_rng, rng::Stream& train_rng);

// gan_infer_step followed by the l-infinity projection of the implied
// weights around the global model.
GanStepResult adaptive_gan_infer_step(const ParamVector& global_params,
                                      const ModelSpec& spec, GeneratorState gen,
                                      const Dataset& own_shard, const AttackConfig& cfg,
                                      int round, const TrainConfig& tc,
                                      rng::Stream gen_rng, rng::Stream& train_rng);

}  // namespace attacks
}  // namespace fedguard
