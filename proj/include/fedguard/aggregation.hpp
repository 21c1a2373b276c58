#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fedguard/rng.hpp"
#include "fedguard/vecmath.hpp"

namespace fedguard {

// One client's submission for a round.
struct ClientUpdate {
  int client_id = 0;
  int round = 0;
  ParamVector delta;
};

// Result of one aggregation call. `client_ids` lists the batch's ids in
// ascending order; `scores`, when a rule produces per-client values
// (InferGuard distances to the anchor, Krum scores, FLTrust trust scores),
// aligns with it. `anchor` is the coordinate-wise median when the rule
// computes one.
struct AggregationOutcome {
  ParamVector aggregate;
  std::vector<int> accepted;
  std::vector<int> client_ids;
  std::vector<double> scores;
  std::optional<ParamVector> anchor;
};

enum class RuleKind {
  fedavg,
  infer_guard,
  median,
  trim,
  multi_krum,
  bulyan,
  afa,
  fltrust,
};

enum class PostKind { topk, sign, dp };

// One client-side post-processing stage, applied to every delta before the
// aggregation rule runs.
struct PostStage {
  PostKind kind = PostKind::sign;
  double p = 1.0;        // topk: fraction of coordinates kept
  double clip = 1.0;     // dp: L2 clipping bound C
  double sigma = 0.0;    // dp: noise multiplier; stddev is sigma * clip
};

struct RuleConfig {
  RuleKind name = RuleKind::fedavg;
  double lambda = 2.0;        // infer_guard
  std::size_t trim_k = 1;     // trim
  int f = 1;                  // multi_krum / bulyan: assumed Byzantine count
  int m = 0;                  // multi_krum: selection count; 0 means n - f - 2
  int root_size = 0;          // fltrust: server root dataset size
  std::vector<PostStage> post;
};

namespace agg {

// Median-anchored L2 filter: accept client i iff
// |delta_i - median| <= lambda * |median|, then average the accepted set.
// If nothing passes, fall back to the single nearest update (ties go to the
// lowest client id).
AggregationOutcome infer_guard(const std::vector<ClientUpdate>& updates, double lambda);

AggregationOutcome fedavg(const std::vector<ClientUpdate>& updates);
AggregationOutcome median_rule(const std::vector<ClientUpdate>& updates);
AggregationOutcome trim_rule(const std::vector<ClientUpdate>& updates, std::size_t k);

// score(i) = sum of squared distances to its n-f-2 nearest peers; the m
// lowest-scoring updates are averaged. m <= 0 selects the default n - f - 2.
AggregationOutcome multi_krum(const std::vector<ClientUpdate>& updates, int f, int m = 0);

// Iterated Krum selection of n - 2f updates, then coordinate-wise trimmed
// mean with k = f over the selected set.
AggregationOutcome bulyan(const std::vector<ClientUpdate>& updates, int f);

// Iterative cosine-similarity cut against the running mean of the surviving
// set: drop updates whose similarity falls below mean - stddev until stable.
AggregationOutcome afa(const std::vector<ClientUpdate>& updates,
                       const std::vector<double>* prior_weights = nullptr);

// Trust-weighted mean where trust is the ReLU of cosine similarity to the
// server's root update and every delta is rescaled to the root update's norm.
// With zero total trust the aggregate is the root update itself and the
// accepted set is empty.
AggregationOutcome fltrust(const std::vector<ClientUpdate>& updates,
                           const ParamVector& root_update);

// Keeps the ceil(p * dim) coordinates of largest magnitude (ties to the
// lower index), zeroes the rest.
ParamVector sparsify_topk(const ParamVector& v, double p);

// Maps each coordinate to its sign in {-1, 0, +1}.
ParamVector sign_compress(const ParamVector& v);

// L2-clips to norm at most `clip`, then adds N(0, (sigma*clip)^2) noise per
// coordinate from the supplied stream.
ParamVector dp_gaussian(const ParamVector& v, double clip, double sigma,
                        rng::Stream rng);

ParamVector apply_post_chain(const std::vector<PostStage>& chain, ParamVector delta,
                             rng::Stream dp_rng);

// Dispatch by RuleConfig. `root_update` is required for fltrust and ignored
// otherwise.
AggregationOutcome apply_rule(const RuleConfig& cfg,
                              const std::vector<ClientUpdate>& updates,
                              const ParamVector* root_update = nullptr);

bool rule_has_selection(RuleKind kind);
}  // namespace agg
}  // namespace fedguard
