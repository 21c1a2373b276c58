#include "fedguard/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace fedguard::agg {
namespace {

using vecmath::coordinate_median;
using vecmath::coordinate_trimmed_mean;
using vecmath::cosine_similarity;
using vecmath::l2_distance;
using vecmath::l2_norm;
using vecmath::mean;

// Canonical view of a batch: updates ordered by client id. Every rule works
// on this ordering so permuting the input list never changes the aggregate.
struct Batch {
  std::vector<int> ids;
  std::vector<ParamVector> deltas;
  std::size_t size() const { return ids.size(); }
};

Batch canonicalize(const std::vector<ClientUpdate>& updates, const char* op) {
  if (updates.empty()) {
    throw std::invalid_argument(std::string(op) + ": empty update list");
  }
  std::vector<std::size_t> order(updates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return updates[a].client_id < updates[b].client_id;
  });
  Batch batch;
  batch.ids.reserve(updates.size());
  batch.deltas.reserve(updates.size());
  const std::size_t d = updates.front().delta.dim();
  for (std::size_t idx : order) {
    const ClientUpdate& u = updates[idx];
    if (!batch.ids.empty() && batch.ids.back() == u.client_id) {
      throw std::invalid_argument(std::string(op) + ": duplicate client id");
    }
    if (u.delta.dim() != d) {
      throw std::invalid_argument(std::string(op) + ": dimension mismatch");
    }
    batch.ids.push_back(u.client_id);
    batch.deltas.push_back(u.delta);
  }
  return batch;
}

ParamVector mean_of(const Batch& batch, const std::vector<int>& accepted) {
  std::vector<ParamVector> chosen;
  chosen.reserve(accepted.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (std::binary_search(accepted.begin(), accepted.end(), batch.ids[i])) {
      chosen.push_back(batch.deltas[i]);
    }
  }
  return mean(chosen);
}

}  // namespace

bool rule_has_selection(RuleKind kind) {
  switch (kind) {
    case RuleKind::fedavg:
    case RuleKind::median:
    case RuleKind::trim:
      return false;
    default:
      return true;
  }
}

AggregationOutcome infer_guard(const std::vector<ClientUpdate>& updates, double lambda) {
  if (!(lambda > 0.0)) {
    throw std::invalid_argument("infer_guard: lambda must be > 0");
  }
  Batch batch = canonicalize(updates, "infer_guard");
  ParamVector anchor = coordinate_median(batch.deltas);
  const double threshold = lambda * l2_norm(anchor);

  std::vector<double> distances(batch.size());
  std::vector<int> accepted;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    distances[i] = l2_distance(batch.deltas[i], anchor);
    if (distances[i] <= threshold) accepted.push_back(batch.ids[i]);
  }
  if (accepted.empty()) {
    // Nothing passed the filter: keep the single nearest update. Scanning in
    // id order breaks distance ties toward the lowest client id.
    std::size_t best = 0;
    for (std::size_t i = 1; i < batch.size(); ++i) {
      if (distances[i] < distances[best]) best = i;
    }
    accepted.push_back(batch.ids[best]);
  }
  ParamVector aggregate = mean_of(batch, accepted);
  return AggregationOutcome{std::move(aggregate), std::move(accepted),
                            std::move(batch.ids), std::move(distances),
                            std::move(anchor)};
}

AggregationOutcome fedavg(const std::vector<ClientUpdate>& updates) {
  Batch batch = canonicalize(updates, "fedavg");
  ParamVector aggregate = mean(batch.deltas);
  std::vector<int> accepted = batch.ids;
  return AggregationOutcome{std::move(aggregate), std::move(accepted),
                            std::move(batch.ids), {}, std::nullopt};
}

AggregationOutcome median_rule(const std::vector<ClientUpdate>& updates) {
  Batch batch = canonicalize(updates, "median_rule");
  ParamVector aggregate = coordinate_median(batch.deltas);
  std::vector<int> accepted = batch.ids;
  return AggregationOutcome{std::move(aggregate), std::move(accepted),
                            std::move(batch.ids), {}, std::nullopt};
}

AggregationOutcome trim_rule(const std::vector<ClientUpdate>& updates, std::size_t k) {
  Batch batch = canonicalize(updates, "trim_rule");
  ParamVector aggregate = coordinate_trimmed_mean(batch.deltas, k);
  std::vector<int> accepted = batch.ids;
  return AggregationOutcome{std::move(aggregate), std::move(accepted),
                            std::move(batch.ids), {}, std::nullopt};
}

AggregationOutcome multi_krum(const std::vector<ClientUpdate>& updates, int f, int m) {
  Batch batch = canonicalize(updates, "multi_krum");
  const int n = static_cast<int>(batch.size());
  if (f < 0) throw std::invalid_argument("multi_krum: f must be >= 0");
  if (n < f + 3) throw std::invalid_argument("multi_krum: requires n >= f + 3");
  const int neighbors = n - f - 2;
  if (m <= 0) m = neighbors;
  if (m < 1 || m > neighbors) {
    throw std::invalid_argument("multi_krum: requires 1 <= m <= n - f - 2");
  }

  std::vector<double> scores(batch.size());
  std::vector<double> d2(batch.size() - 1);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    std::size_t w = 0;
    for (std::size_t j = 0; j < batch.size(); ++j) {
      if (j == i) continue;
      const double d = l2_distance(batch.deltas[i], batch.deltas[j]);
      d2[w++] = d * d;
    }
    std::sort(d2.begin(), d2.end());
    double acc = 0.0;
    for (int t = 0; t < neighbors; ++t) acc += d2[static_cast<std::size_t>(t)];
    scores[i] = acc;
  }

  std::vector<std::size_t> order(batch.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] < scores[b];
    return batch.ids[a] < batch.ids[b];
  });
  std::vector<int> accepted;
  for (int t = 0; t < m; ++t) accepted.push_back(batch.ids[order[static_cast<std::size_t>(t)]]);
  std::sort(accepted.begin(), accepted.end());

  ParamVector aggregate = mean_of(batch, accepted);
  return AggregationOutcome{std::move(aggregate), std::move(accepted),
                            std::move(batch.ids), std::move(scores), std::nullopt};
}

AggregationOutcome bulyan(const std::vector<ClientUpdate>& updates, int f) {
  Batch batch = canonicalize(updates, "bulyan");
  const int n = static_cast<int>(batch.size());
  if (f < 0) throw std::invalid_argument("bulyan: f must be >= 0");
  if (n < 4 * f + 3) throw std::invalid_argument("bulyan: requires n >= 4f + 3");
  const int theta = n - 2 * f;

  std::vector<std::size_t> remaining(batch.size());
  std::iota(remaining.begin(), remaining.end(), std::size_t{0});
  std::vector<std::size_t> selected;
  for (int round = 0; round < theta; ++round) {
    const int nr = static_cast<int>(remaining.size());
    const int neighbors = std::max(nr - f - 2, 0);
    std::size_t best = remaining.size();
    double best_score = std::numeric_limits<double>::infinity();
    std::vector<double> d2(remaining.size() > 0 ? remaining.size() - 1 : 0);
    for (std::size_t pos = 0; pos < remaining.size(); ++pos) {
      const std::size_t i = remaining[pos];
      std::size_t w = 0;
      for (std::size_t qos = 0; qos < remaining.size(); ++qos) {
        if (qos == pos) continue;
        const std::size_t j = remaining[qos];
        const double d = l2_distance(batch.deltas[i], batch.deltas[j]);
        d2[w++] = d * d;
      }
      std::sort(d2.begin(), d2.begin() + static_cast<std::ptrdiff_t>(w));
      double acc = 0.0;
      for (int t = 0; t < neighbors; ++t) acc += d2[static_cast<std::size_t>(t)];
      // Strict < keeps the lowest-id update on ties (remaining is id-ordered).
      if (acc < best_score) {
        best_score = acc;
        best = pos;
      }
    }
    selected.push_back(remaining[best]);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(best));
  }

  std::sort(selected.begin(), selected.end());
  std::vector<ParamVector> chosen;
  std::vector<int> accepted;
  chosen.reserve(selected.size());
  for (std::size_t i : selected) {
    chosen.push_back(batch.deltas[i]);
    accepted.push_back(batch.ids[i]);
  }
  ParamVector aggregate = coordinate_trimmed_mean(chosen, static_cast<std::size_t>(f));
  return AggregationOutcome{std::move(aggregate), std::move(accepted),
                            std::move(batch.ids), {}, std::nullopt};
}

AggregationOutcome afa(const std::vector<ClientUpdate>& updates,
                       const std::vector<double>* prior_weights) {
  Batch batch = canonicalize(updates, "afa");
  std::vector<double> weights(batch.size(), 1.0);
  if (prior_weights != nullptr) {
    if (prior_weights->size() != batch.size()) {
      throw std::invalid_argument("afa: prior weight count mismatch");
    }
    weights = *prior_weights;
  }
  constexpr double kXi = 1.0;

  std::vector<std::size_t> good(batch.size());
  std::iota(good.begin(), good.end(), std::size_t{0});
  std::vector<double> sims(batch.size(), 0.0);
  while (true) {
    // Weighted mean of the surviving set, in id order.
    std::vector<double> acc(batch.deltas.front().dim(), 0.0);
    double wsum = 0.0;
    for (std::size_t i : good) {
      for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += weights[i] * batch.deltas[i][j];
      wsum += weights[i];
    }
    for (double& x : acc) x /= wsum;
    ParamVector center{std::move(acc)};

    double mu = 0.0;
    for (std::size_t i : good) {
      sims[i] = cosine_similarity(batch.deltas[i], center);
      mu += sims[i];
    }
    mu /= static_cast<double>(good.size());
    double var = 0.0;
    for (std::size_t i : good) {
      const double d = sims[i] - mu;
      var += d * d;
    }
    const double sdev = std::sqrt(var / static_cast<double>(good.size()));
    const double cut = mu - kXi * sdev;

    std::vector<std::size_t> kept;
    for (std::size_t i : good) {
      if (!(sims[i] < cut)) kept.push_back(i);
    }
    if (kept.empty()) {
      // Guard: keep the single highest-similarity update (lowest id on ties).
      std::size_t best = good.front();
      for (std::size_t i : good) {
        if (sims[i] > sims[best]) best = i;
      }
      good = {best};
      break;
    }
    if (kept.size() == good.size()) break;
    good = std::move(kept);
  }

  std::vector<ParamVector> survivors;
  std::vector<int> accepted;
  for (std::size_t i : good) {
    survivors.push_back(batch.deltas[i]);
    accepted.push_back(batch.ids[i]);
  }
  ParamVector aggregate = mean(survivors);
  return AggregationOutcome{std::move(aggregate), std::move(accepted),
                            std::move(batch.ids), {}, std::nullopt};
}

AggregationOutcome fltrust(const std::vector<ClientUpdate>& updates,
                           const ParamVector& root_update) {
  Batch batch = canonicalize(updates, "fltrust");
  const double root_norm = l2_norm(root_update);
  if (root_norm == 0.0) {
    throw std::invalid_argument("fltrust: root_update must be nonzero");
  }

  std::vector<double> trust(batch.size());
  std::vector<double> acc(root_update.dim(), 0.0);
  double trust_sum = 0.0;
  std::vector<int> accepted;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch.deltas[i].dim() != root_update.dim()) {
      throw std::invalid_argument("fltrust: dimension mismatch with root update");
    }
    trust[i] = std::max(0.0, cosine_similarity(batch.deltas[i], root_update));
    const double norm_i = l2_norm(batch.deltas[i]);
    const double rescale = norm_i == 0.0 ? 0.0 : root_norm / norm_i;
    for (std::size_t j = 0; j < acc.size(); ++j) {
      acc[j] += trust[i] * rescale * batch.deltas[i][j];
    }
    trust_sum += trust[i];
    if (trust[i] > 0.0) accepted.push_back(batch.ids[i]);
  }

  if (trust_sum == 0.0) {
    return AggregationOutcome{root_update, {}, std::move(batch.ids),
                              std::move(trust), std::nullopt};
  }
  for (double& x : acc) x /= trust_sum;
  return AggregationOutcome{ParamVector{std::move(acc)}, std::move(accepted),
                            std::move(batch.ids), std::move(trust), std::nullopt};
}

ParamVector sparsify_topk(const ParamVector& v, double p) {
  if (!(p > 0.0) || p > 1.0) {
    throw std::invalid_argument("sparsify_topk: p must be in (0, 1]");
  }
  const std::size_t d = v.dim();
  // Small slack keeps near-integer products of p * dim at their exact value.
  const std::size_t keep = std::min<std::size_t>(
      d, static_cast<std::size_t>(
             std::max(1.0, std::ceil(p * static_cast<double>(d) - 1e-12))));
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::fabs(v[a]) > std::fabs(v[b]);
  });
  std::vector<double> out(d, 0.0);
  for (std::size_t i = 0; i < keep; ++i) out[order[i]] = v[order[i]];
  return ParamVector(std::move(out));
}

ParamVector sign_compress(const ParamVector& v) {
  std::vector<double> out(v.dim());
  for (std::size_t i = 0; i < v.dim(); ++i) {
    out[i] = v[i] > 0.0 ? 1.0 : (v[i] < 0.0 ? -1.0 : 0.0);
  }
  return ParamVector(std::move(out));
}

ParamVector dp_gaussian(const ParamVector& v, double clip, double sigma,
                        rng::Stream rng) {
  if (!(clip > 0.0)) throw std::invalid_argument("dp_gaussian: clip must be > 0");
  if (sigma < 0.0) throw std::invalid_argument("dp_gaussian: sigma must be >= 0");
  const double norm = vecmath::l2_norm(v);
  std::vector<double> out(v.dim());
  // Scaling as (v * clip) / norm keeps exact quotients exact, e.g. [3,4]
  // clipped to norm 1 is [0.6, 0.8] bit for bit.
  for (std::size_t i = 0; i < v.dim(); ++i) {
    out[i] = norm > clip ? v[i] * clip / norm : v[i];
  }
  if (sigma > 0.0) {
    const double stddev = sigma * clip;
    for (std::size_t i = 0; i < v.dim(); ++i) out[i] += stddev * rng.gaussian();
  }
  return ParamVector(std::move(out));
}

ParamVector apply_post_chain(const std::vector<PostStage>& chain, ParamVector delta,
                             rng::Stream dp_rng) {
  for (const PostStage& stage : chain) {
    switch (stage.kind) {
      case PostKind::topk:
        delta = sparsify_topk(delta, stage.p);
        break;
      case PostKind::sign:
        delta = sign_compress(delta);
        break;
      case PostKind::dp:
        delta = dp_gaussian(delta, stage.clip, stage.sigma, dp_rng);
        // Advance the stream so stacked dp stages draw distinct noise.
        dp_rng = rng::Stream::derive(dp_rng.next_u64(), "dp-chain");
        break;
    }
  }
  return delta;
}

AggregationOutcome apply_rule(const RuleConfig& cfg,
                              const std::vector<ClientUpdate>& updates,
                              const ParamVector* root_update) {
  switch (cfg.name) {
    case RuleKind::fedavg:
      return fedavg(updates);
    case RuleKind::infer_guard:
      return infer_guard(updates, cfg.lambda);
    case RuleKind::median:
      return median_rule(updates);
    case RuleKind::trim:
      return trim_rule(updates, cfg.trim_k);
    case RuleKind::multi_krum:
      return multi_krum(updates, cfg.f, cfg.m);
    case RuleKind::bulyan:
      return bulyan(updates, cfg.f);
    case RuleKind::afa:
      return afa(updates);
    case RuleKind::fltrust:
      if (root_update == nullptr) {
        throw std::invalid_argument("fltrust: root update required");
      }
      return fltrust(updates, *root_update);
  }
  throw std::logic_error("apply_rule: unknown rule");
}

}  // namespace fedguard::agg
