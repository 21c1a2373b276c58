#pragma once

#include <optional>
#include <vector>

namespace fedguard {

// Per-round log entry. `indicator` is 1 iff any malicious client id landed in
// the rule's accepted set; `no_selection` flags rules that accept everything
// by construction (FedAvg, Median, Trim), where the indicator carries no
// selection semantics.
struct RoundRecord {
  int round = 0;
  std::vector<int> accepted;
  int indicator = 0;
  bool no_selection = false;
  bool attack_active = false;
  std::vector<double> distances;          // per-client rule scores, id order
  std::optional<double> anchor_norm;      // |median anchor|, when computed
  std::optional<double> accuracy;         // global test accuracy, eval rounds
  std::optional<double> psnr;             // generated batch vs reference
  std::optional<double> ssim;
  std::optional<double> malicious_linf;   // max |delta|_inf over attackers
};

}  // namespace fedguard
