#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fedguard/aggregation.hpp"
#include "fedguard/attacks.hpp"
#include "fedguard/metrics.hpp"
#include "fedguard/models.hpp"
#include "fedguard/round_record.hpp"

namespace fedguard {

struct DatasetConfig {
  enum class Kind { synthetic, idx };
  Kind kind = Kind::synthetic;
  // synthetic
  int classes = 4;
  int per_class_train = 200;
  int per_class_test = 50;
  int height = 4;
  int width = 4;
  double spread = 0.15;
  // idx
  std::string train_images, train_labels, test_images, test_labels;
};

struct PartitionConfig {
  enum class Mode { label_to_k, labels_per_client };
  Mode mode = Mode::label_to_k;
  int k = 5;                  // label_to_k: clients per label
  int labels_per_client = 3;  // labels_per_client: labels owned per client
};

// Full declarative description of one run.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  int rounds = 300;
  int eval_every = 10;
  int n_clients = 10;
  std::vector<int> malicious;  // empty means {n_clients - 1}
  int threads = 1;
  DatasetConfig dataset;
  PartitionConfig partition;
  ModelKind model_kind = ModelKind::logistic;
  int hidden = 32;
  TrainConfig train;
  RuleConfig rule;
  AttackConfig attack;
  std::string out_dir = "out";
};

namespace harness {

// Non-iid partitioner. label_to_k spreads each label over k seeded-chosen
// clients with equal splits (remainders to the lowest chosen ids);
// labels_per_client hands each client a seeded draw of labels and splits each
// label among its owners. Shards are disjoint and cover the dataset; a client
// ending up empty (or a label ending up unowned) is an error, not a re-draw.
std::vector<Dataset> partition(const Dataset& data, const PartitionConfig& cfg,
                               int n_clients, rng::Stream rng);

struct RootSplit {
  Dataset root;
  Dataset remainder;
};

// Class-stratified seeded sample of `size` points for the server (FLTrust),
// disjoint from everything the clients will see.
RootSplit build_root_dataset(const Dataset& data, int size, rng::Stream rng);

// Mean image over the benign clients' samples of the target label: the
// deterministic, attacker-independent reference for PSNR/SSIM.
Image reference_image(const std::vector<Dataset>& shards,
                      const std::vector<int>& malicious, int target_label);

struct ExperimentResult {
  std::vector<RoundRecord> records;
  ParamVector final_params;
  std::optional<Image> reference;
  std::vector<Image> last_generated;  // final attacked round's batch
};

// Owns the full federation state; rounds advance it.
class Federation {
 public:
  explicit Federation(const ExperimentConfig& cfg);
  ~Federation();
  Federation(const Federation&) = delete;
  Federation& operator=(const Federation&) = delete;

  RoundRecord run_round(int t);
  ExperimentResult run_all();

  const ParamVector& global_params() const;
  const ModelSpec& model_spec() const;
  const std::vector<Dataset>& shards() const;
  const Dataset& test_set() const;
  const Dataset& root_set() const;  // empty unless the rule uses one
  const std::optional<Image>& reference() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg);

}  // namespace harness
}  // namespace fedguard
