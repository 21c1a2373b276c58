#pragma once

#include <stdexcept>
#include <string>

#include <json.hpp>

#include "fedguard/harness.hpp"

namespace fedguard {

// Raised for malformed configs and bad overrides; the CLI maps it to exit 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace config {

nlohmann::json load_config_file(const std::string& path);

// Applies a "dotted.key=value" override; the value is parsed as JSON when
// possible and kept as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& spec);

ExperimentConfig parse_config(const nlohmann::json& doc);

// Canonical document with every field materialized: semantically equal
// configs serialize identically, which is what the hash is taken over.
nlohmann::json to_canonical_json(const ExperimentConfig& cfg);

// FNV-1a over the canonical serialization, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

std::string rule_name(RuleKind kind);
std::string attack_name(AttackKind kind);

}  // namespace config
}  // namespace fedguard
