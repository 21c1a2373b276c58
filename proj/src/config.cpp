#include "fedguard/config.hpp"

#include <fstream>
#include <map>
#include <sstream>

namespace fedguard::config {
namespace {

using nlohmann::json;

const std::map<std::string, RuleKind>& rule_names() {
  static const std::map<std::string, RuleKind> names = {
      {"fedavg", RuleKind::fedavg},         {"infer_guard", RuleKind::infer_guard},
      {"median", RuleKind::median},         {"trim", RuleKind::trim},
      {"multi_krum", RuleKind::multi_krum}, {"bulyan", RuleKind::bulyan},
      {"afa", RuleKind::afa},               {"fltrust", RuleKind::fltrust},
  };
  return names;
}

const std::map<std::string, AttackKind>& attack_names() {
  static const std::map<std::string, AttackKind> names = {
      {"none", AttackKind::none},
      {"sign_flip", AttackKind::sign_flip},
      {"scale", AttackKind::scale},
      {"gan_infer", AttackKind::gan_infer},
      {"adaptive_gan_infer", AttackKind::adaptive_gan_infer},
  };
  return names;
}

[[noreturn]] void fail(const std::string& field, const std::string& what) {
  throw ConfigError("config: " + field + " " + what);
}

template <typename T>
T get_or(const json& obj, const std::string& field, const std::string& path, T fallback) {
  if (!obj.contains(field)) return fallback;
  try {
    return obj.at(field).get<T>();
  } catch (const json::exception&) {
    fail(path + field, "has the wrong type");
  }
}

json require_object(const json& doc, const std::string& field) {
  if (!doc.contains(field)) fail(field, "is required");
  if (!doc.at(field).is_object()) fail(field, "must be an object");
  return doc.at(field);
}

DatasetConfig parse_dataset(const json& obj) {
  DatasetConfig d;
  const std::string kind = get_or<std::string>(obj, "kind", "dataset.", "synthetic");
  if (kind == "synthetic") {
    d.kind = DatasetConfig::Kind::synthetic;
    d.classes = get_or(obj, "classes", "dataset.", d.classes);
    d.per_class_train = get_or(obj, "per_class_train", "dataset.", d.per_class_train);
    d.per_class_test = get_or(obj, "per_class_test", "dataset.", d.per_class_test);
    d.height = get_or(obj, "height", "dataset.", d.height);
    d.width = get_or(obj, "width", "dataset.", d.width);
    d.spread = get_or(obj, "spread", "dataset.", d.spread);
    if (d.classes < 1) fail("dataset.classes", "must be >= 1");
    if (d.height < 1 || d.width < 1) fail("dataset.height/width", "must be >= 1");
    if (d.per_class_train < 1) fail("dataset.per_class_train", "must be >= 1");
    if (d.per_class_test < 1) fail("dataset.per_class_test", "must be >= 1");
    if (d.spread < 0.0) fail("dataset.spread", "must be >= 0");
  } else if (kind == "idx") {
    d.kind = DatasetConfig::Kind::idx;
    for (const char* field : {"train_images", "train_labels", "test_images", "test_labels"}) {
      if (!obj.contains(field)) fail(std::string("dataset.") + field, "is required");
    }
    d.train_images = obj.at("train_images").get<std::string>();
    d.train_labels = obj.at("train_labels").get<std::string>();
    d.test_images = obj.at("test_images").get<std::string>();
    d.test_labels = obj.at("test_labels").get<std::string>();
  } else {
    fail("dataset.kind", "must be \"synthetic\" or \"idx\"");
  }
  return d;
}

PartitionConfig parse_partition(const json& obj) {
  PartitionConfig p;
  const std::string mode = get_or<std::string>(obj, "mode", "partition.", "label_to_k");
  if (mode == "label_to_k") {
    p.mode = PartitionConfig::Mode::label_to_k;
  } else if (mode == "labels_per_client") {
    p.mode = PartitionConfig::Mode::labels_per_client;
  } else {
    fail("partition.mode", "must be \"label_to_k\" or \"labels_per_client\"");
  }
  p.k = get_or(obj, "k", "partition.", p.k);
  p.labels_per_client = get_or(obj, "labels_per_client", "partition.", p.labels_per_client);
  if (p.k < 1) fail("partition.k", "must be >= 1");
  if (p.labels_per_client < 1) fail("partition.labels_per_client", "must be >= 1");
  return p;
}

RuleConfig parse_rule(const json& obj) {
  RuleConfig r;
  if (!obj.contains("name")) fail("rule.name", "is required");
  const auto name = obj.at("name").get<std::string>();
  const auto it = rule_names().find(name);
  if (it == rule_names().end()) fail("rule.name", "unknown rule \"" + name + "\"");
  r.name = it->second;
  r.lambda = get_or(obj, "lambda", "rule.", r.lambda);
  r.trim_k = static_cast<std::size_t>(get_or<int>(obj, "trim_k", "rule.", static_cast<int>(r.trim_k)));
  r.f = get_or(obj, "f", "rule.", r.f);
  r.m = get_or(obj, "m", "rule.", r.m);
  r.root_size = get_or(obj, "root_size", "rule.", r.root_size);
  if (!(r.lambda > 0.0)) fail("rule.lambda", "must be > 0");
  if (r.f < 0) fail("rule.f", "must be >= 0");

  if (obj.contains("post")) {
    if (!obj.at("post").is_array()) fail("rule.post", "must be an array");
    for (const auto& stage : obj.at("post")) {
      PostStage ps;
      const auto kind = get_or<std::string>(stage, "kind", "rule.post.", "");
      if (kind == "topk") {
        ps.kind = PostKind::topk;
        ps.p = get_or(stage, "p", "rule.post.", 0.1);
        if (!(ps.p > 0.0) || ps.p > 1.0) fail("rule.post.p", "must be in (0, 1]");
      } else if (kind == "sign") {
        ps.kind = PostKind::sign;
      } else if (kind == "dp") {
        ps.kind = PostKind::dp;
        ps.clip = get_or(stage, "clip", "rule.post.", 1.0);
        ps.sigma = get_or(stage, "sigma", "rule.post.", 0.01);
        if (!(ps.clip > 0.0)) fail("rule.post.clip", "must be > 0");
        if (ps.sigma < 0.0) fail("rule.post.sigma", "must be >= 0");
      } else {
        fail("rule.post.kind", "must be \"topk\", \"sign\" or \"dp\"");
      }
      r.post.push_back(ps);
    }
  }
  return r;
}

AttackConfig parse_attack(const json& obj) {
  AttackConfig a;
  const auto kind = get_or<std::string>(obj, "kind", "attack.", "none");
  const auto it = attack_names().find(kind);
  if (it == attack_names().end()) fail("attack.kind", "unknown attack \"" + kind + "\"");
  a.kind = it->second;
  a.start_round = get_or(obj, "start_round", "attack.", a.start_round);
  a.target_label = get_or(obj, "target_label", "attack.", a.target_label);
  a.scale = get_or(obj, "scale", "attack.", a.scale);
  a.tau = get_or(obj, "tau", "attack.", a.tau);
  a.latent_dim = get_or(obj, "latent_dim", "attack.", a.latent_dim);
  a.gen_hidden = get_or(obj, "gen_hidden", "attack.", a.gen_hidden);
  a.gen_steps = get_or(obj, "gen_steps", "attack.", a.gen_steps);
  a.gen_lr = get_or(obj, "gen_lr", "attack.", a.gen_lr);
  a.gen_batch = get_or(obj, "gen_batch", "attack.", a.gen_batch);
  a.poison_copies = get_or(obj, "poison_copies", "attack.", a.poison_copies);
  if (a.start_round < 0) fail("attack.start_round", "must be >= 0");
  if (a.target_label < 0) fail("attack.target_label", "must be >= 0");
  if (a.kind == AttackKind::adaptive_gan_infer && !(a.tau > 0.0)) {
    fail("attack.tau", "must be > 0");
  }
  if (a.kind == AttackKind::gan_infer || a.kind == AttackKind::adaptive_gan_infer) {
    if (a.latent_dim < 1) fail("attack.latent_dim", "must be >= 1");
    if (a.gen_hidden < 1) fail("attack.gen_hidden", "must be >= 1");
    if (a.gen_steps < 0) fail("attack.gen_steps", "must be >= 0");
    if (a.gen_batch < 1) fail("attack.gen_batch", "must be >= 1");
    if (a.poison_copies < 0) fail("attack.poison_copies", "must be >= 0");
    if (!(a.gen_lr > 0.0)) fail("attack.gen_lr", "must be > 0");
  }
  return a;
}

}  // namespace

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path + ": " + e.what());
  }
}

void apply_override(json& doc, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("config: override must look like dotted.key=value: " + spec);
  }
  const std::string path = spec.substr(0, eq);
  const std::string raw = spec.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;  // bare strings are fine
  }

  json* node = &doc;
  std::istringstream keys(path);
  std::string key;
  std::vector<std::string> parts;
  while (std::getline(keys, key, '.')) {
    if (key.empty()) throw ConfigError("config: bad override key: " + path);
    parts.push_back(key);
  }
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i]) || !(*node)[parts[i]].is_object()) {
      (*node)[parts[i]] = json::object();
    }
    node = &(*node)[parts[i]];
  }
  (*node)[parts.back()] = value;
}

ExperimentConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config: top level must be an object");
  ExperimentConfig cfg;
  cfg.seed = get_or<std::uint64_t>(doc, "seed", "", cfg.seed);
  cfg.rounds = get_or(doc, "rounds", "", cfg.rounds);
  cfg.eval_every = get_or(doc, "eval_every", "", cfg.eval_every);
  cfg.n_clients = get_or(doc, "n_clients", "", cfg.n_clients);
  cfg.threads = get_or(doc, "threads", "", cfg.threads);
  cfg.out_dir = get_or<std::string>(doc, "out_dir", "", cfg.out_dir);
  if (cfg.rounds < 1) fail("rounds", "must be >= 1");
  if (cfg.eval_every < 1) fail("eval_every", "must be >= 1");
  if (cfg.n_clients < 1) fail("n_clients", "must be >= 1");

  if (doc.contains("malicious")) {
    if (!doc.at("malicious").is_array()) fail("malicious", "must be an array of ids");
    for (const auto& v : doc.at("malicious")) {
      cfg.malicious.push_back(v.get<int>());
    }
  } else {
    cfg.malicious = {cfg.n_clients - 1};
  }
  for (int m : cfg.malicious) {
    if (m < 0 || m >= cfg.n_clients) fail("malicious", "ids must be in [0, n_clients)");
  }

  cfg.dataset = parse_dataset(require_object(doc, "dataset"));
  if (doc.contains("partition")) cfg.partition = parse_partition(doc.at("partition"));
  if (cfg.partition.mode == PartitionConfig::Mode::label_to_k &&
      cfg.partition.k > cfg.n_clients) {
    fail("partition.k", "must be <= n_clients");
  }

  if (doc.contains("model")) {
    const auto& m = doc.at("model");
    const auto kind = get_or<std::string>(m, "kind", "model.", "logistic");
    if (kind == "logistic") {
      cfg.model_kind = ModelKind::logistic;
    } else if (kind == "mlp") {
      cfg.model_kind = ModelKind::mlp;
    } else {
      fail("model.kind", "must be \"logistic\" or \"mlp\"");
    }
    cfg.hidden = get_or(m, "hidden", "model.", cfg.hidden);
    if (cfg.hidden < 1) fail("model.hidden", "must be >= 1");
  }

  if (doc.contains("train")) {
    const auto& t = doc.at("train");
    cfg.train.lr = get_or(t, "lr", "train.", cfg.train.lr);
    cfg.train.batch = get_or(t, "batch", "train.", cfg.train.batch);
    cfg.train.local_epochs = get_or(t, "local_epochs", "train.", cfg.train.local_epochs);
    if (!(cfg.train.lr > 0.0)) fail("train.lr", "must be > 0");
    if (cfg.train.batch < 1) fail("train.batch", "must be >= 1");
    if (cfg.train.local_epochs < 1) fail("train.local_epochs", "must be >= 1");
  }

  cfg.rule = parse_rule(require_object(doc, "rule"));
  if (doc.contains("attack")) cfg.attack = parse_attack(doc.at("attack"));
  return cfg;
}

// threads and out_dir are run environment, not experiment semantics: two
// runs differing only there must hash (and behave) identically.
json to_canonical_json(const ExperimentConfig& cfg) {
  json doc;
  doc["seed"] = cfg.seed;
  doc["rounds"] = cfg.rounds;
  doc["eval_every"] = cfg.eval_every;
  doc["n_clients"] = cfg.n_clients;
  doc["malicious"] = cfg.malicious;

  json d;
  if (cfg.dataset.kind == DatasetConfig::Kind::synthetic) {
    d["kind"] = "synthetic";
    d["classes"] = cfg.dataset.classes;
    d["per_class_train"] = cfg.dataset.per_class_train;
    d["per_class_test"] = cfg.dataset.per_class_test;
    d["height"] = cfg.dataset.height;
    d["width"] = cfg.dataset.width;
    d["spread"] = cfg.dataset.spread;
  } else {
    d["kind"] = "idx";
    d["train_images"] = cfg.dataset.train_images;
    d["train_labels"] = cfg.dataset.train_labels;
    d["test_images"] = cfg.dataset.test_images;
    d["test_labels"] = cfg.dataset.test_labels;
  }
  doc["dataset"] = d;

  json p;
  p["mode"] = cfg.partition.mode == PartitionConfig::Mode::label_to_k
                  ? "label_to_k"
                  : "labels_per_client";
  p["k"] = cfg.partition.k;
  p["labels_per_client"] = cfg.partition.labels_per_client;
  doc["partition"] = p;

  json m;
  m["kind"] = cfg.model_kind == ModelKind::logistic ? "logistic" : "mlp";
  m["hidden"] = cfg.hidden;
  doc["model"] = m;

  json t;
  t["lr"] = cfg.train.lr;
  t["batch"] = cfg.train.batch;
  t["local_epochs"] = cfg.train.local_epochs;
  doc["train"] = t;

  json r;
  r["name"] = rule_name(cfg.rule.name);
  r["lambda"] = cfg.rule.lambda;
  r["trim_k"] = static_cast<int>(cfg.rule.trim_k);
  r["f"] = cfg.rule.f;
  r["m"] = cfg.rule.m;
  r["root_size"] = cfg.rule.root_size;
  json post = json::array();
  for (const auto& stage : cfg.rule.post) {
    json s;
    switch (stage.kind) {
      case PostKind::topk:
        s["kind"] = "topk";
        s["p"] = stage.p;
        break;
      case PostKind::sign:
        s["kind"] = "sign";
        break;
      case PostKind::dp:
        s["kind"] = "dp";
        s["clip"] = stage.clip;
        s["sigma"] = stage.sigma;
        break;
    }
    post.push_back(s);
  }
  r["post"] = post;
  doc["rule"] = r;

  json a;
  a["kind"] = attack_name(cfg.attack.kind);
  a["start_round"] = cfg.attack.start_round;
  a["target_label"] = cfg.attack.target_label;
  a["scale"] = cfg.attack.scale;
  a["tau"] = cfg.attack.tau;
  a["latent_dim"] = cfg.attack.latent_dim;
  a["gen_hidden"] = cfg.attack.gen_hidden;
  a["gen_steps"] = cfg.attack.gen_steps;
  a["gen_lr"] = cfg.attack.gen_lr;
  a["gen_batch"] = cfg.attack.gen_batch;
  a["poison_copies"] = cfg.attack.poison_copies;
  doc["attack"] = a;
  return doc;
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string dump = to_canonical_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : dump) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

std::string rule_name(RuleKind kind) {
  for (const auto& [name, k] : rule_names()) {
    if (k == kind) return name;
  }
  return "unknown";
}

std::string attack_name(AttackKind kind) {
  for (const auto& [name, k] : attack_names()) {
    if (k == kind) return name;
  }
  return "unknown";
}

}  // namespace fedguard::config
