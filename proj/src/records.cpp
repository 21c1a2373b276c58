#include "fedguard/records.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace fedguard::records {
namespace {

using nlohmann::json;

json opt_to_json(const std::optional<double>& v) {
  if (!v) return nullptr;
  if (std::isinf(*v)) return *v > 0 ? "inf" : "-inf";  // JSON has no infinity
  return *v;
}

std::optional<double> opt_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw std::runtime_error("records: bad numeric sentinel \"" + s + "\"");
  }
  return j.get<double>();
}

std::string fmt_opt(const std::optional<double>& v) {
  if (!v) return "null";
  if (std::isinf(*v)) return *v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", *v);
  return std::string(buf);
}

void require_field(const json& j, const char* field, const char* where) {
  if (!j.contains(field)) {
    throw std::runtime_error(std::string("records: ") + where + " line missing \"" +
                             field + "\"");
  }
}

}  // namespace

json header_to_json(const Header& h) {
  json j;
  j["type"] = "header";
  j["schema_version"] = h.schema_version;
  j["rule"] = h.rule;
  j["attack"] = h.attack;
  j["attack_start"] = h.attack_start;
  j["rounds"] = h.rounds;
  j["config_hash"] = h.config_hash;
  return j;
}

Header header_from_json(const json& j) {
  for (const char* f : {"type", "schema_version", "rule", "attack", "attack_start",
                        "rounds", "config_hash"}) {
    require_field(j, f, "header");
  }
  if (j.at("type").get<std::string>() != "header") {
    throw std::runtime_error("records: first line is not a header");
  }
  Header h;
  h.schema_version = j.at("schema_version").get<int>();
  h.rule = j.at("rule").get<std::string>();
  h.attack = j.at("attack").get<std::string>();
  h.attack_start = j.at("attack_start").get<int>();
  h.rounds = j.at("rounds").get<int>();
  h.config_hash = j.at("config_hash").get<std::string>();
  return h;
}

json record_to_json(const RoundRecord& r) {
  json j;
  j["type"] = "round";
  j["round"] = r.round;
  j["accepted"] = r.accepted;
  j["indicator"] = r.indicator;
  j["no_selection"] = r.no_selection;
  j["attack_active"] = r.attack_active;
  j["distances"] = r.distances.empty() ? json(nullptr) : json(r.distances);
  j["anchor_norm"] = opt_to_json(r.anchor_norm);
  j["accuracy"] = opt_to_json(r.accuracy);
  j["psnr"] = opt_to_json(r.psnr);
  j["ssim"] = opt_to_json(r.ssim);
  j["malicious_linf"] = opt_to_json(r.malicious_linf);
  return j;
}

RoundRecord record_from_json(const json& j) {
  for (const char* f : {"type", "round", "accepted", "indicator", "no_selection",
                        "attack_active", "distances", "anchor_norm", "accuracy",
                        "psnr", "ssim", "malicious_linf"}) {
    require_field(j, f, "round");
  }
  if (j.at("type").get<std::string>() != "round") {
    throw std::runtime_error("records: expected a round line");
  }
  RoundRecord r;
  r.round = j.at("round").get<int>();
  r.accepted = j.at("accepted").get<std::vector<int>>();
  r.indicator = j.at("indicator").get<int>();
  r.no_selection = j.at("no_selection").get<bool>();
  r.attack_active = j.at("attack_active").get<bool>();
  if (!j.at("distances").is_null()) {
    r.distances = j.at("distances").get<std::vector<double>>();
  }
  r.anchor_norm = opt_from_json(j.at("anchor_norm"));
  r.accuracy = opt_from_json(j.at("accuracy"));
  r.psnr = opt_from_json(j.at("psnr"));
  r.ssim = opt_from_json(j.at("ssim"));
  r.malicious_linf = opt_from_json(j.at("malicious_linf"));
  return r;
}

std::string render_records(const Header& header, const std::vector<RoundRecord>& records) {
  std::string out = header_to_json(header).dump();
  out.push_back('\n');
  for (const RoundRecord& r : records) {
    out += record_to_json(r).dump();
    out.push_back('\n');
  }
  return out;
}

void write_records(const std::string& path, const Header& header,
                   const std::vector<RoundRecord>& records) {
  write_text_file(path, render_records(header, records));
}

RecordsFile read_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("records: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("records: empty file " + path);
  RecordsFile file;
  try {
    file.header = header_from_json(json::parse(line));
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      file.records.push_back(record_from_json(json::parse(line)));
    }
  } catch (const json::parse_error& e) {
    throw std::runtime_error("records: " + path + ": " + e.what());
  }
  return file;
}

std::string render_summary_csv(const std::string& rule, const metrics::Summary& s) {
  std::ostringstream out;
  out << "rule,mean_accuracy,min_accuracy,max_accuracy,final_accuracy,"
         "indicator_rate,mean_psnr,mean_ssim,lpips\n";
  out << rule << ',' << fmt_opt(s.mean_accuracy) << ',' << fmt_opt(s.min_accuracy) << ','
      << fmt_opt(s.max_accuracy) << ',' << fmt_opt(s.final_accuracy) << ','
      << fmt_opt(s.indicator_rate) << ',' << fmt_opt(s.mean_psnr) << ','
      << fmt_opt(s.mean_ssim) << ',' << fmt_opt(s.lpips) << '\n';
  return out.str();
}

std::string render_report_csv(const std::vector<RecordsFile>& runs) {
  std::vector<std::size_t> order(runs.size());
  for (std::size_t i = 0; i < runs.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return runs[a].header.rule < runs[b].header.rule;
  });
  std::ostringstream out;
  out << "rule,lpips,psnr,ssim,accuracy,indicator_rate\n";
  for (std::size_t i : order) {
    const RecordsFile& run = runs[i];
    const bool attacked = run.header.attack != "none";
    const int start = attacked ? run.header.attack_start : run.header.rounds;
    const metrics::Summary s =
        metrics::summarize(run.records, start, run.header.rounds);
    out << run.header.rule << ',' << fmt_opt(s.lpips) << ',' << fmt_opt(s.mean_psnr)
        << ',' << fmt_opt(s.mean_ssim) << ',' << fmt_opt(s.final_accuracy) << ','
        << fmt_opt(s.indicator_rate) << '\n';
  }
  return out.str();
}

void export_pgm(const Image& image, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("pgm: cannot open " + path);
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  for (double v : image.pixels) {
    const long q = std::lround(255.0 * v);
    out.put(static_cast<char>(static_cast<unsigned char>(std::clamp(q, 0L, 255L))));
  }
  if (!out) throw std::runtime_error("pgm: write failed for " + path);
}

Image read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("pgm: cannot open " + path);
  std::string magic;
  int width = 0, height = 0, maxval = 0;
  in >> magic >> width >> height >> maxval;
  if (magic != "P5" || maxval != 255 || width < 1 || height < 1) {
    throw std::runtime_error("pgm: unsupported format in " + path);
  }
  in.get();  // single whitespace after the header
  std::vector<double> pixels(static_cast<std::size_t>(width) * static_cast<std::size_t>(height));
  for (double& v : pixels) {
    const int byte = in.get();
    if (byte == EOF) throw std::runtime_error("pgm: truncated file " + path);
    v = static_cast<double>(byte) / 255.0;
  }
  return make_image(std::move(pixels), height, width);
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("io: cannot open " + path);
  out << content;
  if (!out) throw std::runtime_error("io: write failed for " + path);
}

}  // namespace fedguard::records
