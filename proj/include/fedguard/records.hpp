#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "fedguard/metrics.hpp"
#include "fedguard/round_record.hpp"

namespace fedguard::records {

inline constexpr int kSchemaVersion = 1;

// First line of every records file; makes the stream self-describing.
struct Header {
  int schema_version = kSchemaVersion;
  std::string rule;
  std::string attack;
  int attack_start = 0;
  int rounds = 0;
  std::string config_hash;
};

nlohmann::json header_to_json(const Header& h);
Header header_from_json(const nlohmann::json& j);

nlohmann::json record_to_json(const RoundRecord& r);
RoundRecord record_from_json(const nlohmann::json& j);

// Line-delimited JSON: the header line followed by one line per round.
std::string render_records(const Header& header, const std::vector<RoundRecord>& records);
void write_records(const std::string& path, const Header& header,
                   const std::vector<RoundRecord>& records);

struct RecordsFile {
  Header header;
  std::vector<RoundRecord> records;
};
// Parses and schema-checks a records file.
RecordsFile read_records(const std::string& path);

// One-row CSV summary of a run.
std::string render_summary_csv(const std::string& rule, const metrics::Summary& s);

// Joined report over several runs: one row per records file, sorted by rule
// name. Columns: rule, lpips (always null), psnr, ssim, accuracy,
// indicator_rate.
std::string render_report_csv(const std::vector<RecordsFile>& runs);

// Binary PGM (P5), max value 255, round-half-up quantization.
void export_pgm(const Image& image, const std::string& path);
Image read_pgm(const std::string& path);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace fedguard::records
