#include "ctxcal/run_record.hpp"

#include <fstream>

#include <json.hpp>

#include "ctxcal/error.hpp"

namespace ctxcal {

using nlohmann::json;
using nlohmann::ordered_json;

std::string to_string(CalibrationMode mode) {
  switch (mode) {
    case CalibrationMode::kNone:
      return "none";
    case CalibrationMode::kDiagonal:
      return "diagonal";
    case CalibrationMode::kAdditive:
      return "additive";
    case CalibrationMode::kOracle:
      return "oracle";
  }
  return "none";
}

CalibrationMode parse_calibration_mode(std::string_view s) {
  if (s == "none") return CalibrationMode::kNone;
  if (s == "diagonal") return CalibrationMode::kDiagonal;
  if (s == "additive") return CalibrationMode::kAdditive;
  if (s == "oracle") return CalibrationMode::kOracle;
  throw ConfigError("unknown calibration mode '" + std::string(s) + "'");
}

namespace {

ordered_json prob_to_json(const ProbVector& v) {
  ordered_json entries = ordered_json::array();
  for (const auto& e : v) entries.push_back(ordered_json::array({e.id, e.prob}));
  ordered_json j;
  j["entries"] = std::move(entries);
  j["remainder"] = v.remainder_mass();
  j["support"] = v.open() ? "open" : "closed";
  return j;
}

ProbVector prob_from_json(const json& j) {
  std::vector<ProbEntry> entries;
  for (const auto& e : j.at("entries")) entries.push_back({e.at(0).get<std::string>(), e.at(1).get<double>()});
  const auto support = j.value("support", "closed") == "open" ? Support::kOpen : Support::kClosed;
  return ProbVector(std::move(entries), j.value("remainder", 0.0), support);
}

}  // namespace

std::string to_json_line(const RunRecord& r) {
  ordered_json j;
  j["run_id"] = r.run_id;
  j["seed"] = r.seed;
  j["format_id"] = r.format_id;
  j["shots"] = r.shots;
  j["training_set_id"] = r.training_set_id;
  j["permutation_index"] = r.permutation_index;
  j["backend_id"] = r.backend_id;
  j["test_item_id"] = r.test_item_id;
  j["task_kind"] = r.task_kind;
  j["example_labels"] = r.example_labels;
  j["raw"] = r.raw ? prob_to_json(*r.raw) : ordered_json(nullptr);
  j["calibrated"] = r.calibrated ? prob_to_json(*r.calibrated) : ordered_json(nullptr);
  j["prediction"] = r.prediction;
  j["gold"] = r.gold;
  j["calibration_mode"] = to_string(r.mode);
  j["cf_set_id"] = r.cf_set_id;
  j["cf_inputs"] = r.cf_inputs;
  j["ok"] = r.ok;
  j["error"] = r.error;
  j["correct"] = r.correct;
  return j.dump();
}

RunRecord parse_run_record(std::string_view line) {
  RunRecord r;
  try {
    const auto j = json::parse(line);
    r.run_id = j.at("run_id").get<std::string>();
    r.seed = j.value("seed", std::uint64_t{0});
    r.format_id = j.value("format_id", "");
    r.shots = j.value("shots", std::size_t{0});
    r.training_set_id = j.value("training_set_id", std::size_t{0});
    r.permutation_index = j.value("permutation_index", std::uint64_t{0});
    r.backend_id = j.value("backend_id", "");
    r.test_item_id = j.at("test_item_id").get<std::string>();
    r.task_kind = j.value("task_kind", "classification");
    r.example_labels = j.value("example_labels", std::vector<std::string>{});
    if (j.contains("raw") && !j["raw"].is_null()) r.raw = prob_from_json(j["raw"]);
    if (j.contains("calibrated") && !j["calibrated"].is_null()) r.calibrated = prob_from_json(j["calibrated"]);
    r.prediction = j.value("prediction", "");
    r.gold = j.value("gold", "");
    r.mode = parse_calibration_mode(j.value("calibration_mode", "none"));
    r.cf_set_id = j.value("cf_set_id", "");
    r.cf_inputs = j.value("cf_inputs", std::vector<std::string>{});
    r.ok = j.value("ok", true);
    r.error = j.value("error", "");
    r.correct = j.value("correct", false);
  } catch (const json::exception& e) {
    throw DatasetError(std::string("malformed run record: ") + e.what());
  }
  return r;
}

std::vector<RunRecord> load_records(const std::filesystem::path& path) {
  std::vector<RunRecord> out;
  std::ifstream in(path, std::ios::binary);
  if (!in) return out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(parse_run_record(line));
  }
  return out;
}

RecordStore::RecordStore(std::filesystem::path path, bool resume) : path_(std::move(path)) {
  std::error_code ec;
  const bool non_empty = std::filesystem::exists(path_, ec) && std::filesystem::file_size(path_, ec) > 0;
  if (non_empty && !resume) {
    throw ConfigError(path_.string() + " already holds records; pass --resume to continue it");
  }
  for (const auto& r : load_records(path_)) keys_.emplace(r.run_id, r.test_item_id);
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream touch(path_, std::ios::app | std::ios::binary);
  if (!touch) throw ConfigError("cannot open " + path_.string() + " for writing");
}

bool RecordStore::contains(const std::string& run_id, const std::string& test_item_id) const {
  std::lock_guard lock(mu_);
  return keys_.count({run_id, test_item_id}) > 0;
}

std::size_t RecordStore::size() const {
  std::lock_guard lock(mu_);
  return keys_.size();
}

void RecordStore::append(std::span<const RunRecord> records) {
  std::lock_guard lock(mu_);
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) throw ConfigError("cannot append to " + path_.string());
  for (const auto& r : records) {
    if (!keys_.emplace(r.run_id, r.test_item_id).second) continue;
    out << to_json_line(r) << '\n';
  }
  out.flush();
}

}  // namespace ctxcal
