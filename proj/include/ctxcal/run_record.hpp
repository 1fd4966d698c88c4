#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ctxcal/prob_vector.hpp"

namespace ctxcal {

enum class CalibrationMode { kNone, kDiagonal, kAdditive, kOracle };

std::string to_string(CalibrationMode mode);
/// Accepts "none", "diagonal", "additive", "oracle". Throws ConfigError.
CalibrationMode parse_calibration_mode(std::string_view s);

/// One evaluated test item under one prompt context and calibration mode.
///
/// `calibrated` is present iff `mode != kNone` on successful records. A
/// failed record (`ok == false`) keeps its provenance and the error text and
/// is excluded from accuracy.
struct RunRecord {
  /// Identifies the cell; shared by every test item evaluated in it.
  std::string run_id;
  std::uint64_t seed = 0;
  std::string format_id;
  std::size_t shots = 0;
  std::size_t training_set_id = 0;
  std::uint64_t permutation_index = 0;
  std::string backend_id;
  std::string test_item_id;
  std::string task_kind;
  std::vector<std::string> example_labels;
  std::optional<ProbVector> raw;
  std::optional<ProbVector> calibrated;
  std::string prediction;
  std::string gold;
  CalibrationMode mode = CalibrationMode::kNone;
  std::string cf_set_id;
  std::vector<std::string> cf_inputs;
  bool ok = true;
  std::string error;
  bool correct = false;

  bool operator==(const RunRecord&) const = default;
};

std::string to_json_line(const RunRecord& record);
RunRecord parse_run_record(std::string_view line);

/// Reads a JSONL record file. Missing file → empty.
std::vector<RunRecord> load_records(const std::filesystem::path& path);

/// Append-only JSONL record file with a single serialized writer.
class RecordStore {
 public:
  /// With `resume`, existing records are indexed so finished cells can be
  /// skipped. Without it, a non-empty file is a ConfigError.
  RecordStore(std::filesystem::path path, bool resume);

  bool contains(const std::string& run_id, const std::string& test_item_id) const;
  std::size_t size() const;
  void append(std::span<const RunRecord> records);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::set<std::pair<std::string, std::string>> keys_;
};

}  // namespace ctxcal
