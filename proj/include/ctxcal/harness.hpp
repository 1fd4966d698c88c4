#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ctxcal/backend.hpp"
#include "ctxcal/calibration.hpp"
#include "ctxcal/dataset.hpp"
#include "ctxcal/prompt.hpp"
#include "ctxcal/run_record.hpp"

namespace ctxcal {

struct CfInputSet {
  std::string id = "default";
  std::vector<std::string> inputs = default_content_free_inputs();
};

/// A calibration mode and, unless the mode is kNone, the content-free
/// inputs it is fitted from. Oracle mode uses them for its contextual start.
struct ModeSpec {
  CalibrationMode mode = CalibrationMode::kNone;
  CfInputSet cf;
};

/// One prompt context: a format and an ordered list of training examples.
struct ContextSpec {
  std::string format_id;
  PromptFormat format;
  std::size_t shots = 0;
  std::size_t training_set_id = 0;
  std::uint64_t permutation_index = 0;
  std::uint64_t seed = 0;
  std::vector<LabeledExample> examples;
};

struct EvalOptions {
  LabelProbOptions label_probs;
  /// Width of the first-token distribution for generation.
  int top_k = 5;
  GenerationOptions generation;
  /// Test items evaluated concurrently within one context.
  std::size_t parallel = 1;
};

std::string make_run_id(const ContextSpec& context, const ModeSpec& mode);

/// Records for every test item under every mode, mode-major. The raw
/// distribution of each item is queried once and shared by all modes; the
/// content-free estimate is computed once per cf set. Item-level backend
/// errors produce failed records instead of exceptions.
std::vector<RunRecord> evaluate_classification(LanguageModel& lm, const TaskDataset& dataset,
                                               const ContextSpec& context, std::span<const ModeSpec> modes,
                                               const EvalOptions& options = {});

/// Greedy generation scored by exact match after trimming. Calibrated modes
/// re-rank the first token over the truncated distribution and continue
/// greedily from it.
std::vector<RunRecord> evaluate_generation(LanguageModel& lm, const TaskDataset& dataset,
                                           const ContextSpec& context, std::span<const ModeSpec> modes,
                                           const EvalOptions& options = {});

/// Dispatches on the dataset's task kind.
std::vector<RunRecord> evaluate_context(LanguageModel& lm, const TaskDataset& dataset, const ContextSpec& context,
                                        std::span<const ModeSpec> modes, const EvalOptions& options = {});

/// Fraction of correct records among the successful ones; 0 when none succeeded.
double accuracy(std::span<const RunRecord> records);

struct ValidationItem {
  ProbVector raw;
  std::size_t gold = 0;
};

struct OracleResult {
  CalibrationParams params;
  double accuracy = 0.0;
};

/// Accuracy of argmax(apply_calibration(params, raw)) against gold.
double params_accuracy(std::span<const ValidationItem> items, const CalibrationParams& params);

/// Best diagonal W (b = 0) on a labeled log. Two classes: exact threshold
/// scan, converted to w = [1 - t, t]. More classes: coordinate ascent over
/// per-class scales start * 2^i, i in [-6, 6], three rounds, run from the
/// identity and, when given, from `contextual`. The result is never worse
/// than `contextual` on the same log.
OracleResult oracle_calibrate(std::span<const ValidationItem> items,
                              const CalibrationParams* contextual = nullptr);

struct SummaryRow {
  std::vector<std::pair<std::string, std::string>> key;
  /// Cells (distinct run ids) with at least one successful record.
  std::size_t cells = 0;
  double mean = 0.0;
  /// Population standard deviation over cell accuracies.
  double std = 0.0;
  double min = 0.0;
  double max = 0.0;
  bool singleton = false;
  std::size_t records = 0;
  std::size_t failed = 0;
  /// More than 1% of the group's records failed.
  bool invalid = false;
};

/// Field names usable in group_by: run_id, seed, format_id, shots,
/// training_set_id, permutation_index, backend_id, task_kind,
/// calibration_mode, cf_set_id. Throws ConfigError on others.
std::string record_field(const RunRecord& record, const std::string& field);

/// Accuracy per cell, then mean/std/min/max of cell accuracies per group.
/// Groups appear in order of first occurrence.
std::vector<SummaryRow> aggregate(std::span<const RunRecord> records, const std::vector<std::string>& group_by);

/// Tab-separated table with a header row.
std::string summary_tsv(std::span<const SummaryRow> rows, const std::vector<std::string>& group_by);

}  // namespace ctxcal
