#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ctxcal/backend.hpp"
#include "ctxcal/dataset.hpp"
#include "ctxcal/format_corpus.hpp"
#include "ctxcal/harness.hpp"
#include "ctxcal/run_record.hpp"

namespace ctxcal {

enum class PermutationPolicy {
  kOne,     ///< the order the examples were drawn in (index 0)
  kAll,     ///< every ordering, subject to the enumeration cap
  kSample,  ///< `permutation_samples` distinct orderings drawn at random
};

struct SweepAxes {
  std::vector<std::string> format_ids;
  std::vector<std::size_t> shots{4};
  /// Random training sets per shot count. Zero-shot always uses one.
  std::size_t training_sets = 1;
  PermutationPolicy permutations = PermutationPolicy::kOne;
  std::size_t permutation_samples = 0;
  std::size_t permutation_cap = kDefaultPermutationCap;
  std::vector<CfInputSet> cf_input_sets{CfInputSet{}};
  std::vector<CalibrationMode> modes{CalibrationMode::kNone, CalibrationMode::kDiagonal};
};

struct SweepOptions {
  SweepAxes axes;
  std::uint64_t seed = 0;
  /// Upper bound on cells; 0 disables the check.
  std::size_t budget = 0;
  /// Prompt contexts evaluated concurrently.
  std::size_t parallel = 1;
  EvalOptions eval;
};

/// Mode/content-free combinations evaluated inside each context. kNone
/// appears once regardless of the number of cf sets.
std::vector<ModeSpec> expand_modes(const SweepAxes& axes);

/// Every prompt context of the sweep in execution order: format, shots,
/// training set, permutation. Training sets are drawn from the train split
/// with a seed derived from (seed, shots); sampled permutations from
/// (seed, shots, set).
std::vector<ContextSpec> plan_contexts(const TaskDataset& dataset, const FormatCorpus& corpus,
                                       const SweepOptions& options);

/// The single context a sweep with these options would build for
/// (format_id, shots, training set, permutation index).
ContextSpec context_at(const TaskDataset& dataset, const FormatCorpus& corpus, const SweepOptions& options,
                       const std::string& format_id, std::size_t shots, std::size_t training_set,
                       std::uint64_t permutation_index);

struct SweepPlan {
  std::vector<ContextSpec> contexts;
  std::vector<ModeSpec> modes;
  /// contexts x modes.
  std::size_t cells = 0;
  /// Upper bound on backend queries if nothing is resumed.
  std::size_t backend_calls = 0;
};

/// Validates the axes and throws BudgetExceeded when the plan has more
/// cells than the budget. Makes no backend calls.
SweepPlan plan_sweep(const TaskDataset& dataset, const FormatCorpus& corpus, const SweepOptions& options);

struct SweepOutcome {
  std::size_t contexts_run = 0;
  std::size_t contexts_skipped = 0;
  std::size_t records_written = 0;
  std::size_t failed_records = 0;
  bool cancelled = false;
};

/// Runs the plan, appending records to `store` in plan order. Contexts whose
/// records are all present in the store are skipped. When `cancel` becomes
/// true no new context is started; finished ones are still written.
SweepOutcome run_sweep(LanguageModel& lm, const TaskDataset& dataset, const SweepPlan& plan,
                       const SweepOptions& options, RecordStore& store,
                       const std::atomic<bool>* cancel = nullptr);

/// splitmix64 finalizer; used to derive independent sub-seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

}  // namespace ctxcal
