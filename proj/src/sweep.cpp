#include "ctxcal/sweep.hpp"

#include <algorithm>
#include <exception>
#include <mutex>
#include <optional>
#include <set>
#include <thread>

#include "ctxcal/error.hpp"

namespace ctxcal {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  auto splitmix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return splitmix(splitmix(splitmix(seed) ^ a) ^ b);
}

std::vector<ModeSpec> expand_modes(const SweepAxes& axes) {
  std::vector<ModeSpec> out;
  std::set<CalibrationMode> seen;
  for (auto mode : axes.modes) {
    if (!seen.insert(mode).second) continue;
    if (mode == CalibrationMode::kNone) {
      out.push_back({mode, {"", {}}});
      continue;
    }
    for (const auto& cf : axes.cf_input_sets) out.push_back({mode, cf});
  }
  return out;
}

namespace {

std::vector<std::uint64_t> permutation_indices(const SweepAxes& axes, std::size_t k, std::uint64_t seed) {
  switch (axes.permutations) {
    case PermutationPolicy::kOne:
      return {0};
    case PermutationPolicy::kAll: {
      if (k > axes.permutation_cap) {
        throw CapExceeded(std::to_string(k) + "! orderings exceed the enumeration cap of " +
                          std::to_string(axes.permutation_cap) + " examples; sample permutations instead");
      }
      std::vector<std::uint64_t> out(factorial(k));
      for (std::uint64_t i = 0; i < out.size(); ++i) out[i] = i;
      return out;
    }
    case PermutationPolicy::kSample: {
      const auto total = factorial(k);
      const auto n = std::min<std::uint64_t>(axes.permutation_samples, total);
      Rng rng(seed);
      std::vector<std::uint64_t> out;
      std::set<std::uint64_t> seen;
      while (out.size() < n) {
        const auto idx = rng.uniform_index(total);
        if (seen.insert(idx).second) out.push_back(idx);
      }
      return out;
    }
  }
  return {0};
}

}  // namespace

std::vector<ContextSpec> plan_contexts(const TaskDataset& ds, const FormatCorpus& corpus, const SweepOptions& options) {
  const auto& axes = options.axes;
  if (axes.format_ids.empty()) throw ConfigError("sweep needs at least one format id");
  if (axes.shots.empty()) throw ConfigError("sweep needs at least one shot count");
  if (axes.training_sets == 0) throw ConfigError("training_sets must be at least 1");
  if (axes.permutations == PermutationPolicy::kSample && axes.permutation_samples == 0) {
    throw ConfigError("permutation sampling needs a positive sample count");
  }
  const auto pool = ds.train_pool();
  std::vector<ContextSpec> out;
  for (const auto& format_id : axes.format_ids) {
    const auto& format = corpus.require(format_id);
    for (auto k : axes.shots) {
      const std::size_t n_sets = k == 0 ? 1 : axes.training_sets;
      const auto sets = sample_training_sets(pool.size(), k, n_sets, mix_seed(options.seed, 1, k));
      for (std::size_t s = 0; s < sets.size(); ++s) {
        const auto drawn = apply_permutation(std::span<const LabeledExample>(pool), std::span<const std::size_t>(sets[s]));
        for (auto perm : permutation_indices(axes, k, mix_seed(options.seed, 2, mix_seed(k, s)))) {
          ContextSpec ctx;
          ctx.format_id = format_id;
          ctx.format = format;
          ctx.shots = k;
          ctx.training_set_id = s;
          ctx.permutation_index = perm;
          ctx.seed = options.seed;
          const auto order = permutation_at(k, perm);
          ctx.examples = apply_permutation(std::span<const LabeledExample>(drawn), std::span<const std::size_t>(order));
          out.push_back(std::move(ctx));
        }
      }
    }
  }
  return out;
}

ContextSpec context_at(const TaskDataset& ds, const FormatCorpus& corpus, const SweepOptions& options,
                       const std::string& format_id, std::size_t k, std::size_t set, std::uint64_t perm) {
  if (k == 0 && set != 0) throw ConfigError("zero-shot prompts have a single training set");
  if (perm >= factorial(k)) {
    throw ConfigError("permutation index " + std::to_string(perm) + " out of range for " + std::to_string(k) +
                      " examples");
  }
  const auto pool = ds.train_pool();
  const auto sets = sample_training_sets(pool.size(), k, set + 1, mix_seed(options.seed, 1, k));
  const auto drawn = apply_permutation(std::span<const LabeledExample>(pool), std::span<const std::size_t>(sets[set]));
  ContextSpec ctx;
  ctx.format_id = format_id;
  ctx.format = corpus.require(format_id);
  ctx.shots = k;
  ctx.training_set_id = set;
  ctx.permutation_index = perm;
  ctx.seed = options.seed;
  const auto order = permutation_at(k, perm);
  ctx.examples = apply_permutation(std::span<const LabeledExample>(drawn), std::span<const std::size_t>(order));
  return ctx;
}

SweepPlan plan_sweep(const TaskDataset& ds, const FormatCorpus& corpus, const SweepOptions& options) {
  SweepPlan plan;
  plan.modes = expand_modes(options.axes);
  if (plan.modes.empty()) throw ConfigError("sweep needs at least one calibration mode");
  for (const auto& m : plan.modes) {
    if (m.mode == CalibrationMode::kNone) continue;
    if (m.cf.inputs.empty()) throw ConfigError("content-free input set '" + m.cf.id + "' is empty");
    if (m.mode == CalibrationMode::kOracle && ds.kind != TaskKind::kClassification) {
      throw ConfigError("oracle calibration needs a classification task");
    }
    if (m.mode == CalibrationMode::kOracle && ds.validation.empty()) {
      throw ConfigError("oracle calibration needs a validation split");
    }
  }
  plan.contexts = plan_contexts(ds, corpus, options);
  plan.cells = plan.contexts.size() * plan.modes.size();
  if (options.budget > 0 && plan.cells > options.budget) {
    throw BudgetExceeded("sweep has " + std::to_string(plan.cells) + " cells, budget is " +
                         std::to_string(options.budget));
  }

  std::size_t per_context = 0;
  std::set<std::string> cf_sets;
  bool oracle = false;
  for (const auto& m : plan.modes) {
    if (ds.kind == TaskKind::kGeneration) per_context += ds.test.size() * (m.mode == CalibrationMode::kNone ? 1 : 2);
    if (m.mode == CalibrationMode::kNone) continue;
    if (cf_sets.insert(m.cf.id).second) per_context += m.cf.inputs.size();
    oracle = oracle || m.mode == CalibrationMode::kOracle;
  }
  if (ds.kind == TaskKind::kClassification) per_context += ds.test.size() + (oracle ? ds.validation.size() : 0);
  plan.backend_calls = per_context * plan.contexts.size();
  return plan;
}

SweepOutcome run_sweep(LanguageModel& lm, const TaskDataset& ds, const SweepPlan& plan, const SweepOptions& options,
                       RecordStore& store, const std::atomic<bool>* cancel) {
  SweepOutcome outcome;
  const std::size_t n = plan.contexts.size();

  std::vector<bool> skip(n, false);
  for (std::size_t c = 0; c < n; ++c) {
    bool done = true;
    for (const auto& m : plan.modes) {
      const auto run_id = make_run_id(plan.contexts[c], m);
      for (auto i : ds.test) {
        if (!store.contains(run_id, ds.at(i).id)) {
          done = false;
          break;
        }
      }
      if (!done) break;
    }
    skip[c] = done;
    outcome.contexts_skipped += done;
  }

  std::vector<std::optional<std::vector<RunRecord>>> results(n);
  std::mutex mu;
  std::size_t next = 0;
  std::size_t flushed = 0;
  std::exception_ptr error;

  auto flush_prefix = [&] {
    // Caller holds mu.
    while (flushed < n && (skip[flushed] || results[flushed])) {
      if (results[flushed]) {
        store.append(*results[flushed]);
        for (const auto& r : *results[flushed]) outcome.failed_records += !r.ok;
        outcome.records_written += results[flushed]->size();
        results[flushed].reset();
      }
      ++flushed;
    }
  };

  auto worker = [&] {
    for (;;) {
      std::size_t c;
      {
        std::lock_guard lock(mu);
        while (next < n && skip[next]) ++next;
        if (next >= n || error || (cancel && cancel->load())) return;
        c = next++;
      }
      try {
        auto records = evaluate_context(lm, ds, plan.contexts[c], plan.modes, options.eval);
        std::lock_guard lock(mu);
        results[c] = std::move(records);
        ++outcome.contexts_run;
        flush_prefix();
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };

  const auto threads = std::clamp<std::size_t>(options.parallel, 1, std::max<std::size_t>(n, 1));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  // After cancellation or an error some later contexts may have finished
  // ahead of an unstarted one; write them too so a resume skips them.
  std::lock_guard lock(mu);
  flush_prefix();
  for (std::size_t c = flushed; c < n; ++c) {
    if (!results[c]) continue;
    store.append(*results[c]);
    for (const auto& r : *results[c]) outcome.failed_records += !r.ok;
    outcome.records_written += results[c]->size();
    results[c].reset();
  }
  outcome.cancelled = cancel && cancel->load() && outcome.contexts_run + outcome.contexts_skipped < n;
  if (error) std::rethrow_exception(error);
  return outcome;
}

}  // namespace ctxcal
