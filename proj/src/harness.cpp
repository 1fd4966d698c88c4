#include "ctxcal/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "ctxcal/diagnostics.hpp"
#include "ctxcal/error.hpp"

namespace ctxcal {
namespace {

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

RunRecord base_record(const TaskDataset& ds, const ContextSpec& ctx, const ModeSpec& mode,
                      const std::string& backend_id, const DatasetItem& item) {
  RunRecord r;
  r.run_id = make_run_id(ctx, mode);
  r.seed = ctx.seed;
  r.format_id = ctx.format_id;
  r.shots = ctx.shots;
  r.training_set_id = ctx.training_set_id;
  r.permutation_index = ctx.permutation_index;
  r.backend_id = backend_id;
  r.test_item_id = item.id;
  r.task_kind = to_string(ds.kind);
  for (const auto& ex : ctx.examples) r.example_labels.push_back(ex.label);
  r.gold = item.gold;
  r.mode = mode.mode;
  if (mode.mode != CalibrationMode::kNone) {
    r.cf_set_id = mode.cf.id;
    r.cf_inputs = mode.cf.inputs;
  }
  return r;
}

void fail(RunRecord& r, const std::string& message) {
  r.ok = false;
  r.error = message;
  r.calibrated.reset();
  r.correct = false;
}

// A value or the error that prevented computing it.
template <class T>
struct Outcome {
  std::optional<T> value;
  std::string error;
};

PromptSpec base_spec(const TaskDataset& ds, const ContextSpec& ctx) {
  PromptSpec spec;
  spec.format = ctx.format;
  spec.examples = ctx.examples;
  spec.label_space = ds.kind == TaskKind::kClassification ? ds.label_space : LabelSpace{};
  return spec;
}

ContentFreeOptions cf_options(const TaskDataset& ds, const EvalOptions& options) {
  ContentFreeOptions o;
  o.label_probs = options.label_probs;
  o.cf_template = ds.cf_template;
  o.answer_prefix = ds.answer_prefix;
  return o;
}

void check_modes(const TaskDataset& ds, std::span<const ModeSpec> modes) {
  for (const auto& m : modes) {
    if (m.mode != CalibrationMode::kNone && m.cf.inputs.empty()) {
      throw ConfigError("content-free input set '" + m.cf.id + "' is empty");
    }
    if (m.mode == CalibrationMode::kOracle) {
      if (ds.kind != TaskKind::kClassification) throw ConfigError("oracle calibration needs a classification task");
      if (ds.validation.empty()) throw ConfigError("oracle calibration needs a validation split");
    }
  }
}

}  // namespace

std::string make_run_id(const ContextSpec& ctx, const ModeSpec& mode) {
  std::string id = ctx.format_id + "|k=" + std::to_string(ctx.shots) + "|set=" +
                   std::to_string(ctx.training_set_id) + "|perm=" + std::to_string(ctx.permutation_index) +
                   "|seed=" + std::to_string(ctx.seed) + "|" + to_string(mode.mode);
  if (mode.mode != CalibrationMode::kNone) id += "|cf=" + mode.cf.id;
  return id;
}

std::vector<RunRecord> evaluate_classification(LanguageModel& lm, const TaskDataset& ds, const ContextSpec& ctx,
                                               std::span<const ModeSpec> modes, const EvalOptions& options) {
  if (ds.kind != TaskKind::kClassification) throw ConfigError("evaluate_classification on a generation dataset");
  check_modes(ds, modes);
  const auto spec = base_spec(ds, ctx);
  const auto names = ds.label_space.names();

  auto query = [&](const std::string& input) {
    PromptSpec s = spec;
    s.test_input = input;
    return renormalize_label_probs(label_probs(lm, make_request(s, ds.answer_prefix), ds.label_space,
                                               options.label_probs));
  };
  auto query_all = [&](const std::vector<std::size_t>& split) {
    std::vector<Outcome<ProbVector>> out(split.size());
    parallel_for(split.size(), options.parallel, [&](std::size_t i) {
      try {
        out[i].value = query(ds.at(split[i]).text);
      } catch (const Error& e) {
        out[i].error = e.what();
      }
    });
    return out;
  };

  const auto raw = query_all(ds.test);

  std::map<std::string, Outcome<ContentFreeEstimate>> cf_cache;
  auto estimate = [&](const CfInputSet& cf) -> const Outcome<ContentFreeEstimate>& {
    auto [it, inserted] = cf_cache.try_emplace(cf.id);
    if (inserted) {
      try {
        it->second.value = estimate_content_free(lm, spec, cf.inputs, cf_options(ds, options));
      } catch (const Error& e) {
        it->second.error = std::string("content-free estimate failed: ") + e.what();
      }
    }
    return it->second;
  };

  std::optional<std::vector<ValidationItem>> validation;
  std::string validation_error;
  auto validation_log = [&]() -> const std::vector<ValidationItem>* {
    if (!validation && validation_error.empty()) {
      const auto outcomes = query_all(ds.validation);
      validation.emplace();
      for (std::size_t i = 0; i < outcomes.size(); ++i) {
        if (!outcomes[i].value) continue;
        validation->push_back({*outcomes[i].value, ds.label_space.require(ds.at(ds.validation[i]).gold)});
      }
      if (validation->empty()) {
        validation.reset();
        validation_error = "every validation query failed";
      }
    }
    return validation ? &*validation : nullptr;
  };

  std::vector<RunRecord> records;
  records.reserve(modes.size() * ds.test.size());
  for (const auto& mode : modes) {
    std::optional<CalibrationParams> params;
    std::string params_error;
    try {
      switch (mode.mode) {
        case CalibrationMode::kNone:
          break;
        case CalibrationMode::kDiagonal:
        case CalibrationMode::kAdditive: {
          const auto& est = estimate(mode.cf);
          if (!est.value) {
            params_error = est.error;
            break;
          }
          params = mode.mode == CalibrationMode::kDiagonal ? fit_diagonal(est.value->ensemble)
                                                           : fit_additive(est.value->ensemble);
          break;
        }
        case CalibrationMode::kOracle: {
          const auto* log = validation_log();
          if (!log) {
            params_error = validation_error;
            break;
          }
          std::optional<CalibrationParams> contextual;
          const auto& est = estimate(mode.cf);
          if (est.value) {
            try {
              contextual = fit_diagonal(est.value->ensemble);
            } catch (const ZeroEntry&) {
            }
          }
          params = oracle_calibrate(*log, contextual ? &*contextual : nullptr).params;
          break;
        }
      }
    } catch (const Error& e) {
      params_error = e.what();
    }

    for (std::size_t i = 0; i < ds.test.size(); ++i) {
      auto r = base_record(ds, ctx, mode, lm.id(), ds.at(ds.test[i]));
      if (!raw[i].value) {
        fail(r, raw[i].error);
        records.push_back(std::move(r));
        continue;
      }
      r.raw = raw[i].value;
      if (mode.mode == CalibrationMode::kNone) {
        r.prediction = names[predict(*r.raw)];
      } else if (!params) {
        fail(r, params_error);
        records.push_back(std::move(r));
        continue;
      } else {
        r.calibrated = apply_calibration(*params, *r.raw);
        r.prediction = names[predict(*r.calibrated)];
      }
      r.correct = r.prediction == r.gold;
      records.push_back(std::move(r));
    }
  }
  return records;
}

std::vector<RunRecord> evaluate_generation(LanguageModel& lm, const TaskDataset& ds, const ContextSpec& ctx,
                                           std::span<const ModeSpec> modes, const EvalOptions& options) {
  if (ds.kind != TaskKind::kGeneration) throw ConfigError("evaluate_generation on a classification dataset");
  check_modes(ds, modes);
  const auto spec = base_spec(ds, ctx);

  auto request_for = [&](const std::string& input) {
    PromptSpec s = spec;
    s.test_input = input;
    return make_request(s, ds.answer_prefix);
  };

  std::map<std::string, Outcome<ContentFreeEstimate>> cf_cache;
  std::vector<RunRecord> records;
  for (const auto& mode : modes) {
    std::optional<CalibrationParams> params;
    std::string params_error;
    if (mode.mode != CalibrationMode::kNone) {
      auto [it, inserted] = cf_cache.try_emplace(mode.cf.id);
      if (inserted) {
        try {
          it->second.value =
              estimate_content_free_first_token(lm, spec, mode.cf.inputs, options.top_k, cf_options(ds, options));
        } catch (const Error& e) {
          it->second.error = std::string("content-free estimate failed: ") + e.what();
        }
      }
      try {
        if (!it->second.value) {
          params_error = it->second.error;
        } else {
          params = mode.mode == CalibrationMode::kDiagonal ? fit_diagonal(it->second.value->ensemble)
                                                           : fit_additive(it->second.value->ensemble);
        }
      } catch (const Error& e) {
        params_error = e.what();
      }
    }

    std::vector<RunRecord> block(ds.test.size());
    parallel_for(ds.test.size(), options.parallel, [&](std::size_t i) {
      const auto& item = ds.at(ds.test[i]);
      auto r = base_record(ds, ctx, mode, lm.id(), item);
      try {
        const auto request = request_for(item.text);
        if (mode.mode == CalibrationMode::kNone) {
          r.prediction = lm.complete(request, options.generation).text;
        } else if (!params) {
          throw Error(params_error);
        } else {
          r.raw = lm.next_token(request, options.top_k).to_prob_vector();
          if (r.raw->empty()) throw AllZeroMass("backend listed no first-token candidates");
          r.calibrated = apply_calibration(*params, *r.raw);
          std::string text = (*r.calibrated)[predict(*r.calibrated)].id;
          if (!cut_at_stop(text, options.generation.stop)) {
            Request rest = request;
            rest.prompt += text;
            rest.context.generated = text;
            GenerationOptions more = options.generation;
            more.max_tokens = std::max(0, more.max_tokens - 1);
            if (more.max_tokens > 0) text += lm.complete(rest, more).text;
          }
          r.prediction = std::move(text);
        }
        r.correct = trim(r.prediction) == trim(r.gold);
      } catch (const Error& e) {
        fail(r, e.what());
      }
      block[i] = std::move(r);
    });
    for (auto& r : block) records.push_back(std::move(r));
  }
  return records;
}

std::vector<RunRecord> evaluate_context(LanguageModel& lm, const TaskDataset& ds, const ContextSpec& ctx,
                                        std::span<const ModeSpec> modes, const EvalOptions& options) {
  return ds.kind == TaskKind::kClassification ? evaluate_classification(lm, ds, ctx, modes, options)
                                              : evaluate_generation(lm, ds, ctx, modes, options);
}

double accuracy(std::span<const RunRecord> records) {
  std::size_t ok = 0, correct = 0;
  for (const auto& r : records) {
    if (!r.ok) continue;
    ++ok;
    correct += r.correct;
  }
  return ok == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(ok);
}

double params_accuracy(std::span<const ValidationItem> items, const CalibrationParams& params) {
  if (items.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& it : items) correct += predict(apply_calibration(params, it.raw)) == it.gold;
  return static_cast<double>(correct) / static_cast<double>(items.size());
}

namespace {

CalibrationParams coordinate_ascent(std::span<const ValidationItem> items, const CalibrationParams& start) {
  auto current = start;
  double best = params_accuracy(items, current);
  for (int round = 0; round < 3; ++round) {
    for (std::size_t c = 0; c < current.size(); ++c) {
      double best_w = current.w_diag[c];
      for (int i = -6; i <= 6; ++i) {
        const double w = start.w_diag[c] * std::ldexp(1.0, i);
        if (w == current.w_diag[c]) continue;
        auto trial = current;
        trial.w_diag[c] = w;
        const double acc = params_accuracy(items, trial);
        if (acc > best) {
          best = acc;
          best_w = w;
        }
      }
      current.w_diag[c] = best_w;
    }
  }
  return current;
}

}  // namespace

OracleResult oracle_calibrate(std::span<const ValidationItem> items, const CalibrationParams* contextual) {
  if (items.empty()) throw DegenerateInput("oracle calibration needs a non-empty validation log");
  const auto ids = items.front().raw.ids();
  for (const auto& it : items) {
    if (it.raw.ids() != ids) throw DimensionMismatch("validation distributions disagree on the label space");
    if (it.gold >= ids.size()) throw InvalidLabel("validation gold index out of range");
  }

  std::vector<CalibrationParams> candidates;
  if (ids.size() == 2) {
    std::vector<std::pair<double, bool>> pts;
    for (const auto& it : items) pts.emplace_back(it.raw[0].prob, it.gold == 0);
    const auto t = best_threshold(std::move(pts)).threshold;
    auto p = CalibrationParams::identity(ids);
    p.w_diag = {1.0 - t, t};
    candidates.push_back(std::move(p));
  } else {
    candidates.push_back(coordinate_ascent(items, CalibrationParams::identity(ids)));
    if (contextual) candidates.push_back(coordinate_ascent(items, *contextual));
  }
  if (contextual) {
    // The contextual fit itself is in the search family; keeping it as a
    // candidate makes dominance hold exactly, rounding included.
    auto p = *contextual;
    std::fill(p.b.begin(), p.b.end(), 0.0);
    candidates.push_back(std::move(p));
  }

  OracleResult best{candidates.front(), -1.0};
  for (auto& c : candidates) {
    const double acc = params_accuracy(items, c);
    if (acc > best.accuracy) best = {std::move(c), acc};
  }
  return best;
}

std::string record_field(const RunRecord& r, const std::string& field) {
  if (field == "run_id") return r.run_id;
  if (field == "seed") return std::to_string(r.seed);
  if (field == "format_id") return r.format_id;
  if (field == "shots") return std::to_string(r.shots);
  if (field == "training_set_id") return std::to_string(r.training_set_id);
  if (field == "permutation_index") return std::to_string(r.permutation_index);
  if (field == "backend_id") return r.backend_id;
  if (field == "task_kind") return r.task_kind;
  if (field == "calibration_mode") return to_string(r.mode);
  if (field == "cf_set_id") return r.cf_set_id;
  throw ConfigError("cannot group by '" + field + "'");
}

std::vector<SummaryRow> aggregate(std::span<const RunRecord> records, const std::vector<std::string>& group_by) {
  struct Cell {
    std::size_t ok = 0, correct = 0;
  };
  struct Group {
    std::vector<std::pair<std::string, std::string>> key;
    std::vector<std::string> cell_order;
    std::map<std::string, Cell> cells;
    std::size_t records = 0, failed = 0;
  };
  std::vector<Group> groups;
  std::map<std::vector<std::string>, std::size_t> index;
  for (const auto& r : records) {
    std::vector<std::string> key;
    for (const auto& f : group_by) key.push_back(record_field(r, f));
    auto [it, inserted] = index.try_emplace(key, groups.size());
    if (inserted) {
      Group g;
      for (std::size_t i = 0; i < group_by.size(); ++i) g.key.emplace_back(group_by[i], key[i]);
      groups.push_back(std::move(g));
    }
    auto& g = groups[it->second];
    ++g.records;
    if (!r.ok) {
      ++g.failed;
      continue;
    }
    auto [cell, fresh] = g.cells.try_emplace(r.run_id);
    if (fresh) g.cell_order.push_back(r.run_id);
    ++cell->second.ok;
    cell->second.correct += r.correct;
  }

  std::vector<SummaryRow> rows;
  for (const auto& g : groups) {
    SummaryRow row;
    row.key = g.key;
    row.records = g.records;
    row.failed = g.failed;
    row.invalid = static_cast<double>(g.failed) > 0.01 * static_cast<double>(g.records);
    std::vector<double> accs;
    for (const auto& id : g.cell_order) {
      const auto& c = g.cells.at(id);
      accs.push_back(static_cast<double>(c.correct) / static_cast<double>(c.ok));
    }
    row.cells = accs.size();
    row.singleton = accs.size() == 1;
    if (!accs.empty()) {
      double sum = 0.0;
      for (double a : accs) sum += a;
      row.mean = sum / static_cast<double>(accs.size());
      double ss = 0.0;
      for (double a : accs) ss += (a - row.mean) * (a - row.mean);
      row.std = std::sqrt(ss / static_cast<double>(accs.size()));
      row.min = *std::min_element(accs.begin(), accs.end());
      row.max = *std::max_element(accs.begin(), accs.end());
      // Summation rounding must not break min <= mean <= max.
      row.mean = std::clamp(row.mean, row.min, row.max);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string summary_tsv(std::span<const SummaryRow> rows, const std::vector<std::string>& group_by) {
  std::ostringstream out;
  for (const auto& f : group_by) out << f << '\t';
  out << "cells\tmean\tstd\tmin\tmax\tsingleton\trecords\tfailed\tinvalid\n";
  char buf[32];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  for (const auto& r : rows) {
    for (const auto& kv : r.key) out << kv.second << '\t';
    out << r.cells << '\t' << num(r.mean) << '\t' << num(r.std) << '\t' << num(r.min) << '\t' << num(r.max) << '\t'
        << (r.singleton ? 1 : 0) << '\t' << r.records << '\t' << r.failed << '\t' << (r.invalid ? 1 : 0) << '\n';
  }
  return out.str();
}

}  // namespace ctxcal
