#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ctxcal/calibration.hpp"
#include "ctxcal/config.hpp"
#include "ctxcal/dataset.hpp"
#include "ctxcal/diagnostics.hpp"
#include "ctxcal/error.hpp"
#include "ctxcal/format_corpus.hpp"
#include "ctxcal/harness.hpp"
#include "ctxcal/run_record.hpp"
#include "ctxcal/sweep.hpp"

namespace ctxcal::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

struct CommonFlags {
  std::string config;
  std::string backend;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> parallel;
  bool dry_run = false;
  bool resume = false;
};

struct ContextFlags {
  std::string format_id;
  std::optional<std::size_t> shots;
  std::size_t set = 0;
  std::uint64_t perm = 0;
  std::string test_item;
  std::optional<std::string> test_input;
};

struct DiagnoseFlags {
  std::string records;
  std::string freq;
  std::string mode = "none";
  std::size_t positive = 0;
};

void add_config(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "Run config file (JSON)")->required();
  cmd->add_option("--backend", f.backend, "Override the backend kind (mock or http)");
  cmd->add_option("--seed", f.seed, "Override the sweep seed");
  cmd->add_flag("--dry-run", f.dry_run, "Validate and print the cell count without backend calls");
}

void add_context(CLI::App* cmd, ContextFlags& f) {
  cmd->add_option("--format", f.format_id, "Format id (default: first in config)");
  cmd->add_option("--shots", f.shots, "Training examples (default: first in config)");
  cmd->add_option("--set", f.set, "Training set index");
  cmd->add_option("--perm", f.perm, "Permutation index (lexicographic rank)");
}

struct Loaded {
  RunConfig config;
  TaskDataset dataset;
  FormatCorpus corpus;
};

Loaded load(const CommonFlags& f) {
  Loaded l{load_run_config(f.config), {}, {}};
  auto& c = l.config;
  if (!f.backend.empty()) {
    if (f.backend != "mock" && f.backend != "http") throw ConfigError("--backend must be mock or http");
    c.backend.kind = f.backend;
  }
  if (f.seed) c.sweep.seed = *f.seed;
  if (!f.out.empty()) c.out = f.out;
  if (f.parallel) c.sweep.parallel = *f.parallel;
  c.validate();
  l.dataset = TaskDataset::load(c.dataset);
  l.corpus = FormatCorpus::load(c.formats);
  return l;
}

ContextSpec select_context(const Loaded& l, const ContextFlags& f) {
  const auto& axes = l.config.sweep.axes;
  std::string format_id = f.format_id;
  if (format_id.empty()) {
    if (axes.format_ids.empty()) throw ConfigError("no --format given and the config lists no format_ids");
    format_id = axes.format_ids.front();
  }
  const std::size_t shots = f.shots ? *f.shots : (axes.shots.empty() ? 0 : axes.shots.front());
  return context_at(l.dataset, l.corpus, l.config.sweep, format_id, shots, f.set, f.perm);
}

PromptSpec prompt_for(const Loaded& l, const ContextSpec& ctx) {
  PromptSpec spec;
  spec.format = ctx.format;
  spec.examples = ctx.examples;
  if (l.dataset.kind == TaskKind::kClassification) spec.label_space = l.dataset.label_space;
  return spec;
}

void print_dry_run(const Loaded& l, std::ostream& out) {
  const auto plan = plan_sweep(l.dataset, l.corpus, l.config.sweep);
  out << "config ok\n"
      << "contexts: " << plan.contexts.size() << "\n"
      << "cells: " << plan.cells << "\n"
      << "backend calls (at most): " << plan.backend_calls << "\n";
}

int cmd_render(const CommonFlags& common, const ContextFlags& cf, std::ostream& out) {
  const auto l = load(common);
  if (common.dry_run) {
    print_dry_run(l, out);
    return kOk;
  }
  const auto ctx = select_context(l, cf);
  auto spec = prompt_for(l, ctx);
  if (cf.test_input) {
    spec.test_input = *cf.test_input;
  } else {
    const auto& ds = l.dataset;
    auto it = ds.test.begin();
    if (!cf.test_item.empty()) {
      it = std::find_if(ds.test.begin(), ds.test.end(), [&](std::size_t i) { return ds.at(i).id == cf.test_item; });
      if (it == ds.test.end()) throw ConfigError("no test item '" + cf.test_item + "'");
    }
    spec.test_input = ds.at(*it).text;
  }
  out << render(spec);
  out.flush();
  return kOk;
}

ordered_json prob_json(const ProbVector& v) {
  ordered_json j = ordered_json::object();
  for (const auto& e : v) j[e.id] = e.prob;
  if (v.open()) j["<remainder>"] = v.remainder_mass();
  return j;
}

ordered_json params_json(const CalibrationParams& p) {
  ordered_json j;
  j["ids"] = p.ids;
  j["w_diag"] = p.w_diag;
  j["b"] = p.b;
  if (p.support == Support::kOpen) {
    j["default_w"] = p.default_w;
    j["default_b"] = p.default_b;
  }
  return j;
}

int cmd_calibrate(const CommonFlags& common, const ContextFlags& cf, std::ostream& out) {
  const auto l = load(common);
  if (common.dry_run) {
    print_dry_run(l, out);
    return kOk;
  }
  const auto ctx = select_context(l, cf);
  const auto spec = prompt_for(l, ctx);
  auto lm = make_backend(l.config.backend);
  const auto& cf_set = l.config.sweep.axes.cf_input_sets.empty() ? CfInputSet{}
                                                                  : l.config.sweep.axes.cf_input_sets.front();
  ContentFreeOptions options;
  options.label_probs = l.config.sweep.eval.label_probs;
  options.cf_template = l.dataset.cf_template;
  options.answer_prefix = l.dataset.answer_prefix;
  const auto est = l.dataset.kind == TaskKind::kClassification
                       ? estimate_content_free(*lm, spec, cf_set.inputs, options)
                       : estimate_content_free_first_token(*lm, spec, cf_set.inputs, l.config.sweep.eval.top_k, options);

  ordered_json j;
  j["backend_id"] = lm->id();
  j["format_id"] = ctx.format_id;
  j["shots"] = ctx.shots;
  j["training_set_id"] = ctx.training_set_id;
  j["permutation_index"] = ctx.permutation_index;
  j["cf_set_id"] = cf_set.id;
  ordered_json per = ordered_json::array();
  for (const auto& [input, v] : est.per_input) per.push_back({{"input", input}, {"p", prob_json(v)}});
  j["per_input"] = per;
  ordered_json failures = ordered_json::array();
  for (const auto& [input, msg] : est.failures) failures.push_back({{"input", input}, {"error", msg}});
  j["failures"] = failures;
  j["ensemble"] = prob_json(est.ensemble);
  try {
    j["diagonal"] = params_json(fit_diagonal(est.ensemble));
  } catch (const ZeroEntry& e) {
    j["diagonal"] = {{"error", e.what()}};
  }
  j["additive"] = params_json(fit_additive(est.ensemble));
  out << j.dump(2) << '\n';
  return kOk;
}

int cmd_sweep(const CommonFlags& common, std::ostream& out, std::ostream& err, const std::atomic<bool>* cancel) {
  const auto l = load(common);
  const auto plan = plan_sweep(l.dataset, l.corpus, l.config.sweep);
  if (common.dry_run) {
    print_dry_run(l, out);
    return kOk;
  }
  const fs::path dir = l.config.out;
  fs::create_directories(dir);
  RecordStore store(dir / "records.jsonl", common.resume);
  auto lm = make_backend(l.config.backend);
  const auto outcome = run_sweep(*lm, l.dataset, plan, l.config.sweep, store, cancel);

  const auto records = load_records(store.path());
  const std::vector<std::string> group_by{"format_id", "shots", "calibration_mode", "cf_set_id"};
  const auto rows = aggregate(records, group_by);
  const auto table = summary_tsv(rows, group_by);
  {
    std::ofstream summary(dir / "summary.tsv", std::ios::binary | std::ios::trunc);
    summary << table;
  }
  out << table;
  out << "contexts run: " << outcome.contexts_run << ", skipped: " << outcome.contexts_skipped
      << ", records written: " << outcome.records_written << ", failed: " << outcome.failed_records << '\n';
  if (outcome.cancelled) {
    err << "interrupted; finished contexts were written, rerun with --resume to continue\n";
    return kInterrupted;
  }
  const bool invalid = std::any_of(rows.begin(), rows.end(), [](const SummaryRow& r) { return r.invalid; });
  if (invalid) {
    err << "more than 1% of records failed in at least one group; see summary.tsv\n";
    return kBackendFailure;
  }
  return kOk;
}

PredictionLog build_log(const std::vector<RunRecord>& records, CalibrationMode mode) {
  PredictionLog log;
  for (const auto& r : records) {
    if (!r.ok || r.mode != mode) continue;
    if (log.classes.empty() && r.task_kind == "classification" && r.raw) log.classes = r.raw->ids();
    log.records.push_back({r.example_labels, r.prediction, r.gold, r.raw});
  }
  return log;
}

int cmd_diagnose(const CommonFlags& common, const DiagnoseFlags& f, std::ostream& out) {
  if (f.records.empty()) throw ConfigError("diagnose needs --records");
  if (!fs::exists(f.records)) throw ConfigError("records file not found: " + f.records);
  const auto records = load_records(f.records);
  const auto log = build_log(records, parse_calibration_mode(f.mode));
  if (log.records.empty()) throw ConfigError("no successful '" + f.mode + "' records in " + f.records);
  std::map<std::string, double> freq;
  if (!f.freq.empty()) freq = load_frequency_table(f.freq);

  BiasReport report;
  if (!log.classes.empty()) {
    report.majority = majority_label_curve(log);
    if (log.classes.size() == 2) {
      report.threshold = threshold_scan(log, f.positive);
      report.accuracy_at_half = threshold_accuracy(log, 0.5, f.positive);
    }
    if (!f.freq.empty()) {
      report.common_token_r = common_token_correlation(log, freq);
    } else if (log.classes.size() >= 3) {
      report.notes.push_back("no frequency table given; common-token correlation skipped");
    }
  }
  report.recency = recency_overprediction(log);

  const fs::path dir = common.out.empty() ? fs::path(f.records).parent_path() : fs::path(common.out);
  if (!dir.empty()) fs::create_directories(dir);
  {
    std::ofstream json_out(dir / "bias_report.json", std::ios::binary | std::ios::trunc);
    json_out << bias_report_json(report, log.classes);
  }
  const auto table = bias_report_table(report, log.classes);
  {
    std::ofstream txt(dir / "bias_report.txt", std::ios::binary | std::ios::trunc);
    txt << table;
  }
  out << table;
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const std::atomic<bool>* cancel) {
  CLI::App app{"Contextual calibration toolkit for few-shot prompting", "ctxcal"};
  app.require_subcommand(1);

  CommonFlags common;
  ContextFlags context;
  DiagnoseFlags diag;

  auto* render_cmd = app.add_subcommand("render", "Print the prompt a context would send to the backend");
  add_config(render_cmd, common);
  add_context(render_cmd, context);
  render_cmd->add_option("--test-item", context.test_item, "Test item id (default: first test item)");
  render_cmd->add_option("--test-input", context.test_input, "Literal test input instead of a dataset item");

  auto* calibrate_cmd = app.add_subcommand("calibrate", "Estimate content-free probabilities and fit parameters");
  add_config(calibrate_cmd, common);
  add_context(calibrate_cmd, context);

  auto* sweep_cmd = app.add_subcommand("sweep", "Run the configured sweep and write records and a summary");
  add_config(sweep_cmd, common);
  sweep_cmd->add_option("--out", common.out, "Override the output directory");
  sweep_cmd->add_option("--parallel", common.parallel, "Contexts evaluated concurrently");
  sweep_cmd->add_flag("--resume", common.resume, "Continue an existing record file, skipping finished cells");

  auto* diagnose_cmd = app.add_subcommand("diagnose", "Bias report from a record file");
  diagnose_cmd->add_option("--out", common.out, "Directory for the report (default: next to the records)");
  diagnose_cmd->add_option("--records", diag.records, "Record file (JSONL)")->required();
  diagnose_cmd->add_option("--freq", diag.freq, "Label-name frequency table");
  diagnose_cmd->add_option("--mode", diag.mode, "Calibration mode whose records are analysed");
  diagnose_cmd->add_option("--positive", diag.positive, "Class index treated as positive in the threshold scan");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (render_cmd->parsed()) return cmd_render(common, context, out);
    if (calibrate_cmd->parsed()) return cmd_calibrate(common, context, out);
    if (sweep_cmd->parsed()) return cmd_sweep(common, out, err, cancel);
    if (diagnose_cmd->parsed()) return cmd_diagnose(common, diag, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const TemplateError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const BackendUnavailable& e) {
    err << "backend error: " << e.what() << '\n';
    return kBackendFailure;
  } catch (const Error& e) {
    err << "validation error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternal;
  }
  return kUsage;
}

}  // namespace ctxcal::cli
