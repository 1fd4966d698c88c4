#include <doctest.h>

#include <algorithm>
#include <set>

#include "ctxcal/error.hpp"
#include "ctxcal/mock_lm.hpp"
#include "ctxcal/sweep.hpp"
#include "support/support.hpp"

using namespace ctxcal;

namespace {

struct Fixture {
  TaskDataset ds = TaskDataset::load(test::data_dir() / "synthetic" / "manifest.json");
  FormatCorpus corpus = FormatCorpus::load(test::data_dir() / "formats.jsonl");
  MockLM mock{test::synthetic_mock()};
};

SweepOptions options(std::size_t sets = 3, PermutationPolicy perms = PermutationPolicy::kOne) {
  SweepOptions o;
  o.axes.format_ids = {"sst2"};
  o.axes.shots = {2};
  o.axes.training_sets = sets;
  o.axes.permutations = perms;
  o.seed = 11;
  return o;
}

/// Raises `flag` once `limit` queries have been made.
class Canceller final : public LanguageModel {
 public:
  Canceller(LanguageModel& inner, std::atomic<bool>& flag, std::size_t limit)
      : inner_(inner), flag_(flag), limit_(limit) {}
  NextTokenDistribution next_token(const Request& r, int k) override {
    if (++calls_ >= limit_) flag_ = true;
    return inner_.next_token(r, k);
  }
  std::string id() const override { return inner_.id(); }

 private:
  LanguageModel& inner_;
  std::atomic<bool>& flag_;
  std::size_t limit_;
  std::atomic<std::size_t> calls_{0};
};

/// Throws a non-library exception on the n-th query.
class Crashing final : public LanguageModel {
 public:
  Crashing(LanguageModel& inner, std::size_t at) : inner_(inner), at_(at) {}
  NextTokenDistribution next_token(const Request& r, int k) override {
    if (++calls_ == at_) throw std::logic_error("crash");
    return inner_.next_token(r, k);
  }
  std::string id() const override { return inner_.id(); }

 private:
  LanguageModel& inner_;
  std::size_t at_;
  std::atomic<std::size_t> calls_{0};
};

SweepOutcome run(LanguageModel& lm, const Fixture& f, const SweepOptions& o, const std::filesystem::path& out,
                 bool resume = false, const std::atomic<bool>* cancel = nullptr) {
  RecordStore store(out, resume);
  return run_sweep(lm, f.ds, plan_sweep(f.ds, f.corpus, o), o, store, cancel);
}

}  // namespace

TEST_SUITE("sweep") {
  TEST_CASE("mode expansion") {
    SweepAxes axes;
    axes.modes = {CalibrationMode::kNone, CalibrationMode::kDiagonal, CalibrationMode::kNone,
                  CalibrationMode::kAdditive};
    axes.cf_input_sets = {{"default", default_content_free_inputs()}, {"na", {"N/A"}}};
    const auto m = expand_modes(axes);
    REQUIRE(m.size() == 5);
    CHECK(m[0].mode == CalibrationMode::kNone);
    CHECK(m[1].cf.id == "default");
    CHECK(m[2].cf.id == "na");
    CHECK(m[4].mode == CalibrationMode::kAdditive);
  }

  TEST_CASE("ten sets by every ordering is 240 contexts") {
    Fixture f;
    auto o = options(10, PermutationPolicy::kAll);
    o.axes.shots = {4};
    const auto plan = plan_sweep(f.ds, f.corpus, o);
    REQUIRE(plan.contexts.size() == 240);
    CHECK(plan.cells == 480);
    CHECK(plan.backend_calls == 240 * (48 + 3));

    // The pool repeats some texts, so compare orderings as multisets of (input, label).
    auto key = [](std::vector<LabeledExample> v) {
      std::vector<std::pair<std::string, std::string>> k;
      for (const auto& e : v) k.emplace_back(e.input, e.label);
      return k;
    };
    for (std::size_t s = 0; s < 10; ++s) {
      auto base = key(plan.contexts[s * 24].examples);
      std::set<decltype(base)> orderings;
      std::sort(base.begin(), base.end());
      for (std::size_t p = 0; p < 24; ++p) {
        const auto& ctx = plan.contexts[s * 24 + p];
        CHECK(ctx.training_set_id == s);
        CHECK(ctx.permutation_index == p);
        auto k = key(ctx.examples);
        orderings.insert(k);
        std::sort(k.begin(), k.end());
        CHECK(k == base);
      }
      const std::set<decltype(base)::value_type> distinct(base.begin(), base.end());
      if (distinct.size() == 4) CHECK(orderings.size() == 24);
    }

    const auto& probe = plan.contexts[5 * 24 + 17];
    const auto again = context_at(f.ds, f.corpus, o, "sst2", 4, 5, 17);
    CHECK(again.examples == probe.examples);
    CHECK(make_run_id(again, {}) == make_run_id(probe, {}));
  }

  TEST_CASE("planning limits") {
    Fixture f;
    test::CountingLM lm(f.mock);
    auto o = options(10, PermutationPolicy::kAll);
    o.axes.shots = {4};
    o.budget = 479;
    CHECK_THROWS_AS(plan_sweep(f.ds, f.corpus, o), BudgetExceeded);
    o.budget = 480;
    CHECK_NOTHROW(plan_sweep(f.ds, f.corpus, o));
    CHECK(lm.calls() == 0);

    o.axes.shots = {7};
    CHECK_THROWS_AS(plan_sweep(f.ds, f.corpus, o), CapExceeded);
    o.axes.permutation_cap = 7;
    o.budget = 0;
    CHECK(plan_sweep(f.ds, f.corpus, o).contexts.size() == 10 * 5040);

    o = options();
    o.axes.shots = {40};
    CHECK_THROWS_AS(plan_sweep(f.ds, f.corpus, o), InsufficientPool);
    o = options();
    o.axes.format_ids = {"nope"};
    CHECK_THROWS_AS(plan_sweep(f.ds, f.corpus, o), ConfigError);
    o = options();
    o.axes.modes = {};
    CHECK_THROWS_AS(plan_sweep(f.ds, f.corpus, o), ConfigError);
  }

  TEST_CASE("zero-shot collapses and sampling draws distinct orderings") {
    Fixture f;
    auto o = options(5);
    o.axes.shots = {0, 2};
    const auto plan = plan_sweep(f.ds, f.corpus, o);
    CHECK(plan.contexts.size() == 1 + 5);
    CHECK(plan.contexts[0].examples.empty());

    o = options(2, PermutationPolicy::kSample);
    o.axes.shots = {4};
    o.axes.permutation_samples = 5;
    const auto sampled = plan_sweep(f.ds, f.corpus, o);
    REQUIRE(sampled.contexts.size() == 10);
    std::set<std::uint64_t> first;
    for (std::size_t p = 0; p < 5; ++p) first.insert(sampled.contexts[p].permutation_index);
    CHECK(first.size() == 5);
    o.axes.permutation_samples = 100;
    CHECK(plan_sweep(f.ds, f.corpus, o).contexts.size() == 48);
  }

  TEST_CASE("identical seeds give byte-identical record files") {
    Fixture f;
    test::TempDir tmp("sweep_det");
    auto o = options(3, PermutationPolicy::kAll);
    run(f.mock, f, o, tmp / "a.jsonl");
    o.parallel = 3;
    o.eval.parallel = 2;
    run(f.mock, f, o, tmp / "b.jsonl");
    const auto a = test::read_file(tmp / "a.jsonl");
    CHECK_FALSE(a.empty());
    CHECK(a == test::read_file(tmp / "b.jsonl"));

    o.seed = 12;
    run(f.mock, f, o, tmp / "c.jsonl");
    CHECK(a != test::read_file(tmp / "c.jsonl"));
  }

  TEST_CASE("resume skips finished contexts") {
    Fixture f;
    test::TempDir tmp("sweep_resume");
    const auto o = options(3, PermutationPolicy::kAll);
    const auto first = run(f.mock, f, o, tmp / "r.jsonl");
    CHECK(first.contexts_run == 6);
    CHECK(first.records_written == 6 * 2 * 48);
    const auto bytes = test::read_file(tmp / "r.jsonl");

    CHECK_THROWS_AS(RecordStore(tmp / "r.jsonl", false), ConfigError);
    test::CountingLM lm(f.mock);
    const auto second = run(lm, f, o, tmp / "r.jsonl", true);
    CHECK(lm.calls() == 0);
    CHECK(second.contexts_skipped == 6);
    CHECK(second.records_written == 0);
    CHECK(test::read_file(tmp / "r.jsonl") == bytes);
  }

  TEST_CASE("cancelled sweep resumes to the same file") {
    Fixture f;
    test::TempDir tmp("sweep_cancel");
    const auto o = options(4, PermutationPolicy::kAll);
    run(f.mock, f, o, tmp / "full.jsonl");

    std::atomic<bool> flag{false};
    Canceller c(f.mock, flag, 120);  // part way through the third context
    const auto partial = run(c, f, o, tmp / "part.jsonl", false, &flag);
    CHECK(partial.cancelled);
    CHECK(partial.contexts_run == 3);
    CHECK(load_records(tmp / "part.jsonl").size() == 3 * 2 * 48);

    const auto rest = run(f.mock, f, o, tmp / "part.jsonl", true);
    CHECK(rest.contexts_skipped == 3);
    CHECK(rest.contexts_run == 5);
    CHECK(test::read_file(tmp / "part.jsonl") == test::read_file(tmp / "full.jsonl"));
  }

  TEST_CASE("an unexpected error keeps finished work") {
    Fixture f;
    test::TempDir tmp("sweep_crash");
    const auto o = options(3);
    Crashing lm(f.mock, 51 * 2 + 10);
    CHECK_THROWS_AS(run(lm, f, o, tmp / "x.jsonl"), std::logic_error);
    CHECK(load_records(tmp / "x.jsonl").size() == 2 * 2 * 48);
  }

  TEST_CASE("record store") {
    test::TempDir tmp("store");
    RunRecord r;
    r.run_id = "id";
    r.test_item_id = "t1";
    r.raw = ProbVector({{"Positive", 0.25}, {"Negative", 0.75}});
    r.calibrated = ProbVector({{"Positive", 0.625}, {"Negative", 0.375}});
    r.mode = CalibrationMode::kDiagonal;
    r.prediction = "Positive";
    r.cf_inputs = {"N/A", ""};
    CHECK(parse_run_record(to_json_line(r)) == r);

    RunRecord open = r;
    open.raw = ProbVector({{" Paris", 0.5}}, 0.5, Support::kOpen);
    open.ok = false;
    open.error = "x";
    CHECK(parse_run_record(to_json_line(open)) == open);

    {
      RecordStore store(tmp / "sub" / "r.jsonl", false);
      std::vector<RunRecord> two{r, r};
      store.append(two);
      CHECK(store.size() == 1);
      CHECK(store.contains("id", "t1"));
      CHECK_FALSE(store.contains("id", "t2"));
    }
    CHECK(load_records(tmp / "sub" / "r.jsonl").size() == 1);
    CHECK(load_records(tmp / "missing.jsonl").empty());
    CHECK_THROWS(parse_run_record("{}"));
  }

  TEST_CASE("sub-seeds") {
    CHECK(mix_seed(1, 2, 3) == mix_seed(1, 2, 3));
    CHECK(mix_seed(1, 2, 3) != mix_seed(1, 3, 2));
    CHECK(mix_seed(1, 2) != mix_seed(2, 2));
  }
}
