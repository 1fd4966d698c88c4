#include <doctest.h>

#include <algorithm>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "ctxcal/run_record.hpp"
#include "support/support.hpp"

using namespace ctxcal;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args, const std::atomic<bool>* cancel = nullptr) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err, cancel);
  return {code, out.str(), err.str()};
}

std::string config_path(const std::string& name) { return (test::source_dir() / "configs" / name).string(); }

/// Writes a copy of a checked-in config with some keys replaced.
std::string patched_config(const test::TempDir& dir, const std::string& name, const nlohmann::json& patch) {
  auto j = nlohmann::json::parse(test::read_file(config_path(name)));
  for (auto key : {"dataset", "formats"}) j[key] = (test::source_dir() / "configs" / j[key].get<std::string>()).string();
  j["out"] = (dir.path() / "out").string();
  if (!patch.is_null()) j.merge_patch(patch);
  const auto path = dir / (name + ".patched.json");
  test::write_file(path, j.dump(2));
  return path.string();
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("usage errors exit 2") {
    CHECK(run({}).code == cli::kUsage);
    CHECK(run({"frobnicate"}).code == cli::kUsage);
    CHECK(run({"render"}).code == cli::kUsage);
    CHECK(run({"sweep", "--config", "/nonexistent.json"}).code == cli::kUsage);
    CHECK(run({"render", "--config", config_path("synthetic-mock.json"), "--shots", "many"}).code == cli::kUsage);
    const auto help = run({"--help"});
    CHECK(help.code == cli::kOk);
    CHECK(help.out.find("sweep") != std::string::npos);
  }

  TEST_CASE("render prints the exact prompt") {
    const auto r = run({"render", "--config", config_path("synthetic-mock.json"), "--format", "sst2-intro", "--shots",
                        "0", "--test-input", "Amazing."});
    CHECK(r.code == cli::kOk);
    CHECK(r.out == "Input: Amazing. Sentiment:");

    const auto two = run({"render", "--config", config_path("synthetic-mock.json"), "--shots", "2", "--set", "1",
                          "--perm", "1", "--test-item", "te-003"});
    CHECK(two.code == cli::kOk);
    CHECK(two.out.rfind("Review: ", 0) == 0);
    CHECK(two.out.substr(two.out.size() - 11) == "\nSentiment:");
    CHECK(std::count(two.out.begin(), two.out.end(), '\n') == 7);

    CHECK(run({"render", "--config", config_path("synthetic-mock.json"), "--test-item", "nope"}).code == cli::kUsage);
    CHECK(run({"render", "--config", config_path("synthetic-mock.json"), "--shots", "2", "--perm", "2"}).code ==
          cli::kUsage);
    CHECK(run({"render", "--config", config_path("synthetic-mock.json"), "--test-input", "{label}"}).code ==
          cli::kUsage);
  }

  TEST_CASE("dry run reports cells without backend calls") {
    const auto r = run({"sweep", "--config", config_path("synthetic-mock.json"), "--dry-run"});
    CHECK(r.code == cli::kOk);
    CHECK(r.out.find("config ok") != std::string::npos);
    // (1 zero-shot + 5 four-shot contexts) x 4 modes
    CHECK(r.out.find("cells: 24\n") != std::string::npos);
  }

  TEST_CASE("config problems") {
    test::TempDir tmp("cli_config");
    const auto unknown = patched_config(tmp, "synthetic-mock.json", {{"colour", "blue"}});
    CHECK(run({"sweep", "--config", unknown, "--dry-run"}).code == cli::kUsage);
    const auto over = patched_config(tmp, "synthetic-mock.json", {{"budget", 5}});
    const auto r = run({"sweep", "--config", over, "--dry-run"});
    CHECK(r.code == cli::kValidation);
    CHECK(r.err.find("budget") != std::string::npos);
    const auto cap = patched_config(tmp, "synthetic-mock.json", {{"shots", nlohmann::json::array({8})}, {"permutations", "all"}});
    CHECK(run({"sweep", "--config", cap, "--dry-run"}).code == cli::kValidation);
    const auto bad_mock = patched_config(tmp, "synthetic-mock.json", {{"backend", {{"recency_decay", 2.0}}}});
    CHECK(run({"sweep", "--config", bad_mock, "--dry-run"}).code == cli::kUsage);
    CHECK(run({"sweep", "--config", config_path("synthetic-mock.json"), "--backend", "gpt"}).code == cli::kUsage);
  }

  TEST_CASE("sweep, resume and diagnose") {
    test::TempDir tmp("cli_sweep");
    const auto cfg = patched_config(tmp, "synthetic-mock.json", {});
    const auto first = run({"sweep", "--config", cfg});
    REQUIRE(first.code == cli::kOk);
    CHECK(first.out.find("format_id\tshots\tcalibration_mode\tcf_set_id\tcells") == 0);
    const auto records = tmp / "out" / "records.jsonl";
    CHECK(load_records(records).size() == 6 * 4 * 48);
    CHECK(test::read_file(tmp / "out" / "summary.tsv") == first.out.substr(0, first.out.find("contexts run")));

    const auto again = run({"sweep", "--config", cfg});
    CHECK(again.code == cli::kUsage);
    CHECK(again.err.find("--resume") != std::string::npos);
    const auto resumed = run({"sweep", "--config", cfg, "--resume"});
    CHECK(resumed.code == cli::kOk);
    CHECK(resumed.out.find("skipped: 6") != std::string::npos);

    const auto diag = run({"diagnose", "--records", records.string()});
    CHECK(diag.code == cli::kOk);
    const auto report = nlohmann::json::parse(test::read_file(tmp / "out" / "bias_report.json"));
    CHECK(report["classes"] == nlohmann::json({"Positive", "Negative"}));
    CHECK(report.contains("majority_curve"));
    CHECK(report.contains("threshold_best"));
    CHECK(report["recency"]["overprediction"].size() == 4);
    CHECK(diag.out == test::read_file(tmp / "out" / "bias_report.txt"));

    CHECK(run({"diagnose", "--records", records.string(), "--mode", "diagonal", "--out", (tmp / "d").string()})
              .code == cli::kOk);
    CHECK(std::filesystem::exists(tmp / "d" / "bias_report.json"));
    CHECK(run({"diagnose", "--records", records.string(), "--mode", "sideways"}).code == cli::kUsage);
  }

  TEST_CASE("diagnose needs records") {
    test::TempDir tmp("cli_diag");
    test::write_file(tmp / "empty.jsonl", "");
    CHECK(run({"diagnose", "--records", (tmp / "empty.jsonl").string()}).code == cli::kUsage);
    CHECK(run({"diagnose", "--records", (tmp / "missing.jsonl").string()}).code == cli::kUsage);
    CHECK(run({"diagnose"}).code == cli::kUsage);
  }

  TEST_CASE("calibrate prints the fitted parameters") {
    const auto r = run({"calibrate", "--config", config_path("synthetic-mock.json"), "--shots", "4"});
    REQUIRE(r.code == cli::kOk);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j["per_input"].size() == 3);
    CHECK(j["failures"].empty());
    const double p = j["ensemble"]["Positive"].get<double>();
    CHECK(j["diagonal"]["w_diag"][0].get<double>() == doctest::Approx(1.0 / p));
    CHECK(j["additive"]["b"][0].get<double>() == doctest::Approx(-p));
  }

  TEST_CASE("unrecorded backend requests fail the sweep with exit 3") {
    test::TempDir tmp("cli_replay");
    test::write_file(tmp / "fixture.jsonl", "");
    const auto cfg = patched_config(
        tmp, "live-http.json",
        {{"backend", {{"fixture", (tmp / "fixture.jsonl").string()}, {"fixture_mode", "replay"}}}});
    const auto r = run({"sweep", "--config", cfg});
    CHECK(r.code == cli::kBackendFailure);
    for (const auto& rec : load_records(tmp / "out" / "records.jsonl")) CHECK_FALSE(rec.ok);
  }

  TEST_CASE("a raised cancel flag stops the sweep") {
    test::TempDir tmp("cli_cancel");
    const auto cfg = patched_config(tmp, "synthetic-mock.json", {});
    std::atomic<bool> flag{true};
    const auto r = run({"sweep", "--config", cfg}, &flag);
    CHECK(r.code == cli::kInterrupted);
    CHECK(r.err.find("--resume") != std::string::npos);
  }
}
