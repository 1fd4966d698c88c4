#include <doctest.h>

#include "ctxcal/error.hpp"
#include "ctxcal/format_corpus.hpp"
#include "support/golden.hpp"

using namespace ctxcal;

TEST_SUITE("format_corpus") {
  TEST_CASE("every checked-in format renders its golden prompt") {
    const auto corpus = FormatCorpus::load(test::data_dir() / "formats.jsonl");
    const auto cases = test::load_golden_cases(corpus);
    CHECK(cases.size() == corpus.records().size());
    std::size_t uncertain = 0;
    for (const auto& c : cases) {
      CAPTURE(c.format_id);
      const auto got = render(c.spec);
      INFO(test::first_difference(got, c.expected));
      CHECK(got == c.expected);
      if (c.uncertain) {
        ++uncertain;
        CHECK_FALSE(corpus.find(c.format_id)->note.empty());
      }
    }
    CHECK(uncertain == 2);
  }

  TEST_CASE("parse skips comments and blank lines") {
    const auto c = FormatCorpus::parse(
        "# header\n\n"
        "{\"format_id\": \"x\", \"example_template\": \"{input}={label}\", \"test_template\": \"{input}=\", "
        "\"separator\": \"\\n\", \"extra\": 1}\n");
    REQUIRE(c.records().size() == 1);
    CHECK(c.require("x").separator == "\n");
    CHECK(c.require("x").preamble.empty());
    CHECK(c.find("y") == nullptr);
    CHECK_THROWS_AS(c.require("y"), ConfigError);
  }

  TEST_CASE("bad corpora are rejected") {
    const std::string ok = R"({"format_id": "x", "example_template": "{input} {label}", "test_template": "{input}"})";
    CHECK_THROWS_AS(FormatCorpus::parse(ok + "\n" + ok), TemplateError);
    CHECK_THROWS_AS(FormatCorpus::parse("{not json"), TemplateError);
    CHECK_THROWS_AS(FormatCorpus::parse(R"({"format_id": "x", "test_template": "{input}"})"), TemplateError);
    CHECK_THROWS_AS(
        FormatCorpus::parse(R"({"format_id": "x", "example_template": "{input}", "test_template": "{input}"})"),
        TemplateError);
    CHECK_THROWS_AS(FormatCorpus::load(test::data_dir() / "missing.jsonl"), ConfigError);
  }

  TEST_CASE("records round-trip through jsonl") {
    const auto corpus = FormatCorpus::load(test::data_dir() / "formats.jsonl");
    std::string text;
    for (const auto& r : corpus.records()) text += to_jsonl_line(r) + "\n";
    const auto again = FormatCorpus::parse(text);
    REQUIRE(again.records().size() == corpus.records().size());
    for (std::size_t i = 0; i < again.records().size(); ++i) {
      const auto& a = again.records()[i];
      const auto& b = corpus.records()[i];
      CHECK(a.format.format_id == b.format.format_id);
      CHECK(a.format.example_template == b.format.example_template);
      CHECK(a.format.test_template == b.format.test_template);
      CHECK(a.format.separator == b.format.separator);
      CHECK(a.format.preamble == b.format.preamble);
      CHECK(a.label_names == b.label_names);
      CHECK(a.note == b.note);
    }
  }
}
