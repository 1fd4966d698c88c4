#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ctxcal/backend.hpp"
#include "ctxcal/mock_lm.hpp"

namespace ctxcal::test {

inline std::filesystem::path source_dir() { return CTXCAL_SOURCE_DIR; }
inline std::filesystem::path data_dir() { return source_dir() / "data"; }

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

/// Fresh empty directory under the build tree, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(std::filesystem::path(CTXCAL_BINARY_DIR) / "tmp" / name) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Forwards to another model and counts calls.
class CountingLM final : public LanguageModel {
 public:
  explicit CountingLM(LanguageModel& inner) : inner_(inner) {}
  NextTokenDistribution next_token(const Request& r, int top_k) override {
    ++next_token_calls;
    return inner_.next_token(r, top_k);
  }
  Completion complete(const Request& r, const GenerationOptions& o) override {
    ++complete_calls;
    return inner_.complete(r, o);
  }
  std::string id() const override { return inner_.id(); }
  std::size_t max_parallel() const override { return inner_.max_parallel(); }
  std::size_t calls() const { return next_token_calls + complete_calls; }

  std::atomic<std::size_t> next_token_calls{0};
  std::atomic<std::size_t> complete_calls{0};

 private:
  LanguageModel& inner_;
};

/// The biased mock used with data/synthetic: uniform base, majority
/// strength 1, recency decay 1/2, lexicon evidence 1/2, no noise.
inline MockLMConfig synthetic_mock(double evidence = 0.5) {
  MockLMConfig c;
  c.base_weights = {{" Positive", 1.0}, {" Negative", 1.0}};
  c.majority_strength = 1.0;
  c.recency_decay = 0.5;
  c.evidence_strength = evidence;
  for (const char* w : {"good", "great", "superb", "lovely"}) c.lexicon[w] = " Positive";
  for (const char* w : {"bad", "awful", "dull", "boring"}) c.lexicon[w] = " Negative";
  return c;
}

/// Mock for data/synthetic-gen: answers are the four city tokens.
inline MockLMConfig birthplace_mock(double majority = 1.0, double decay = 0.5) {
  MockLMConfig c;
  c.base_weights = {{" Paris", 1.0}, {" Rome", 1.0}, {" Tokyo", 1.0}, {" Lima", 1.0}, {" the", 0.5}};
  c.majority_strength = majority;
  c.recency_decay = decay;
  c.evidence_strength = 1.0;
  for (const char* w : {"france", "french", "parisian"}) c.lexicon[w] = " Paris";
  for (const char* w : {"italy", "italian", "roman"}) c.lexicon[w] = " Rome";
  for (const char* w : {"japan", "japanese", "kanto"}) c.lexicon[w] = " Tokyo";
  for (const char* w : {"peru", "peruvian", "andean"}) c.lexicon[w] = " Lima";
  return c;
}

}  // namespace ctxcal::test
