#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "ctxcal/backend.hpp"

namespace ctxcal {

/// Parameters of a deterministic next-token model with controllable
/// majority, recency and common-token biases.
///
/// Unnormalized score of token t:
///
///   base_weights[t]
///   + majority_strength * sum_i recency_decay^(i-1) * [t == answer_i]
///   + evidence_strength * #{words w of the test input : lexicon[w] == t}
///   + noise_scale * u(noise_seed, test input, t)
///
/// where i counts training positions from the END of the prompt (1 = last
/// example) and u is a hash-derived value in [0, 1). Once any text has been
/// generated the model emits `stop_token` with probability 1.
struct MockLMConfig {
  std::map<std::string, double> base_weights;
  double majority_strength = 0.0;
  double recency_decay = 1.0;
  std::uint64_t noise_seed = 0;
  double noise_scale = 0.0;
  /// Lower-case word -> token it votes for.
  std::map<std::string, std::string> lexicon;
  double evidence_strength = 0.0;
  std::string stop_token = "\n";

  /// Throws ConfigError on an empty or non-positive base, alpha < 0, gamma
  /// outside (0, 1], or negative evidence/noise scales.
  void validate() const;
};

/// Full distribution over the mock's vocabulary (base tokens, lexicon
/// targets, training answers), most probable first, ties by token.
NextTokenDistribution mock_next_token(const MockLMConfig& config, const PromptContext& context);

/// Lower-cased alphanumeric words of `text`, in order.
std::vector<std::string> mock_words(std::string_view text);

class MockLM final : public LanguageModel {
 public:
  explicit MockLM(MockLMConfig config, std::string id = "mock");

  NextTokenDistribution next_token(const Request& request, int top_k) override;
  std::string id() const override { return id_; }
  std::size_t max_parallel() const override { return 64; }

  const MockLMConfig& config() const { return config_; }

 private:
  MockLMConfig config_;
  std::string id_;
};

}  // namespace ctxcal
