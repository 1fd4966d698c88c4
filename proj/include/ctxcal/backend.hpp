#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ctxcal/prob_vector.hpp"
#include "ctxcal/prompt.hpp"

namespace ctxcal {

struct TokenProb {
  std::string token;
  double prob = 0.0;
};

/// Next-token probabilities as returned by a backend: the listed tokens,
/// most probable first, plus the mass of everything not listed.
struct NextTokenDistribution {
  std::vector<TokenProb> top;
  double remainder_mass = 0.0;

  std::optional<double> prob_of(std::string_view token) const;
  /// Index of the most probable listed token; ties go to the earlier entry.
  std::size_t argmax() const;
  ProbVector to_prob_vector() const;
};

/// Structured side channel describing the prompt. Real backends ignore it;
/// the mock reads it instead of parsing rendered text.
struct PromptContext {
  /// First tokens of the training answers, in prompt order.
  std::vector<std::string> example_answers;
  /// The text slotted into the test placeholder.
  std::string test_input;
  /// Text generated so far after the prompt.
  std::string generated;
};

struct Request {
  std::string prompt;
  PromptContext context;
};

struct Completion {
  std::string text;
  /// Set when generation stopped at max_tokens before seeing the stop string.
  bool hit_max_tokens = false;
};

struct GenerationOptions {
  std::string stop = "\n";
  int max_tokens = 32;
};

/// A source of next-token probabilities. Implementations must tolerate
/// concurrent calls up to max_parallel().
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  /// Distribution of the token following `request.prompt`. `top_k <= 0`
  /// asks for every token the backend can list.
  virtual NextTokenDistribution next_token(const Request& request, int top_k) = 0;

  /// Greedy continuation cut before `options.stop`. The default walks
  /// next_token one argmax at a time.
  virtual Completion complete(const Request& request, const GenerationOptions& options);

  virtual std::string id() const = 0;
  virtual std::size_t max_parallel() const { return 1; }
};

enum class MissingTokenPolicy {
  kError,    ///< throw TokenNotInTopK
  kEpsilon,  ///< substitute `missing_mass`
};

struct LabelProbOptions {
  int top_k = 0;
  MissingTokenPolicy missing = MissingTokenPolicy::kError;
  double missing_mass = 1e-9;
};

struct LabelProb {
  std::string name;
  double prob = 0.0;
};

/// Probability of each label's first token at the end of the prompt, in
/// label-space order. Not renormalized.
std::vector<LabelProb> label_probs(LanguageModel& lm, const Request& request, const LabelSpace& labels,
                                   const LabelProbOptions& options = {});

/// Concatenated argmax tokens up to but excluding `options.stop`, bounded by
/// `options.max_tokens`.
Completion greedy_complete(LanguageModel& lm, const Request& request,
                           const GenerationOptions& options = {});

/// Cuts `text` before the first occurrence of `stop`. Returns true if the
/// stop string was found.
bool cut_at_stop(std::string& text, std::string_view stop);

}  // namespace ctxcal
