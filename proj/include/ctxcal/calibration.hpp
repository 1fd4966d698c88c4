#pragma once

// Contextual calibration: estimate the prompt's answer bias from
// content-free test inputs, then rescale output probabilities so those
// inputs would score uniformly.
//
// The affine map q = softmax(W p + b) is applied to probabilities, not
// logits: completion APIs expose only probabilities. This changes the
// values of q relative to a logit-space transform but never the argmax.

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ctxcal/backend.hpp"
#include "ctxcal/prob_vector.hpp"
#include "ctxcal/prompt.hpp"

namespace ctxcal {

/// fit_diagonal refuses content-free probabilities at or below this floor.
inline constexpr double kZeroEntryFloor = 1e-12;

/// Diagonal W (as `w_diag`) and bias b, one entry per id.
///
/// For open-vocabulary parameters (fitted on a truncated token
/// distribution) tokens that were not listed at fit time use `default_w`
/// and `default_b`.
struct CalibrationParams {
  std::vector<std::string> ids;
  std::vector<double> w_diag;
  std::vector<double> b;
  Support support = Support::kClosed;
  double default_w = 1.0;
  double default_b = 0.0;

  std::size_t size() const { return ids.size(); }
  static CalibrationParams identity(std::vector<std::string> ids);
  /// Throws DimensionMismatch when the three vectors disagree in length.
  void validate() const;
};

struct ContentFreeEstimate {
  std::vector<std::pair<std::string, ProbVector>> per_input;
  /// Content-free strings whose query failed, with the error text.
  std::vector<std::pair<std::string, std::string>> failures;
  ProbVector ensemble;
};

/// The ensemble used throughout: "N/A", "[MASK]" and the empty string.
std::vector<std::string> default_content_free_inputs();

/// Divides by the total so the entries sum to one. Throws AllZeroMass if
/// every probability is zero.
ProbVector renormalize_label_probs(const std::vector<std::pair<std::string, double>>& raw);
ProbVector renormalize_label_probs(const std::vector<LabelProb>& raw);

/// Arithmetic mean of the vectors, renormalized. Closed vectors must share
/// ids; open vectors are aligned by id (a missing token counts as zero).
ProbVector ensemble_mean(std::span<const ProbVector> vectors);

/// W = diag(p_cf)^-1, b = 0. Throws ZeroEntry if any listed probability is
/// <= kZeroEntryFloor. On a truncated p_cf unlisted tokens get the
/// reciprocal of the smallest listed probability, the largest value an
/// unlisted token could have had.
CalibrationParams fit_diagonal(const ProbVector& p_cf);

/// W = I, b = -p_cf. Unlisted tokens of a truncated p_cf get b = 0.
CalibrationParams fit_additive(const ProbVector& p_cf);

/// Pre-softmax scores W p + b aligned with the entries of `p`.
std::vector<double> calibrated_scores(const CalibrationParams& params, const ProbVector& p);

/// q = softmax(W p + b) over the listed entries. A truncated `p` keeps its
/// remainder mass unchanged; the listed entries share the rest. Throws
/// DimensionMismatch when closed params and `p` do not share ids.
ProbVector apply_calibration(const CalibrationParams& params, const ProbVector& p);

/// Index of the largest entry; ties go to the lowest index. Remainder mass
/// never wins.
std::size_t predict(const ProbVector& q);
std::size_t argmax_lowest(std::span<const double> scores);

struct ContentFreeOptions {
  LabelProbOptions label_probs;
  /// Replaces `{cf}` to build the test input, e.g. "{cf} was born in".
  std::string cf_template = "{cf}";
  /// Prefix turning a generation answer into its first token.
  std::string answer_prefix = " ";
};

/// The test input that stands in for `cf` under `cf_template`.
std::string content_free_input(std::string_view cf_template, std::string_view cf);

/// Fills the test slot of `spec` with each content-free string, queries
/// the label distribution and renormalizes it; the ensemble is the mean.
/// Failing inputs are recorded; throws the last error when all fail.
ContentFreeEstimate estimate_content_free(LanguageModel& lm, const PromptSpec& spec,
                                          const std::vector<std::string>& cf_inputs,
                                          const ContentFreeOptions& options = {});

/// Same procedure over the first generated token's (truncated) distribution.
ContentFreeEstimate estimate_content_free_first_token(LanguageModel& lm, const PromptSpec& spec,
                                                      const std::vector<std::string>& cf_inputs, int top_k,
                                                      const ContentFreeOptions& options = {});

/// Side-channel context for `spec`, using label tokens for classification
/// answers and `answer_prefix + answer` otherwise.
PromptContext make_context(const PromptSpec& spec, std::string_view answer_prefix = " ");
Request make_request(const PromptSpec& spec, std::string_view answer_prefix = " ");

}  // namespace ctxcal
