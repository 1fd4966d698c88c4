#include "ctxcal/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>

#include "ctxcal/error.hpp"

namespace ctxcal {

CalibrationParams CalibrationParams::identity(std::vector<std::string> ids) {
  CalibrationParams p;
  p.w_diag.assign(ids.size(), 1.0);
  p.b.assign(ids.size(), 0.0);
  p.ids = std::move(ids);
  return p;
}

void CalibrationParams::validate() const {
  if (w_diag.size() != ids.size() || b.size() != ids.size()) {
    throw DimensionMismatch("calibration params have " + std::to_string(ids.size()) + " ids, " +
                            std::to_string(w_diag.size()) + " weights and " + std::to_string(b.size()) +
                            " offsets");
  }
}

std::vector<std::string> default_content_free_inputs() { return {"N/A", "[MASK]", ""}; }

ProbVector renormalize_label_probs(const std::vector<std::pair<std::string, double>>& raw) {
  double total = 0.0;
  for (const auto& [id, p] : raw) {
    if (!std::isfinite(p) || p < 0.0) throw InvalidDistribution("label probability for '" + id + "' is invalid");
    total += p;
  }
  if (total <= 0.0) {
    throw AllZeroMass("backend returned no probability mass for any label; widen the requested top-k");
  }
  std::vector<ProbEntry> entries;
  entries.reserve(raw.size());
  for (const auto& [id, p] : raw) entries.push_back({id, p / total});
  return ProbVector(std::move(entries));
}

ProbVector renormalize_label_probs(const std::vector<LabelProb>& raw) {
  std::vector<std::pair<std::string, double>> pairs;
  pairs.reserve(raw.size());
  for (const auto& l : raw) pairs.emplace_back(l.name, l.prob);
  return renormalize_label_probs(pairs);
}

ProbVector ensemble_mean(std::span<const ProbVector> vectors) {
  if (vectors.empty()) throw InvalidDistribution("ensemble of zero distributions");
  const bool open = vectors.front().open();
  std::vector<ProbEntry> sum;
  double remainder = 0.0;
  for (const auto& v : vectors) {
    if (v.open() != open) throw DimensionMismatch("cannot average closed and open distributions");
    if (!open && !v.same_ids(vectors.front())) {
      throw DimensionMismatch("content-free distributions disagree on the label space");
    }
    for (const auto& e : v) {
      auto it = std::find_if(sum.begin(), sum.end(), [&](const ProbEntry& s) { return s.id == e.id; });
      if (it == sum.end()) {
        sum.push_back({e.id, e.prob});
      } else {
        it->prob += e.prob;
      }
    }
    remainder += v.remainder_mass();
  }
  double total = remainder;
  for (const auto& e : sum) total += e.prob;
  for (auto& e : sum) e.prob /= total;
  return ProbVector(std::move(sum), open ? remainder / total : 0.0, open ? Support::kOpen : Support::kClosed);
}

CalibrationParams fit_diagonal(const ProbVector& p_cf) {
  if (p_cf.empty()) throw ZeroEntry("content-free estimate is empty");
  CalibrationParams params;
  params.support = p_cf.support();
  double smallest = std::numeric_limits<double>::infinity();
  for (const auto& e : p_cf) {
    if (!(e.prob > kZeroEntryFloor)) {
      throw ZeroEntry("content-free probability of '" + e.id +
                      "' is ~0; add content-free inputs or use the additive fit");
    }
    params.ids.push_back(e.id);
    params.w_diag.push_back(1.0 / e.prob);
    params.b.push_back(0.0);
    smallest = std::min(smallest, e.prob);
  }
  if (p_cf.open()) params.default_w = 1.0 / smallest;
  return params;
}

CalibrationParams fit_additive(const ProbVector& p_cf) {
  CalibrationParams params;
  params.support = p_cf.support();
  for (const auto& e : p_cf) {
    params.ids.push_back(e.id);
    params.w_diag.push_back(1.0);
    params.b.push_back(-e.prob);
  }
  return params;
}

std::vector<double> calibrated_scores(const CalibrationParams& params, const ProbVector& p) {
  params.validate();
  std::vector<double> scores;
  scores.reserve(p.size());
  if (params.support == Support::kClosed || !p.open()) {
    if (params.size() != p.size()) {
      throw DimensionMismatch("calibration params cover " + std::to_string(params.size()) +
                              " classes but the distribution has " + std::to_string(p.size()));
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (params.ids[i] != p[i].id) {
        throw DimensionMismatch("class '" + p[i].id + "' does not match calibration id '" + params.ids[i] + "'");
      }
      scores.push_back(params.w_diag[i] * p[i].prob + params.b[i]);
    }
    return scores;
  }
  for (const auto& e : p) {
    const auto it = std::find(params.ids.begin(), params.ids.end(), e.id);
    if (it == params.ids.end()) {
      scores.push_back(params.default_w * e.prob + params.default_b);
    } else {
      const auto i = static_cast<std::size_t>(it - params.ids.begin());
      scores.push_back(params.w_diag[i] * e.prob + params.b[i]);
    }
  }
  return scores;
}

ProbVector apply_calibration(const CalibrationParams& params, const ProbVector& p) {
  const auto scores = calibrated_scores(params, p);
  if (scores.empty()) return p;
  const double shift = *std::max_element(scores.begin(), scores.end());
  std::vector<double> ex(scores.size());
  double z = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    ex[i] = std::exp(scores[i] - shift);
    z += ex[i];
  }
  const double listed_mass = 1.0 - p.remainder_mass();
  std::vector<ProbEntry> out;
  out.reserve(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out.push_back({p[i].id, listed_mass * ex[i] / z});
  return ProbVector(std::move(out), p.remainder_mass(), p.support());
}

std::size_t argmax_lowest(std::span<const double> scores) {
  if (scores.empty()) throw InvalidDistribution("argmax of an empty score vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

std::size_t predict(const ProbVector& q) {
  const auto probs = q.probs();
  return argmax_lowest(probs);
}

std::string content_free_input(std::string_view cf_template, std::string_view cf) {
  constexpr std::string_view kSlot = "{cf}";
  std::string out(cf_template);
  const auto pos = out.find(kSlot);
  if (pos == std::string::npos) throw TemplateError("cf_template must contain {cf}");
  out.replace(pos, kSlot.size(), cf);
  return out;
}

PromptContext make_context(const PromptSpec& spec, std::string_view answer_prefix) {
  PromptContext ctx;
  ctx.test_input = spec.test_input;
  ctx.example_answers.reserve(spec.examples.size());
  for (const auto& ex : spec.examples) {
    if (spec.label_space.empty()) {
      ctx.example_answers.push_back(std::string(answer_prefix) + ex.label);
    } else {
      ctx.example_answers.push_back(spec.label_space[spec.label_space.require(ex.label)].token);
    }
  }
  return ctx;
}

Request make_request(const PromptSpec& spec, std::string_view answer_prefix) {
  return {render(spec), make_context(spec, answer_prefix)};
}

namespace {

template <class Query>
ContentFreeEstimate estimate_with(const PromptSpec& spec, const std::vector<std::string>& cf_inputs,
                                  const ContentFreeOptions& options, Query&& query) {
  if (cf_inputs.empty()) throw std::invalid_argument("estimate_content_free needs at least one input");
  ContentFreeEstimate est;
  std::exception_ptr last;
  for (const auto& cf : cf_inputs) {
    PromptSpec filled = spec;
    filled.test_input = content_free_input(options.cf_template, cf);
    try {
      est.per_input.emplace_back(cf, query(filled));
    } catch (const Error& e) {
      est.failures.emplace_back(cf, e.what());
      last = std::current_exception();
    }
  }
  if (est.per_input.empty()) std::rethrow_exception(last);
  std::vector<ProbVector> vs;
  vs.reserve(est.per_input.size());
  for (const auto& [cf, v] : est.per_input) vs.push_back(v);
  est.ensemble = ensemble_mean(vs);
  return est;
}

}  // namespace

ContentFreeEstimate estimate_content_free(LanguageModel& lm, const PromptSpec& spec,
                                          const std::vector<std::string>& cf_inputs,
                                          const ContentFreeOptions& options) {
  return estimate_with(spec, cf_inputs, options, [&](const PromptSpec& filled) {
    return renormalize_label_probs(label_probs(lm, make_request(filled, options.answer_prefix), filled.label_space, options.label_probs));
  });
}

ContentFreeEstimate estimate_content_free_first_token(LanguageModel& lm, const PromptSpec& spec,
                                                      const std::vector<std::string>& cf_inputs, int top_k,
                                                      const ContentFreeOptions& options) {
  return estimate_with(spec, cf_inputs, options, [&](const PromptSpec& filled) {
    return lm.next_token(make_request(filled, options.answer_prefix), top_k).to_prob_vector();
  });
}

}  // namespace ctxcal
