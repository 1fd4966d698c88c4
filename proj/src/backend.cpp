#include "ctxcal/backend.hpp"

#include <algorithm>

#include "ctxcal/error.hpp"

namespace ctxcal {

std::optional<double> NextTokenDistribution::prob_of(std::string_view token) const {
  for (const auto& t : top) {
    if (t.token == token) return t.prob;
  }
  return std::nullopt;
}

std::size_t NextTokenDistribution::argmax() const {
  if (top.empty()) throw InvalidDistribution("argmax of an empty token distribution");
  std::size_t best = 0;
  for (std::size_t i = 1; i < top.size(); ++i) {
    if (top[i].prob > top[best].prob) best = i;
  }
  return best;
}

ProbVector NextTokenDistribution::to_prob_vector() const {
  std::vector<ProbEntry> entries;
  entries.reserve(top.size());
  for (const auto& t : top) entries.push_back({t.token, t.prob});
  return ProbVector(std::move(entries), remainder_mass, Support::kOpen);
}

Completion LanguageModel::complete(const Request& request, const GenerationOptions& options) {
  Request step = request;
  Completion out;
  for (int i = 0; i < options.max_tokens; ++i) {
    const auto dist = next_token(step, 1);
    const auto& token = dist.top[dist.argmax()].token;
    out.text += token;
    if (cut_at_stop(out.text, options.stop)) return out;
    step.prompt += token;
    step.context.generated += token;
  }
  out.hit_max_tokens = true;
  return out;
}

std::vector<LabelProb> label_probs(LanguageModel& lm, const Request& request, const LabelSpace& labels,
                                   const LabelProbOptions& options) {
  if (request.prompt.empty()) throw std::invalid_argument("label_probs needs a non-empty prompt");
  const auto dist = lm.next_token(request, options.top_k);
  std::vector<LabelProb> out;
  out.reserve(labels.size());
  for (const auto& label : labels.labels()) {
    auto p = dist.prob_of(label.token);
    if (!p) {
      if (options.missing == MissingTokenPolicy::kError) {
        throw TokenNotInTopK("token '" + label.token + "' for label '" + label.name +
                             "' is not among the returned top-k; request a larger k");
      }
      p = options.missing_mass;
    }
    out.push_back({label.name, *p});
  }
  return out;
}

Completion greedy_complete(LanguageModel& lm, const Request& request, const GenerationOptions& options) {
  if (options.stop.empty()) throw std::invalid_argument("greedy_complete needs a non-empty stop string");
  return lm.complete(request, options);
}

bool cut_at_stop(std::string& text, std::string_view stop) {
  const auto pos = text.find(stop);
  if (pos == std::string::npos) return false;
  text.resize(pos);
  return true;
}

}  // namespace ctxcal
