#include "ctxcal/mock_lm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "ctxcal/error.hpp"

namespace ctxcal {
namespace {

std::uint64_t fnv1a(std::uint64_t h, std::string_view bytes) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double hash_unit(std::uint64_t seed, std::string_view input, std::string_view token) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (int i = 0; i < 8; ++i) {
    const char byte = static_cast<char>((seed >> (8 * i)) & 0xff);
    h = fnv1a(h, std::string_view(&byte, 1));
  }
  h = fnv1a(h, input);
  h = fnv1a(h, std::string_view("\0", 1));
  h = fnv1a(h, token);
  return static_cast<double>(splitmix64(h) >> 11) * 0x1.0p-53;
}

}  // namespace

void MockLMConfig::validate() const {
  if (base_weights.empty()) throw ConfigError("mock base_weights must be non-empty");
  for (const auto& [token, w] : base_weights) {
    if (!std::isfinite(w) || w <= 0.0) {
      throw ConfigError("mock base weight for '" + token + "' must be finite and positive");
    }
  }
  if (!std::isfinite(majority_strength) || majority_strength < 0.0) {
    throw ConfigError("mock majority_strength must be >= 0");
  }
  if (!(recency_decay > 0.0 && recency_decay <= 1.0)) {
    throw ConfigError("mock recency_decay must lie in (0, 1]");
  }
  if (!std::isfinite(evidence_strength) || evidence_strength < 0.0) {
    throw ConfigError("mock evidence_strength must be >= 0");
  }
  if (!std::isfinite(noise_scale) || noise_scale < 0.0) throw ConfigError("mock noise_scale must be >= 0");
  if (stop_token.empty()) throw ConfigError("mock stop_token must be non-empty");
}

std::vector<std::string> mock_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

NextTokenDistribution mock_next_token(const MockLMConfig& config, const PromptContext& context) {
  if (!context.generated.empty()) return {{{config.stop_token, 1.0}}, 0.0};

  std::map<std::string, double> score;
  for (const auto& [token, w] : config.base_weights) score[token] += w;
  for (const auto& [word, token] : config.lexicon) score.try_emplace(token, 0.0);

  double decay = 1.0;
  const auto& answers = context.example_answers;
  for (auto it = answers.rbegin(); it != answers.rend(); ++it) {
    score[*it] += config.majority_strength * decay;
    decay *= config.recency_decay;
  }

  if (config.evidence_strength > 0.0) {
    for (const auto& w : mock_words(context.test_input)) {
      if (auto hit = config.lexicon.find(w); hit != config.lexicon.end()) {
        score[hit->second] += config.evidence_strength;
      }
    }
  }
  if (config.noise_scale > 0.0) {
    for (auto& [token, s] : score) s += config.noise_scale * hash_unit(config.noise_seed, context.test_input, token);
  }

  double total = 0.0;
  for (const auto& [token, s] : score) total += s;

  NextTokenDistribution dist;
  dist.top.reserve(score.size());
  for (const auto& [token, s] : score) dist.top.push_back({token, s / total});
  std::stable_sort(dist.top.begin(), dist.top.end(),
                   [](const TokenProb& a, const TokenProb& b) { return a.prob > b.prob; });
  return dist;
}

MockLM::MockLM(MockLMConfig config, std::string id) : config_(std::move(config)), id_(std::move(id)) {
  config_.validate();
}

NextTokenDistribution MockLM::next_token(const Request& request, int top_k) {
  auto dist = mock_next_token(config_, request.context);
  if (top_k > 0 && static_cast<std::size_t>(top_k) < dist.top.size()) {
    double kept = 0.0;
    dist.top.resize(static_cast<std::size_t>(top_k));
    for (const auto& t : dist.top) kept += t.prob;
    dist.remainder_mass = std::max(0.0, 1.0 - kept);
  }
  return dist;
}

}  // namespace ctxcal
