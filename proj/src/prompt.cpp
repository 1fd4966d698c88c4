#include "ctxcal/prompt.hpp"

#include <algorithm>
#include <cctype>
#include <limits>
#include <numeric>
#include <unordered_set>

#include "ctxcal/error.hpp"

namespace ctxcal {
namespace {

constexpr std::string_view kInput = "{input}";
constexpr std::string_view kLabel = "{label}";

struct PlaceholderCount {
  int input = 0;
  int label = 0;
};

bool is_placeholder_char(char c) { return std::islower(static_cast<unsigned char>(c)) || c == '_'; }

// Scans `{identifier}` tokens. Braces that do not enclose an identifier are
// literal text.
PlaceholderCount scan_placeholders(std::string_view tmpl, std::string_view what) {
  PlaceholderCount count;
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    if (tmpl[i] != '{') continue;
    std::size_t j = i + 1;
    while (j < tmpl.size() && is_placeholder_char(tmpl[j])) ++j;
    if (j == i + 1 || j >= tmpl.size() || tmpl[j] != '}') continue;
    const std::string_view token = tmpl.substr(i, j - i + 1);
    if (token == kInput) {
      ++count.input;
    } else if (token == kLabel) {
      ++count.label;
    } else {
      throw TemplateError(std::string(what) + ": unknown placeholder " + std::string(token));
    }
    i = j;
  }
  return count;
}

std::string substitute(std::string_view tmpl, std::string_view input, std::string_view label) {
  std::string out;
  out.reserve(tmpl.size() + input.size() + label.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl.compare(i, kInput.size(), kInput) == 0) {
      out += input;
      i += kInput.size();
    } else if (tmpl.compare(i, kLabel.size(), kLabel) == 0) {
      out += label;
      i += kLabel.size();
    } else {
      out += tmpl[i++];
    }
  }
  return out;
}

void check_text(std::string_view text, std::string_view what) {
  if (text.find(kInput) != std::string_view::npos || text.find(kLabel) != std::string_view::npos) {
    throw TemplateError(std::string(what) + " contains a literal placeholder token");
  }
}

}  // namespace

void PromptFormat::validate() const {
  const auto ex = scan_placeholders(example_template, "example_template of '" + format_id + "'");
  if (ex.input != 1 || ex.label != 1) {
    throw TemplateError("example_template of '" + format_id +
                        "' must contain {input} and {label} exactly once");
  }
  const auto test = scan_placeholders(test_template, "test_template of '" + format_id + "'");
  if (test.input != 1 || test.label != 0) {
    throw TemplateError("test_template of '" + format_id +
                        "' must contain {input} exactly once and no {label}");
  }
  const auto pre = scan_placeholders(preamble, "preamble of '" + format_id + "'");
  if (pre.input != 0 || pre.label != 0) {
    throw TemplateError("preamble of '" + format_id + "' must not contain placeholders");
  }
}

LabelSpace::LabelSpace(std::vector<Label> labels) : labels_(std::move(labels)) {
  std::unordered_set<std::string> names;
  std::unordered_set<std::string> tokens;
  for (auto& l : labels_) {
    if (l.name.empty()) throw InvalidLabel("label names must be non-empty");
    if (!names.insert(l.name).second) throw InvalidLabel("duplicate label name '" + l.name + "'");
    if (l.token.empty()) l.token = " " + l.name;
    if (!tokens.insert(l.token).second) {
      throw LabelTokenCollision("labels share the first token '" + l.token +
                                "'; first-token scoring cannot tell them apart");
    }
  }
}

LabelSpace LabelSpace::from_names(const std::vector<std::string>& names) {
  std::vector<Label> labels;
  labels.reserve(names.size());
  for (const auto& n : names) labels.push_back({n, ""});
  return LabelSpace(std::move(labels));
}

std::vector<std::string> LabelSpace::names() const {
  std::vector<std::string> out;
  out.reserve(labels_.size());
  for (const auto& l : labels_) out.push_back(l.name);
  return out;
}

std::optional<std::size_t> LabelSpace::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t LabelSpace::require(std::string_view name) const {
  if (auto i = index_of(name)) return *i;
  throw InvalidLabel("label '" + std::string(name) + "' is not in the label space");
}

std::string render_example(const PromptFormat& format, const LabeledExample& example) {
  check_text(example.input, "example input");
  check_text(example.label, "example label");
  return substitute(format.example_template, example.input, example.label);
}

std::string render_test(const PromptFormat& format, std::string_view test_input) {
  check_text(test_input, "test input");
  return substitute(format.test_template, test_input, {});
}

std::string render(const PromptSpec& spec) {
  spec.format.validate();
  std::string out;
  auto append_block = [&](const std::string& block) {
    if (!out.empty()) out += spec.format.separator;
    out += block;
  };
  if (!spec.format.preamble.empty()) out = spec.format.preamble;
  for (const auto& ex : spec.examples) append_block(render_example(spec.format, ex));
  append_block(render_test(spec.format, spec.test_input));
  return out;
}

std::vector<std::size_t> class_balance(const PromptSpec& spec) {
  std::vector<std::size_t> counts(spec.label_space.size(), 0);
  for (const auto& ex : spec.examples) ++counts[spec.label_space.require(ex.label)];
  return counts;
}

std::uint64_t factorial(std::size_t n) {
  if (n > 20) throw CapExceeded(std::to_string(n) + "! does not fit in 64 bits");
  std::uint64_t f = 1;
  for (std::size_t i = 2; i <= n; ++i) f *= i;
  return f;
}

std::vector<std::size_t> permutation_at(std::size_t n, std::uint64_t index) {
  if (index >= factorial(n)) {
    throw CapExceeded("permutation index " + std::to_string(index) + " out of range for n = " +
                      std::to_string(n));
  }
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  std::vector<std::size_t> out;
  out.reserve(n);
  for (std::size_t remaining = n; remaining > 0; --remaining) {
    const std::uint64_t block = factorial(remaining - 1);
    const auto pick = static_cast<std::size_t>(index / block);
    index %= block;
    out.push_back(pool[pick]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return out;
}

std::vector<std::vector<std::size_t>> enumerate_permutations(std::size_t n, std::size_t cap) {
  if (n > cap) {
    throw CapExceeded("enumerating " + std::to_string(n) + "! orderings exceeds the cap of " +
                      std::to_string(cap) + " examples; sample permutations instead");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::vector<std::size_t>> out;
  out.reserve(factorial(n));
  do {
    out.push_back(order);
  } while (std::next_permutation(order.begin(), order.end()));
  return out;
}

std::uint64_t Rng::uniform_index(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index over an empty range");
  // 2^64 mod n; draws below it would bias the modulo.
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    const std::uint64_t x = engine_();
    if (x >= threshold) return x % n;
  }
}

std::vector<std::vector<std::size_t>> sample_training_sets(std::size_t pool_size, std::size_t k,
                                                           std::size_t n_sets, std::uint64_t seed) {
  if (pool_size < k) {
    throw InsufficientPool("pool of " + std::to_string(pool_size) + " cannot supply " +
                           std::to_string(k) + " distinct examples");
  }
  Rng rng(seed);
  std::vector<std::vector<std::size_t>> sets;
  sets.reserve(n_sets);
  std::vector<std::size_t> idx(pool_size);
  for (std::size_t s = 0; s < n_sets; ++s) {
    std::iota(idx.begin(), idx.end(), 0);
    // Partial Fisher-Yates: the first k slots become the draw.
    for (std::size_t i = 0; i < k; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.uniform_index(pool_size - i));
      std::swap(idx[i], idx[j]);
    }
    sets.emplace_back(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return sets;
}

}  // namespace ctxcal
