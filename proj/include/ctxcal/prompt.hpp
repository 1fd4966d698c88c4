#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ctxcal {

/// A prompt template. `example_template` holds `{input}` and `{label}` once
/// each; `test_template` holds `{input}` once and ends at the answer cue.
/// Rendered blocks (preamble, examples, test) are joined by `separator`.
struct PromptFormat {
  std::string format_id;
  std::string preamble;
  std::string example_template;
  std::string test_template;
  std::string separator = "\n\n";

  /// Throws TemplateError when the placeholder invariants do not hold.
  void validate() const;
};

struct LabeledExample {
  std::string input;
  /// Label name for classification, answer string for generation.
  std::string label;

  bool operator==(const LabeledExample&) const = default;
};

struct Label {
  std::string name;
  /// First token of the continuation that spells this label after the
  /// answer cue. Defaults to " " + name.
  std::string token;
};

/// Ordered answer classes. Position in the list is the class id.
class LabelSpace {
 public:
  LabelSpace() = default;
  /// Throws InvalidLabel on empty or duplicate names and LabelTokenCollision
  /// when two labels would be scored through the same first token.
  explicit LabelSpace(std::vector<Label> labels);
  static LabelSpace from_names(const std::vector<std::string>& names);

  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }
  const Label& operator[](std::size_t i) const { return labels_[i]; }
  const std::vector<Label>& labels() const { return labels_; }
  std::vector<std::string> names() const;
  std::optional<std::size_t> index_of(std::string_view name) const;
  /// Like index_of but throws InvalidLabel.
  std::size_t require(std::string_view name) const;

 private:
  std::vector<Label> labels_;
};

/// Everything that determines a rendered prompt. The order of `examples`
/// is the permutation.
struct PromptSpec {
  PromptFormat format;
  std::vector<LabeledExample> examples;
  std::string test_input;
  LabelSpace label_space;
};

std::string render_example(const PromptFormat& format, const LabeledExample& example);
std::string render_test(const PromptFormat& format, std::string_view test_input);

/// Renders preamble, examples and the test block joined by the format's
/// separator. The result ends at the answer cue.
std::string render(const PromptSpec& spec);

/// Per-class counts of the example labels, in label-space order.
std::vector<std::size_t> class_balance(const PromptSpec& spec);

// ---------------------------------------------------------------------------
// Permutations

inline constexpr std::size_t kDefaultPermutationCap = 6;

/// n! for n <= 20.
std::uint64_t factorial(std::size_t n);

/// The permutation of {0..n-1} with lexicographic rank `index`.
std::vector<std::size_t> permutation_at(std::size_t n, std::uint64_t index);

/// All n! orderings of {0..n-1} in lexicographic order. Throws CapExceeded
/// when n > cap.
std::vector<std::vector<std::size_t>> enumerate_permutations(std::size_t n,
                                                             std::size_t cap = kDefaultPermutationCap);

template <class T>
std::vector<T> apply_permutation(std::span<const T> items, std::span<const std::size_t> order) {
  std::vector<T> out;
  out.reserve(order.size());
  for (std::size_t i : order) out.push_back(items[i]);
  return out;
}

template <class T>
std::vector<std::vector<T>> enumerate_permutations(std::span<const T> items,
                                                   std::size_t cap = kDefaultPermutationCap) {
  std::vector<std::vector<T>> out;
  for (const auto& order : enumerate_permutations(items.size(), cap)) {
    out.push_back(apply_permutation(items, std::span<const std::size_t>(order)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Seeded sampling

/// Deterministic random source. Draws are defined only in terms of the
/// mt19937_64 output sequence, so results are identical across standard
/// libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  std::uint64_t next() { return engine_(); }
  /// Uniform integer in [0, n) by rejection sampling.
  std::uint64_t uniform_index(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
};

/// `n_sets` draws of `k` distinct pool indices each (without replacement
/// within a set, independent across sets). Draw order is kept. No class
/// balancing. Throws InsufficientPool when pool_size < k.
std::vector<std::vector<std::size_t>> sample_training_sets(std::size_t pool_size, std::size_t k,
                                                           std::size_t n_sets, std::uint64_t seed);

template <class T>
std::vector<std::vector<T>> sample_training_sets(std::span<const T> pool, std::size_t k,
                                                 std::size_t n_sets, std::uint64_t seed) {
  std::vector<std::vector<T>> out;
  for (const auto& idx : sample_training_sets(pool.size(), k, n_sets, seed)) {
    out.push_back(apply_permutation(pool, std::span<const std::size_t>(idx)));
  }
  return out;
}

}  // namespace ctxcal
