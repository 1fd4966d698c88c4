#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ctxcal {

/// Tolerance on `sum(entries) + remainder_mass == 1`.
inline constexpr double kMassTolerance = 1e-9;

struct ProbEntry {
  std::string id;
  double prob = 0.0;

  bool operator==(const ProbEntry&) const = default;
};

/// Whether a distribution covers a closed label space or is a truncated
/// view of an open vocabulary (top-k next-token probabilities).
enum class Support { kClosed, kOpen };

/// A probability distribution over answer classes, or the listed part of a
/// truncated token distribution plus the mass it does not cover.
///
/// Entries keep their construction order; for classification that order is
/// the label-space order and an entry's position is its class id.
class ProbVector {
 public:
  ProbVector() = default;

  /// Throws InvalidDistribution unless every probability is finite and
  /// non-negative, ids are unique, and the total mass is 1 within
  /// kMassTolerance.
  explicit ProbVector(std::vector<ProbEntry> entries, double remainder_mass = 0.0,
                      Support support = Support::kClosed);

  static ProbVector uniform(const std::vector<std::string>& ids);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const ProbEntry& operator[](std::size_t i) const { return entries_[i]; }
  const std::vector<ProbEntry>& entries() const { return entries_; }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  double remainder_mass() const { return remainder_; }
  Support support() const { return support_; }
  bool open() const { return support_ == Support::kOpen; }

  std::optional<std::size_t> index_of(std::string_view id) const;
  std::vector<double> probs() const;
  std::vector<std::string> ids() const;
  bool same_ids(const ProbVector& other) const;

  bool operator==(const ProbVector&) const = default;

 private:
  std::vector<ProbEntry> entries_;
  double remainder_ = 0.0;
  Support support_ = Support::kClosed;
};

}  // namespace ctxcal
