#include "ctxcal/prob_vector.hpp"

#include <cmath>
#include <unordered_set>

#include "ctxcal/error.hpp"

namespace ctxcal {

ProbVector::ProbVector(std::vector<ProbEntry> entries, double remainder_mass, Support support)
    : entries_(std::move(entries)), remainder_(remainder_mass), support_(support) {
  if (!std::isfinite(remainder_) || remainder_ < 0.0) {
    throw InvalidDistribution("remainder mass must be finite and non-negative");
  }
  if (support_ == Support::kClosed && remainder_ != 0.0) {
    throw InvalidDistribution("a closed label distribution cannot carry remainder mass");
  }
  std::unordered_set<std::string_view> seen;
  double total = remainder_;
  for (const auto& e : entries_) {
    if (!std::isfinite(e.prob) || e.prob < 0.0) {
      throw InvalidDistribution("probability for '" + e.id + "' is negative or not finite");
    }
    if (!seen.insert(e.id).second) {
      throw InvalidDistribution("duplicate id '" + e.id + "'");
    }
    total += e.prob;
  }
  if (std::abs(total - 1.0) > kMassTolerance) {
    throw InvalidDistribution("distribution mass " + std::to_string(total) + " is not 1");
  }
}

ProbVector ProbVector::uniform(const std::vector<std::string>& ids) {
  if (ids.empty()) throw InvalidDistribution("uniform distribution over zero classes");
  std::vector<ProbEntry> entries;
  entries.reserve(ids.size());
  const double p = 1.0 / static_cast<double>(ids.size());
  for (const auto& id : ids) entries.push_back({id, p});
  return ProbVector(std::move(entries));
}

std::optional<std::size_t> ProbVector::index_of(std::string_view id) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].id == id) return i;
  }
  return std::nullopt;
}

std::vector<double> ProbVector::probs() const {
  std::vector<double> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.prob);
  return out;
}

std::vector<std::string> ProbVector::ids() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.id);
  return out;
}

bool ProbVector::same_ids(const ProbVector& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].id != other.entries_[i].id) return false;
  }
  return true;
}

}  // namespace ctxcal
