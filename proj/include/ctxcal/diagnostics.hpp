#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ctxcal/prob_vector.hpp"

namespace ctxcal {

/// One evaluated prediction, reduced to what the bias analyses need.
struct LogRecord {
  /// Training labels (classification) or answers (generation) in prompt order.
  std::vector<std::string> example_labels;
  std::string predicted;
  std::string gold;
  /// Raw (uncalibrated) label distribution, classification only.
  std::optional<ProbVector> raw;
};

struct PredictionLog {
  /// Class names in label-space order; empty for generation logs.
  std::vector<std::string> classes;
  std::vector<LogRecord> records;
};

struct MajorityBucket {
  /// Ordered composition, e.g. "PPNN".
  std::string pattern;
  std::size_t records = 0;
  /// Fraction of the bucket's predictions per class, in class order.
  std::vector<double> fractions;
};

struct MajorityCurve {
  std::vector<MajorityBucket> buckets;
  /// Buckets skipped because none of their predictions fell in the label space.
  std::vector<std::string> warnings;
};

struct RecencyStats {
  std::vector<double> repeat_rate;
  std::vector<double> gold_rate;
  /// repeat_rate - gold_rate per training position, as fractions.
  std::vector<double> overprediction;
};

struct ThresholdResult {
  double threshold = 0.5;
  double accuracy = 0.0;
};

/// Compact code for an ordered label sequence: class initials when they are
/// unique across the label space ("PPNN"), otherwise names joined by spaces.
std::string composition_pattern(std::span<const std::string> labels, std::span<const std::string> classes);

/// Whitespace-trimmed copy.
std::string trim(std::string_view s);

/// Per composition pattern, how often each class is predicted.
MajorityCurve majority_label_curve(const PredictionLog& log);

/// For each training position p: fraction of predictions equal to the
/// answer at p minus the fraction of gold answers equal to it. Strings are
/// compared after trimming; a prediction matching several positions counts
/// for each of them. Throws DegenerateInput on an empty log.
RecencyStats recency_overprediction(const PredictionLog& log);

/// Pearson r between per-class prediction rate and label-name frequency.
/// Needs at least three classes; throws MissingFrequency if a class has
/// no frequency.
double common_token_correlation(const PredictionLog& log, const std::map<std::string, double>& frequency);

/// Pearson correlation coefficient. Throws DegenerateInput for fewer than
/// two points or zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

/// Accuracy of "predict positive iff p(positive) > threshold".
double threshold_accuracy(const PredictionLog& log, double threshold, std::size_t positive_class = 0);

/// Best threshold among the midpoints of the sorted distinct probabilities
/// (with 0 and 1 as outer sentinels); ties go to the smallest threshold.
ThresholdResult threshold_scan(const PredictionLog& log, std::size_t positive_class = 0);

/// The same scan over (p(positive), is_positive) pairs.
ThresholdResult best_threshold(std::vector<std::pair<double, bool>> points);

/// Two-column table `label_name<TAB or comma>count`. `#` comments and a
/// non-numeric header row are skipped.
std::map<std::string, double> load_frequency_table(const std::filesystem::path& path);
std::map<std::string, double> parse_frequency_table(std::string_view text);

struct BiasReport {
  std::optional<MajorityCurve> majority;
  std::optional<RecencyStats> recency;
  std::optional<double> common_token_r;
  std::optional<ThresholdResult> threshold;
  std::optional<double> accuracy_at_half;
  std::vector<std::string> notes;
};

std::string bias_report_json(const BiasReport& report, const std::vector<std::string>& classes);
std::string bias_report_table(const BiasReport& report, const std::vector<std::string>& classes);

}  // namespace ctxcal
