#include "ctxcal/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ctxcal/error.hpp"

namespace ctxcal {
namespace {

bool initials_unique(std::span<const std::string> classes) {
  std::set<char> seen;
  for (const auto& c : classes) {
    if (c.empty() || !seen.insert(c.front()).second) return false;
  }
  return true;
}

std::size_t class_index(std::span<const std::string> classes, const std::string& name) {
  const auto it = std::find(classes.begin(), classes.end(), name);
  if (it == classes.end()) throw InvalidLabel("'" + name + "' is not one of the log's classes");
  return static_cast<std::size_t>(it - classes.begin());
}

double positive_prob(const LogRecord& r, const std::string& positive) {
  if (!r.raw) throw DegenerateInput("threshold scan needs the raw distribution of every record");
  const auto idx = r.raw->index_of(positive);
  if (!idx) throw InvalidLabel("raw distribution has no entry for '" + positive + "'");
  return (*r.raw)[*idx].prob;
}

std::string fmt(double v, int precision = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

}  // namespace

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::string composition_pattern(std::span<const std::string> labels, std::span<const std::string> classes) {
  std::string out;
  const bool initials = initials_unique(classes);
  for (const auto& l : labels) {
    class_index(classes, l);
    if (initials) {
      out += l.front();
    } else {
      if (!out.empty()) out += ' ';
      out += l;
    }
  }
  return out;
}

MajorityCurve majority_label_curve(const PredictionLog& log) {
  if (log.classes.empty()) throw DegenerateInput("majority curve needs a classification log");
  if (log.records.empty()) throw DegenerateInput("majority curve of an empty log");
  struct Acc {
    std::size_t n = 0;
    std::vector<std::size_t> counts;
  };
  std::map<std::string, Acc> buckets;
  for (const auto& r : log.records) {
    auto& acc = buckets[composition_pattern(r.example_labels, log.classes)];
    acc.counts.resize(log.classes.size(), 0);
    ++acc.n;
    const auto it = std::find(log.classes.begin(), log.classes.end(), r.predicted);
    if (it != log.classes.end()) ++acc.counts[static_cast<std::size_t>(it - log.classes.begin())];
  }
  MajorityCurve curve;
  for (const auto& [pattern, acc] : buckets) {
    std::size_t in_space = 0;
    for (auto c : acc.counts) in_space += c;
    if (in_space == 0) {
      curve.warnings.push_back("bucket '" + pattern + "' has no predictions in the label space; skipped");
      continue;
    }
    MajorityBucket b{pattern, acc.n, {}};
    for (auto c : acc.counts) b.fractions.push_back(static_cast<double>(c) / static_cast<double>(acc.n));
    curve.buckets.push_back(std::move(b));
  }
  return curve;
}

RecencyStats recency_overprediction(const PredictionLog& log) {
  if (log.records.empty()) throw DegenerateInput("recency analysis needs at least one record");
  std::size_t positions = 0;
  for (const auto& r : log.records) positions = std::max(positions, r.example_labels.size());
  std::vector<std::size_t> have(positions, 0), repeat(positions, 0), gold(positions, 0);
  for (const auto& r : log.records) {
    const auto pred = trim(r.predicted);
    const auto g = trim(r.gold);
    for (std::size_t p = 0; p < r.example_labels.size(); ++p) {
      const auto answer = trim(r.example_labels[p]);
      ++have[p];
      if (pred == answer) ++repeat[p];
      if (g == answer) ++gold[p];
    }
  }
  RecencyStats out;
  for (std::size_t p = 0; p < positions; ++p) {
    const double n = static_cast<double>(have[p]);
    out.repeat_rate.push_back(static_cast<double>(repeat[p]) / n);
    out.gold_rate.push_back(static_cast<double>(gold[p]) / n);
    out.overprediction.push_back(out.repeat_rate.back() - out.gold_rate.back());
  }
  return out;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionMismatch("pearson needs equal-length inputs");
  if (x.size() < 2) throw DegenerateInput("pearson needs at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DegenerateInput("pearson is undefined for a constant series");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double common_token_correlation(const PredictionLog& log, const std::map<std::string, double>& frequency) {
  if (log.classes.size() < 3) throw DegenerateInput("common-token correlation needs at least three classes");
  if (log.records.empty()) throw DegenerateInput("common-token correlation of an empty log");
  std::vector<double> rate(log.classes.size(), 0.0);
  std::vector<double> freq;
  for (const auto& c : log.classes) {
    const auto it = frequency.find(c);
    if (it == frequency.end()) throw MissingFrequency("no frequency for label '" + c + "'");
    freq.push_back(it->second);
  }
  for (const auto& r : log.records) {
    const auto it = std::find(log.classes.begin(), log.classes.end(), r.predicted);
    if (it != log.classes.end()) rate[static_cast<std::size_t>(it - log.classes.begin())] += 1.0;
  }
  for (auto& v : rate) v /= static_cast<double>(log.records.size());
  return pearson(rate, freq);
}

double threshold_accuracy(const PredictionLog& log, double threshold, std::size_t positive_class) {
  if (log.classes.size() != 2) throw DegenerateInput("threshold analysis needs a binary log");
  if (log.records.empty()) throw DegenerateInput("threshold analysis of an empty log");
  const auto& positive = log.classes.at(positive_class);
  std::size_t correct = 0;
  for (const auto& r : log.records) {
    if ((positive_prob(r, positive) > threshold) == (r.gold == positive)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(log.records.size());
}

ThresholdResult best_threshold(std::vector<std::pair<double, bool>> pts) {
  if (pts.empty()) throw DegenerateInput("threshold scan of an empty log");
  std::sort(pts.begin(), pts.end());
  std::size_t total_pos = 0;
  for (const auto& pt : pts) total_pos += pt.second;

  // Candidate thresholds lie between consecutive distinct values of
  // {0, p_1, ..., p_n, 1}. At or below the candidate: predicted negative.
  std::vector<double> values{0.0};
  for (const auto& pt : pts) {
    if (pt.first != values.back()) values.push_back(pt.first);
  }
  if (values.back() != 1.0) values.push_back(1.0);

  const double n = static_cast<double>(pts.size());
  ThresholdResult best{0.5, -1.0};
  std::size_t i = 0;
  std::size_t neg_below = 0, pos_below = 0;
  for (std::size_t v = 0; v + 1 < values.size(); ++v) {
    while (i < pts.size() && pts[i].first <= values[v]) {
      (pts[i].second ? pos_below : neg_below) += 1;
      ++i;
    }
    const double acc = static_cast<double>(neg_below + (total_pos - pos_below)) / n;
    if (acc > best.accuracy) best = {0.5 * (values[v] + values[v + 1]), acc};
  }
  return best;
}

ThresholdResult threshold_scan(const PredictionLog& log, std::size_t positive_class) {
  if (log.classes.size() != 2) throw DegenerateInput("threshold analysis needs a binary log");
  if (log.records.empty()) throw DegenerateInput("threshold analysis of an empty log");
  const auto& positive = log.classes.at(positive_class);
  std::vector<std::pair<double, bool>> pts;
  pts.reserve(log.records.size());
  for (const auto& r : log.records) pts.emplace_back(positive_prob(r, positive), r.gold == positive);
  return best_threshold(std::move(pts));
}

std::map<std::string, double> parse_frequency_table(std::string_view text) {
  std::map<std::string, double> out;
  std::istringstream in{std::string(text)};
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || trim(line).front() == '#') continue;
    auto sep = line.rfind('\t');
    if (sep == std::string::npos) sep = line.rfind(',');
    if (sep == std::string::npos) throw ConfigError("frequency table line without a separator: " + line);
    const auto name = trim(line.substr(0, sep));
    const auto value = trim(line.substr(sep + 1));
    char* end = nullptr;
    const double v = std::strtod(value.c_str(), &end);
    if (value.empty() || end != value.c_str() + value.size()) {
      if (first) {
        first = false;
        continue;
      }
      throw ConfigError("frequency table count is not a number: " + line);
    }
    first = false;
    out[name] = v;
  }
  return out;
}

std::map<std::string, double> load_frequency_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open frequency table " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_frequency_table(ss.str());
}

std::string bias_report_json(const BiasReport& report, const std::vector<std::string>& classes) {
  nlohmann::ordered_json j;
  j["classes"] = classes;
  if (report.majority) {
    auto& m = j["majority_curve"];
    m = nlohmann::ordered_json::array();
    for (const auto& b : report.majority->buckets) {
      m.push_back({{"pattern", b.pattern}, {"records", b.records}, {"fractions", b.fractions}});
    }
    j["majority_warnings"] = report.majority->warnings;
  }
  if (report.recency) {
    j["recency"] = {{"repeat_rate", report.recency->repeat_rate},
                    {"gold_rate", report.recency->gold_rate},
                    {"overprediction", report.recency->overprediction}};
  }
  if (report.common_token_r) j["common_token_r"] = *report.common_token_r;
  if (report.threshold) {
    j["threshold_best"] = {{"threshold", report.threshold->threshold}, {"accuracy", report.threshold->accuracy}};
  }
  if (report.accuracy_at_half) j["accuracy_at_0.5"] = *report.accuracy_at_half;
  j["notes"] = report.notes;
  return j.dump(2) + "\n";
}

std::string bias_report_table(const BiasReport& report, const std::vector<std::string>& classes) {
  std::ostringstream out;
  if (report.majority) {
    out << "Majority/recency: predicted fraction per class\n";
    out << "pattern\trecords";
    for (const auto& c : classes) out << '\t' << c;
    out << '\n';
    for (const auto& b : report.majority->buckets) {
      out << b.pattern << '\t' << b.records;
      for (double f : b.fractions) out << '\t' << fmt(f);
      out << '\n';
    }
    for (const auto& w : report.majority->warnings) out << "warning: " << w << '\n';
    out << '\n';
  }
  if (report.recency) {
    out << "Recency: repeat rate minus gold repeat rate (percentage points)\n";
    out << "position\trepeat\tgold\toverprediction\n";
    for (std::size_t p = 0; p < report.recency->overprediction.size(); ++p) {
      out << (p + 1) << '\t' << fmt(100.0 * report.recency->repeat_rate[p], 1) << '\t'
          << fmt(100.0 * report.recency->gold_rate[p], 1) << '\t'
          << fmt(100.0 * report.recency->overprediction[p], 1) << '\n';
    }
    out << '\n';
  }
  if (report.common_token_r) out << "Common-token correlation r = " << fmt(*report.common_token_r) << "\n\n";
  if (report.threshold) {
    out << "Best threshold p(" << (classes.empty() ? "positive" : classes.front())
        << ") = " << fmt(report.threshold->threshold) << ", accuracy " << fmt(report.threshold->accuracy);
    if (report.accuracy_at_half) out << " (at 0.5: " << fmt(*report.accuracy_at_half) << ")";
    out << "\n\n";
  }
  for (const auto& n : report.notes) out << "note: " << n << '\n';
  return out.str();
}

}  // namespace ctxcal
