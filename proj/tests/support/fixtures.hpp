#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ctxcal/diagnostics.hpp"

namespace ctxcal::test {

/// 1000 generation records with four distinct answers each. Position p is
/// repeated by exactly repeat[p] predictions and matched by gold[p] golds.
inline PredictionLog recency_fixture(const std::array<int, 4>& repeat = {207, 198, 299, 268},
                                     const std::array<int, 4>& gold = {122, 115, 156, 107}) {
  PredictionLog log;
  const int n = 1000;
  auto assign = [n](const std::array<int, 4>& counts) {
    std::vector<int> pos(n, -1);
    int r = 0;
    for (int p = 0; p < 4; ++p) {
      for (int c = 0; c < counts[p]; ++c) pos[r++] = p;
    }
    return pos;
  };
  const auto pred_pos = assign(repeat);
  // Reverse the gold layout so prediction and gold positions are not aligned.
  auto gold_pos = assign(gold);
  std::reverse(gold_pos.begin(), gold_pos.end());
  for (int i = 0; i < n; ++i) {
    LogRecord r;
    for (int p = 0; p < 4; ++p) r.example_labels.push_back("a" + std::to_string(i) + "_" + std::to_string(p));
    r.predicted = pred_pos[i] >= 0 ? " " + r.example_labels[pred_pos[i]] : "other" + std::to_string(i);
    r.gold = gold_pos[i] >= 0 ? r.example_labels[gold_pos[i]] + " " : "gold" + std::to_string(i);
    log.records.push_back(std::move(r));
  }
  return log;
}

/// Small random classification log. Probabilities are multiples of 1/16 so
/// ties occur.
inline PredictionLog toy_log(std::uint64_t seed, std::vector<std::string> classes, std::size_t n = 50,
                             std::size_t shots = 4) {
  std::mt19937_64 rng(seed);
  auto pick = [&](std::size_t k) { return static_cast<std::size_t>(rng() % k); };
  PredictionLog log;
  log.classes = std::move(classes);
  const auto k = log.classes.size();
  for (std::size_t i = 0; i < n; ++i) {
    LogRecord r;
    for (std::size_t s = 0; s < shots; ++s) r.example_labels.push_back(log.classes[pick(k)]);
    r.predicted = log.classes[pick(k)];
    r.gold = log.classes[pick(k)];
    std::vector<std::size_t> units(k, 1);
    for (std::size_t u = k; u < 16; ++u) ++units[pick(k)];
    std::vector<ProbEntry> e;
    for (std::size_t c = 0; c < k; ++c) e.push_back({log.classes[c], static_cast<double>(units[c]) / 16.0});
    r.raw = ProbVector(std::move(e));
    log.records.push_back(std::move(r));
  }
  return log;
}

}  // namespace ctxcal::test
