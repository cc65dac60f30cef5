#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

namespace flaplab {

// Score series with population statistics.
struct RunMetrics {
  std::vector<int> scores;
  double mean = 0.0;
  double stddev = 0.0;  // population (divide by N)
  int max = 0;
  double wall_ms = 0.0;

  static RunMetrics from_scores(std::vector<int> s) {
    RunMetrics m;
    m.scores = std::move(s);
    m.recompute();
    return m;
  }

  void recompute() {
    mean = stddev = 0.0;
    max = 0;
    if (scores.empty()) return;
    double sum = 0.0;
    for (int x : scores) sum += x;
    mean = sum / static_cast<double>(scores.size());
    double ss = 0.0;
    for (int x : scores) ss += (x - mean) * (x - mean);
    stddev = std::sqrt(ss / static_cast<double>(scores.size()));
    max = *std::max_element(scores.begin(), scores.end());
  }
};

}  // namespace flaplab
