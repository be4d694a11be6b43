#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ehrgen {

// Mann-Whitney AUROC with ties counted one half. Requires both classes.
double auroc(std::span<const double> scores, std::span<const int> labels);
// Area under the precision envelope (max precision at any recall >= r) over recall steps.
double auprc(std::span<const double> scores, std::span<const int> labels);

struct MetricCI {
  double estimate = 0.0;
  double sd = 0.0;
  double lo = 0.0;  // 2.5th percentile
  double hi = 0.0;  // 97.5th percentile
};

struct ClassificationMetrics {
  size_t n = 0;
  size_t positives = 0;
  MetricCI auroc;
  MetricCI auprc;

  static std::string csv_header();
  std::string to_csv(const std::string& label) const;
};

// Point estimates plus a nonparametric bootstrap (resamples lacking a class are redrawn).
ClassificationMetrics evaluate_scores(std::span<const double> scores, std::span<const int> labels,
                                      size_t n_bootstrap = 1000, uint64_t seed = 0);

}  // namespace ehrgen
