#pragma once

#include <array>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "memaudit/types.hpp"

namespace memaudit::metrics {

/// Floor applied to every logarithm argument.
inline constexpr double kLogFloor = 1e-12;

inline constexpr std::size_t kMetricsPerEstimator = 13;

/// Position of each metric inside a 13-wide block.
enum MetricIndex : std::size_t {
  kAleatoric = 0,
  kEpistemic,
  kEntropy,
  kStdDev,
  kKlToMean,
  kDeltaMax,
  kDeltaMin,
  kDeltaMeanMedian,
  kManhattan,
  kEuclidean,
  kNll,
  kChebyshev,
  kKlToLabel,
};

struct MetricBlock {
  double aleatoric = 0;
  double epistemic = 0;
  double entropy = 0;
  double std_dev = 0;
  double kl_to_mean = 0;
  double delta_max = 0;
  double delta_min = 0;
  double delta_mean_median = 0;
  double manhattan = 0;
  double euclidean = 0;
  double nll = 0;
  double chebyshev = 0;
  double kl_to_label = 0;

  std::array<double, kMetricsPerEstimator> as_array() const;
};

struct Dispersion {
  double entropy = 0;
  double std_dev = 0;
  double kl_to_mean = 0;
  double delta_max = 0;
  double delta_min = 0;
  double delta_mean_median = 0;
};

struct Factual {
  double manhattan = 0;
  double euclidean = 0;
  double nll = 0;
  double chebyshev = 0;
  double kl_to_label = 0;
};

// All functions below require at least two probabilities.

/// Mean per-sample variance p(1-p); the class-1 diagonal entry of the
/// averaged diag(p) - p p^T matrix.
double aleatoric(std::span<const double> probs);

/// Population variance of the probabilities.
double epistemic(std::span<const double> probs);

Dispersion dispersion_metrics(std::span<const double> probs);

Factual factual_metrics(std::span<const double> probs, Label y);

MetricBlock metric_block(std::span<const double> probs, Label y);

/// Concatenates one metric block per estimator, following `order`. Every
/// estimator must be present and all sets must agree on snippet and label.
SnippetMetricVector snippet_metric_vector(const std::map<std::string, PredictionSet>& sets,
                                          const std::vector<std::string>& order,
                                          std::string file_id = {});

}  // namespace memaudit::metrics
