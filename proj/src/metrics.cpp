#include "memaudit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

namespace memaudit::metrics {
namespace {

void require_samples(std::span<const double> probs) {
  if (probs.size() < 2) {
    throw AuditError(fmt::format("need at least 2 predictions, got {}", probs.size()));
  }
}

// Shifted by the first sample so a constant set returns that constant exactly.
double mean_of(std::span<const double> probs) {
  const double first = probs.front();
  double acc = 0.0;
  for (double p : probs) acc += p - first;
  return first + acc / static_cast<double>(probs.size());
}

double safe_log(double x) { return std::log(std::max(x, kLogFloor)); }

}  // namespace

std::array<double, kMetricsPerEstimator> MetricBlock::as_array() const {
  return {aleatoric, epistemic, entropy,   std_dev,   kl_to_mean, delta_max,  delta_min,
          delta_mean_median, manhattan, euclidean, nll, chebyshev, kl_to_label};
}

double aleatoric(std::span<const double> probs) {
  require_samples(probs);
  double acc = 0.0;
  for (double p : probs) acc += p * (1.0 - p);
  return acc / static_cast<double>(probs.size());
}

double epistemic(std::span<const double> probs) {
  require_samples(probs);
  const double mean = mean_of(probs);
  double acc = 0.0;
  for (double p : probs) acc += (p - mean) * (p - mean);
  return acc / static_cast<double>(probs.size());
}

Dispersion dispersion_metrics(std::span<const double> probs) {
  require_samples(probs);
  Dispersion d;
  const double mean = mean_of(probs);
  const double log_mean = safe_log(mean);
  for (double p : probs) {
    // p * log(max(p, eps)) is exactly 0 at p = 0, which is the 0 ln 0 := 0 rule.
    d.entropy -= p * safe_log(p);
    d.kl_to_mean += p * (safe_log(p) - log_mean);
  }
  d.std_dev = std::sqrt(epistemic(probs));

  std::vector<double> sorted(probs.begin(), probs.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  d.delta_max = sorted[n - 1] - sorted[n - 2];
  d.delta_min = sorted[1] - sorted[0];
  const double median = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  d.delta_mean_median = mean - median;
  return d;
}

Factual factual_metrics(std::span<const double> probs, Label label) {
  require_samples(probs);
  const double y = to_int(label);
  const double log_y = safe_log(y);
  Factual f;
  double squares = 0.0;
  for (double p : probs) {
    const double diff = std::abs(p - y);
    f.manhattan += diff;
    squares += diff * diff;
    f.chebyshev = std::max(f.chebyshev, diff);
    if (label == Label::kSeen) f.nll -= safe_log(p);
    f.kl_to_label += p * (safe_log(p) - log_y);
  }
  f.euclidean = std::sqrt(squares);
  return f;
}

MetricBlock metric_block(std::span<const double> probs, Label y) {
  const Dispersion d = dispersion_metrics(probs);
  const Factual f = factual_metrics(probs, y);
  MetricBlock b;
  b.aleatoric = aleatoric(probs);
  b.epistemic = epistemic(probs);
  b.entropy = d.entropy;
  b.std_dev = d.std_dev;
  b.kl_to_mean = d.kl_to_mean;
  b.delta_max = d.delta_max;
  b.delta_min = d.delta_min;
  b.delta_mean_median = d.delta_mean_median;
  b.manhattan = f.manhattan;
  b.euclidean = f.euclidean;
  b.nll = f.nll;
  b.chebyshev = f.chebyshev;
  b.kl_to_label = f.kl_to_label;
  return b;
}

SnippetMetricVector snippet_metric_vector(const std::map<std::string, PredictionSet>& sets,
                                          const std::vector<std::string>& order,
                                          std::string file_id) {
  if (order.empty()) throw AuditError("estimator order is empty");
  SnippetMetricVector out;
  out.file_id = std::move(file_id);
  out.estimator_order = order;
  out.values.reserve(kMetricsPerEstimator * order.size());
  const PredictionSet* first = nullptr;
  for (const auto& est : order) {
    auto it = sets.find(est);
    if (it == sets.end()) throw AuditError(fmt::format("missing estimator '{}'", est));
    const PredictionSet& set = it->second;
    if (first == nullptr) {
      first = &set;
      out.snippet_id = set.snippet_id;
    } else if (set.snippet_id != first->snippet_id || set.pseudo_label != first->pseudo_label) {
      throw AuditError(fmt::format("estimator '{}' disagrees on snippet id or pseudo-label", est));
    }
    const auto block = metric_block(set.probs, set.pseudo_label).as_array();
    out.values.insert(out.values.end(), block.begin(), block.end());
  }
  return out;
}

}  // namespace memaudit::metrics
