#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "memaudit/types.hpp"

namespace memaudit::anomaly {

using Matrix = Eigen::MatrixXd;

enum class Method { kDbscan, kIforest };

struct AnomalyScores {
  Method method = Method::kDbscan;
  std::vector<std::string> file_ids;
  std::vector<double> scores;  // higher = more anomalous
  std::string rule;            // how scores are binarized
};

// ---------------------------------------------------------------------------
// DBSCAN

inline constexpr int kNoise = -1;

/// Median over points of the distance to their `neighbor`-th nearest other
/// point (clamped to n - 1 neighbors).
double median_knn_distance(const Matrix& x, int neighbor = 4);

/// Cluster id per point, kNoise for noise. Neighborhoods include the point
/// itself, so a core point has at least `min_pts` points within `eps`.
std::vector<int> dbscan_labels(const Matrix& x, double eps, int min_pts);

/// Noise points score 1, core and border points 0. `eps <= 0` is rejected;
/// use median_knn_distance for the default.
AnomalyScores dbscan(const std::vector<FileFeature>& files, double eps, int min_pts = 5);

// ---------------------------------------------------------------------------
// Isolation Forest

struct IsolationForestOptions {
  int trees = 100;
  int max_samples = 256;  // subsample size is min(max_samples, N)
  std::uint64_t seed = 42;
  unsigned threads = 0;   // 0 = hardware concurrency
};

/// Expected path length of an unsuccessful BST search over n points.
double average_path_length(double n);

/// Scores in (0, 1): 2^(-E[h(x)] / c(psi)). Deterministic for a given seed
/// regardless of thread count.
std::vector<double> isolation_forest_scores(const Matrix& x, const IsolationForestOptions& options = {});

AnomalyScores isolation_forest(const std::vector<FileFeature>& files,
                               const IsolationForestOptions& options = {});

// ---------------------------------------------------------------------------

/// Binarizes scores (DBSCAN: noise; Isolation Forest: score > 0.5) and labels
/// the group with the higher mean raw aleatoric uncertainty unseen. When every
/// file lands in one group each file is compared against the global mean
/// instead and a warning is appended.
std::vector<AuditVerdict> anomaly_to_verdicts(const AnomalyScores& scores,
                                              const std::vector<FileFeature>& files,
                                              std::vector<std::string>* warnings = nullptr);

}  // namespace memaudit::anomaly
