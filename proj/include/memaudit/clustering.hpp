#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "memaudit/types.hpp"

namespace memaudit::cluster {

using Matrix = Eigen::MatrixXd;  // rows are points

Matrix to_matrix(const std::vector<FileFeature>& files);

// ---------------------------------------------------------------------------
// K-Means

struct KMeansOptions {
  int k = 2;
  std::uint64_t seed = 42;
  int restarts = 10;  // restart r is seeded with seed + r
  int max_iter = 300;
};

struct KMeansResult {
  std::vector<int> labels;
  Matrix centroids;
  double inertia = 0.0;
  // Inertia after every assignment step of the returned run.
  std::vector<double> inertia_trace;
  int iterations = 0;
  bool degenerate = false;  // fewer than k distinct non-empty clusters
};

/// One k-means++ seeded Lloyd run.
KMeansResult kmeans_run(const Matrix& x, int k, std::uint64_t seed, int max_iter);

/// Best of `restarts` runs by final inertia (earliest run wins ties).
KMeansResult kmeans(const Matrix& x, const KMeansOptions& options = {});

// ---------------------------------------------------------------------------
// Gaussian mixture

struct GmmOptions {
  std::uint64_t seed = 42;
  double reg_covar = 1e-6;
  double tol = 1e-8;
  int max_iter = 500;
};

struct GmmParams {
  std::vector<double> weights;
  std::vector<Eigen::VectorXd> means;
  std::vector<Matrix> covariances;
  std::vector<double> log_likelihood_trace;  // total log-likelihood per E-step
  bool converged = false;
};

struct GmmResult {
  GmmParams params;
  std::vector<int> labels;
  bool degenerate = false;
};

/// Two-component full-covariance EM, initialized from `kmeans` with the same
/// seed. A `reg_covar` ridge is added to every covariance estimate.
GmmResult gmm(const Matrix& x, const GmmOptions& options = {});

/// Total log-likelihood of `x` under a mixture (log-sum-exp over components).
double gmm_log_likelihood(const GmmParams& params, const Matrix& x);

// ---------------------------------------------------------------------------
// Ward agglomeration

struct WardMerge {
  int left = 0;   // cluster indices; originals are 0..n-1, merge t creates n+t
  int right = 0;
  double height = 0.0;  // Lance-Williams Ward dissimilarity on squared distances
};

struct WardResult {
  std::vector<int> labels;
  std::vector<WardMerge> merges;
};

/// Bottom-up Ward clustering, stopped once `target_clusters` remain.
WardResult ward(const Matrix& x, int target_clusters = 2);

// ---------------------------------------------------------------------------
// Detector-level API over file features

struct ClusterAssignment {
  Detector detector = Detector::kGmm;
  std::vector<std::string> file_ids;
  std::vector<int> cluster_of;  // parallel to file_ids, values in {0, 1}
  std::array<double, 2> mean_raw_aleatoric{0.0, 0.0};
  std::array<std::size_t, 2> sizes{0, 0};
  std::vector<std::string> warnings;
};

ClusterAssignment make_assignment(const std::vector<FileFeature>& files,
                                  const std::vector<int>& labels, Detector detector);

ClusterAssignment gmm_cluster(const std::vector<FileFeature>& files, std::uint64_t seed,
                              GmmParams* params_out = nullptr);
ClusterAssignment ward_cluster(const std::vector<FileFeature>& files, int target_clusters = 2);
ClusterAssignment kmeans_cluster(const std::vector<FileFeature>& files, std::uint64_t seed,
                                 int k = 2);

/// Names the cluster with the lower mean raw aleatoric uncertainty "seen".
/// Exact ties go to the larger cluster, then to the cluster holding the
/// smallest file id. A single non-empty cluster labels every file seen and
/// appends a warning to `warnings`.
std::vector<AuditVerdict> assign_seen_labels(const ClusterAssignment& assignment,
                                             std::vector<std::string>* warnings = nullptr);

}  // namespace memaudit::cluster
