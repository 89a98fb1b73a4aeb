#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "memaudit/types.hpp"

namespace memaudit::features {

using Matrix = Eigen::MatrixXd;  // rows are samples, columns are features

inline constexpr std::size_t kDefaultPcaDim = 10;
inline constexpr double kRankTolerance = 1e-10;

struct StandardizerModel {
  std::vector<double> means;
  std::vector<double> std_devs;  // population; 0 marks a constant column

  Matrix apply(const Matrix& x) const;
};

/// Fits z-scores column-wise and applies them. Constant columns map to 0.
std::pair<StandardizerModel, Matrix> standardize_fit_apply(const Matrix& x);

struct PcaModel {
  Matrix components;  // k x feature_dim, rows orthonormal
  std::vector<double> explained_variance;  // non-increasing, length k

  std::size_t k() const { return static_cast<std::size_t>(components.rows()); }
  std::size_t feature_dim() const { return static_cast<std::size_t>(components.cols()); }
};

/// Top principal directions of the (population) covariance of `x`.
///
/// The covariance is taken around the column means of `x`, so the routine is
/// also correct for inputs that are not already centered. The effective
/// dimension is min(k, feature_dim, #eigenvalues > kRankTolerance). Each
/// component is sign-normalized so that its largest-magnitude coordinate is
/// positive (first such coordinate on ties).
PcaModel pca_fit(const Matrix& x, std::size_t k);

/// Projects rows onto the components: out(i, j) = <x_i, c_j>.
Matrix pca_transform(const PcaModel& model, const Matrix& x);

/// Coordinatewise maximum over one file's snippet rows.
///
/// `raw_aleatoric` holds, per snippet row, the mean of the raw (unstandardized)
/// aleatoric values over estimators; it is averaged into the naming scalar.
FileFeature max_pool_file(const std::string& file_id, const Matrix& rows,
                          const std::vector<double>& raw_aleatoric);

/// JSON dump of both fitted models:
/// {"means":[...],"std_devs":[...],"components":[[...]],"explained_variance":[...]}
std::string models_to_json(const StandardizerModel& standardizer, const PcaModel& pca);

}  // namespace memaudit::features
