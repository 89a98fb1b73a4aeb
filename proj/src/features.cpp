#include "memaudit/features.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "json.hpp"

namespace memaudit::features {
namespace {

// Columns whose spread is below this (relative to their magnitude) are
// treated as constant; round-off in the mean otherwise yields +-1 noise.
constexpr double kConstantColumnTolerance = 1e-12;

void require_finite(const Matrix& x, const char* what) {
  if (!x.allFinite()) throw AuditError(fmt::format("{}: input contains non-finite values", what));
}

}  // namespace

Matrix StandardizerModel::apply(const Matrix& x) const {
  if (static_cast<std::size_t>(x.cols()) != means.size()) {
    throw AuditError(fmt::format("standardizer expects {} features, got {}", means.size(), x.cols()));
  }
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double sd = std_devs[static_cast<std::size_t>(j)];
    if (sd == 0.0) {
      out.col(j).setZero();
    } else {
      out.col(j) = (x.col(j).array() - means[static_cast<std::size_t>(j)]) / sd;
    }
  }
  return out;
}

std::pair<StandardizerModel, Matrix> standardize_fit_apply(const Matrix& x) {
  if (x.rows() < 2) throw AuditError(fmt::format("standardize needs >= 2 rows, got {}", x.rows()));
  require_finite(x, "standardize");
  StandardizerModel model;
  const double n = static_cast<double>(x.rows());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double mean = x.col(j).sum() / n;
    const double var = (x.col(j).array() - mean).square().sum() / n;
    double sd = std::sqrt(var);
    if (sd <= kConstantColumnTolerance * std::max(1.0, std::abs(mean))) sd = 0.0;
    model.means.push_back(mean);
    model.std_devs.push_back(sd);
  }
  Matrix z = model.apply(x);
  return {std::move(model), std::move(z)};
}

PcaModel pca_fit(const Matrix& x, std::size_t k) {
  if (k == 0) throw AuditError("PCA target dimension must be positive");
  if (x.rows() < 1 || x.cols() < 1) throw AuditError("PCA input is empty");
  require_finite(x, "pca_fit");

  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Matrix centered = x.rowwise() - mean;
  const Matrix cov = (centered.transpose() * centered) / static_cast<double>(x.rows());

  Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
  if (solver.info() != Eigen::Success) throw AuditError("covariance eigendecomposition failed");
  const Eigen::VectorXd& values = solver.eigenvalues();  // ascending
  const Matrix& vectors = solver.eigenvectors();

  const Eigen::Index dim = cov.rows();
  Eigen::Index keep = 0;
  while (keep < dim && keep < static_cast<Eigen::Index>(k) && values(dim - 1 - keep) > kRankTolerance) {
    ++keep;
  }
  if (keep == 0) throw AuditError("PCA input has no variance");

  PcaModel model;
  model.components.resize(keep, dim);
  for (Eigen::Index c = 0; c < keep; ++c) {
    Eigen::VectorXd v = vectors.col(dim - 1 - c);
    Eigen::Index pivot = 0;
    for (Eigen::Index i = 1; i < dim; ++i) {
      if (std::abs(v(i)) > std::abs(v(pivot))) pivot = i;
    }
    if (v(pivot) < 0) v = -v;
    model.components.row(c) = v.transpose();
    model.explained_variance.push_back(values(dim - 1 - c));
  }
  return model;
}

Matrix pca_transform(const PcaModel& model, const Matrix& x) {
  if (static_cast<std::size_t>(x.cols()) != model.feature_dim()) {
    throw AuditError(fmt::format("PCA model expects {} features, got {}", model.feature_dim(), x.cols()));
  }
  return x * model.components.transpose();
}

FileFeature max_pool_file(const std::string& file_id, const Matrix& rows,
                          const std::vector<double>& raw_aleatoric) {
  if (rows.rows() == 0) throw AuditError(fmt::format("file '{}' has no snippets", file_id));
  if (raw_aleatoric.size() != static_cast<std::size_t>(rows.rows())) {
    throw AuditError(fmt::format("file '{}': aleatoric count does not match snippet rows", file_id));
  }
  FileFeature f;
  f.file_id = file_id;
  f.snippet_count = static_cast<std::size_t>(rows.rows());
  const Eigen::RowVectorXd pooled = rows.colwise().maxCoeff();
  f.vector.assign(pooled.data(), pooled.data() + pooled.size());
  double acc = 0.0;
  for (double a : raw_aleatoric) acc += a;
  f.mean_raw_aleatoric = acc / static_cast<double>(raw_aleatoric.size());
  return f;
}

std::string models_to_json(const StandardizerModel& standardizer, const PcaModel& pca) {
  nlohmann::ordered_json doc;
  doc["means"] = standardizer.means;
  doc["std_devs"] = standardizer.std_devs;
  auto components = nlohmann::ordered_json::array();
  for (Eigen::Index r = 0; r < pca.components.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(pca.components.cols()));
    for (Eigen::Index c = 0; c < pca.components.cols(); ++c) row[static_cast<std::size_t>(c)] = pca.components(r, c);
    components.push_back(row);
  }
  doc["components"] = components;
  doc["explained_variance"] = pca.explained_variance;
  return doc.dump(2);
}

}  // namespace memaudit::features
