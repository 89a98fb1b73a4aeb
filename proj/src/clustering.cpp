#include "memaudit/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <fmt/format.h>

#include "memaudit/random.hpp"

namespace memaudit::cluster {
namespace {

void require_points(const Matrix& x, Eigen::Index minimum, const char* who) {
  if (x.rows() < minimum) {
    throw AuditError(fmt::format("{} needs at least {} points, got {}", who, minimum, x.rows()));
  }
  if (!x.allFinite()) throw AuditError(fmt::format("{}: non-finite feature value", who));
}

Matrix seed_plus_plus(const Matrix& x, int k, Rng& rng, bool& degenerate) {
  const Eigen::Index n = x.rows();
  Matrix centers(k, x.cols());
  auto first = static_cast<Eigen::Index>(rng.index(static_cast<std::uint64_t>(n)));
  centers.row(0) = x.row(first);
  Eigen::VectorXd d2 = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total <= 0.0) {
      degenerate = true;  // every point coincides with a chosen center
    } else {
      const double r = rng.uniform() * total;
      double cum = 0.0;
      pick = -1;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (d2(i) <= 0.0) continue;
        cum += d2(i);
        pick = i;
        if (cum > r) break;
      }
    }
    centers.row(c) = x.row(pick);
    d2 = d2.cwiseMin((x.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }
  return centers;
}

double assign_nearest(const Matrix& x, const Matrix& centers, std::vector<int>& labels) {
  double inertia = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < centers.rows(); ++c) {
      const double d = (x.row(i) - centers.row(c)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    labels[static_cast<std::size_t>(i)] = best;
    inertia += best_d;
  }
  return inertia;
}

// Log-density of every row of x under N(mean, cov).
Eigen::VectorXd log_gaussian(const Matrix& x, const Eigen::VectorXd& mean, const Matrix& cov) {
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) throw AuditError("GMM covariance is not positive definite");
  const Matrix& l = llt.matrixL();
  const double log_det = 2.0 * l.diagonal().array().log().sum();
  const double d = static_cast<double>(x.cols());
  Matrix centered = (x.rowwise() - mean.transpose()).transpose();  // dim x n
  llt.matrixL().solveInPlace(centered);
  const Eigen::VectorXd maha = centered.colwise().squaredNorm().transpose();
  return (-0.5 * (d * std::log(2.0 * std::numbers::pi) + log_det + maha.array())).matrix();
}

// Fills log(weight_c) + log N(x_i | c) and returns the total log-likelihood;
// `resp` receives normalized responsibilities.
double e_step(const GmmParams& params, const Matrix& x, Matrix& resp) {
  const Eigen::Index n = x.rows();
  const auto comps = static_cast<Eigen::Index>(params.weights.size());
  Matrix logp(n, comps);
  for (Eigen::Index c = 0; c < comps; ++c) {
    logp.col(c) = log_gaussian(x, params.means[static_cast<std::size_t>(c)],
                               params.covariances[static_cast<std::size_t>(c)])
                      .array() +
                  std::log(params.weights[static_cast<std::size_t>(c)]);
  }
  resp.resize(n, comps);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double top = logp.row(i).maxCoeff();
    const double lse = top + std::log((logp.row(i).array() - top).exp().sum());
    resp.row(i) = (logp.row(i).array() - lse).exp();
    total += lse;
  }
  return total;
}

Matrix weighted_covariance(const Matrix& x, const Eigen::VectorXd& w, const Eigen::VectorXd& mean,
                           double weight_sum, double reg) {
  const Matrix centered = x.rowwise() - mean.transpose();
  Matrix cov = (centered.array().colwise() * w.array()).matrix().transpose() * centered / weight_sum;
  cov = 0.5 * (cov + cov.transpose());
  cov.diagonal().array() += reg;
  return cov;
}

std::vector<int> canonical_labels(const std::vector<int>& raw) {
  std::vector<int> remap;
  std::vector<int> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const int r = raw[i];
    if (static_cast<std::size_t>(r) >= remap.size()) remap.resize(static_cast<std::size_t>(r) + 1, -1);
    if (remap[static_cast<std::size_t>(r)] < 0) {
      remap[static_cast<std::size_t>(r)] =
          static_cast<int>(std::count_if(remap.begin(), remap.end(), [](int v) { return v >= 0; }));
    }
    out[i] = remap[static_cast<std::size_t>(r)];
  }
  return out;
}

}  // namespace

Matrix to_matrix(const std::vector<FileFeature>& files) {
  if (files.empty()) return Matrix(0, 0);
  const auto dim = static_cast<Eigen::Index>(files.front().vector.size());
  Matrix x(static_cast<Eigen::Index>(files.size()), dim);
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (static_cast<Eigen::Index>(files[i].vector.size()) != dim) {
      throw AuditError(fmt::format("file '{}' has feature length {}, expected {}", files[i].file_id,
                                   files[i].vector.size(), dim));
    }
    for (Eigen::Index j = 0; j < dim; ++j) x(static_cast<Eigen::Index>(i), j) = files[i].vector[static_cast<std::size_t>(j)];
  }
  return x;
}

KMeansResult kmeans_run(const Matrix& x, int k, std::uint64_t seed, int max_iter) {
  if (k < 1) throw AuditError("k-means needs k >= 1");
  require_points(x, k, "k-means");
  const Eigen::Index n = x.rows();
  Rng rng(seed);
  KMeansResult res;
  bool degenerate = false;
  res.centroids = seed_plus_plus(x, k, rng, degenerate);
  res.labels.assign(static_cast<std::size_t>(n), 0);
  std::vector<int> previous;
  for (int iter = 0; iter < max_iter; ++iter) {
    res.inertia = assign_nearest(x, res.centroids, res.labels);
    res.inertia_trace.push_back(res.inertia);
    res.iterations = iter + 1;
    if (res.labels == previous) break;
    previous = res.labels;

    std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
    for (int l : res.labels) ++counts[static_cast<std::size_t>(l)];
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) continue;
      // Move the worst-fit point (from a cluster that can spare it) into the empty cluster.
      Eigen::Index worst = -1;
      double worst_d = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const int l = res.labels[static_cast<std::size_t>(i)];
        if (counts[static_cast<std::size_t>(l)] < 2) continue;
        const double d = (x.row(i) - res.centroids.row(l)).squaredNorm();
        if (d > worst_d) {
          worst_d = d;
          worst = i;
        }
      }
      if (worst < 0) continue;
      --counts[static_cast<std::size_t>(res.labels[static_cast<std::size_t>(worst)])];
      res.labels[static_cast<std::size_t>(worst)] = c;
      ++counts[static_cast<std::size_t>(c)];
    }
    Matrix sums = Matrix::Zero(k, x.cols());
    for (Eigen::Index i = 0; i < n; ++i) sums.row(res.labels[static_cast<std::size_t>(i)]) += x.row(i);
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        res.centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      }
    }
  }
  std::vector<int> present(static_cast<std::size_t>(k), 0);
  for (int l : res.labels) present[static_cast<std::size_t>(l)] = 1;
  res.degenerate = degenerate || std::count(present.begin(), present.end(), 1) < k;
  return res;
}

KMeansResult kmeans(const Matrix& x, const KMeansOptions& options) {
  if (options.restarts < 1) throw AuditError("k-means needs at least one restart");
  KMeansResult best;
  for (int r = 0; r < options.restarts; ++r) {
    KMeansResult run = kmeans_run(x, options.k, options.seed + static_cast<std::uint64_t>(r), options.max_iter);
    if (r == 0 || run.inertia < best.inertia) best = std::move(run);
  }
  return best;
}

double gmm_log_likelihood(const GmmParams& params, const Matrix& x) {
  Matrix resp;
  return e_step(params, x, resp);
}

GmmResult gmm(const Matrix& x, const GmmOptions& options) {
  require_points(x, 4, "GMM");
  const Eigen::Index n = x.rows();
  GmmResult res;

  KMeansOptions km_opts;
  km_opts.k = 2;
  km_opts.seed = options.seed;
  const KMeansResult km = kmeans(x, km_opts);
  if (km.degenerate) {
    res.degenerate = true;
    res.labels.assign(static_cast<std::size_t>(n), 0);
    const Eigen::VectorXd mean = x.colwise().mean().transpose();
    res.params.weights = {1.0};
    res.params.means = {mean};
    res.params.covariances = {weighted_covariance(x, Eigen::VectorXd::Ones(n), mean, static_cast<double>(n),
                                                  options.reg_covar)};
    res.params.log_likelihood_trace = {gmm_log_likelihood(res.params, x)};
    res.params.converged = true;
    return res;
  }

  GmmParams& p = res.params;
  for (int c = 0; c < 2; ++c) {
    Eigen::VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i) w(i) = km.labels[static_cast<std::size_t>(i)] == c ? 1.0 : 0.0;
    const double count = w.sum();
    const Eigen::VectorXd mean = km.centroids.row(c).transpose();
    p.weights.push_back(count / static_cast<double>(n));
    p.means.push_back(mean);
    p.covariances.push_back(weighted_covariance(x, w, mean, count, options.reg_covar));
  }

  Matrix resp;
  for (int iter = 0; iter < options.max_iter; ++iter) {
    const double ll = e_step(p, x, resp);
    const bool improved_little = !p.log_likelihood_trace.empty() &&
                                 ll - p.log_likelihood_trace.back() < options.tol;
    p.log_likelihood_trace.push_back(ll);
    if (improved_little) {
      p.converged = true;
      break;
    }
    bool collapsed = false;
    for (int c = 0; c < 2; ++c) {
      const Eigen::VectorXd w = resp.col(c);
      const double nk = w.sum();
      if (nk < 1e-10 * static_cast<double>(n)) {
        collapsed = true;
        break;
      }
      p.weights[static_cast<std::size_t>(c)] = nk / static_cast<double>(n);
      p.means[static_cast<std::size_t>(c)] = (x.transpose() * w) / nk;
      p.covariances[static_cast<std::size_t>(c)] =
          weighted_covariance(x, w, p.means[static_cast<std::size_t>(c)], nk, options.reg_covar);
    }
    if (collapsed) {
      res.degenerate = true;
      break;
    }
  }

  res.labels.resize(static_cast<std::size_t>(n));
  std::array<int, 2> counts{0, 0};
  for (Eigen::Index i = 0; i < n; ++i) {
    const int l = resp(i, 1) > resp(i, 0) ? 1 : 0;
    res.labels[static_cast<std::size_t>(i)] = l;
    ++counts[static_cast<std::size_t>(l)];
  }
  if (counts[0] == 0 || counts[1] == 0) res.degenerate = true;
  return res;
}

WardResult ward(const Matrix& x, int target_clusters) {
  require_points(x, 2, "Ward clustering");
  if (target_clusters < 1 || target_clusters > x.rows()) {
    throw AuditError(fmt::format("Ward target of {} clusters is invalid for {} points", target_clusters, x.rows()));
  }
  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      d[i][j] = d[j][i] = (x.row(static_cast<Eigen::Index>(i)) - x.row(static_cast<Eigen::Index>(j))).squaredNorm();
    }
  }
  std::vector<double> size(n, 1.0);
  std::vector<bool> active(n, true);
  std::vector<int> cluster_id(n);
  std::vector<std::size_t> owner(n);  // point -> slot
  for (std::size_t i = 0; i < n; ++i) {
    cluster_id[i] = static_cast<int>(i);
    owner[i] = i;
  }

  WardResult res;
  std::size_t remaining = n;
  while (remaining > static_cast<std::size_t>(target_clusters)) {
    std::size_t bi = 0, bj = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i]) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (active[j] && d[i][j] < best) {
          best = d[i][j];
          bi = i;
          bj = j;
        }
      }
    }
    const double ni = size[bi], nj = size[bj];
    for (std::size_t k = 0; k < n; ++k) {
      if (!active[k] || k == bi || k == bj) continue;
      const double nk = size[k];
      const double merged = ((ni + nk) * d[bi][k] + (nj + nk) * d[bj][k] - nk * d[bi][bj]) / (ni + nj + nk);
      d[bi][k] = d[k][bi] = merged;
    }
    res.merges.push_back({cluster_id[bi], cluster_id[bj], best});
    cluster_id[bi] = static_cast<int>(n + res.merges.size() - 1);
    size[bi] = ni + nj;
    active[bj] = false;
    for (auto& o : owner) {
      if (o == bj) o = bi;
    }
    --remaining;
  }
  std::vector<int> raw(n);
  for (std::size_t i = 0; i < n; ++i) raw[i] = static_cast<int>(owner[i]);
  res.labels = canonical_labels(raw);
  return res;
}

ClusterAssignment make_assignment(const std::vector<FileFeature>& files,
                                  const std::vector<int>& labels, Detector detector) {
  if (files.size() != labels.size()) throw AuditError("label count does not match file count");
  ClusterAssignment a;
  a.detector = detector;
  std::array<double, 2> sums{0.0, 0.0};
  for (std::size_t i = 0; i < files.size(); ++i) {
    const int l = labels[i];
    if (l != 0 && l != 1) throw AuditError(fmt::format("cluster id {} outside {{0,1}}", l));
    a.file_ids.push_back(files[i].file_id);
    a.cluster_of.push_back(l);
    sums[static_cast<std::size_t>(l)] += files[i].mean_raw_aleatoric;
    ++a.sizes[static_cast<std::size_t>(l)];
  }
  for (std::size_t c = 0; c < 2; ++c) {
    a.mean_raw_aleatoric[c] = a.sizes[c] > 0 ? sums[c] / static_cast<double>(a.sizes[c]) : 0.0;
  }
  if (a.sizes[0] == 0 || a.sizes[1] == 0) {
    a.warnings.push_back(fmt::format("{}: degenerate collapse, only one non-empty cluster", to_string(detector)));
  }
  return a;
}

ClusterAssignment gmm_cluster(const std::vector<FileFeature>& files, std::uint64_t seed,
                              GmmParams* params_out) {
  GmmOptions opts;
  opts.seed = seed;
  GmmResult r = gmm(to_matrix(files), opts);
  ClusterAssignment a = make_assignment(files, r.labels, Detector::kGmm);
  if (r.degenerate && a.warnings.empty()) {
    a.warnings.push_back("gmm: a mixture component collapsed during EM");
  }
  if (params_out != nullptr) *params_out = std::move(r.params);
  return a;
}

ClusterAssignment ward_cluster(const std::vector<FileFeature>& files, int target_clusters) {
  return make_assignment(files, ward(to_matrix(files), target_clusters).labels, Detector::kHc);
}

ClusterAssignment kmeans_cluster(const std::vector<FileFeature>& files, std::uint64_t seed, int k) {
  KMeansOptions opts;
  opts.k = k;
  opts.seed = seed;
  return make_assignment(files, kmeans(to_matrix(files), opts).labels, Detector::kKmeans);
}

std::vector<AuditVerdict> assign_seen_labels(const ClusterAssignment& a,
                                             std::vector<std::string>* warnings) {
  std::vector<AuditVerdict> out;
  out.reserve(a.file_ids.size());
  const bool single = a.sizes[0] == 0 || a.sizes[1] == 0;
  int seen_cluster = 0;
  if (single) {
    if (warnings != nullptr) {
      warnings->push_back(fmt::format("{}: single cluster, labeling all {} files seen",
                                      to_string(a.detector), a.file_ids.size()));
    }
  } else if (a.mean_raw_aleatoric[0] != a.mean_raw_aleatoric[1]) {
    seen_cluster = a.mean_raw_aleatoric[0] < a.mean_raw_aleatoric[1] ? 0 : 1;
  } else if (a.sizes[0] != a.sizes[1]) {
    seen_cluster = a.sizes[0] > a.sizes[1] ? 0 : 1;
  } else {
    auto smallest = std::min_element(a.file_ids.begin(), a.file_ids.end());
    seen_cluster = a.cluster_of[static_cast<std::size_t>(smallest - a.file_ids.begin())];
  }
  for (std::size_t i = 0; i < a.file_ids.size(); ++i) {
    AuditVerdict v;
    v.file_id = a.file_ids[i];
    v.cluster_id = a.cluster_of[i];
    v.detector = a.detector;
    v.predicted = single || a.cluster_of[i] == seen_cluster ? Verdict::kSeen : Verdict::kUnseen;
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace memaudit::cluster
