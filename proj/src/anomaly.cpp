#include "memaudit/anomaly.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

#include <fmt/format.h>

#include "memaudit/clustering.hpp"
#include "memaudit/random.hpp"

namespace memaudit::anomaly {
namespace {

constexpr double kEulerGamma = 0.5772156649015329;
constexpr double kIforestThreshold = 0.5;

void require_points(const Matrix& x, const char* who) {
  if (x.rows() < 2) throw AuditError(fmt::format("{} needs at least 2 points, got {}", who, x.rows()));
  if (!x.allFinite()) throw AuditError(fmt::format("{}: non-finite feature value", who));
}

Matrix squared_distances(const Matrix& x) {
  const Eigen::Index n = x.rows();
  Matrix d(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = (x.row(i) - x.row(j)).squaredNorm();
  }
  return d;
}

struct Node {
  int dim = -1;  // -1 marks a leaf
  double split = 0.0;
  int left = -1;
  int right = -1;
  int size = 0;
};

class IsolationTree {
 public:
  IsolationTree(const Matrix& x, std::vector<Eigen::Index> sample, Rng& rng) {
    const int limit = static_cast<int>(std::ceil(std::log2(std::max<std::size_t>(sample.size(), 2))));
    build(x, sample, 0, limit, rng);
  }

  double path_length(const Eigen::RowVectorXd& point) const {
    int node = 0;
    int depth = 0;
    while (nodes_[static_cast<std::size_t>(node)].dim >= 0) {
      const Node& n = nodes_[static_cast<std::size_t>(node)];
      node = point(n.dim) < n.split ? n.left : n.right;
      ++depth;
    }
    return depth + average_path_length(nodes_[static_cast<std::size_t>(node)].size);
  }

 private:
  int build(const Matrix& x, std::vector<Eigen::Index>& idx, int depth, int limit, Rng& rng) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{});
    nodes_.back().size = static_cast<int>(idx.size());
    if (depth >= limit || idx.size() <= 1) return id;

    std::vector<int> candidates;
    std::vector<std::pair<double, double>> ranges;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      double lo = x(idx.front(), j), hi = lo;
      for (Eigen::Index i : idx) {
        lo = std::min(lo, x(i, j));
        hi = std::max(hi, x(i, j));
      }
      if (hi > lo) {
        candidates.push_back(static_cast<int>(j));
        ranges.emplace_back(lo, hi);
      }
    }
    if (candidates.empty()) return id;
    const std::size_t pick = rng.index(candidates.size());
    const auto [lo, hi] = ranges[pick];
    double split = rng.uniform(lo, hi);
    while (split <= lo) split = rng.uniform(lo, hi);

    std::vector<Eigen::Index> left, right;
    for (Eigen::Index i : idx) (x(i, candidates[pick]) < split ? left : right).push_back(i);
    idx.clear();
    idx.shrink_to_fit();
    const int l = build(x, left, depth + 1, limit, rng);
    const int r = build(x, right, depth + 1, limit, rng);
    Node& n = nodes_[static_cast<std::size_t>(id)];
    n.dim = candidates[pick];
    n.split = split;
    n.left = l;
    n.right = r;
    return id;
  }

  std::vector<Node> nodes_;
};

double group_mean(const std::vector<FileFeature>& files, const std::vector<int>& group, int which) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (group[i] == which) {
      sum += files[i].mean_raw_aleatoric;
      ++count;
    }
  }
  return sum / static_cast<double>(count);
}

}  // namespace

double median_knn_distance(const Matrix& x, int neighbor) {
  require_points(x, "k-NN distance");
  const Eigen::Index n = x.rows();
  const auto k = static_cast<std::size_t>(std::clamp<Eigen::Index>(neighbor, 1, n - 1));
  const Matrix d2 = squared_distances(x);
  std::vector<double> kth;
  kth.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<double> row;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) row.push_back(d2(i, j));
    }
    std::nth_element(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k - 1), row.end());
    kth.push_back(std::sqrt(row[k - 1]));
  }
  std::sort(kth.begin(), kth.end());
  const std::size_t m = kth.size();
  return m % 2 == 1 ? kth[m / 2] : 0.5 * (kth[m / 2 - 1] + kth[m / 2]);
}

std::vector<int> dbscan_labels(const Matrix& x, double eps, int min_pts) {
  if (!(eps > 0.0)) throw AuditError(fmt::format("DBSCAN eps must be positive, got {}", eps));
  if (min_pts < 1) throw AuditError(fmt::format("DBSCAN min_pts must be >= 1, got {}", min_pts));
  require_points(x, "DBSCAN");
  const Eigen::Index n = x.rows();
  const Matrix d2 = squared_distances(x);
  const double eps2 = eps * eps;
  std::vector<std::vector<Eigen::Index>> nbrs(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (d2(i, j) <= eps2) nbrs[static_cast<std::size_t>(i)].push_back(j);
    }
  }
  auto is_core = [&](Eigen::Index i) {
    return static_cast<int>(nbrs[static_cast<std::size_t>(i)].size()) >= min_pts;
  };

  constexpr int kUnvisited = -2;
  std::vector<int> labels(static_cast<std::size_t>(n), kUnvisited);
  int next_cluster = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (labels[static_cast<std::size_t>(i)] != kUnvisited) continue;
    if (!is_core(i)) {
      labels[static_cast<std::size_t>(i)] = kNoise;  // may become border later
      continue;
    }
    const int cid = next_cluster++;
    std::vector<Eigen::Index> frontier{i};
    labels[static_cast<std::size_t>(i)] = cid;
    while (!frontier.empty()) {
      const Eigen::Index p = frontier.back();
      frontier.pop_back();
      if (!is_core(p)) continue;
      for (Eigen::Index q : nbrs[static_cast<std::size_t>(p)]) {
        int& lq = labels[static_cast<std::size_t>(q)];
        if (lq == kUnvisited || lq == kNoise) {
          const bool expand = lq == kUnvisited;
          lq = cid;
          if (expand) frontier.push_back(q);
        }
      }
    }
  }
  return labels;
}

AnomalyScores dbscan(const std::vector<FileFeature>& files, double eps, int min_pts) {
  const auto labels = dbscan_labels(cluster::to_matrix(files), eps, min_pts);
  AnomalyScores s;
  s.method = Method::kDbscan;
  s.rule = fmt::format("dbscan eps={} min_pts={}; noise=1 is anomalous", eps, min_pts);
  for (std::size_t i = 0; i < files.size(); ++i) {
    s.file_ids.push_back(files[i].file_id);
    s.scores.push_back(labels[i] == kNoise ? 1.0 : 0.0);
  }
  return s;
}

double average_path_length(double n) {
  if (n <= 1.0) return 0.0;
  if (n == 2.0) return 1.0;
  const double harmonic = std::log(n - 1.0) + kEulerGamma;
  return 2.0 * harmonic - 2.0 * (n - 1.0) / n;
}

std::vector<double> isolation_forest_scores(const Matrix& x, const IsolationForestOptions& options) {
  require_points(x, "Isolation Forest");
  if (options.trees < 1) throw AuditError("Isolation Forest needs at least one tree");
  if (options.max_samples < 2) throw AuditError("Isolation Forest subsample size must be >= 2");
  const Eigen::Index n = x.rows();
  const auto psi = static_cast<std::size_t>(std::min<Eigen::Index>(options.max_samples, n));
  const auto trees = static_cast<std::size_t>(options.trees);

  // Per-tree path lengths; each tree owns its derived seed, so worker
  // scheduling cannot change the result.
  std::vector<std::vector<double>> paths(trees);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < trees; t = next++) {
      Rng rng(mix_seed(options.seed, t));
      std::vector<Eigen::Index> all(static_cast<std::size_t>(n));
      std::iota(all.begin(), all.end(), Eigen::Index{0});
      for (std::size_t i = 0; i < psi; ++i) {
        const std::size_t j = i + rng.index(all.size() - i);
        std::swap(all[i], all[j]);
      }
      all.resize(psi);
      IsolationTree tree(x, std::move(all), rng);
      auto& out = paths[t];
      out.resize(static_cast<std::size_t>(n));
      for (Eigen::Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = tree.path_length(x.row(i));
    }
  };
  unsigned workers = options.threads != 0 ? options.threads : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, trees));
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
  }

  const double norm = average_path_length(static_cast<double>(psi));
  std::vector<double> scores(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < scores.size(); ++i) {
    double total = 0.0;
    for (std::size_t t = 0; t < trees; ++t) total += paths[t][i];
    scores[i] = std::exp2(-(total / static_cast<double>(trees)) / norm);
  }
  return scores;
}

AnomalyScores isolation_forest(const std::vector<FileFeature>& files, const IsolationForestOptions& options) {
  AnomalyScores s;
  s.method = Method::kIforest;
  s.rule = fmt::format("isolation forest trees={} score>{} is anomalous", options.trees, kIforestThreshold);
  s.scores = isolation_forest_scores(cluster::to_matrix(files), options);
  for (const auto& f : files) s.file_ids.push_back(f.file_id);
  return s;
}

std::vector<AuditVerdict> anomaly_to_verdicts(const AnomalyScores& scores,
                                              const std::vector<FileFeature>& files,
                                              std::vector<std::string>* warnings) {
  if (scores.scores.size() != files.size() || scores.file_ids.size() != files.size()) {
    throw AuditError("anomaly scores do not cover every file");
  }
  const Detector detector = scores.method == Method::kDbscan ? Detector::kDbscan : Detector::kIforest;
  std::vector<int> group(files.size());
  int anomalous = 0;
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (scores.file_ids[i] != files[i].file_id) throw AuditError("anomaly scores are not aligned with files");
    const double s = scores.scores[i];
    const bool flagged = scores.method == Method::kDbscan ? s >= 0.5 : s > kIforestThreshold;
    group[i] = flagged ? 1 : 0;
    anomalous += group[i];
  }

  std::vector<AuditVerdict> out;
  const bool single = anomalous == 0 || anomalous == static_cast<int>(files.size());
  double global_mean = 0.0;
  int unseen_group = 1;
  if (single) {
    for (const auto& f : files) global_mean += f.mean_raw_aleatoric;
    global_mean /= static_cast<double>(files.size());
    if (warnings != nullptr) {
      warnings->push_back(fmt::format("{}: every file fell in one group; labeling by global mean aleatoric",
                                      to_string(detector)));
    }
  } else {
    unseen_group = group_mean(files, group, 0) > group_mean(files, group, 1) ? 0 : 1;
  }
  for (std::size_t i = 0; i < files.size(); ++i) {
    AuditVerdict v;
    v.file_id = files[i].file_id;
    v.cluster_id = group[i];
    v.detector = detector;
    const bool unseen = single ? files[i].mean_raw_aleatoric > global_mean : group[i] == unseen_group;
    v.predicted = unseen ? Verdict::kUnseen : Verdict::kSeen;
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace memaudit::anomaly
