#include "memaudit/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <istream>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "json.hpp"
#include "memaudit/anomaly.hpp"
#include "memaudit/clustering.hpp"
#include "memaudit/metrics.hpp"

namespace memaudit {
namespace {

std::vector<const FileManifest*> suspected_files(const IngestedData& data) {
  std::vector<const FileManifest*> out;
  for (const auto& m : data.manifests) {
    if (m.declared_label == Label::kSeen) out.push_back(&m);
  }
  if (out.empty()) throw AuditError("no suspected-seen files (declared_label 1) to audit");
  return out;
}

}  // namespace

FileFeatureSet pool_snippet_features(const features::Matrix& snippets,
                                     const std::vector<std::string>& snippet_file,
                                     const std::vector<double>& naming, std::size_t pca_dim) {
  const auto rows = static_cast<std::size_t>(snippets.rows());
  if (snippet_file.size() != rows || naming.size() != rows) {
    throw AuditError("snippet bookkeeping does not match feature rows");
  }
  FileFeatureSet out;
  auto [standardizer, z] = features::standardize_fit_apply(snippets);
  out.models.standardizer = std::move(standardizer);
  out.models.pca = features::pca_fit(z, pca_dim);
  const features::Matrix projected = features::pca_transform(out.models.pca, z);

  std::map<std::string, std::vector<Eigen::Index>> by_file;
  for (std::size_t i = 0; i < rows; ++i) by_file[snippet_file[i]].push_back(static_cast<Eigen::Index>(i));
  for (const auto& [file, idx] : by_file) {
    features::Matrix sub(static_cast<Eigen::Index>(idx.size()), projected.cols());
    std::vector<double> names;
    for (std::size_t r = 0; r < idx.size(); ++r) {
      sub.row(static_cast<Eigen::Index>(r)) = projected.row(idx[r]);
      names.push_back(naming[static_cast<std::size_t>(idx[r])]);
    }
    out.files.push_back(features::max_pool_file(file, sub, names));
  }
  return out;
}

FileFeatureSet build_file_features(const IngestedData& data, const AuditOptions& options) {
  const auto files = suspected_files(data);
  std::size_t snippet_count = 0;
  for (const auto* m : files) snippet_count += m->snippet_ids.size();

  const std::size_t estimators = data.estimators.size();
  const auto width = static_cast<Eigen::Index>(metrics::kMetricsPerEstimator * estimators);
  features::Matrix x(static_cast<Eigen::Index>(snippet_count), width);
  std::vector<std::string> owner;
  std::vector<double> aleatoric;
  owner.reserve(snippet_count);
  aleatoric.reserve(snippet_count);

  // data.sets is sorted by (snippet, estimator): locate each snippet's run.
  auto first_of = [&](const std::string& snippet) {
    return std::lower_bound(data.sets.begin(), data.sets.end(), snippet,
                            [](const PredictionSet& s, const std::string& id) { return s.snippet_id < id; });
  };

  Eigen::Index row = 0;
  for (const auto* m : files) {
    for (const auto& snippet : m->snippet_ids) {
      std::map<std::string, PredictionSet> sets;
      for (auto it = first_of(snippet); it != data.sets.end() && it->snippet_id == snippet; ++it) {
        sets.emplace(it->estimator_id, *it);
      }
      const auto vec = metrics::snippet_metric_vector(sets, data.estimators, m->file_id);
      double ale = 0.0;
      for (std::size_t e = 0; e < estimators; ++e) {
        ale += vec.values[e * metrics::kMetricsPerEstimator + metrics::kAleatoric];
      }
      for (Eigen::Index j = 0; j < width; ++j) x(row, j) = vec.values[static_cast<std::size_t>(j)];
      owner.push_back(m->file_id);
      aleatoric.push_back(ale / static_cast<double>(estimators));
      ++row;
    }
  }
  return pool_snippet_features(x, owner, aleatoric, options.pca_dim);
}

FileFeatureSet build_baseline_features(const IngestedData& data,
                                       const std::vector<baseline::TokenTrace>& tokens,
                                       const std::vector<baseline::NeighborTrace>& neighbors,
                                       const AuditOptions& options,
                                       const baseline::BaselineOptions& baseline_options) {
  const auto files = suspected_files(data);
  const auto vectors = baseline::baseline_feature_vectors(tokens, neighbors, baseline_options);
  const std::size_t n_k = baseline_options.k_grid.size();

  std::vector<std::string> missing;
  std::size_t count = 0;
  for (const auto* m : files) {
    for (const auto& s : m->snippet_ids) {
      if (!vectors.count(s)) missing.push_back(s);
      ++count;
    }
  }
  if (!missing.empty()) {
    throw AuditError(fmt::format("missing baseline traces for {} snippet(s), first '{}'", missing.size(),
                                 missing.front()));
  }
  const auto width = static_cast<Eigen::Index>(vectors.begin()->second.size());
  features::Matrix x(static_cast<Eigen::Index>(count), width);
  std::vector<std::string> owner;
  std::vector<double> naming;
  Eigen::Index row = 0;
  for (const auto* m : files) {
    for (const auto& s : m->snippet_ids) {
      const auto& v = vectors.at(s);
      for (Eigen::Index j = 0; j < width; ++j) x(row, j) = v[static_cast<std::size_t>(j)];
      owner.push_back(m->file_id);
      naming.push_back(-std::accumulate(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n_k), 0.0) /
                       static_cast<double>(n_k));
      ++row;
    }
  }
  return pool_snippet_features(x, owner, naming, options.pca_dim);
}

std::vector<AuditVerdict> run_detector(const std::vector<FileFeature>& files, Detector detector,
                                       const AuditOptions& options, std::vector<std::string>* warnings) {
  auto take_warnings = [&](const cluster::ClusterAssignment& a) {
    if (warnings != nullptr) warnings->insert(warnings->end(), a.warnings.begin(), a.warnings.end());
  };
  switch (detector) {
    case Detector::kGmm: {
      auto a = cluster::gmm_cluster(files, options.seed);
      take_warnings(a);
      return cluster::assign_seen_labels(a, warnings);
    }
    case Detector::kHc: {
      auto a = cluster::ward_cluster(files);
      take_warnings(a);
      return cluster::assign_seen_labels(a, warnings);
    }
    case Detector::kKmeans: {
      auto a = cluster::kmeans_cluster(files, options.seed);
      take_warnings(a);
      return cluster::assign_seen_labels(a, warnings);
    }
    case Detector::kDbscan: {
      double eps = options.dbscan_eps;
      if (eps <= 0.0) eps = anomaly::median_knn_distance(cluster::to_matrix(files), 4);
      if (eps <= 0.0) eps = 1e-12;  // all points coincide
      return anomaly::anomaly_to_verdicts(anomaly::dbscan(files, eps, options.dbscan_min_pts), files, warnings);
    }
    case Detector::kIforest: {
      anomaly::IsolationForestOptions o;
      o.trees = options.iforest_trees;
      o.seed = options.seed;
      return anomaly::anomaly_to_verdicts(anomaly::isolation_forest(files, o), files, warnings);
    }
  }
  throw AuditError("unknown detector");
}

AuditReport audit(const IngestedData& data, const std::vector<Detector>& detectors,
                  const AuditOptions& options) {
  AuditReport report;
  FileFeatureSet fs = build_file_features(data, options);
  for (Detector d : detectors) {
    auto v = run_detector(fs.files, d, options, &report.warnings);
    report.verdicts.insert(report.verdicts.end(), v.begin(), v.end());
  }
  report.models = std::move(fs.models);
  return report;
}

std::string to_verdict_line(const AuditVerdict& v) {
  nlohmann::ordered_json doc;
  doc["file_id"] = v.file_id;
  doc["predicted"] = std::string(to_string(v.predicted));
  doc["cluster_id"] = v.cluster_id;
  doc["detector"] = std::string(to_string(v.detector));
  return doc.dump();
}

std::vector<AuditVerdict> read_verdicts(std::istream& in) {
  std::vector<AuditVerdict> out;
  std::set<std::pair<std::string, std::string>> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    try {
      const auto doc = nlohmann::json::parse(line);
      AuditVerdict v;
      v.file_id = doc.at("file_id").get<std::string>();
      v.predicted = parse_verdict(doc.at("predicted").get<std::string>());
      v.cluster_id = doc.at("cluster_id").get<int>();
      v.detector = parse_detector(doc.at("detector").get<std::string>());
      if (!seen.emplace(v.file_id, std::string(to_string(v.detector))).second) {
        throw AuditError(fmt::format("duplicate verdict for file '{}' and detector '{}'", v.file_id,
                                     to_string(v.detector)));
      }
      out.push_back(std::move(v));
    } catch (const IngestError&) {
      throw;
    } catch (const std::exception& e) {
      throw IngestError(lineno, e.what());
    }
  }
  return out;
}

}  // namespace memaudit
