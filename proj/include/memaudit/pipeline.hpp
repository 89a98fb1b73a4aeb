#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "memaudit/baselines.hpp"
#include "memaudit/features.hpp"
#include "memaudit/ingest.hpp"
#include "memaudit/types.hpp"

namespace memaudit {

struct AuditOptions {
  std::size_t pca_dim = features::kDefaultPcaDim;
  std::uint64_t seed = 42;
  double dbscan_eps = 0.0;  // <= 0 selects the median 4-NN distance
  int dbscan_min_pts = 5;
  int iforest_trees = 100;
};

struct FeatureModels {
  features::StandardizerModel standardizer;
  features::PcaModel pca;
};

struct FileFeatureSet {
  std::vector<FileFeature> files;  // sorted by file_id
  FeatureModels models;
};

/// Standardize -> PCA -> per-file max pool over snippet rows.
///
/// `snippet_file` and `naming` are parallel to the rows of `snippets`; naming
/// values are averaged per file into FileFeature::mean_raw_aleatoric.
FileFeatureSet pool_snippet_features(const features::Matrix& snippets,
                                     const std::vector<std::string>& snippet_file,
                                     const std::vector<double>& naming, std::size_t pca_dim);

/// Uncertainty features for every file declared suspected-seen. Models are
/// fit on those files' snippets only.
FileFeatureSet build_file_features(const IngestedData& data, const AuditOptions& options);

/// Probability-feature ablation: baseline vectors for the suspected files'
/// snippets. The naming scalar is the negated mean Min-K% score, so files
/// whose tokens are less likely count as more uncertain.
FileFeatureSet build_baseline_features(const IngestedData& data,
                                       const std::vector<baseline::TokenTrace>& tokens,
                                       const std::vector<baseline::NeighborTrace>& neighbors,
                                       const AuditOptions& options,
                                       const baseline::BaselineOptions& baseline_options = {});

std::vector<AuditVerdict> run_detector(const std::vector<FileFeature>& files, Detector detector,
                                       const AuditOptions& options, std::vector<std::string>* warnings);

struct AuditReport {
  std::vector<AuditVerdict> verdicts;  // grouped by detector in request order
  std::vector<std::string> warnings;
  FeatureModels models;
};

AuditReport audit(const IngestedData& data, const std::vector<Detector>& detectors,
                  const AuditOptions& options);

std::string to_verdict_line(const AuditVerdict& verdict);
std::vector<AuditVerdict> read_verdicts(std::istream& in);

}  // namespace memaudit
