#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "memaudit/baselines.hpp"
#include "memaudit/types.hpp"

namespace memaudit::fixtures {

struct BetaProfile {
  double alpha = 1.0;
  double beta = 1.0;

  double mean() const { return alpha / (alpha + beta); }
  /// E[p(1-p)] under Beta(alpha, beta).
  double expected_aleatoric() const {
    const double s = alpha + beta;
    return alpha * beta / (s * (s + 1.0));
  }
};

/// Synthetic audit dataset: a suspected set whose files are mostly seen
/// (confident predictions near 1) plus `n_unseen_in_suspected` unseen files
/// (dispersed predictions), and a reference unseen set pseudo-labeled 0.
struct FixtureConfig {
  int n_files_suspected = 50;
  int n_files_unseen_set = 50;
  int n_unseen_in_suspected = 10;
  int snippets_per_file = 100;
  int n_predictions = 10;
  std::vector<std::string> estimators{"blob", "ensemble", "mcd"};
  std::uint64_t seed = 42;
  BetaProfile seen{50.0, 1.0};
  BetaProfile unseen_in_suspected{2.0, 2.0};
  BetaProfile unseen_set{1.0, 50.0};
  // Divides both Beta parameters of every profile; values > 1 spread all classes out.
  double dispersion = 1.0;

  // Optional token/neighbor traces for the probability-feature baselines.
  bool with_traces = false;
  int tokens_per_snippet = 64;
  int neighbors = 10;

  void validate() const;
};

struct Record {
  std::string file_id;
  PredictionSet set;
};

struct Fixture {
  std::vector<FileManifest> manifests;  // truth_label populated
  std::vector<Record> records;
  std::vector<baseline::TokenTrace> token_traces;  // suspected files only
  std::vector<baseline::NeighborTrace> neighbor_traces;
};

Fixture generate(const FixtureConfig& config);

/// Writes manifest.jsonl (truth_label null), records.jsonl, truth.jsonl and,
/// when present, tokens.jsonl and neighbors.jsonl into `dir`.
void write_fixture(const Fixture& fixture, const std::filesystem::path& dir);

/// Record-stream text exactly as written to records.jsonl.
std::string records_text(const Fixture& fixture);
std::string manifest_text(const Fixture& fixture, bool include_truth);

}  // namespace memaudit::fixtures
