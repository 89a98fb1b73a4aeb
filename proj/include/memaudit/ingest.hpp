#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "memaudit/types.hpp"

namespace memaudit {

struct IngestOptions {
  // Estimators every snippet must carry, in feature concatenation order.
  // Empty means "every estimator seen in the stream", sorted by name.
  std::vector<std::string> estimators;
  // When nonzero every PredictionSet must hold exactly this many probabilities.
  std::size_t expected_n = 0;
  double clamp_tolerance = 1e-9;
};

/// Grouped result of reading a probability-record stream. All containers are
/// sorted so that the result does not depend on input line order.
struct IngestedData {
  std::vector<PredictionSet> sets;  // sorted by (snippet_id, estimator_id)
  std::vector<FileManifest> manifests;  // sorted by file_id, snippet ids sorted
  std::vector<std::string> estimators;
  std::map<std::string, std::string> snippet_file;

  const FileManifest* manifest(const std::string& file_id) const;
};

/// Reads line-delimited probability records and, optionally, manifest
/// records. Files present in the records but absent from a supplied
/// manifest stream are an error; without a manifest stream the declared
/// label is taken from the snippets' pseudo-labels.
IngestedData ingest_records(std::istream& records, std::istream* manifest = nullptr,
                            const IngestOptions& options = {});

/// Parses manifest records. Used directly for truth files, which share the
/// manifest schema (declared_label may be omitted there).
std::vector<FileManifest> read_manifest(std::istream& in, bool require_declared = true);

std::string to_record_line(const std::string& file_id, const PredictionSet& set);
std::string to_manifest_line(const FileManifest& manifest, bool include_truth);

/// Writes every set back in record form, ordered like `data.sets`.
void write_records(std::ostream& out, const IngestedData& data);

}  // namespace memaudit
