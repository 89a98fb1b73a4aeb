#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace memaudit {

/// Raised for any contract violation in the audit pipeline: bad input data,
/// invalid configuration, or a precondition that does not hold.
class AuditError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Ingestion failure tied to a specific input line (1-based).
class IngestError : public AuditError {
 public:
  IngestError(std::size_t line, const std::string& what);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Binary membership label. `kSeen` (1) is the pseudo-label given to every
/// file of the suspected dataset; `kUnseen` (0) marks reference files
/// published after the model.
enum class Label : int { kUnseen = 0, kSeen = 1 };

inline int to_int(Label l) { return static_cast<int>(l); }
Label label_from_int(long long v);

/// Repeated class-1 probabilities for one snippet under one estimator.
/// Class-0 probabilities are implicit (1 - p).
struct PredictionSet {
  std::string snippet_id;
  std::string estimator_id;
  std::vector<double> probs;
  Label pseudo_label = Label::kSeen;

  friend bool operator==(const PredictionSet&, const PredictionSet&) = default;
};

/// 13 metrics per estimator, concatenated in `estimator_order`.
struct SnippetMetricVector {
  std::string snippet_id;
  std::string file_id;
  std::vector<double> values;
  std::vector<std::string> estimator_order;
};

/// Pooled file-level representation. `mean_raw_aleatoric` names clusters:
/// the group with the lower value is treated as seen.
struct FileFeature {
  std::string file_id;
  std::vector<double> vector;
  std::size_t snippet_count = 0;
  double mean_raw_aleatoric = 0.0;
};

struct FileManifest {
  std::string file_id;
  Label declared_label = Label::kSeen;
  std::optional<Label> truth_label;
  std::vector<std::string> snippet_ids;

  friend bool operator==(const FileManifest&, const FileManifest&) = default;
};

enum class Detector { kGmm, kHc, kKmeans, kDbscan, kIforest };

std::string_view to_string(Detector d);
Detector parse_detector(std::string_view name);
inline constexpr Detector kAllDetectors[] = {Detector::kGmm, Detector::kHc, Detector::kKmeans,
                                             Detector::kDbscan, Detector::kIforest};
inline bool is_clustering(Detector d) {
  return d == Detector::kGmm || d == Detector::kHc || d == Detector::kKmeans;
}

enum class Verdict { kUnseen, kSeen };
std::string_view to_string(Verdict v);
Verdict parse_verdict(std::string_view name);

struct AuditVerdict {
  std::string file_id;
  Verdict predicted = Verdict::kSeen;
  int cluster_id = 0;
  Detector detector = Detector::kGmm;

  friend bool operator==(const AuditVerdict&, const AuditVerdict&) = default;
};

struct ConfusionReport {
  long tp = 0;
  long fp = 0;
  long fn = 0;
  long tn = 0;
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;
  // Set when truth has no positives or no negatives; balanced accuracy then
  // carries the single defined rate.
  bool degenerate_class = false;
};

}  // namespace memaudit
