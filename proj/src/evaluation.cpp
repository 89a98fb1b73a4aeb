#include "memaudit/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include <fmt/format.h>

namespace memaudit::eval {
namespace {

void sort_rows(std::vector<SweepRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    return std::tie(a.detector, a.n_unseen) < std::tie(b.detector, b.n_unseen);
  });
}

// Half-up to one decimal, the convention of published result tables
// (fmt's round-half-even would print 86.25 as 86.2).
std::string pct(double v) { return fmt::format("{:.1f}", std::round(1000.0 * v + 1e-9) / 10.0); }

}  // namespace

ConfusionReport from_counts(long tp, long fp, long fn, long tn) {
  if (tp < 0 || fp < 0 || fn < 0 || tn < 0) throw AuditError("confusion counts must be non-negative");
  ConfusionReport r{tp, fp, fn, tn};
  const long total = tp + fp + fn + tn;
  if (total == 0) throw AuditError("confusion report over zero files");
  r.accuracy = static_cast<double>(tp + tn) / static_cast<double>(total);
  const long pos = tp + fn;
  const long neg = tn + fp;
  if (pos > 0 && neg > 0) {
    const double tpr = static_cast<double>(tp) / static_cast<double>(pos);
    const double tnr = static_cast<double>(tn) / static_cast<double>(neg);
    r.balanced_accuracy = (tpr + tnr) / 2.0;
  } else {
    r.degenerate_class = true;
    r.balanced_accuracy = pos > 0 ? static_cast<double>(tp) / static_cast<double>(pos)
                                  : static_cast<double>(tn) / static_cast<double>(neg);
  }
  return r;
}

ConfusionReport confusion(const std::vector<AuditVerdict>& verdicts,
                          const std::map<std::string, Label>& truth) {
  long tp = 0, fp = 0, fn = 0, tn = 0;
  for (const auto& v : verdicts) {
    auto it = truth.find(v.file_id);
    if (it == truth.end()) throw AuditError(fmt::format("no truth label for file '{}'", v.file_id));
    const bool seen = v.predicted == Verdict::kSeen;
    const bool member = it->second == Label::kSeen;
    if (seen && member) ++tp;
    else if (seen) ++fp;
    else if (member) ++fn;
    else ++tn;
  }
  return from_counts(tp, fp, fn, tn);
}

int count_unseen(const std::vector<AuditVerdict>& verdicts, const std::map<std::string, Label>& truth) {
  int n = 0;
  for (const auto& v : verdicts) {
    auto it = truth.find(v.file_id);
    if (it == truth.end()) throw AuditError(fmt::format("no truth label for file '{}'", v.file_id));
    n += it->second == Label::kUnseen ? 1 : 0;
  }
  return n;
}

std::string sweep_csv(std::vector<SweepRow> rows) {
  sort_rows(rows);
  std::string out = "detector,n_unseen,acc,bacc,tp,fp,fn,tn\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{},{},{}\n", r.detector, r.n_unseen, pct(r.report.accuracy),
                       pct(r.report.balanced_accuracy), r.report.tp, r.report.fp, r.report.fn, r.report.tn);
  }
  return out;
}

std::string sweep_table(std::vector<SweepRow> rows) {
  sort_rows(rows);
  std::size_t width = 8;
  for (const auto& r : rows) width = std::max(width, r.detector.size());
  std::string out = fmt::format("{:<{}}  {:>8}  {:>6}  {:>6}  {:>4}  {:>4}  {:>4}  {:>4}\n", "detector", width,
                                "n_unseen", "acc%", "bacc%", "tp", "fp", "fn", "tn");
  for (const auto& r : rows) {
    out += fmt::format("{:<{}}  {:>8}  {:>6}  {:>6}  {:>4}  {:>4}  {:>4}  {:>4}{}\n", r.detector, width, r.n_unseen,
                       pct(r.report.accuracy), pct(r.report.balanced_accuracy), r.report.tp, r.report.fp,
                       r.report.fn, r.report.tn, r.report.degenerate_class ? "  (single-class truth)" : "");
  }
  return out;
}

}  // namespace memaudit::eval
