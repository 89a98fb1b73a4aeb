#pragma once

#include <map>
#include <string>
#include <vector>

#include "memaudit/types.hpp"

namespace memaudit::eval {

/// Confusion counts with "seen" as the positive class.
ConfusionReport confusion(const std::vector<AuditVerdict>& verdicts,
                          const std::map<std::string, Label>& truth);

ConfusionReport from_counts(long tp, long fp, long fn, long tn);

struct SweepRow {
  std::string detector;
  int n_unseen = 0;
  ConfusionReport report;
};

/// CSV with header detector,n_unseen,acc,bacc,tp,fp,fn,tn; rows sorted by
/// (detector, n_unseen); percentages with one decimal.
std::string sweep_csv(std::vector<SweepRow> rows);

/// Same rows as an aligned plain-text table.
std::string sweep_table(std::vector<SweepRow> rows);

/// Number of truth-unseen files among the verdicts' files.
int count_unseen(const std::vector<AuditVerdict>& verdicts, const std::map<std::string, Label>& truth);

}  // namespace memaudit::eval
