#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "memaudit/evaluation.hpp"
#include "memaudit/random.hpp"
#include "published_tables.hpp"

using namespace memaudit;
using namespace memaudit::eval;

namespace {

double pct(double v) { return 100.0 * v; }

/// Builds verdicts and truth realizing the given counts.
std::pair<std::vector<AuditVerdict>, std::map<std::string, Label>> realize(long tp, long fp, long fn, long tn) {
  std::vector<AuditVerdict> v;
  std::map<std::string, Label> truth;
  int id = 0;
  auto add = [&](long count, Verdict pred, Label t) {
    for (long i = 0; i < count; ++i) {
      const std::string name = "f" + std::to_string(id++);
      v.push_back({name, pred, 0, Detector::kGmm});
      truth[name] = t;
    }
  };
  add(tp, Verdict::kSeen, Label::kSeen);
  add(fp, Verdict::kSeen, Label::kUnseen);
  add(fn, Verdict::kUnseen, Label::kSeen);
  add(tn, Verdict::kUnseen, Label::kUnseen);
  return {v, truth};
}

}  // namespace

TEST(Confusion, PublishedExamples) {
  const auto a = from_counts(38, 2, 2, 8);
  EXPECT_NEAR(pct(a.accuracy), 92.0, 1e-9);
  EXPECT_NEAR(pct(a.balanced_accuracy), 87.5, 1e-9);
  const auto b = from_counts(30, 0, 0, 20);
  EXPECT_DOUBLE_EQ(b.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(b.balanced_accuracy, 1.0);
  EXPECT_FALSE(b.degenerate_class);
}

TEST(Confusion, SingleClassTruthIsFlagged) {
  const auto r = from_counts(0, 0, 0, 10);
  EXPECT_DOUBLE_EQ(r.accuracy, 1.0);
  EXPECT_TRUE(r.degenerate_class);
  EXPECT_DOUBLE_EQ(r.balanced_accuracy, 1.0);
  const auto s = from_counts(3, 0, 1, 0);
  EXPECT_TRUE(s.degenerate_class);
  EXPECT_DOUBLE_EQ(s.balanced_accuracy, 0.75);
}

TEST(Confusion, Errors) {
  EXPECT_THROW(from_counts(0, 0, 0, 0), AuditError);
  EXPECT_THROW(from_counts(-1, 0, 0, 1), AuditError);
  auto [v, truth] = realize(1, 1, 1, 1);
  truth.erase(v[0].file_id);
  EXPECT_THROW(confusion(v, truth), AuditError);
}

TEST(Confusion, CountsFromVerdicts) {
  const auto [v, truth] = realize(38, 2, 2, 8);
  const auto r = confusion(v, truth);
  EXPECT_EQ(r.tp, 38);
  EXPECT_EQ(r.fp, 2);
  EXPECT_EQ(r.fn, 2);
  EXPECT_EQ(r.tn, 8);
  EXPECT_EQ(count_unseen(v, truth), 10);
}

TEST(Confusion, OrderInvariantAndBounded) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    auto [v, truth] = realize(static_cast<long>(rng.index(20)), static_cast<long>(rng.index(20)),
                              static_cast<long>(rng.index(20)), 1 + static_cast<long>(rng.index(20)));
    const auto a = confusion(v, truth);
    for (std::size_t i = v.size() - 1; i > 0; --i) std::swap(v[i], v[rng.index(i + 1)]);
    const auto b = confusion(v, truth);
    ASSERT_EQ(a.accuracy, b.accuracy);
    ASSERT_EQ(a.balanced_accuracy, b.balanced_accuracy);
    ASSERT_GE(a.accuracy, 0.0);
    ASSERT_LE(a.accuracy, 1.0);
    ASSERT_GE(a.balanced_accuracy, 0.0);
    ASSERT_LE(a.balanced_accuracy, 1.0);
    ASSERT_EQ(a.accuracy, static_cast<double>(a.tp + a.tn) / static_cast<double>(a.tp + a.tn + a.fp + a.fn));
  }
}

// Published rows outside the clustering audit tables: cross-source results.
TEST(PublishedArithmetic, CrossSourceRows) {
  for (const auto& row : published::kCrossSourceRows) {
    const auto r = from_counts(row.tp, row.fp, row.fn, row.tn);
    EXPECT_NEAR(pct(r.accuracy), row.acc, 0.1 + 1e-9) << row.setting << " " << row.n_unseen;
    EXPECT_NEAR(pct(r.balanced_accuracy), row.bacc, 0.1 + 1e-9) << row.setting << " " << row.n_unseen;
  }
}

TEST(Sweep, CsvFormatAndOrdering) {
  std::vector<SweepRow> rows;
  for (const char* det : {"kmeans", "gmm", "hc"}) {
    for (int n : {40, 10, 30, 20}) rows.push_back({det, n, from_counts(38, 2, 2, 8)});
  }
  const auto csv = sweep_csv(rows);
  std::vector<std::string> lines;
  std::istringstream in(csv);
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  ASSERT_EQ(lines.size(), 13u);
  EXPECT_EQ(lines[0], "detector,n_unseen,acc,bacc,tp,fp,fn,tn");
  EXPECT_EQ(lines[1], "gmm,10,92.0,87.5,38,2,2,8");
  EXPECT_EQ(lines[4], "gmm,40,92.0,87.5,38,2,2,8");
  EXPECT_EQ(lines[5].rfind("hc,10,", 0), 0u);
  EXPECT_EQ(lines[12].rfind("kmeans,40,", 0), 0u);
  EXPECT_EQ(sweep_csv(rows), csv);
}

TEST(Sweep, OneReportOneRow) {
  const auto csv = sweep_csv({{"gmm", 20, from_counts(30, 0, 0, 20)}});
  EXPECT_EQ(csv, "detector,n_unseen,acc,bacc,tp,fp,fn,tn\ngmm,20,100.0,100.0,30,0,0,20\n");
}

TEST(Sweep, HalfUpRounding) {
  // 9 of 16 = 56.25% must print as 56.3.
  const auto csv = sweep_csv({{"gmm", 16, from_counts(9, 0, 7, 0)}});
  EXPECT_NE(csv.find(",56.3,"), std::string::npos) << csv;
}

TEST(Sweep, TableMarksSingleClassRows) {
  const auto table = sweep_table({{"gmm", 0, from_counts(0, 0, 0, 10)}, {"hc", 10, from_counts(38, 2, 2, 8)}});
  EXPECT_NE(table.find("single-class"), std::string::npos);
  EXPECT_NE(table.find("87.5"), std::string::npos);
}
