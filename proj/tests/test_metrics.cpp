#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include <gtest/gtest.h>

#include "generators.hpp"
#include "memaudit/metrics.hpp"
#include "memaudit/random.hpp"
#include "oracles.hpp"

using namespace memaudit;
using namespace memaudit::metrics;

namespace {

constexpr double kTol = 1e-6;  // printed examples carry six decimals

MetricBlock block(std::vector<double> p, int y = 1) { return metric_block(p, label_from_int(y)); }

PredictionSet set(const std::string& est, std::vector<double> p, Label y = Label::kSeen) {
  return {"snip", est, std::move(p), y};
}

}  // namespace

TEST(Metrics, AleatoricExamples) {
  EXPECT_DOUBLE_EQ(aleatoric(std::vector<double>{0.5, 0.5}), 0.25);
  EXPECT_DOUBLE_EQ(aleatoric(std::vector<double>{1.0, 1.0, 1.0}), 0.0);
  EXPECT_NEAR(aleatoric(std::vector<double>{0.2, 0.5, 0.9}), 0.166667, kTol);
}

TEST(Metrics, EpistemicExamples) {
  EXPECT_DOUBLE_EQ(epistemic(std::vector<double>{0.37, 0.37, 0.37, 0.37}), 0.0);
  EXPECT_DOUBLE_EQ(epistemic(std::vector<double>{0.0, 1.0}), 0.25);
  EXPECT_NEAR(epistemic(std::vector<double>{0.2, 0.5, 0.9}), 0.082222, kTol);
}

TEST(Metrics, DispersionExamples) {
  const auto flat = dispersion_metrics(std::vector<double>{0.5, 0.5});
  EXPECT_NEAR(flat.entropy, 0.693147, kTol);
  EXPECT_EQ(flat.std_dev, 0.0);
  EXPECT_EQ(flat.kl_to_mean, 0.0);
  EXPECT_EQ(flat.delta_max, 0.0);
  EXPECT_EQ(flat.delta_min, 0.0);
  EXPECT_EQ(flat.delta_mean_median, 0.0);

  const auto d = dispersion_metrics(std::vector<double>{0.2, 0.5, 0.9});
  EXPECT_NEAR(d.entropy, 0.763286, kTol);
  EXPECT_NEAR(d.std_dev, 0.286744, kTol);
  EXPECT_NEAR(d.kl_to_mean, 0.242488, kTol);
  EXPECT_NEAR(d.delta_max, 0.4, 1e-12);
  EXPECT_NEAR(d.delta_min, 0.3, 1e-12);
  EXPECT_NEAR(d.delta_mean_median, 0.033333, kTol);

  EXPECT_EQ(dispersion_metrics(std::vector<double>{1.0, 1.0}).entropy, 0.0);
}

TEST(Metrics, EvenLengthMedianIsMidpoint) {
  // mean 0.4, median (0.2 + 0.4) / 2 = 0.3
  EXPECT_NEAR(dispersion_metrics(std::vector<double>{0.1, 0.2, 0.4, 0.9}).delta_mean_median, 0.1, 1e-12);
}

TEST(Metrics, TiedExtremesGiveZeroDeltas) {
  const auto d = dispersion_metrics(std::vector<double>{0.9, 0.9, 0.1, 0.1, 0.5});
  EXPECT_EQ(d.delta_max, 0.0);
  EXPECT_EQ(d.delta_min, 0.0);
}

TEST(Metrics, FactualExamples) {
  const auto perfect = factual_metrics(std::vector<double>{1.0, 1.0}, Label::kSeen);
  EXPECT_EQ(perfect.manhattan, 0.0);
  EXPECT_EQ(perfect.euclidean, 0.0);
  EXPECT_EQ(perfect.nll, 0.0);
  EXPECT_EQ(perfect.chebyshev, 0.0);
  EXPECT_EQ(perfect.kl_to_label, 0.0);

  const auto f = factual_metrics(std::vector<double>{0.2, 0.5, 0.9}, Label::kSeen);
  EXPECT_NEAR(f.manhattan, 1.4, 1e-12);
  EXPECT_NEAR(f.euclidean, 0.948683, kTol);
  EXPECT_NEAR(f.nll, 2.407946, kTol);
  EXPECT_NEAR(f.chebyshev, 0.8, 1e-12);
  EXPECT_NEAR(f.kl_to_label, -0.763286, kTol);

  const auto u = factual_metrics(std::vector<double>{0.3, 0.7}, Label::kUnseen);
  EXPECT_EQ(u.nll, 0.0);
  EXPECT_NEAR(u.manhattan, 1.0, 1e-12);
  EXPECT_NEAR(u.chebyshev, 0.7, 1e-12);
  EXPECT_TRUE(std::isfinite(u.kl_to_label));
  // 0.3 ln(0.3/eps) + 0.7 ln(0.7/eps), fixed by the log floor.
  EXPECT_NEAR(u.kl_to_label, 0.3 * std::log(0.3 / 1e-12) + 0.7 * std::log(0.7 / 1e-12), 1e-9);
}

TEST(Metrics, RejectsSinglePrediction) {
  EXPECT_THROW(aleatoric(std::vector<double>{0.5}), AuditError);
  EXPECT_THROW(metric_block(std::vector<double>{0.5}, Label::kSeen), AuditError);
}

TEST(Metrics, SnippetVectorLayout) {
  std::map<std::string, PredictionSet> one{{"mcd", set("mcd", {0.5, 0.5})}};
  const auto v = snippet_metric_vector(one, {"mcd"}, "file");
  ASSERT_EQ(v.values.size(), kMetricsPerEstimator);
  EXPECT_DOUBLE_EQ(v.values[0], 0.25);
  EXPECT_DOUBLE_EQ(v.values[1], 0.0);
  EXPECT_NEAR(v.values[2], 0.693147, kTol);
  EXPECT_DOUBLE_EQ(v.values[3], 0.0);
  EXPECT_EQ(v.file_id, "file");
  EXPECT_EQ(v.snippet_id, "snip");

  std::map<std::string, PredictionSet> same{
      {"a", set("a", {0.2, 0.5, 0.9})}, {"b", set("b", {0.2, 0.5, 0.9})}, {"c", set("c", {0.2, 0.5, 0.9})}};
  const auto rep = snippet_metric_vector(same, {"a", "b", "c"});
  ASSERT_EQ(rep.values.size(), 3 * kMetricsPerEstimator);
  for (std::size_t i = 0; i < kMetricsPerEstimator; ++i) {
    EXPECT_EQ(rep.values[i], rep.values[i + kMetricsPerEstimator]);
    EXPECT_EQ(rep.values[i], rep.values[i + 2 * kMetricsPerEstimator]);
  }
}

TEST(Metrics, SnippetVectorFollowsEstimatorOrder) {
  std::map<std::string, PredictionSet> sets{{"a", set("a", {0.2, 0.5, 0.9})}, {"b", set("b", {0.99, 0.98})}};
  const auto ab = snippet_metric_vector(sets, {"a", "b"});
  const auto ba = snippet_metric_vector(sets, {"b", "a"});
  EXPECT_EQ(ba.estimator_order, (std::vector<std::string>{"b", "a"}));
  for (std::size_t i = 0; i < kMetricsPerEstimator; ++i) {
    EXPECT_EQ(ab.values[i], ba.values[i + kMetricsPerEstimator]);
    EXPECT_EQ(ab.values[i + kMetricsPerEstimator], ba.values[i]);
  }
}

TEST(Metrics, SnippetVectorErrors) {
  std::map<std::string, PredictionSet> sets{{"a", set("a", {0.2, 0.5})}};
  EXPECT_THROW(snippet_metric_vector(sets, {"a", "b"}), AuditError);
  sets["b"] = set("b", {0.2, 0.5}, Label::kUnseen);
  EXPECT_THROW(snippet_metric_vector(sets, {"a", "b"}), AuditError);
}

// Every metric against the direct transcription, over random sets that
// include the clamp and tie edge cases.
TEST(MetricsProperty, MatchesDirectTranscription) {
  Rng rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto p = gen::probs(rng, 2 + rng.index(19));
    const Label y = gen::label(rng);
    const auto got = metric_block(p, y).as_array();
    const auto want = oracle::metrics(p, to_int(y));
    for (std::size_t m = 0; m < kMetricsPerEstimator; ++m) {
      ASSERT_NEAR(got[m], want[m], 1e-9) << "metric " << m << " trial " << trial;
    }
  }
}

TEST(MetricsProperty, PermutationInvariant) {
  Rng rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    auto p = gen::probs(rng, 2 + rng.index(19));
    const Label y = gen::label(rng);
    const auto before = metric_block(p, y).as_array();
    for (std::size_t i = p.size() - 1; i > 0; --i) std::swap(p[i], p[rng.index(i + 1)]);
    const auto after = metric_block(p, y).as_array();
    for (std::size_t m = 0; m < kMetricsPerEstimator; ++m) ASSERT_NEAR(before[m], after[m], 1e-12);
  }
}

TEST(MetricsProperty, Bounds) {
  Rng rng(13);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto b = metric_block(gen::probs(rng, 2 + rng.index(19)), gen::label(rng));
    for (double v : b.as_array()) ASSERT_TRUE(std::isfinite(v));
    ASSERT_GE(b.aleatoric, 0.0);
    ASSERT_LE(b.aleatoric, 0.25);
    ASSERT_GE(b.epistemic, 0.0);
    ASSERT_LE(b.epistemic, 0.25 + 1e-15);
    ASSERT_LE(b.std_dev, 0.5 + 1e-15);
    ASSERT_GE(b.delta_max, 0.0);
    ASSERT_GE(b.delta_min, 0.0);
    ASSERT_GE(b.manhattan, 0.0);
    ASSERT_GE(b.euclidean, 0.0);
    ASSERT_GE(b.nll, 0.0);
    ASSERT_GE(b.chebyshev, 0.0);
    ASSERT_LE(b.chebyshev, 1.0);
  }
}

TEST(MetricsProperty, ConstantSetCollapses) {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const double c = trial % 10 == 0 ? 1.0 : rng.uniform();
    const auto b = block(std::vector<double>(2 + rng.index(19), c), static_cast<int>(rng.index(2)));
    ASSERT_EQ(b.epistemic, 0.0);
    ASSERT_EQ(b.std_dev, 0.0);
    ASSERT_NEAR(b.kl_to_mean, 0.0, 1e-12);
    ASSERT_EQ(b.delta_max, 0.0);
    ASSERT_EQ(b.delta_min, 0.0);
    ASSERT_NEAR(b.delta_mean_median, 0.0, 1e-15);
  }
}

TEST(MetricsProperty, FactualIdentities) {
  Rng rng(19);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = 2 + rng.index(19);
    const auto ones = factual_metrics(std::vector<double>(n, 1.0), Label::kSeen);
    ASSERT_EQ(ones.manhattan, 0.0);
    ASSERT_EQ(ones.euclidean, 0.0);
    ASSERT_EQ(ones.nll, 0.0);
    ASSERT_EQ(ones.chebyshev, 0.0);
    ASSERT_EQ(ones.kl_to_label, 0.0);
    ASSERT_EQ(factual_metrics(gen::probs(rng, n), Label::kUnseen).nll, 0.0);
  }
}
