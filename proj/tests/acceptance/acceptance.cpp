// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
//
// Usage: acceptance <path-to-memaudit-cli> [work-dir]

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "generators.hpp"
#include "memaudit/baselines.hpp"
#include "memaudit/clustering.hpp"
#include "memaudit/evaluation.hpp"
#include "memaudit/features.hpp"
#include "memaudit/fixtures.hpp"
#include "memaudit/ingest.hpp"
#include "memaudit/metrics.hpp"
#include "memaudit/pipeline.hpp"
#include "memaudit/random.hpp"
#include "oracles.hpp"
#include "published_tables.hpp"

namespace fs = std::filesystem;
using namespace memaudit;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// ---------------------------------------------------------------------------

Outcome table_arithmetic() {
  const auto start = Clock::now();
  double worst = 0.0;
  std::string worst_row;
  for (const auto& row : published::kAuditRows) {
    const auto r = eval::from_counts(row.tp, row.fp, row.fn, row.tn);
    for (auto [got, want] : {std::pair{100 * r.accuracy, row.acc}, std::pair{100 * r.balanced_accuracy, row.bacc}}) {
      const double dev = std::fabs(got - want);
      if (dev > worst) {
        worst = dev;
        worst_row = fmt::format("{} {} n_unseen={}", row.setting, row.tool, row.n_unseen);
      }
    }
  }
  const double elapsed = seconds_since(start);
  const bool ok = worst <= 0.1 + 1e-9 && elapsed < 1.0;
  return {ok, fmt::format("{} rows, max deviation {:.4f}pp{}, {:.3f}s", published::kAuditRows.size(), worst,
                          worst_row.empty() ? "" : " (" + worst_row + ")", elapsed)};
}

Outcome metric_oracle() {
  const auto start = Clock::now();
  Rng rng(20240601);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto p = gen::probs(rng, 2 + rng.index(19));
    const Label y = gen::label(rng);
    const auto got = metrics::metric_block(p, y).as_array();
    const auto want = oracle::metrics(p, to_int(y));
    for (std::size_t m = 0; m < got.size(); ++m) worst = std::max(worst, std::fabs(got[m] - want[m]));
  }
  const double elapsed = seconds_since(start);
  return {worst <= 1e-9 && elapsed < 10.0,
          fmt::format("1000 sets x 13 metrics, max abs error {:.2e}, {:.3f}s", worst, elapsed)};
}

Outcome pca_equivalence() {
  double worst = 0.0;
  int inputs = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    const auto z = features::standardize_fit_apply(gen::correlated(rng, 200, 39)).second;
    const auto model = features::pca_fit(z, features::kDefaultPcaDim);
    const auto ref = oracle::jacobi_pca(z);
    const Eigen::MatrixXd got = features::pca_transform(model, z);
    for (Eigen::Index c = 0; c < got.cols(); ++c) {
      Eigen::VectorXd want = z * ref.directions.col(c);
      if (want.dot(got.col(c)) < 0) want = -want;
      worst = std::max(worst, (got.col(c) - want).cwiseAbs().maxCoeff());
    }
    ++inputs;
  }
  return {worst < 1e-6, fmt::format("{} seeded 200x39 inputs, 10 components, max abs deviation {:.2e}", inputs, worst)};
}

Outcome monotonicity() {
  int ll_violations = 0, inertia_violations = 0, datasets = 0;
  double worst_drop = 0.0;
  Rng rng(777);
  for (int d = 0; d < 50; ++d) {
    const int dim = 1 + static_cast<int>(rng.index(10));
    const int n = 20 + static_cast<int>(rng.index(180));
    Eigen::MatrixXd x;
    if (d % 2 == 0) {
      x = gen::gaussian(rng, n, dim);
    } else {
      x = gen::two_blobs(rng, n / 2, dim, rng.uniform(0.5, 6.0)).first;
    }
    cluster::GmmOptions g;
    g.seed = rng.next();
    const auto& ll = cluster::gmm(x, g).params.log_likelihood_trace;
    for (std::size_t i = 1; i < ll.size(); ++i) {
      if (ll[i] < ll[i - 1] - 1e-7) ++ll_violations;
      worst_drop = std::max(worst_drop, ll[i - 1] - ll[i]);
    }
    const std::uint64_t kseed = rng.next();
    for (int r = 0; r < 10; ++r) {
      const auto run = cluster::kmeans_run(x, 2, kseed + static_cast<std::uint64_t>(r), 300);
      for (std::size_t i = 1; i < run.inertia_trace.size(); ++i) {
        if (run.inertia_trace[i] > run.inertia_trace[i - 1]) ++inertia_violations;
      }
    }
    ++datasets;
  }
  return {ll_violations == 0 && inertia_violations == 0,
          fmt::format("{} datasets, EM steps below slack: {}, largest ll drop {:.2e}, Lloyd inertia increases: {}",
                      datasets, ll_violations, std::max(0.0, worst_drop), inertia_violations)};
}

// End-to-end fixtures, shared by the two sweep criteria.
struct EndToEnd {
  std::map<std::pair<Detector, int>, double> mean_bacc;  // over seeds
  double seconds = 0.0;
};

EndToEnd run_end_to_end() {
  const auto start = Clock::now();
  EndToEnd out;
  const std::vector<Detector> all(std::begin(kAllDetectors), std::end(kAllDetectors));
  for (int n_unseen : {10, 20, 30, 40}) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      fixtures::FixtureConfig cfg;
      cfg.n_unseen_in_suspected = n_unseen;
      cfg.seed = seed;
      const auto fx = fixtures::generate(cfg);
      std::istringstream rec(fixtures::records_text(fx)), man(fixtures::manifest_text(fx, false));
      const auto data = ingest_records(rec, &man);
      std::map<std::string, Label> truth;
      for (const auto& m : fx.manifests) truth[m.file_id] = *m.truth_label;
      AuditOptions opts;
      opts.seed = seed;
      const auto report = audit(data, all, opts);
      for (Detector d : all) {
        std::vector<AuditVerdict> mine;
        for (const auto& v : report.verdicts) {
          if (v.detector == d) mine.push_back(v);
        }
        out.mean_bacc[{d, n_unseen}] += eval::confusion(mine, truth).balanced_accuracy / 10.0;
      }
    }
  }
  out.seconds = seconds_since(start);
  return out;
}

Outcome end_to_end(const EndToEnd& e2e) {
  bool ok = e2e.seconds < 120.0;
  double lowest = 1.0;
  std::string cells;
  for (Detector d : {Detector::kGmm, Detector::kHc, Detector::kKmeans}) {
    for (int n : {10, 20, 30, 40}) {
      const double b = e2e.mean_bacc.at({d, n});
      lowest = std::min(lowest, b);
      if (b < 0.90) {
        ok = false;
        cells += fmt::format(" {}@{}={:.3f}", to_string(d), n, b);
      }
    }
  }
  return {ok, fmt::format("12 cells x 10 seeds, lowest mean bAcc {:.3f}{}, {:.1f}s (all 5 detectors)", lowest,
                          cells.empty() ? "" : ", below 0.90:" + cells, e2e.seconds)};
}

Outcome ablation(const EndToEnd& e2e) {
  auto mean_of = [&](std::initializer_list<Detector> ds) {
    double s = 0;
    int c = 0;
    for (Detector d : ds) {
      for (int n : {10, 20, 30, 40}) {
        s += e2e.mean_bacc.at({d, n});
        ++c;
      }
    }
    return s / c;
  };
  const double clustering = mean_of({Detector::kGmm, Detector::kHc, Detector::kKmeans});
  const double anomaly = mean_of({Detector::kDbscan, Detector::kIforest});
  return {clustering > anomaly,
          fmt::format("clustering mean bAcc {:.4f} vs anomaly {:.4f} (dbscan {:.4f}, iforest {:.4f})", clustering,
                      anomaly, mean_of({Detector::kDbscan}), mean_of({Detector::kIforest}))};
}

Outcome baseline_oracles() {
  Rng rng(4242);
  int mismatches = 0, monotone_breaks = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto t = gen::token_trace(rng, "s");
    double previous = -INFINITY;
    for (int k = 1; k <= 100; ++k) {
      const double got = baseline::min_k_score(t, k);
      if (got != oracle::min_k(t.token_logprobs, k)) ++mismatches;
      if (got < previous - 1e-12 * std::fabs(previous)) ++monotone_breaks;
      previous = got;
    }
    const auto n = gen::neighbor_trace(rng, "s", 1 + rng.index(15));
    if (baseline::neighbor_deviation(n, baseline::NeighborMode::kLoss) !=
        oracle::neighbor_deviation(n.target_loss, n.neighbor_losses)) {
      ++mismatches;
    }
    if (baseline::neighbor_deviation(n, baseline::NeighborMode::kPpl) !=
        oracle::neighbor_deviation(n.target_ppl, n.neighbor_ppls)) {
      ++mismatches;
    }
  }
  return {mismatches == 0 && monotone_breaks == 0,
          fmt::format("1000 traces, k=1..100: oracle mismatches {}, monotonicity breaks {}", mismatches,
                      monotone_breaks)};
}

Outcome sweep_determinism(const std::string& cli, const fs::path& work) {
  fs::remove_all(work);
  fs::create_directories(work);
  std::string dirs;
  for (int n : {10, 20, 30, 40}) {
    const auto dir = work / fmt::format("n{}", n);
    const auto cmd = fmt::format("\"{}\" synth --n-unseen {} --seed 42 --out \"{}\"", cli, n, dir.string());
    if (std::system(cmd.c_str()) != 0) return {false, "synth failed: " + cmd};
    dirs += " \"" + dir.string() + "\"";
  }
  std::string outputs[2];
  for (int run = 0; run < 2; ++run) {
    const auto csv = work / fmt::format("sweep{}.csv", run);
    const auto cmd = fmt::format("\"{}\" sweep --seed 42 --fixtures{} --out \"{}\" 2>/dev/null", cli, dirs, csv.string());
    if (std::system(cmd.c_str()) != 0) return {false, "sweep failed: " + cmd};
    std::ifstream in(csv, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    outputs[run] = ss.str();
  }
  const auto rows = std::count(outputs[0].begin(), outputs[0].end(), '\n') - 1;
  const bool ok = !outputs[0].empty() && outputs[0] == outputs[1] && rows == 20;
  return {ok, fmt::format("4 fixture dirs x 5 detectors, {} rows, {} bytes, identical: {}", rows, outputs[0].size(),
                          outputs[0] == outputs[1] ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: acceptance <memaudit-cli> [work-dir]\n";
    return 2;
  }
  const std::string cli = argv[1];
  const fs::path work = argc > 2 ? fs::path(argv[2]) : fs::temp_directory_path() / "memaudit_acceptance";

  int failures = 0;
  auto report = [&](const char* name, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << name << ": " << o.detail << std::endl;
  };

  report("table arithmetic", table_arithmetic);
  report("metric oracle suite", metric_oracle);
  report("PCA equivalence", pca_equivalence);
  report("EM/Lloyd monotonicity", monotonicity);
  EndToEnd e2e;
  bool e2e_ran = false;
  report("end-to-end clustering bAcc", [&] {
    e2e = run_end_to_end();
    e2e_ran = true;
    return end_to_end(e2e);
  });
  report("ablation ordering", [&] { return e2e_ran ? ablation(e2e) : Outcome{false, "end-to-end run failed"}; });
  report("baseline scorer oracles", baseline_oracles);
  report("sweep determinism", [&] { return sweep_determinism(cli, work); });

  fs::remove_all(work);
  std::cout << (failures == 0 ? "all criteria passed" : fmt::format("{} criteria failed", failures)) << std::endl;
  return failures == 0 ? 0 : 1;
}
