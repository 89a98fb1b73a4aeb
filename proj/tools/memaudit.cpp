// memaudit: file-level training-data membership audit from repeated
// prediction probabilities.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "json_config.hpp"
#include "memaudit/baselines.hpp"
#include "memaudit/evaluation.hpp"
#include "memaudit/features.hpp"
#include "memaudit/fixtures.hpp"
#include "memaudit/ingest.hpp"
#include "memaudit/pipeline.hpp"

namespace fs = std::filesystem;
using namespace memaudit;

namespace {

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AuditError(fmt::format("cannot open {}", path.string()));
  return in;
}

// Writes to `path`, or stdout when the path is empty or "-".
void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw AuditError(fmt::format("cannot write {}", path));
  out << text;
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

IngestedData load(const std::string& records, const std::string& manifest,
                  const std::vector<std::string>& estimators) {
  IngestOptions opts;
  opts.estimators = estimators;
  auto rin = open_in(records);
  if (manifest.empty()) return ingest_records(rin, nullptr, opts);
  auto min = open_in(manifest);
  return ingest_records(rin, &min, opts);
}

std::map<std::string, Label> load_truth(const std::string& path) {
  auto in = open_in(path);
  std::map<std::string, Label> truth;
  for (const auto& m : read_manifest(in, false)) {
    if (m.truth_label) truth.emplace(m.file_id, *m.truth_label);
  }
  if (truth.empty()) throw AuditError(fmt::format("{} holds no truth labels", path));
  return truth;
}

std::string verdict_text(const std::vector<AuditVerdict>& verdicts) {
  std::string out;
  for (const auto& v : verdicts) out += to_verdict_line(v) + '\n';
  return out;
}

std::vector<Detector> parse_detectors(const std::vector<std::string>& names) {
  std::vector<Detector> out;
  for (const auto& n : names) {
    if (n == "all") {
      out.assign(std::begin(kAllDetectors), std::end(kAllDetectors));
      return out;
    }
    out.push_back(parse_detector(n));
  }
  return out;
}

// Flags shared by every subcommand that runs the feature pipeline.
struct PipelineFlags {
  std::vector<std::string> estimators;
  AuditOptions audit;

  void attach(CLI::App* cmd) {
    cmd->add_option("--estimators", estimators, "Estimator ids in feature order (default: all, sorted)")
        ->delimiter(',');
    cmd->add_option("--pca-dim", audit.pca_dim, "PCA components kept")->capture_default_str()
        ->check(CLI::PositiveNumber);
    cmd->add_option("--seed", audit.seed, "Seed for every randomized step")->capture_default_str();
    cmd->add_option("--dbscan-eps", audit.dbscan_eps, "DBSCAN radius (<= 0: median 4-NN distance)")
        ->capture_default_str();
    cmd->add_option("--dbscan-min-pts", audit.dbscan_min_pts, "DBSCAN core-point threshold")
        ->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--iforest-trees", audit.iforest_trees, "Isolation Forest size")->capture_default_str()
        ->check(CLI::PositiveNumber);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"File-level training-data membership audit"};
  app.require_subcommand(1);
  // One --config for every subcommand: subcommands pass unknown flags up to
  // here, and the reader routes keys to whichever subcommand was selected.
  app.fallthrough();
  app.set_config("--config", "", "JSON file of subcommand flag values; command-line flags take precedence");
  app.config_formatter(std::make_shared<cli::JsonConfig>(&app));
  app.allow_config_extras(CLI::config_extras_mode::error);

  // synth
  fixtures::FixtureConfig synth_cfg;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic audit fixture directory");
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--n-unseen", synth_cfg.n_unseen_in_suspected, "Unseen files hidden in the suspected set")
      ->capture_default_str();
  synth->add_option("--n-suspected", synth_cfg.n_files_suspected, "Files in the suspected set")
      ->capture_default_str();
  synth->add_option("--n-unseen-set", synth_cfg.n_files_unseen_set, "Files in the reference unseen set")
      ->capture_default_str();
  synth->add_option("--snippets", synth_cfg.snippets_per_file, "Snippets per file")->capture_default_str();
  synth->add_option("--predictions", synth_cfg.n_predictions, "Probabilities per prediction set")
      ->capture_default_str();
  synth->add_option("--estimators", synth_cfg.estimators, "Estimator ids")->delimiter(',');
  synth->add_option("--dispersion", synth_cfg.dispersion, "Divides every Beta parameter")->capture_default_str();
  synth->add_option("--seed", synth_cfg.seed, "Generator seed")->capture_default_str();
  synth->add_flag("--with-traces", synth_cfg.with_traces, "Also write token and neighbor traces");

  // audit
  PipelineFlags audit_flags;
  std::string audit_records, audit_manifest, audit_out = "-";
  std::vector<std::string> audit_detectors{"gmm"};
  auto* audit_cmd = app.add_subcommand("audit", "Assign seen/unseen verdicts to suspected files");
  audit_cmd->add_option("--records", audit_records, "Probability records (JSONL)")->required();
  audit_cmd->add_option("--manifest", audit_manifest, "File manifest (JSONL)");
  audit_cmd->add_option("--detector", audit_detectors, "gmm, hc, kmeans, dbscan, iforest or all")
      ->delimiter(',')->capture_default_str();
  audit_cmd->add_option("--out", audit_out, "Verdict JSONL (default stdout)");
  audit_flags.attach(audit_cmd);

  // baseline-audit
  PipelineFlags base_flags;
  std::string base_records, base_manifest, base_tokens, base_neighbors, base_out = "-";
  std::vector<std::string> base_detectors{"gmm"};
  auto* base_cmd = app.add_subcommand("baseline-audit", "Audit with Min-K% and neighbor features instead");
  base_cmd->add_option("--records", base_records, "Probability records (JSONL), used for file membership")
      ->required();
  base_cmd->add_option("--manifest", base_manifest, "File manifest (JSONL)");
  base_cmd->add_option("--tokens", base_tokens, "Token log-probability traces (JSONL)")->required();
  base_cmd->add_option("--neighbors", base_neighbors, "Neighbor loss/perplexity traces (JSONL)")->required();
  base_cmd->add_option("--detector", base_detectors, "Detector(s) run on the baseline features")
      ->delimiter(',')->capture_default_str();
  base_cmd->add_option("--out", base_out, "Verdict JSONL (default stdout)");
  base_flags.attach(base_cmd);

  // evaluate
  std::string eval_verdicts, eval_truth, eval_out = "-";
  bool eval_table = false;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score verdicts against a truth file");
  eval_cmd->add_option("--verdicts", eval_verdicts, "Verdict JSONL")->required();
  eval_cmd->add_option("--truth", eval_truth, "Truth JSONL (manifest schema with truth_label)")->required();
  eval_cmd->add_option("--out", eval_out, "Report CSV (default stdout)");
  eval_cmd->add_flag("--table", eval_table, "Print an aligned table instead of CSV");

  // sweep
  PipelineFlags sweep_flags;
  std::vector<std::string> sweep_dirs;
  std::vector<std::string> sweep_detectors{"all"};
  std::string sweep_out = "-";
  bool sweep_table = false, sweep_baseline = false;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run detectors over fixture directories and emit the grid");
  sweep_cmd->add_option("--fixtures", sweep_dirs, "Fixture directories (records, manifest, truth)")
      ->required()->check(CLI::ExistingDirectory);
  sweep_cmd->add_option("--detector", sweep_detectors, "Detectors to run")->delimiter(',')
      ->capture_default_str();
  sweep_cmd->add_flag("--baseline", sweep_baseline, "Add a baseline-gmm row where traces exist");
  sweep_cmd->add_option("--out", sweep_out, "CSV output (default stdout)");
  sweep_cmd->add_flag("--table", sweep_table, "Print an aligned table instead of CSV");
  sweep_flags.attach(sweep_cmd);

  // dump-models
  PipelineFlags dump_flags;
  std::string dump_records, dump_manifest, dump_out = "-";
  auto* dump_cmd = app.add_subcommand("dump-models", "Write the fitted standardizer and PCA as JSON");
  dump_cmd->add_option("--records", dump_records, "Probability records (JSONL)")->required();
  dump_cmd->add_option("--manifest", dump_manifest, "File manifest (JSONL)");
  dump_cmd->add_option("--out", dump_out, "JSON output (default stdout)");
  dump_flags.attach(dump_cmd);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      const auto fx = fixtures::generate(synth_cfg);
      fixtures::write_fixture(fx, synth_out);
    } else if (*audit_cmd) {
      const auto data = load(audit_records, audit_manifest, audit_flags.estimators);
      const auto report = audit(data, parse_detectors(audit_detectors), audit_flags.audit);
      print_warnings(report.warnings);
      emit(audit_out, verdict_text(report.verdicts));
    } else if (*base_cmd) {
      const auto data = load(base_records, base_manifest, base_flags.estimators);
      auto tin = open_in(base_tokens);
      auto nin = open_in(base_neighbors);
      const auto set = build_baseline_features(data, baseline::read_token_traces(tin),
                                               baseline::read_neighbor_traces(nin), base_flags.audit);
      std::vector<std::string> warnings;
      std::vector<AuditVerdict> verdicts;
      for (Detector d : parse_detectors(base_detectors)) {
        auto v = run_detector(set.files, d, base_flags.audit, &warnings);
        verdicts.insert(verdicts.end(), v.begin(), v.end());
      }
      print_warnings(warnings);
      emit(base_out, verdict_text(verdicts));
    } else if (*eval_cmd) {
      auto vin = open_in(eval_verdicts);
      const auto verdicts = read_verdicts(vin);
      if (verdicts.empty()) throw AuditError(fmt::format("{} holds no verdicts", eval_verdicts));
      const auto truth = load_truth(eval_truth);
      std::map<std::string, std::vector<AuditVerdict>> by_detector;
      for (const auto& v : verdicts) by_detector[std::string(to_string(v.detector))].push_back(v);
      std::vector<eval::SweepRow> rows;
      for (const auto& [name, vs] : by_detector) {
        rows.push_back({name, eval::count_unseen(vs, truth), eval::confusion(vs, truth)});
      }
      emit(eval_out, eval_table ? eval::sweep_table(rows) : eval::sweep_csv(rows));
    } else if (*sweep_cmd) {
      const auto detectors = parse_detectors(sweep_detectors);
      std::vector<eval::SweepRow> rows;
      for (const auto& dir : sweep_dirs) {
        const fs::path d(dir);
        const auto data = load((d / "records.jsonl").string(), (d / "manifest.jsonl").string(),
                               sweep_flags.estimators);
        const auto truth = load_truth((d / "truth.jsonl").string());
        const auto set = build_file_features(data, sweep_flags.audit);
        std::vector<std::string> warnings;
        for (Detector det : detectors) {
          const auto v = run_detector(set.files, det, sweep_flags.audit, &warnings);
          rows.push_back({std::string(to_string(det)), eval::count_unseen(v, truth), eval::confusion(v, truth)});
        }
        if (sweep_baseline && fs::exists(d / "tokens.jsonl") && fs::exists(d / "neighbors.jsonl")) {
          auto tin = open_in(d / "tokens.jsonl");
          auto nin = open_in(d / "neighbors.jsonl");
          const auto bset = build_baseline_features(data, baseline::read_token_traces(tin),
                                                    baseline::read_neighbor_traces(nin), sweep_flags.audit);
          const auto v = run_detector(bset.files, Detector::kGmm, sweep_flags.audit, &warnings);
          rows.push_back({"baseline-gmm", eval::count_unseen(v, truth), eval::confusion(v, truth)});
        }
        for (const auto& w : warnings) std::cerr << "warning: " << dir << ": " << w << '\n';
      }
      emit(sweep_out, sweep_table ? eval::sweep_table(rows) : eval::sweep_csv(rows));
    } else if (*dump_cmd) {
      const auto data = load(dump_records, dump_manifest, dump_flags.estimators);
      const auto set = build_file_features(data, dump_flags.audit);
      emit(dump_out, features::models_to_json(set.models.standardizer, set.models.pca) + "\n");
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
