#include "memaudit/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>

#include "memaudit/ingest.hpp"
#include "memaudit/random.hpp"

namespace memaudit::fixtures {
namespace {

// Trace profiles: seen snippets get likelier tokens and neighbors whose loss
// sits above the target's; unseen snippets look like their neighbors.
constexpr BetaProfile kSeenTokenProb{6.0, 2.0};
constexpr BetaProfile kUnseenTokenProb{2.0, 3.0};
constexpr double kSeenNeighborGap = 0.5;
constexpr double kNeighborNoise = 0.1;

BetaProfile scaled(BetaProfile p, double dispersion) { return {p.alpha / dispersion, p.beta / dispersion}; }

void add_traces(Fixture& fx, const std::string& snippet_id, bool seen, const FixtureConfig& cfg, Rng& rng) {
  const BetaProfile tok = seen ? kSeenTokenProb : kUnseenTokenProb;
  baseline::TokenTrace t;
  t.snippet_id = snippet_id;
  for (int i = 0; i < cfg.tokens_per_snippet; ++i) {
    t.token_logprobs.push_back(std::log(std::max(rng.beta(tok.alpha, tok.beta), 1e-12)));
  }
  baseline::NeighborTrace nb;
  nb.snippet_id = snippet_id;
  nb.target_loss = -std::accumulate(t.token_logprobs.begin(), t.token_logprobs.end(), 0.0) /
                   static_cast<double>(t.token_logprobs.size());
  nb.target_ppl = std::exp(nb.target_loss);
  for (int i = 0; i < cfg.neighbors; ++i) {
    const double loss = nb.target_loss + (seen ? kSeenNeighborGap : 0.0) + kNeighborNoise * rng.normal();
    nb.neighbor_losses.push_back(loss);
    nb.neighbor_ppls.push_back(std::exp(loss));
  }
  fx.token_traces.push_back(std::move(t));
  fx.neighbor_traces.push_back(std::move(nb));
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw AuditError(fmt::format("cannot write {}", path.string()));
  out << text;
}

}  // namespace

void FixtureConfig::validate() const {
  if (n_files_suspected <= 0 || n_files_unseen_set <= 0 || snippets_per_file <= 0) {
    throw AuditError("fixture file and snippet counts must be positive");
  }
  if (n_unseen_in_suspected <= 0 || n_unseen_in_suspected >= n_files_suspected) {
    throw AuditError(fmt::format("n_unseen_in_suspected must be in [1, {}), got {}", n_files_suspected,
                                 n_unseen_in_suspected));
  }
  if (n_predictions < 2) throw AuditError("fixtures need at least 2 predictions per snippet");
  if (estimators.empty()) throw AuditError("fixtures need at least one estimator");
  if (!(dispersion > 0.0)) throw AuditError("dispersion multiplier must be positive");
  for (const auto& p : {seen, unseen_in_suspected, unseen_set}) {
    if (!(p.alpha > 0.0 && p.beta > 0.0)) throw AuditError("Beta parameters must be positive");
  }
  if (with_traces && (tokens_per_snippet < 1 || neighbors < 1)) {
    throw AuditError("trace generation needs at least one token and one neighbor");
  }
}

Fixture generate(const FixtureConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  Fixture fx;

  std::vector<int> order(static_cast<std::size_t>(cfg.n_files_suspected));
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.index(i + 1)]);
  std::vector<bool> unseen(order.size(), false);
  for (int i = 0; i < cfg.n_unseen_in_suspected; ++i) unseen[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = true;

  const auto emit_file = [&](const std::string& file_id, Label declared, Label truth, BetaProfile profile,
                             bool traces) {
    FileManifest m;
    m.file_id = file_id;
    m.declared_label = declared;
    m.truth_label = truth;
    profile = scaled(profile, cfg.dispersion);
    for (int s = 0; s < cfg.snippets_per_file; ++s) {
      const std::string sid = fmt::format("{}-{:04d}", file_id, s);
      m.snippet_ids.push_back(sid);
      for (const auto& est : cfg.estimators) {
        Record r;
        r.file_id = file_id;
        r.set.snippet_id = sid;
        r.set.estimator_id = est;
        r.set.pseudo_label = declared;
        for (int k = 0; k < cfg.n_predictions; ++k) r.set.probs.push_back(rng.beta(profile.alpha, profile.beta));
        fx.records.push_back(std::move(r));
      }
      if (traces) add_traces(fx, sid, truth == Label::kSeen, cfg, rng);
    }
    fx.manifests.push_back(std::move(m));
  };

  for (int f = 0; f < cfg.n_files_suspected; ++f) {
    const bool is_unseen = unseen[static_cast<std::size_t>(f)];
    emit_file(fmt::format("s{:03d}", f), Label::kSeen, is_unseen ? Label::kUnseen : Label::kSeen,
              is_unseen ? cfg.unseen_in_suspected : cfg.seen, cfg.with_traces);
  }
  for (int f = 0; f < cfg.n_files_unseen_set; ++f) {
    emit_file(fmt::format("u{:03d}", f), Label::kUnseen, Label::kUnseen, cfg.unseen_set, false);
  }
  return fx;
}

std::string records_text(const Fixture& fx) {
  std::string out;
  for (const auto& r : fx.records) {
    out += to_record_line(r.file_id, r.set);
    out += '\n';
  }
  return out;
}

std::string manifest_text(const Fixture& fx, bool include_truth) {
  std::string out;
  for (const auto& m : fx.manifests) {
    out += to_manifest_line(m, include_truth);
    out += '\n';
  }
  return out;
}

void write_fixture(const Fixture& fx, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "manifest.jsonl", manifest_text(fx, false));
  write_text(dir / "truth.jsonl", manifest_text(fx, true));
  write_text(dir / "records.jsonl", records_text(fx));
  if (!fx.token_traces.empty()) {
    std::string tokens, neighbors;
    for (const auto& t : fx.token_traces) tokens += baseline::to_line(t) + '\n';
    for (const auto& n : fx.neighbor_traces) neighbors += baseline::to_line(n) + '\n';
    write_text(dir / "tokens.jsonl", tokens);
    write_text(dir / "neighbors.jsonl", neighbors);
  }
}

}  // namespace memaudit::fixtures
