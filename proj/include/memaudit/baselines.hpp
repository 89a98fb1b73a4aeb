#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace memaudit::baseline {

/// Natural-log token probabilities of one snippet under the target model.
struct TokenTrace {
  std::string snippet_id;
  std::vector<double> token_logprobs;
};

struct NeighborTrace {
  std::string snippet_id;
  double target_loss = 0.0;
  double target_ppl = 1.0;
  std::vector<double> neighbor_losses;
  std::vector<double> neighbor_ppls;
};

enum class NeighborMode { kLoss, kPpl };

/// Mean of the lowest max(1, floor(k% of T)) token log-probabilities.
/// Higher means more likely seen.
double min_k_score(const TokenTrace& trace, double k_percent);

/// target - mean(neighbors) for the chosen quantity. Lower means more likely seen.
double neighbor_deviation(const NeighborTrace& trace, NeighborMode mode);

struct BaselineOptions {
  std::vector<double> k_grid{10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
  std::size_t neighbors = 10;
};

/// Per-snippet probability features: one Min-K% score per k in the grid,
/// then target-minus-neighbor deviations for loss and for perplexity, one per
/// neighbor. Each deviation block is sorted ascending so the vector does not
/// depend on neighbor order. Keys are snippet ids.
std::map<std::string, std::vector<double>> baseline_feature_vectors(
    const std::vector<TokenTrace>& tokens, const std::vector<NeighborTrace>& neighbors,
    const BaselineOptions& options = {});

std::vector<TokenTrace> read_token_traces(std::istream& in);
std::vector<NeighborTrace> read_neighbor_traces(std::istream& in);
std::string to_line(const TokenTrace& trace);
std::string to_line(const NeighborTrace& trace);

}  // namespace memaudit::baseline
