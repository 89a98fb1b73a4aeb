#include "memaudit/baselines.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <numeric>
#include <set>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "json.hpp"
#include "memaudit/types.hpp"

namespace memaudit::baseline {
namespace {

using nlohmann::json;

constexpr double kLogprobTolerance = 1e-9;

void validate(const TokenTrace& t) {
  if (t.token_logprobs.empty()) throw AuditError(fmt::format("snippet '{}': empty token trace", t.snippet_id));
  for (double v : t.token_logprobs) {
    if (!std::isfinite(v) || v > kLogprobTolerance) {
      throw AuditError(fmt::format("snippet '{}': token log-probability {} is not <= 0", t.snippet_id, v));
    }
  }
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::vector<double> numbers(const json& doc, const char* key, std::size_t lineno) {
  auto it = doc.find(key);
  if (it == doc.end() || !it->is_array()) throw IngestError(lineno, fmt::format("'{}' must be an array", key));
  std::vector<double> out;
  for (const auto& v : *it) {
    if (!v.is_number()) throw IngestError(lineno, fmt::format("'{}' must contain numbers only", key));
    out.push_back(v.get<double>());
  }
  return out;
}

double number(const json& doc, const char* key, std::size_t lineno) {
  auto it = doc.find(key);
  if (it == doc.end() || !it->is_number()) throw IngestError(lineno, fmt::format("'{}' must be a number", key));
  return it->get<double>();
}

template <typename Fn>
void for_each_record(std::istream& in, std::initializer_list<const char*> keys, Fn&& fn) {
  std::string line;
  std::size_t lineno = 0;
  std::set<std::string> ids;
  while (std::getline(in, line)) {
    ++lineno;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::parse_error& e) {
      throw IngestError(lineno, fmt::format("malformed JSON: {}", e.what()));
    }
    if (!doc.is_object()) throw IngestError(lineno, "record is not a JSON object");
    for (const auto& item : doc.items()) {
      if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return item.key() == k; })) {
        throw IngestError(lineno, fmt::format("unexpected key '{}'", item.key()));
      }
    }
    auto sid = doc.find("snippet_id");
    if (sid == doc.end() || !sid->is_string()) throw IngestError(lineno, "'snippet_id' must be a string");
    if (!ids.insert(sid->get<std::string>()).second) {
      throw IngestError(lineno, fmt::format("duplicate trace for snippet '{}'", sid->get<std::string>()));
    }
    try {
      fn(doc, lineno);
    } catch (const IngestError&) {
      throw;
    } catch (const AuditError& e) {
      throw IngestError(lineno, e.what());
    }
  }
}

}  // namespace

double min_k_score(const TokenTrace& trace, double k_percent) {
  validate(trace);
  if (!(k_percent > 0.0 && k_percent <= 100.0)) {
    throw AuditError(fmt::format("k_percent must be in (0, 100], got {}", k_percent));
  }
  const std::size_t total = trace.token_logprobs.size();
  // k * T / 100 keeps integer-valued products exact before the division.
  const auto m = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(k_percent * static_cast<double>(total) / 100.0)));
  std::vector<double> sorted(trace.token_logprobs.begin(), trace.token_logprobs.end());
  std::partial_sort(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(m), sorted.end());
  double acc = 0.0;
  for (std::size_t i = 0; i < m; ++i) acc += std::min(sorted[i], 0.0);
  return acc / static_cast<double>(m);
}

double neighbor_deviation(const NeighborTrace& trace, NeighborMode mode) {
  const auto& list = mode == NeighborMode::kLoss ? trace.neighbor_losses : trace.neighbor_ppls;
  if (list.empty()) {
    throw AuditError(fmt::format("snippet '{}': no neighbor {} values", trace.snippet_id,
                                 mode == NeighborMode::kLoss ? "loss" : "perplexity"));
  }
  const double target = mode == NeighborMode::kLoss ? trace.target_loss : trace.target_ppl;
  return target - mean(list);
}

std::map<std::string, std::vector<double>> baseline_feature_vectors(
    const std::vector<TokenTrace>& tokens, const std::vector<NeighborTrace>& neighbors,
    const BaselineOptions& options) {
  std::map<std::string, const NeighborTrace*> by_snippet;
  for (const auto& n : neighbors) by_snippet.emplace(n.snippet_id, &n);
  std::set<std::string> token_ids;
  for (const auto& t : tokens) token_ids.insert(t.snippet_id);

  std::vector<std::string> missing;
  for (const auto& t : tokens) {
    if (!by_snippet.count(t.snippet_id)) missing.push_back(t.snippet_id + " (neighbor trace)");
  }
  for (const auto& n : neighbors) {
    if (!token_ids.count(n.snippet_id)) missing.push_back(n.snippet_id + " (token trace)");
  }
  if (!missing.empty()) {
    std::sort(missing.begin(), missing.end());
    throw AuditError(fmt::format("missing traces for snippets: {}", fmt::join(missing, ", ")));
  }

  std::map<std::string, std::vector<double>> out;
  for (const auto& t : tokens) {
    const NeighborTrace& nb = *by_snippet.at(t.snippet_id);
    if (nb.neighbor_losses.size() != options.neighbors || nb.neighbor_ppls.size() != options.neighbors) {
      throw AuditError(fmt::format("snippet '{}': expected {} neighbors, got {} losses and {} perplexities",
                                   t.snippet_id, options.neighbors, nb.neighbor_losses.size(),
                                   nb.neighbor_ppls.size()));
    }
    std::vector<double> v;
    v.reserve(options.k_grid.size() + 2 * options.neighbors);
    for (double k : options.k_grid) v.push_back(min_k_score(t, k));
    for (const auto* list : {&nb.neighbor_losses, &nb.neighbor_ppls}) {
      const double target = list == &nb.neighbor_losses ? nb.target_loss : nb.target_ppl;
      std::vector<double> dev;
      for (double value : *list) dev.push_back(target - value);
      std::sort(dev.begin(), dev.end());
      v.insert(v.end(), dev.begin(), dev.end());
    }
    out.emplace(t.snippet_id, std::move(v));
  }
  return out;
}

std::vector<TokenTrace> read_token_traces(std::istream& in) {
  std::vector<TokenTrace> out;
  for_each_record(in, {"snippet_id", "token_logprobs"}, [&](const json& doc, std::size_t lineno) {
    TokenTrace t;
    t.snippet_id = doc["snippet_id"].get<std::string>();
    t.token_logprobs = numbers(doc, "token_logprobs", lineno);
    validate(t);
    for (double& v : t.token_logprobs) v = std::min(v, 0.0);
    out.push_back(std::move(t));
  });
  return out;
}

std::vector<NeighborTrace> read_neighbor_traces(std::istream& in) {
  std::vector<NeighborTrace> out;
  for_each_record(in, {"snippet_id", "target_loss", "target_ppl", "neighbor_losses", "neighbor_ppls"},
                  [&](const json& doc, std::size_t lineno) {
                    NeighborTrace t;
                    t.snippet_id = doc["snippet_id"].get<std::string>();
                    t.target_loss = number(doc, "target_loss", lineno);
                    t.target_ppl = number(doc, "target_ppl", lineno);
                    t.neighbor_losses = numbers(doc, "neighbor_losses", lineno);
                    t.neighbor_ppls = numbers(doc, "neighbor_ppls", lineno);
                    if (t.neighbor_losses.empty() || t.neighbor_losses.size() != t.neighbor_ppls.size()) {
                      throw IngestError(lineno, "neighbor lists must be non-empty and of equal length");
                    }
                    if (!(t.target_ppl > 0.0) ||
                        std::any_of(t.neighbor_ppls.begin(), t.neighbor_ppls.end(), [](double p) { return !(p > 0.0); })) {
                      throw IngestError(lineno, "perplexities must be positive");
                    }
                    out.push_back(std::move(t));
                  });
  return out;
}

std::string to_line(const TokenTrace& trace) {
  json doc = json::object();
  doc["snippet_id"] = trace.snippet_id;
  doc["token_logprobs"] = trace.token_logprobs;
  return doc.dump();
}

std::string to_line(const NeighborTrace& trace) {
  json doc = json::object();
  doc["snippet_id"] = trace.snippet_id;
  doc["target_loss"] = trace.target_loss;
  doc["target_ppl"] = trace.target_ppl;
  doc["neighbor_losses"] = trace.neighbor_losses;
  doc["neighbor_ppls"] = trace.neighbor_ppls;
  return doc.dump();
}

}  // namespace memaudit::baseline
