#include "memaudit/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <tuple>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "json.hpp"

namespace memaudit {
namespace {

using nlohmann::json;

bool blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

json parse_line(const std::string& line, std::size_t lineno) {
  json doc;
  try {
    doc = json::parse(line);
  } catch (const json::parse_error& e) {
    throw IngestError(lineno, fmt::format("malformed JSON: {}", e.what()));
  }
  if (!doc.is_object()) throw IngestError(lineno, "record is not a JSON object");
  return doc;
}

void check_keys(const json& doc, std::initializer_list<const char*> allowed, std::size_t lineno) {
  for (const auto& item : doc.items()) {
    if (std::none_of(allowed.begin(), allowed.end(),
                     [&](const char* k) { return item.key() == k; })) {
      throw IngestError(lineno, fmt::format("unexpected key '{}'", item.key()));
    }
  }
}

std::string get_string(const json& doc, const char* key, std::size_t lineno) {
  auto it = doc.find(key);
  if (it == doc.end()) throw IngestError(lineno, fmt::format("missing key '{}'", key));
  if (!it->is_string()) throw IngestError(lineno, fmt::format("'{}' must be a string", key));
  auto s = it->get<std::string>();
  if (s.empty()) throw IngestError(lineno, fmt::format("'{}' must be non-empty", key));
  return s;
}

Label get_label(const json& value, const char* key, std::size_t lineno) {
  if (!value.is_number_integer()) {
    throw IngestError(lineno, fmt::format("'{}' must be 0 or 1", key));
  }
  auto v = value.get<long long>();
  if (v != 0 && v != 1) throw IngestError(lineno, fmt::format("'{}' must be 0 or 1", key));
  return label_from_int(v);
}

struct RawRecord {
  std::string file_id;
  PredictionSet set;
  std::size_t line = 0;
};

RawRecord parse_record(const std::string& line, std::size_t lineno, double tol) {
  json doc = parse_line(line, lineno);
  check_keys(doc, {"file_id", "snippet_id", "estimator_id", "pseudo_label", "probs"}, lineno);
  RawRecord rec;
  rec.line = lineno;
  rec.file_id = get_string(doc, "file_id", lineno);
  rec.set.snippet_id = get_string(doc, "snippet_id", lineno);
  rec.set.estimator_id = get_string(doc, "estimator_id", lineno);
  auto lab = doc.find("pseudo_label");
  if (lab == doc.end()) throw IngestError(lineno, "missing key 'pseudo_label'");
  rec.set.pseudo_label = get_label(*lab, "pseudo_label", lineno);

  auto probs = doc.find("probs");
  if (probs == doc.end()) throw IngestError(lineno, "missing key 'probs'");
  if (!probs->is_array()) throw IngestError(lineno, "'probs' must be an array");
  rec.set.probs.reserve(probs->size());
  for (const auto& v : *probs) {
    if (!v.is_number()) throw IngestError(lineno, "'probs' must contain numbers only");
    double p = v.get<double>();
    if (!std::isfinite(p) || p < -tol || p > 1.0 + tol) {
      throw IngestError(lineno, fmt::format("probability {} outside [0,1]", p));
    }
    rec.set.probs.push_back(std::clamp(p, 0.0, 1.0));
  }
  if (rec.set.probs.size() < 2) {
    throw IngestError(lineno, fmt::format("snippet '{}' has {} predictions, need at least 2",
                                          rec.set.snippet_id, rec.set.probs.size()));
  }
  return rec;
}

}  // namespace

const FileManifest* IngestedData::manifest(const std::string& file_id) const {
  auto it = std::lower_bound(manifests.begin(), manifests.end(), file_id,
                             [](const FileManifest& m, const std::string& id) { return m.file_id < id; });
  return it != manifests.end() && it->file_id == file_id ? &*it : nullptr;
}

std::vector<FileManifest> read_manifest(std::istream& in, bool require_declared) {
  std::vector<FileManifest> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    json doc = parse_line(line, lineno);
    check_keys(doc, {"file_id", "declared_label", "truth_label"}, lineno);
    FileManifest m;
    m.file_id = get_string(doc, "file_id", lineno);
    if (auto it = doc.find("declared_label"); it != doc.end()) {
      m.declared_label = get_label(*it, "declared_label", lineno);
    } else if (require_declared) {
      throw IngestError(lineno, "missing key 'declared_label'");
    }
    if (auto it = doc.find("truth_label"); it != doc.end() && !it->is_null()) {
      m.truth_label = get_label(*it, "truth_label", lineno);
    }
    if (!seen.insert(m.file_id).second) {
      throw IngestError(lineno, fmt::format("duplicate manifest entry for file '{}'", m.file_id));
    }
    out.push_back(std::move(m));
  }
  std::sort(out.begin(), out.end(),
            [](const FileManifest& a, const FileManifest& b) { return a.file_id < b.file_id; });
  return out;
}

IngestedData ingest_records(std::istream& records, std::istream* manifest,
                            const IngestOptions& options) {
  std::vector<RawRecord> raw;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(records, line)) {
    ++lineno;
    if (blank(line)) continue;
    raw.push_back(parse_record(line, lineno, options.clamp_tolerance));
    const auto& s = raw.back().set;
    if (options.expected_n != 0 && s.probs.size() != options.expected_n) {
      throw IngestError(lineno, fmt::format("snippet '{}' has {} predictions, expected {}",
                                            s.snippet_id, s.probs.size(), options.expected_n));
    }
  }

  std::sort(raw.begin(), raw.end(), [](const RawRecord& a, const RawRecord& b) {
    return std::tie(a.set.snippet_id, a.set.estimator_id) <
           std::tie(b.set.snippet_id, b.set.estimator_id);
  });

  IngestedData data;
  std::map<std::string, Label> snippet_label;
  std::map<std::string, std::set<std::string>> snippet_estimators;
  std::set<std::string> all_estimators;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const RawRecord& r = raw[i];
    if (i > 0 && raw[i - 1].set.snippet_id == r.set.snippet_id &&
        raw[i - 1].set.estimator_id == r.set.estimator_id) {
      auto first = std::min(raw[i - 1].line, r.line);
      auto second = std::max(raw[i - 1].line, r.line);
      throw IngestError(second, fmt::format("duplicate record for (snippet '{}', estimator '{}'), first seen on line {}",
                                            r.set.snippet_id, r.set.estimator_id, first));
    }
    auto [fit, fresh] = data.snippet_file.emplace(r.set.snippet_id, r.file_id);
    if (!fresh && fit->second != r.file_id) {
      throw IngestError(r.line, fmt::format("snippet '{}' referenced by files '{}' and '{}'",
                                            r.set.snippet_id, fit->second, r.file_id));
    }
    auto [lit, lfresh] = snippet_label.emplace(r.set.snippet_id, r.set.pseudo_label);
    if (!lfresh && lit->second != r.set.pseudo_label) {
      throw IngestError(r.line, fmt::format("snippet '{}' has inconsistent pseudo_label across estimators",
                                            r.set.snippet_id));
    }
    snippet_estimators[r.set.snippet_id].insert(r.set.estimator_id);
    all_estimators.insert(r.set.estimator_id);
    data.sets.push_back(r.set);
  }
  if (data.sets.empty()) throw AuditError("no probability records in input");

  data.estimators = options.estimators.empty()
                        ? std::vector<std::string>(all_estimators.begin(), all_estimators.end())
                        : options.estimators;
  for (const auto& [snippet, have] : snippet_estimators) {
    std::vector<std::string> missing;
    for (const auto& e : data.estimators) {
      if (!have.count(e)) missing.push_back(e);
    }
    if (!missing.empty()) {
      throw AuditError(fmt::format("snippet '{}' is missing estimators: {}", snippet,
                                   fmt::join(missing, ", ")));
    }
  }
  if (!options.estimators.empty()) {
    // Records for estimators outside the configured set are not used.
    std::set<std::string> wanted(options.estimators.begin(), options.estimators.end());
    std::erase_if(data.sets, [&](const PredictionSet& s) { return !wanted.count(s.estimator_id); });
  }

  std::map<std::string, FileManifest> files;
  for (const auto& [snippet, file] : data.snippet_file) {
    auto& m = files[file];
    m.file_id = file;
    m.snippet_ids.push_back(snippet);  // map order keeps these sorted
  }

  if (manifest != nullptr) {
    auto declared = read_manifest(*manifest, true);
    for (auto& d : declared) {
      auto it = files.find(d.file_id);
      if (it == files.end()) {
        throw AuditError(fmt::format("manifest file '{}' has no snippet records", d.file_id));
      }
      it->second.declared_label = d.declared_label;
      it->second.truth_label = d.truth_label;
    }
    if (declared.size() != files.size()) {
      for (const auto& [id, m] : files) {
        bool listed = std::any_of(declared.begin(), declared.end(),
                                  [&](const FileManifest& d) { return d.file_id == id; });
        if (!listed) throw AuditError(fmt::format("file '{}' is missing from the manifest", id));
      }
    }
  }
  for (auto& [id, m] : files) {
    const Label first = snippet_label.at(m.snippet_ids.front());
    for (const auto& s : m.snippet_ids) {
      if (snippet_label.at(s) != first) {
        throw AuditError(fmt::format("file '{}' mixes pseudo-labels across snippets", id));
      }
    }
    if (manifest == nullptr) {
      m.declared_label = first;
    } else if (m.declared_label != first) {
      throw AuditError(fmt::format("file '{}' declared_label {} disagrees with snippet pseudo_label {}",
                                   id, to_int(m.declared_label), to_int(first)));
    }
    data.manifests.push_back(std::move(m));
  }
  return data;
}

std::string to_record_line(const std::string& file_id, const PredictionSet& set) {
  json doc = json::object();
  doc["file_id"] = file_id;
  doc["snippet_id"] = set.snippet_id;
  doc["estimator_id"] = set.estimator_id;
  doc["pseudo_label"] = to_int(set.pseudo_label);
  doc["probs"] = set.probs;
  return doc.dump();
}

std::string to_manifest_line(const FileManifest& manifest, bool include_truth) {
  json doc = json::object();
  doc["file_id"] = manifest.file_id;
  doc["declared_label"] = to_int(manifest.declared_label);
  if (include_truth && manifest.truth_label) {
    doc["truth_label"] = to_int(*manifest.truth_label);
  } else {
    doc["truth_label"] = nullptr;
  }
  return doc.dump();
}

void write_records(std::ostream& out, const IngestedData& data) {
  for (const auto& s : data.sets) {
    out << to_record_line(data.snippet_file.at(s.snippet_id), s) << '\n';
  }
}

}  // namespace memaudit
