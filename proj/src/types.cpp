#include "memaudit/types.hpp"

#include <fmt/format.h>

namespace memaudit {

IngestError::IngestError(std::size_t line, const std::string& what)
    : AuditError(fmt::format("line {}: {}", line, what)), line_(line) {}

Label label_from_int(long long v) {
  if (v == 0) return Label::kUnseen;
  if (v == 1) return Label::kSeen;
  throw AuditError(fmt::format("label must be 0 or 1, got {}", v));
}

std::string_view to_string(Detector d) {
  switch (d) {
    case Detector::kGmm: return "gmm";
    case Detector::kHc: return "hc";
    case Detector::kKmeans: return "kmeans";
    case Detector::kDbscan: return "dbscan";
    case Detector::kIforest: return "iforest";
  }
  return "?";
}

Detector parse_detector(std::string_view name) {
  for (Detector d : kAllDetectors) {
    if (to_string(d) == name) return d;
  }
  throw AuditError(fmt::format("unknown detector '{}'", name));
}

std::string_view to_string(Verdict v) { return v == Verdict::kSeen ? "seen" : "unseen"; }

Verdict parse_verdict(std::string_view name) {
  if (name == "seen") return Verdict::kSeen;
  if (name == "unseen") return Verdict::kUnseen;
  throw AuditError(fmt::format("unknown verdict '{}'", name));
}

}  // namespace memaudit
