#include "iplforge/manifest.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "iplforge/error.hpp"

namespace iplforge {

namespace fs = std::filesystem;

std::string to_string(const TranscriptSource& source) {
  switch (source.kind) {
    case TranscriptSource::kTruth:
      return "truth";
    case TranscriptSource::kReference:
      return "reference";
    case TranscriptSource::kPseudo:
      return "pseudo:" + source.stage_ref;
  }
  throw DataError("unknown transcript source kind");
}

TranscriptSource parse_source(const std::string& text) {
  if (text == "truth") return TranscriptSource::truth();
  if (text == "reference") return TranscriptSource::reference();
  if (text.rfind("pseudo:", 0) == 0 && text.size() > 7) {
    return TranscriptSource::pseudo(text.substr(7));
  }
  throw DataError("bad transcript source: '" + text + "'");
}

void Manifest::validate() const {
  std::unordered_set<std::string> seen;
  seen.reserve(records.size());
  for (const auto& rec : records) {
    if (!seen.insert(rec.utt_id).second) {
      throw DataError("duplicate utt_id in manifest: " + rec.utt_id);
    }
    bool is_pseudo = rec.source.kind == TranscriptSource::kPseudo;
    if (is_pseudo != rec.certainty.has_value()) {
      throw DataError("certainty must be present iff source is pseudo: " +
                      rec.utt_id);
    }
  }
}

fs::path Manifest::feature_file(const UttRecord& record) const {
  fs::path p(record.feature_path);
  if (p.is_absolute() || base_dir.empty()) return p;
  return base_dir / p;
}

namespace {

std::string format_certainty(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", value);
  return buf;
}

// Relative path from `dir` to the record's feature file, lexically; falls
// back to the absolute path when the two trees do not share a root.
std::string rebase_feature_path(const Manifest& manifest,
                                const UttRecord& record, const fs::path& dir) {
  fs::path abs_target = manifest.feature_file(record);
  if (!abs_target.is_absolute()) {
    // No base dir known; keep the stored path untouched.
    return record.feature_path;
  }
  fs::path abs_dir = fs::absolute(dir).lexically_normal();
  abs_target = fs::absolute(abs_target).lexically_normal();
  fs::path rel = abs_target.lexically_relative(abs_dir);
  if (rel.empty()) return abs_target.generic_string();
  return rel.generic_string();
}

}  // namespace

void save_manifest(const fs::path& path, const Manifest& manifest) {
  manifest.validate();
  fs::path dir = path.parent_path().empty() ? fs::path(".") : path.parent_path();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write manifest: " + path.string());
  for (const auto& rec : manifest.records) {
    out << rec.utt_id << '\t' << rec.lang << '\t'
        << rebase_feature_path(manifest, rec, dir) << '\t' << rec.transcript
        << '\t' << to_string(rec.source) << '\t'
        << (rec.certainty ? format_certainty(*rec.certainty) : "") << '\n';
  }
  if (!out.flush()) throw DataError("write failed: " + path.string());
}

Manifest load_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read manifest: " + path.string());
  Manifest manifest;
  manifest.base_dir =
      path.parent_path().empty() ? fs::path(".") : path.parent_path();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      std::size_t tab = line.find('\t', start);
      if (tab == std::string::npos) {
        fields.push_back(line.substr(start));
        break;
      }
      fields.push_back(line.substr(start, tab - start));
      start = tab + 1;
    }
    if (fields.size() != 6) {
      throw DataError("manifest " + path.string() + " line " +
                      std::to_string(lineno) + ": expected 6 fields, got " +
                      std::to_string(fields.size()));
    }
    UttRecord rec;
    rec.utt_id = fields[0];
    rec.lang = fields[1];
    rec.feature_path = fields[2];
    rec.transcript = fields[3];
    rec.source = parse_source(fields[4]);
    if (!fields[5].empty()) {
      double value = 0.0;
      auto [ptr, ec] = std::from_chars(
          fields[5].data(), fields[5].data() + fields[5].size(), value);
      if (ec != std::errc() || ptr != fields[5].data() + fields[5].size()) {
        throw DataError("manifest " + path.string() + " line " +
                        std::to_string(lineno) + ": bad certainty '" +
                        fields[5] + "'");
      }
      rec.certainty = value;
    }
    manifest.records.push_back(std::move(rec));
  }
  manifest.validate();
  return manifest;
}

}  // namespace iplforge
