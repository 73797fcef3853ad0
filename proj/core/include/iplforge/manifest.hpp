#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace iplforge {

// Where a transcript came from: ground truth, the simulated hybrid
// transcriber, or a pseudo-labeling pass (tagged with the producing stage).
struct TranscriptSource {
  enum Kind { kTruth, kReference, kPseudo };
  Kind kind = kTruth;
  std::string stage_ref;  // set iff kind == kPseudo

  static TranscriptSource truth() { return {kTruth, {}}; }
  static TranscriptSource reference() { return {kReference, {}}; }
  static TranscriptSource pseudo(std::string stage) {
    return {kPseudo, std::move(stage)};
  }

  bool operator==(const TranscriptSource&) const = default;
};

std::string to_string(const TranscriptSource& source);
TranscriptSource parse_source(const std::string& text);

struct UttRecord {
  std::string utt_id;
  std::string lang;
  std::string feature_path;  // relative to the manifest's directory
  std::string transcript;
  TranscriptSource source;
  std::optional<double> certainty;  // present iff source is pseudo

  bool operator==(const UttRecord&) const = default;
};

// Ordered record list; the unit of dataset plumbing.
struct Manifest {
  std::vector<UttRecord> records;

  // Directory feature paths are relative to. Set by load_manifest and the
  // dataset generator; not serialized and ignored by comparisons.
  std::filesystem::path base_dir;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }

  std::filesystem::path feature_file(const UttRecord& record) const;

  // utt_id uniqueness; certainty present iff pseudo source.
  void validate() const;
};

// UTF-8 TSV, one record per line:
//   utt_id<TAB>lang<TAB>feature_path<TAB>transcript<TAB>source<TAB>certainty
// with certainty empty when absent and printed with 6 fractional digits.
// Feature paths are rewritten relative to the target file's directory.
void save_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest load_manifest(const std::filesystem::path& path);

}  // namespace iplforge
