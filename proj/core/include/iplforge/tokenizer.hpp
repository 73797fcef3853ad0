#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "iplforge/manifest.hpp"

namespace iplforge {

// Word-boundary marker prefixed to every word before merging (U+2581).
inline constexpr const char* kBoundaryMarker = "\xE2\x96\x81";
inline constexpr const char* kBlankToken = "<blank>";
inline constexpr const char* kUnknownToken = "<unk>";

// A trained BPE inventory. Token ids are indices into `tokens`; id 0 is the
// blank symbol reserved for the transducer and never produced by encode.
struct Vocab {
  static constexpr int kBlankId = 0;

  struct Merge {
    int left = 0;
    int right = 0;
    int product = 0;  // id of the concatenated string
  };

  std::vector<std::string> tokens;
  std::vector<Merge> merges;
  int unk_id = 1;
  int boundary_id = 2;

  int size() const { return static_cast<int>(tokens.size()); }
  int id_of(const std::string& token) const;  // -1 when absent

  // Checks structural invariants (blank at 0, unique tokens, merge parts
  // precede their product) and rebuilds the string-to-id index.
  void finalize();

 private:
  std::unordered_map<std::string, int> index_;
};

// Concatenates every transcript of every manifest, one utterance per line,
// languages in map order. No language tags are emitted.
std::string pool_transcripts(const std::map<std::string, Manifest>& manifests);

// Byte-pair encoding over whitespace-separated words, each prefixed with the
// boundary marker. Merges the most frequent adjacent pair (ties: smaller pair
// lexicographically) until `vocab_size` tokens exist or no pair occurs twice.
Vocab train_bpe(const std::string& corpus, int vocab_size);

// Splits text into words, boundary-prefixes each, and replays the merge list
// greedily left to right. Unknown characters become the unknown token.
std::vector<int> encode(const Vocab& vocab, const std::string& text);

// Inverse of encode for known text: boundary markers turn into spaces and the
// result is trimmed. Blank or out-of-range ids raise TokenizerError.
std::string decode_tokens(const Vocab& vocab, const std::vector<int>& ids);

void save_vocab(const std::filesystem::path& path, const Vocab& vocab);
Vocab load_vocab(const std::filesystem::path& path);

}  // namespace iplforge
