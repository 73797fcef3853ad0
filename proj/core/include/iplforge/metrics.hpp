#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace iplforge {

// Word-level error counts of one hypothesis against one reference.
struct WerBreakdown {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t ref_words = 0;

  std::size_t total_errors() const {
    return substitutions + deletions + insertions;
  }
  double wer() const;  // errors / ref_words; MetricError when ref_words == 0
};

// Splits on runs of spaces after trimming; no case folding or punctuation
// handling.
std::vector<std::string> split_words(std::string_view text);

// Minimal (S, D, I) under unit costs. Among cost-minimal alignments the
// result has the fewest insertions, then the fewest deletions.
WerBreakdown edit_distance(const std::vector<std::string>& ref,
                           const std::vector<std::string>& hyp);
WerBreakdown edit_distance(std::string_view ref, std::string_view hyp);

// Sum of errors over sum of reference words. May exceed 1 when insertions
// dominate.
double corpus_wer(const std::vector<std::pair<std::string, std::string>>& pairs);

// Relative word error rate reduction in percent versus a fixed reference
// system; negative when the model is worse.
double werr(double wer_reference, double wer_model);

}  // namespace iplforge
