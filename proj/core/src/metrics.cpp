#include "iplforge/metrics.hpp"

#include <cstdint>

#include "iplforge/error.hpp"

namespace iplforge {

double WerBreakdown::wer() const {
  if (ref_words == 0) throw MetricError("wer: zero reference words");
  return static_cast<double>(total_errors()) / static_cast<double>(ref_words);
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && text[i] == ' ') ++i;
    std::size_t start = i;
    while (i < text.size() && text[i] != ' ') ++i;
    if (i > start) words.emplace_back(text.substr(start, i - start));
  }
  return words;
}

namespace {

// DP state: lexicographically minimized (total errors, insertions,
// deletions). Component-wise addition preserves the order, so the usual
// Levenshtein recurrence applies to the triple directly and no backtrace
// is needed.
struct Cost {
  std::uint32_t total;
  std::uint32_t ins;
  std::uint32_t del;

  bool operator<(const Cost& o) const {
    if (total != o.total) return total < o.total;
    if (ins != o.ins) return ins < o.ins;
    return del < o.del;
  }
  Cost operator+(const Cost& o) const {
    return {total + o.total, ins + o.ins, del + o.del};
  }
};

}  // namespace

WerBreakdown edit_distance(const std::vector<std::string>& ref,
                           const std::vector<std::string>& hyp) {
  const std::size_t m = ref.size();
  const std::size_t n = hyp.size();
  std::vector<Cost> prev(n + 1), cur(n + 1);
  for (std::size_t j = 0; j <= n; ++j) {
    prev[j] = {static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(j), 0};
  }
  for (std::size_t i = 1; i <= m; ++i) {
    cur[0] = {static_cast<std::uint32_t>(i), 0, static_cast<std::uint32_t>(i)};
    for (std::size_t j = 1; j <= n; ++j) {
      Cost sub = prev[j - 1] + Cost{ref[i - 1] == hyp[j - 1] ? 0u : 1u, 0, 0};
      Cost del = prev[j] + Cost{1, 0, 1};
      Cost ins = cur[j - 1] + Cost{1, 1, 0};
      Cost best = sub;
      if (del < best) best = del;
      if (ins < best) best = ins;
      cur[j] = best;
    }
    std::swap(prev, cur);
  }
  const Cost& c = prev[n];
  WerBreakdown out;
  out.ref_words = m;
  out.insertions = c.ins;
  out.deletions = c.del;
  out.substitutions = c.total - c.ins - c.del;
  return out;
}

WerBreakdown edit_distance(std::string_view ref, std::string_view hyp) {
  return edit_distance(split_words(ref), split_words(hyp));
}

double corpus_wer(
    const std::vector<std::pair<std::string, std::string>>& pairs) {
  std::size_t errors = 0;
  std::size_t ref_words = 0;
  for (const auto& [ref, hyp] : pairs) {
    WerBreakdown b = edit_distance(ref, hyp);
    errors += b.total_errors();
    ref_words += b.ref_words;
  }
  if (ref_words == 0) throw MetricError("corpus_wer: zero reference words");
  return static_cast<double>(errors) / static_cast<double>(ref_words);
}

double werr(double wer_reference, double wer_model) {
  if (!(wer_reference > 0.0)) {
    throw MetricError("werr: reference WER must be positive");
  }
  return 100.0 * (wer_reference - wer_model) / wer_reference;
}

}  // namespace iplforge
