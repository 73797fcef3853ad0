#pragma once

#include <string>
#include <vector>

#include "iplforge/manifest.hpp"
#include "iplforge/tokenizer.hpp"
#include "iplforge/transducer.hpp"

namespace iplforge {

struct DecodeResult {
  std::vector<int> token_ids;          // never contains blank
  std::vector<double> token_logprobs;  // log-softmax value of each emission
  int frames_consumed = 0;             // downsampled frame count
};

// Frame-synchronous greedy search: per frame, emit argmax tokens until blank
// wins or the per-frame cap is reached. Ties break to the lowest index, so an
// all-zero model emits nothing.
DecodeResult greedy_decode(const Model& model, const Features& features,
                           int max_symbols_per_frame = 4);

// Sum of emitted token log-probabilities; 0 for an empty hypothesis.
double certainty(const DecodeResult& result);

// Decodes every record of the manifest, replacing transcripts with decoded
// text, source with pseudo:stage_ref, and certainty with the score above.
Manifest batch_decode(const Model& model, const Manifest& manifest,
                      const Vocab& vocab, const std::string& stage_ref,
                      int max_symbols_per_frame = 4);

}  // namespace iplforge
