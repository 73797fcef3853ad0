#include "iplforge/decoder.hpp"

#include <cmath>

#include "iplforge/error.hpp"
#include "iplforge/features.hpp"
#include "iplforge/threading.hpp"

namespace iplforge {

DecodeResult greedy_decode(const Model& model, const Features& features,
                           int max_symbols_per_frame) {
  if (max_symbols_per_frame < 1) {
    throw DecodeError("max_symbols_per_frame must be at least 1");
  }
  const Mat encoded = encode_features(model, features);
  DecodeResult result;
  result.frames_consumed = static_cast<int>(encoded.rows);
  LabelState state = label_start(model);
  for (std::size_t t = 0; t < encoded.rows; ++t) {
    for (int emitted = 0; emitted < max_symbols_per_frame; ++emitted) {
      const std::vector<double> logits =
          joiner_logits(model, encoded.row(t), state);
      std::size_t best = 0;
      for (std::size_t v = 1; v < logits.size(); ++v) {
        if (logits[v] > logits[best]) best = v;
      }
      if (best == 0) break;
      double maxz = logits[0];
      for (double z : logits) maxz = std::max(maxz, z);
      double total = 0.0;
      for (double z : logits) total += std::exp(z - maxz);
      result.token_ids.push_back(static_cast<int>(best));
      result.token_logprobs.push_back(logits[best] - maxz - std::log(total));
      state = label_step(model, state, static_cast<int>(best));
    }
  }
  return result;
}

double certainty(const DecodeResult& result) {
  double total = 0.0;
  for (double lp : result.token_logprobs) total += lp;
  return total;
}

Manifest batch_decode(const Model& model, const Manifest& manifest,
                      const Vocab& vocab, const std::string& stage_ref,
                      int max_symbols_per_frame) {
  if (vocab.size() != model.arch.vocab_size + 1) {
    throw DecodeError("vocab has " + std::to_string(vocab.size()) +
                      " tokens but model expects " +
                      std::to_string(model.arch.vocab_size + 1));
  }
  Manifest out;
  out.base_dir = manifest.base_dir;
  out.records = manifest.records;
  parallel_for(out.records.size(), [&](std::size_t i) {
    UttRecord& rec = out.records[i];
    Features features;
    try {
      features = load_features(manifest.feature_file(rec));
    } catch (const Error& e) {
      throw DecodeError(rec.utt_id + ": " + e.what());
    }
    const DecodeResult result =
        greedy_decode(model, features, max_symbols_per_frame);
    rec.transcript = decode_tokens(vocab, result.token_ids);
    rec.source = TranscriptSource::pseudo(stage_ref);
    rec.certainty = certainty(result);
  });
  return out;
}

}  // namespace iplforge
