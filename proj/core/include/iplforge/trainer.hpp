#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "iplforge/manifest.hpp"
#include "iplforge/tokenizer.hpp"
#include "iplforge/transducer.hpp"

namespace iplforge {

struct TrainConfig {
  int steps = 0;
  int batch_size = 8;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double grad_clip_norm = 5.0;
  int eval_every = 100;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainReport {
  struct Checkpoint {
    long long step = 0;
    std::filesystem::path path;
    double dev_wer = 0.0;
  };
  std::vector<Checkpoint> checkpoints;
  long long best_step = 0;
  double best_dev_wer = 0.0;
};

void save_train_report(const std::filesystem::path& path,
                       const TrainReport& report);

struct TrainOutcome {
  Model best_model;
  TrainReport report;
};

// Adam-style minibatch training with per-epoch seeded shuffling; batches run
// at full size and may span epoch boundaries. Checkpoints (and dev WER via
// greedy decoding) are taken at step 0, every eval_every steps, and at the
// final step; the checkpoint with the lowest dev WER (earliest on ties) is
// reloaded and returned. Checkpoints are written under out_dir.
TrainOutcome train(const Model& init, const Manifest& train_manifest,
                   const Manifest& dev_manifest, const Vocab& vocab,
                   const TrainConfig& cfg,
                   const std::filesystem::path& out_dir);

// Greedy-decodes every record and returns corpus WER against the manifest's
// transcripts.
double evaluate(const Model& model, const Manifest& manifest,
                const Vocab& vocab);

}  // namespace iplforge
