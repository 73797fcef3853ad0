#include "iplforge/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "iplforge/decoder.hpp"
#include "iplforge/error.hpp"
#include "iplforge/features.hpp"
#include "iplforge/metrics.hpp"
#include "iplforge/rng.hpp"
#include "iplforge/threading.hpp"

namespace iplforge {

void TrainConfig::validate() const {
  if (steps < 0) throw TrainingError("steps must be non-negative");
  if (batch_size < 1) throw TrainingError("batch_size must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0)) {
    throw TrainingError("beta1 and beta2 must lie in (0,1)");
  }
  if (learning_rate < 0.0) {
    throw TrainingError("learning_rate must be non-negative");
  }
  if (epsilon <= 0.0) throw TrainingError("epsilon must be positive");
  if (grad_clip_norm <= 0.0) {
    throw TrainingError("grad_clip_norm must be positive");
  }
  if (eval_every < 1) throw TrainingError("eval_every must be positive");
}

void save_train_report(const std::filesystem::path& path,
                       const TrainReport& report) {
  std::ofstream out(path);
  if (!out) throw TrainingError("cannot write report: " + path.string());
  const std::filesystem::path base = path.parent_path();
  char wer[32];
  for (const auto& ckpt : report.checkpoints) {
    // Checkpoints live next to the report; store them relative to it so a
    // rerun in a different directory produces byte-identical output.
    const std::filesystem::path rel = ckpt.path.lexically_relative(base);
    std::snprintf(wer, sizeof(wer), "%.6f", ckpt.dev_wer);
    out << ckpt.step << '\t'
        << (rel.empty() ? ckpt.path : rel).generic_string() << '\t' << wer
        << '\n';
  }
  std::snprintf(wer, sizeof(wer), "%.6f", report.best_dev_wer);
  out << "best\t" << report.best_step << '\t' << wer << '\n';
  if (!out.flush()) {
    throw TrainingError("cannot write report: " + path.string());
  }
}

double evaluate(const Model& model, const Manifest& manifest,
                const Vocab& vocab) {
  if (manifest.records.empty()) {
    throw MetricError("cannot evaluate an empty manifest");
  }
  const Manifest decoded = batch_decode(model, manifest, vocab, "eval");
  std::vector<std::pair<std::string, std::string>> pairs;
  pairs.reserve(manifest.records.size());
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    pairs.emplace_back(manifest.records[i].transcript,
                       decoded.records[i].transcript);
  }
  return corpus_wer(pairs);
}

namespace {

std::string batch_ids(const Manifest& manifest,
                      const std::vector<std::size_t>& batch) {
  std::string ids;
  for (std::size_t i : batch) {
    if (!ids.empty()) ids += ", ";
    ids += manifest.records[i].utt_id;
  }
  return ids;
}

std::filesystem::path checkpoint_path(const std::filesystem::path& out_dir,
                                      long long step) {
  char name[32];
  std::snprintf(name, sizeof(name), "step-%06lld.ckpt", step);
  return out_dir / name;
}

}  // namespace

TrainOutcome train(const Model& init, const Manifest& train_manifest,
                   const Manifest& dev_manifest, const Vocab& vocab,
                   const TrainConfig& cfg,
                   const std::filesystem::path& out_dir) {
  cfg.validate();
  if (train_manifest.records.empty()) {
    throw TrainingError("training manifest is empty");
  }
  if (vocab.size() != init.arch.vocab_size + 1) {
    throw TrainingError("vocab has " + std::to_string(vocab.size()) +
                        " tokens but model expects " +
                        std::to_string(init.arch.vocab_size + 1));
  }
  for (const auto& rec : dev_manifest.records) {
    if (rec.source.kind != TranscriptSource::kTruth) {
      throw TrainingError("dev record " + rec.utt_id +
                          " does not carry a truth transcript");
    }
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw TrainingError("cannot create directory: " + out_dir.string());

  const std::size_t n = train_manifest.records.size();
  std::vector<Features> features(n);
  std::vector<std::vector<int>> labels(n);
  parallel_for(n, [&](std::size_t i) {
    const UttRecord& rec = train_manifest.records[i];
    features[i] = load_features(train_manifest.feature_file(rec));
    labels[i] = encode(vocab, rec.transcript);
  });

  Model model = init;
  Model m1 = zeros_like(model);
  Model m2 = zeros_like(model);

  TrainReport report;
  auto take_checkpoint = [&](long long step) {
    const auto path = checkpoint_path(out_dir, step);
    save_model(path, model);
    const double dev_wer = evaluate(model, dev_manifest, vocab);
    report.checkpoints.push_back({step, path, dev_wer});
    std::cerr << "[train] step " << step << "/" << cfg.steps << " dev_wer "
              << dev_wer << "\n";
  };
  take_checkpoint(0);

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::size_t cursor = n;  // forces a shuffle before the first batch
  int epoch = 0;
  std::vector<Model> utt_grads(static_cast<std::size_t>(cfg.batch_size));
  std::vector<double> utt_losses(static_cast<std::size_t>(cfg.batch_size));

  for (long long step = 1; step <= cfg.steps; ++step) {
    std::vector<std::size_t> batch;
    batch.reserve(static_cast<std::size_t>(cfg.batch_size));
    while (batch.size() < static_cast<std::size_t>(cfg.batch_size)) {
      if (cursor == n) {
        Rng rng(derive_seed(cfg.seed, "shuffle", epoch++));
        rng.shuffle(order);
        cursor = 0;
      }
      batch.push_back(order[cursor++]);
    }

    parallel_for(batch.size(), [&](std::size_t b) {
      const std::size_t i = batch[b];
      const ForwardTrace trace = forward_trace(model, features[i], labels[i]);
      const LossResult loss = transducer_loss(trace.lattice, labels[i]);
      utt_losses[b] = loss.nll;
      utt_grads[b] = backward(model, trace, labels[i], loss.grad);
    });

    double batch_loss = 0.0;
    for (double l : utt_losses) batch_loss += l;
    if (!std::isfinite(batch_loss)) {
      throw TrainingError("non-finite loss at step " + std::to_string(step) +
                          " (utts: " + batch_ids(train_manifest, batch) + ")");
    }

    Model grads = zeros_like(model);
    for (const Model& g : utt_grads) {
      for (std::size_t b = 0; b < grads.blocks.size(); ++b) {
        auto& dst = grads.blocks[b].values;
        const auto& src = g.blocks[b].values;
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
      }
    }
    const double norm = global_norm(grads);
    if (norm > cfg.grad_clip_norm) {
      const double scale = cfg.grad_clip_norm / norm;
      for (auto& block : grads.blocks) {
        for (double& v : block.values) v *= scale;
      }
    }

    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (std::size_t b = 0; b < model.blocks.size(); ++b) {
      auto& p = model.blocks[b].values;
      auto& m = m1.blocks[b].values;
      auto& v = m2.blocks[b].values;
      const auto& g = grads.blocks[b].values;
      for (std::size_t k = 0; k < p.size(); ++k) {
        m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
        v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
        const double mhat = m[k] / bc1;
        const double vhat = v[k] / bc2;
        p[k] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
      }
    }
    if (!model.finite()) {
      throw TrainingError("non-finite parameters after step " +
                          std::to_string(step) +
                          " (utts: " + batch_ids(train_manifest, batch) + ")");
    }

    if (step % cfg.eval_every == 0 || step == cfg.steps) {
      take_checkpoint(step);
    }
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < report.checkpoints.size(); ++i) {
    if (report.checkpoints[i].dev_wer < report.checkpoints[best].dev_wer) {
      best = i;
    }
  }
  report.best_step = report.checkpoints[best].step;
  report.best_dev_wer = report.checkpoints[best].dev_wer;

  TrainOutcome outcome;
  outcome.best_model = load_model(report.checkpoints[best].path);
  outcome.report = std::move(report);
  return outcome;
}

}  // namespace iplforge
