// Command-line front end: every capability of the library behind one binary.
// Exit codes: 0 success, 1 usage error, 2 runtime error.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "iplforge/config.hpp"
#include "iplforge/corpus.hpp"
#include "iplforge/decoder.hpp"
#include "iplforge/error.hpp"
#include "iplforge/manifest.hpp"
#include "iplforge/pipeline.hpp"
#include "iplforge/rng.hpp"
#include "iplforge/threading.hpp"
#include "iplforge/tokenizer.hpp"
#include "iplforge/trainer.hpp"
#include "iplforge/transducer.hpp"

namespace {

namespace fs = std::filesystem;
using namespace iplforge;

// IPLFORGE_SEED stands in for --seed when the flag is absent.
std::uint64_t resolve_seed(const CLI::Option* seed_opt, std::uint64_t flag_value,
                           std::uint64_t fallback) {
  if (seed_opt != nullptr && seed_opt->count() > 0) return flag_value;
  if (const char* env = std::getenv("IPLFORGE_SEED")) {
    try {
      std::size_t used = 0;
      const std::string text(env);
      const std::uint64_t value = std::stoull(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
      return value;
    } catch (const std::exception&) {
      throw CLI::ValidationError("IPLFORGE_SEED",
                                 "must be an unsigned integer");
    }
  }
  return fallback;
}

void announce_seed(std::uint64_t seed) {
  std::cerr << "seed " << seed << "\n";
}

const ConfigBlock& find_block(const std::vector<ConfigBlock>& blocks,
                              const std::string& kind) {
  for (const auto& block : blocks) {
    if (block.kind == kind) return block;
  }
  throw ConfigError("missing '" + kind + "' block");
}

struct GenDataArgs {
  std::string config;
  std::string out;
  std::uint64_t seed = 1;
  CLI::Option* seed_opt = nullptr;
};

struct TrainTokenizerArgs {
  std::vector<std::string> manifests;
  int size = 0;
  std::string out;
};

struct TrainArgs {
  std::string arch;
  std::string train;
  std::string dev;
  std::string vocab;
  std::string cfg;
  std::string out;
  std::string warm_start;
  std::string mode;
};

struct DecodeArgs {
  std::string ckpt;
  std::string manifest;
  std::string vocab;
  std::string stage_ref;
  std::string out;
};

struct SelectArgs {
  std::string manifest;
  double fraction = 0.0;
  std::string out;
};

struct EvaluateArgs {
  std::string ckpt;
  std::string manifest;
  std::string vocab;
};

struct RunCurriculumArgs {
  std::string file;
  std::string out;
};

struct ReportArgs {
  std::string registry;
  std::string test;
  double reference_wer = 0.0;
};

void cmd_gen_data(const GenDataArgs& args) {
  const auto blocks = load_config_file(args.config);
  const FamilyConfig family_cfg = parse_family_config(blocks);
  const DataConfig data_cfg = parse_data_config(blocks);
  std::uint64_t fallback = 1;
  for (const auto& block : blocks) {
    if (block.kind == "data") {
      fallback = static_cast<std::uint64_t>(block.get_int("seed", 1));
    }
  }
  const std::uint64_t seed = resolve_seed(args.seed_opt, args.seed, fallback);
  announce_seed(seed);
  const FamilySpec family = build_family(family_cfg, seed);
  generate_datasets(family, data_cfg, seed, args.out);
  std::cerr << "datasets written to " << args.out << "\n";
}

void cmd_train_tokenizer(const TrainTokenizerArgs& args) {
  announce_seed(0);
  std::map<std::string, Manifest> manifests;
  char key[16];
  for (std::size_t i = 0; i < args.manifests.size(); ++i) {
    std::snprintf(key, sizeof(key), "%06zu", i);
    manifests[key] = load_manifest(args.manifests[i]);
  }
  const Vocab vocab = train_bpe(pool_transcripts(manifests), args.size);
  save_vocab(args.out, vocab);
  std::cerr << "vocabulary of " << vocab.size() << " tokens written to "
            << args.out << "\n";
}

void cmd_train(const TrainArgs& args) {
  const Vocab vocab = load_vocab(args.vocab);
  ArchConfig arch = parse_arch_config(load_config_file(args.arch));
  arch.vocab_size = vocab.size() - 1;

  const TrainConfig cfg =
      parse_train_config(find_block(load_config_file(args.cfg), "trainer"));
  announce_seed(cfg.seed);

  Model model;
  if (args.warm_start.empty()) {
    model = init_model(arch, cfg.seed);
  } else {
    const Model prior = load_model(args.warm_start);
    const WarmStartMode mode = args.mode == "full"
                                   ? WarmStartMode::kFull
                                   : WarmStartMode::kEncoderOnly;
    model = warm_start(prior, arch.vocab_size, mode,
                       derive_seed(cfg.seed, "warm-start", 0));
    if (!(model.arch == arch)) {
      throw ConfigError("arch file disagrees with the warm-start checkpoint");
    }
  }

  const Manifest train_m = load_manifest(args.train);
  const Manifest dev_m = load_manifest(args.dev);
  const TrainOutcome outcome =
      train(model, train_m, dev_m, vocab, cfg, args.out);
  save_train_report(fs::path(args.out) / "report.tsv", outcome.report);
  fs::path best;
  for (const auto& ckpt : outcome.report.checkpoints) {
    if (ckpt.step == outcome.report.best_step) best = ckpt.path;
  }
  fs::copy_file(best, fs::path(args.out) / "model.ckpt",
                fs::copy_options::overwrite_existing);
  std::cerr << "best step " << outcome.report.best_step << " dev_wer "
            << outcome.report.best_dev_wer << "\n";
}

void cmd_decode(const DecodeArgs& args) {
  announce_seed(0);
  const Model model = load_model(args.ckpt);
  const Vocab vocab = load_vocab(args.vocab);
  const Manifest input = load_manifest(args.manifest);
  const Manifest decoded = batch_decode(model, input, vocab, args.stage_ref);
  save_manifest(args.out, decoded);
  std::cerr << decoded.records.size() << " records decoded\n";
}

void cmd_select(const SelectArgs& args) {
  announce_seed(0);
  const Manifest input = load_manifest(args.manifest);
  const Manifest kept = select_by_certainty(input, args.fraction);
  save_manifest(args.out, kept);
  std::cerr << kept.records.size() << " of " << input.records.size()
            << " records kept\n";
}

void cmd_evaluate(const EvaluateArgs& args) {
  announce_seed(0);
  const Model model = load_model(args.ckpt);
  const Vocab vocab = load_vocab(args.vocab);
  const Manifest manifest = load_manifest(args.manifest);
  const double wer = evaluate(model, manifest, vocab);
  std::printf("wer %.6f\n", wer);
}

void print_werr_rows(const WerrReport& report) {
  for (const auto& row : report.rows) {
    std::printf("%s\t%.6f\t%.6f\t%.2f\n", row.stage_ref.c_str(), row.dev_wer,
                row.test_wer, row.werr);
  }
}

void cmd_run_curriculum(const RunCurriculumArgs& args) {
  const Curriculum curriculum = parse_curriculum(load_config_file(args.file));
  announce_seed(curriculum.data_seed);
  const WerrReport report = run_curriculum(curriculum, args.out);
  print_werr_rows(report);
}

void cmd_report(const ReportArgs& args) {
  announce_seed(0);
  const Registry registry =
      load_registry(fs::path(args.registry) / "registry.tsv");
  const Manifest test = load_manifest(args.test);
  print_werr_rows(build_report(registry, test, args.reference_wer));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synthetic-speech transducer training and pseudo-labeling"};
  app.require_subcommand(1);

  int threads = 0;
  app.add_option("--threads", threads, "cap on worker threads");

  GenDataArgs gen_data;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  gen->add_option("--config", gen_data.config, "family and data config file")
      ->required();
  gen->add_option("--out", gen_data.out, "output directory")->required();
  gen_data.seed_opt = gen->add_option("--seed", gen_data.seed, "dataset seed");

  TrainTokenizerArgs train_tok;
  auto* tok = app.add_subcommand("train-tokenizer", "train a BPE vocabulary");
  tok->add_option("--manifests", train_tok.manifests, "transcript manifests")
      ->required();
  tok->add_option("--size", train_tok.size, "target vocabulary size")
      ->required();
  tok->add_option("--out", train_tok.out, "vocabulary file")->required();

  TrainArgs train_args;
  auto* tr = app.add_subcommand("train", "train a transducer model");
  tr->add_option("--arch", train_args.arch, "arch config file")->required();
  tr->add_option("--train", train_args.train, "training manifest")->required();
  tr->add_option("--dev", train_args.dev, "dev manifest")->required();
  tr->add_option("--vocab", train_args.vocab, "vocabulary file")->required();
  tr->add_option("--cfg", train_args.cfg, "trainer config file")->required();
  tr->add_option("--out", train_args.out, "checkpoint directory")->required();
  auto* warm = tr->add_option("--warm-start", train_args.warm_start,
                              "checkpoint to start from");
  tr->add_option("--mode", train_args.mode, "full or encoder_only")
      ->check(CLI::IsMember({"full", "encoder_only"}))
      ->needs(warm);
  warm->needs(tr->get_option("--mode"));

  DecodeArgs decode_args;
  auto* dec = app.add_subcommand("decode", "pseudo-label a manifest");
  dec->add_option("--ckpt", decode_args.ckpt, "model checkpoint")->required();
  dec->add_option("--manifest", decode_args.manifest, "input manifest")
      ->required();
  dec->add_option("--vocab", decode_args.vocab, "vocabulary file")->required();
  dec->add_option("--stage-ref", decode_args.stage_ref, "producing stage name")
      ->required();
  dec->add_option("--out", decode_args.out, "output manifest")->required();

  SelectArgs select_args;
  auto* sel = app.add_subcommand("select", "filter a manifest by certainty");
  sel->add_option("--manifest", select_args.manifest, "decoded manifest")
      ->required();
  sel->add_option("--fraction", select_args.fraction, "fraction to keep")
      ->required();
  sel->add_option("--out", select_args.out, "output manifest")->required();

  EvaluateArgs eval_args;
  auto* ev = app.add_subcommand("evaluate", "word error rate of a model");
  ev->add_option("--ckpt", eval_args.ckpt, "model checkpoint")->required();
  ev->add_option("--manifest", eval_args.manifest, "manifest with transcripts")
      ->required();
  ev->add_option("--vocab", eval_args.vocab, "vocabulary file")->required();

  RunCurriculumArgs run_args;
  auto* run = app.add_subcommand("run-curriculum", "execute a curriculum file");
  run->add_option("--file", run_args.file, "curriculum file")->required();
  run->add_option("--out", run_args.out, "run directory")->required();

  ReportArgs report_args;
  auto* rep = app.add_subcommand("report", "evaluate every registered stage");
  rep->add_option("--registry", report_args.registry, "run directory")
      ->required();
  rep->add_option("--test", report_args.test, "test manifest")->required();
  rep->add_option("--reference-wer", report_args.reference_wer,
                  "baseline WER for the error-rate reduction")
      ->required();

  gen->callback([&] { cmd_gen_data(gen_data); });
  tok->callback([&] { cmd_train_tokenizer(train_tok); });
  tr->callback([&] { cmd_train(train_args); });
  dec->callback([&] { cmd_decode(decode_args); });
  sel->callback([&] { cmd_select(select_args); });
  ev->callback([&] { cmd_evaluate(eval_args); });
  run->callback([&] { cmd_run_curriculum(run_args); });
  rep->callback([&] { cmd_report(report_args); });

  app.parse_complete_callback([&] {
    if (threads > 0) set_worker_threads(static_cast<std::size_t>(threads));
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
