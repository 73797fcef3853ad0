#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "iplforge/config.hpp"
#include "iplforge/corpus.hpp"
#include "iplforge/manifest.hpp"
#include "iplforge/tokenizer.hpp"
#include "iplforge/trainer.hpp"
#include "iplforge/transducer.hpp"

namespace iplforge {

// A named tokenizer to train before any stage runs: BPE over the pooled
// balanced-set reference transcripts of the listed languages.
struct TokenizerSpec {
  std::string name;
  std::vector<std::string> languages;
  int size = 0;
};

struct StageSpec {
  enum class Weighting { kNW, kBL };

  std::string stage_ref;
  std::vector<std::string> languages;
  Weighting weighting = Weighting::kNW;
  TranscriptSource source;        // kReference, or kPseudo with the stage to
                                  // decode with
  std::string tokenizer_ref;
  std::string warm_start_from;    // empty = train from scratch
  std::optional<double> select_fraction;  // pseudo sources only
  TrainConfig train_cfg;
};

struct Curriculum {
  FamilyConfig family;
  DataConfig data;
  std::uint64_t data_seed = 1;
  ArchConfig arch;  // vocab_size filled per stage from its tokenizer
  std::vector<TokenizerSpec> tokenizers;
  std::vector<StageSpec> stages;
  std::string target_lang;  // single dev/test language
};

// Reads an `arch` block (feature_dim, encoder_dim, label_dim, joiner_dim,
// downsample, attention = on|off). Missing keys keep the passed defaults;
// vocab_size is never read here, it always comes from a vocabulary.
ArchConfig parse_arch_config(const std::vector<ConfigBlock>& blocks,
                             ArchConfig defaults = {});

// Reads the training keys (steps, batch, lr, eval_every, seed, and optional
// beta1/beta2/epsilon/clip) from one block; extra keys are ignored so stage
// blocks can share the format.
TrainConfig parse_train_config(const ConfigBlock& block);

Curriculum parse_curriculum(const std::vector<ConfigBlock>& blocks);

// Structural checks before anything runs: unique stage refs, warm-start and
// pseudo sources referring to earlier stages only, known tokenizers and
// languages, selection only on pseudo data.
void validate_curriculum(const Curriculum& curriculum);

// Keeps the records whose certainty ranks in the top ceil(fraction * N),
// ordered by descending certainty (ties: utt_id ascending).
Manifest select_by_certainty(const Manifest& manifest, double fraction);

// One completed stage as persisted in the run registry. Paths are relative
// to the registry root.
struct StageResult {
  std::string stage_ref;
  std::filesystem::path model_path;
  std::filesystem::path vocab_path;
  double dev_wer = 0.0;
};

struct Registry {
  std::filesystem::path root;
  std::vector<StageResult> rows;

  const StageResult& find(const std::string& stage_ref) const;
  std::filesystem::path model_file(const StageResult& row) const;
  std::filesystem::path vocab_file(const StageResult& row) const;
};

void save_registry(const std::filesystem::path& path, const Registry& registry);
Registry load_registry(const std::filesystem::path& path);

struct WerrReport {
  struct Row {
    std::string stage_ref;
    double dev_wer = 0.0;
    double test_wer = 0.0;
    double werr = 0.0;
  };
  std::vector<Row> rows;
};

void save_werr_report(const std::filesystem::path& path,
                      const WerrReport& report);

// Materialized run state: generated datasets, trained tokenizers, and the
// registry of finished stages.
struct RunContext {
  Curriculum curriculum;
  std::filesystem::path run_dir;
  FamilySpec family;
  DatasetPaths data;
  double reference_wer = 0.0;  // simulated hybrid on the target test set
  Registry registry;
  std::map<std::string, StageSpec> specs_by_ref;
  std::map<std::string, std::filesystem::path> vocab_paths;  // relative
};

// Generates datasets under run_dir/data, trains every tokenizer, and
// measures the reference transcriber's test WER.
RunContext prepare_run(const Curriculum& curriculum,
                       const std::filesystem::path& run_dir);

// Executes one stage: resolves its tokenizer and warm start (mode derived:
// tokenizer change => encoder only, else full), assembles training data
// (decoding and certainty selection for pseudo sources), trains, and appends
// the best checkpoint to the registry.
StageResult run_stage(RunContext& ctx, const StageSpec& stage);

struct IplPassResult {
  int pass = 0;
  StageResult stage;
  WerrReport::Row row;
};

// Repeated pseudo-labeling: each pass decodes the base stage's training data
// with the current model, keeps the top fraction by certainty, warm-starts
// fully from the current model, and trains. Pass k runs as stage
// "<base>-P<k>C".
std::vector<IplPassResult> run_ipl(RunContext& ctx,
                                   const std::string& base_stage, int passes,
                                   double fraction,
                                   const TrainConfig& cfg_template);

// Evaluates every registered stage on the test manifest and derives WERR
// against the reference WER.
WerrReport build_report(const Registry& registry, const Manifest& test_manifest,
                        double reference_wer);

// prepare_run + every stage in order + report.tsv and reference.txt under
// run_dir.
WerrReport run_curriculum(const Curriculum& curriculum,
                          const std::filesystem::path& run_dir);

}  // namespace iplforge
