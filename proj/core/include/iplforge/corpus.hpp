#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "iplforge/config.hpp"
#include "iplforge/features.hpp"
#include "iplforge/manifest.hpp"
#include "iplforge/mat.hpp"
#include "iplforge/rng.hpp"

namespace iplforge {

// Inclusive integer interval.
struct IntRange {
  int lo = 0;
  int hi = 0;
  bool contains(int v) const { return lo <= v && v <= hi; }
};

// Per-language parameters as read from the family config file.
struct LanguageConfig {
  std::string lang_id;
  std::string script;     // script-group label; languages sharing it share a
                          // base transition matrix and draw related chains
  std::string alphabet;   // UTF-8 string, one character per symbol
  double proximity = 0.5; // weight of the script base vs. own perturbation
  double end_prob = 0.3;  // per-character probability of ending the word
  IntRange word_len{1, 8};
  IntRange words_per_utt{1, 5};
};

struct FamilyConfig {
  int feature_dim = 16;
  double noise_sigma = 0.5;
  IntRange frames_per_char{1, 3};
  std::vector<LanguageConfig> languages;
};

// A fully materialized language: alphabet split into characters and the
// row-stochastic transition matrix over alphabet + word-end. Row indices are
// characters in alphabet order; the final row doubles as the word-start state
// (its word-end column is zero, so every word has at least one character).
struct LanguageSpec {
  std::string lang_id;
  std::vector<std::string> alphabet;
  Mat transition_matrix;  // (A+1) x (A+1)
  IntRange word_len_range;
  IntRange words_per_utt_range;
  std::uint64_t relatedness_seed = 0;
};

struct FamilySpec {
  std::vector<LanguageSpec> languages;
  std::map<std::string, std::vector<float>> prototype_table;
  int feature_dim = 0;
  double noise_sigma = 0.0;
  IntRange frames_per_char_range{1, 1};

  const LanguageSpec& language(const std::string& lang_id) const;
};

// Per-word error probabilities of the simulated first-pass transcriber.
struct ErrorRates {
  double sub = 0.0;
  double del = 0.0;
  double ins = 0.0;
  void validate() const;  // each in [0,1], sub + del <= 1
};

// Dataset sizes and transcriber error rates, from the `data` config block.
struct DataConfig {
  std::map<std::string, int> nw_counts;
  std::map<std::string, int> bl_counts;
  std::map<std::string, int> dev_counts;
  std::map<std::string, int> test_counts;
  ErrorRates reference_rates;
};

FamilyConfig parse_family_config(const std::vector<ConfigBlock>& blocks);
DataConfig parse_data_config(const std::vector<ConfigBlock>& blocks);

// --- family construction -------------------------------------------------

// Character-transition part (no word-end column yet) shared by a script
// group, over the sorted union of the group's alphabets. Rows: pool
// characters then the word-start state; columns: pool characters.
Mat script_pool_matrix(const FamilyConfig& config, std::uint64_t seed,
                       const std::string& script);

// A language's independent chain over its own alphabet, same layout.
Mat language_perturbation(const FamilyConfig& config, std::uint64_t seed,
                          const LanguageConfig& lang);

// Restricts a pool chain to a sub-alphabet and renormalizes each row.
Mat restrict_pool_matrix(const Mat& pool_matrix,
                         const std::vector<std::string>& pool,
                         const std::vector<std::string>& alphabet);

// Folds a word-end column into a character matrix: character rows give up
// end_prob of their mass to the end column; the start row keeps end at zero.
Mat fold_end_prob(const Mat& char_matrix, double end_prob);

FamilySpec build_family(const FamilyConfig& config, std::uint64_t seed);

// --- sampling -------------------------------------------------------------

std::string sample_word(const LanguageSpec& lang, Rng& rng);

struct Utterance {
  std::string transcript;
  Features features;
};

Utterance sample_utterance(const FamilySpec& spec, const std::string& lang,
                           Rng& rng);

std::string reference_transcribe(const LanguageSpec& lang,
                                 const std::string& transcript,
                                 const ErrorRates& rates, Rng& rng);

// --- dataset assembly -----------------------------------------------------

// Writes one feature file per utterance under out_dir/feats and returns the
// manifest (source=truth, feature paths relative to out_dir). Utterance RNG
// streams are derived from (seed, tag, language, index), so generation order
// and thread count do not affect the output. `tag` keeps train/dev/test
// streams disjoint and is embedded in the utt ids.
Manifest generate_dataset(const FamilySpec& spec,
                          const std::map<std::string, int>& counts,
                          std::uint64_t seed,
                          const std::filesystem::path& out_dir,
                          const std::string& tag = "train");

// Re-transcribes every record through the simulated reference system.
// Output records share utt ids and feature paths with the input but carry
// source=reference.
Manifest reference_manifest(const FamilySpec& spec, const Manifest& truth,
                            const ErrorRates& rates, std::uint64_t seed);

// Uniform per-language subset. Languages missing from `targets` are kept in
// full; a target above availability raises SelectionError with the language.
Manifest subsample(const Manifest& manifest,
                   const std::map<std::string, int>& targets,
                   std::uint64_t seed);

// Standard on-disk layout produced by the gen-data command: a shared feature
// pool plus per-language manifests for every dataset role.
struct DatasetPaths {
  std::filesystem::path root;

  std::filesystem::path nw_truth(const std::string& lang) const;
  std::filesystem::path nw_ref(const std::string& lang) const;
  std::filesystem::path bl_truth(const std::string& lang) const;
  std::filesystem::path bl_ref(const std::string& lang) const;
  std::filesystem::path dev(const std::string& lang) const;
  std::filesystem::path test(const std::string& lang) const;
  std::filesystem::path test_ref(const std::string& lang) const;
};

DatasetPaths generate_datasets(const FamilySpec& spec, const DataConfig& data,
                               std::uint64_t seed,
                               const std::filesystem::path& out_dir);

}  // namespace iplforge
