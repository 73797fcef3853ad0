#include "iplforge/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "iplforge/error.hpp"
#include "iplforge/text.hpp"
#include "iplforge/threading.hpp"

namespace iplforge {

namespace {

IntRange parse_range(const std::string& raw, const std::string& what) {
  const auto colon = raw.find(':');
  if (colon == std::string::npos) {
    throw ConfigError(what + ": expected 'lo:hi', got '" + raw + "'");
  }
  IntRange range;
  try {
    range.lo = std::stoi(raw.substr(0, colon));
    range.hi = std::stoi(raw.substr(colon + 1));
  } catch (const std::exception&) {
    throw ConfigError(what + ": expected 'lo:hi', got '" + raw + "'");
  }
  if (range.lo > range.hi) {
    throw ConfigError(what + ": empty interval '" + raw + "'");
  }
  return range;
}

std::map<std::string, int> parse_count_map(const std::string& raw,
                                           const std::string& what) {
  std::map<std::string, int> counts;
  std::istringstream in(raw);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      throw ConfigError(what + ": expected 'LANG:count', got '" + item + "'");
    }
    const std::string lang = item.substr(0, colon);
    int count = 0;
    try {
      count = std::stoi(item.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError(what + ": bad count in '" + item + "'");
    }
    if (count < 0) throw ConfigError(what + ": negative count for " + lang);
    if (!counts.emplace(lang, count).second) {
      throw ConfigError(what + ": duplicate language " + lang);
    }
  }
  return counts;
}

// Fills a row with independent Exp(1) draws normalized to sum 1.
void fill_stochastic_row(std::span<double> row, Rng& rng) {
  // Cubed exponentials concentrate each row on a few successors, giving the
  // languages a pronounced bigram structure; flat rows would make word
  // boundaries (which render no frames) nearly unidentifiable.
  double total = 0.0;
  for (double& w : row) {
    const double e = -std::log1p(-rng.uniform());
    w = e * e * e;
    total += w;
  }
  for (double& w : row) w /= total;
}

std::vector<std::string> sorted_union(
    const std::vector<const LanguageConfig*>& langs) {
  std::set<std::string> chars;
  for (const LanguageConfig* lang : langs) {
    for (auto& c : utf8_chars(lang->alphabet)) chars.insert(c);
  }
  return {chars.begin(), chars.end()};
}

const LanguageConfig& find_language_config(const FamilyConfig& config,
                                           const std::string& lang_id) {
  for (const auto& lang : config.languages) {
    if (lang.lang_id == lang_id) return lang;
  }
  throw ConfigError("unknown language: " + lang_id);
}

std::string format_utt_id(const std::string& lang, const std::string& tag,
                          int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06d", index);
  return lang + "-" + tag + "-" + buf;
}

Manifest filter_lang(const Manifest& manifest, const std::string& lang) {
  Manifest out;
  out.base_dir = manifest.base_dir;
  for (const auto& rec : manifest.records) {
    if (rec.lang == lang) out.records.push_back(rec);
  }
  return out;
}

}  // namespace

const LanguageSpec& FamilySpec::language(const std::string& lang_id) const {
  for (const auto& lang : languages) {
    if (lang.lang_id == lang_id) return lang;
  }
  throw ConfigError("unknown language: " + lang_id);
}

void ErrorRates::validate() const {
  for (double r : {sub, del, ins}) {
    if (!(r >= 0.0 && r <= 1.0)) {
      throw ConfigError("error rates must lie in [0,1]");
    }
  }
  if (sub + del > 1.0) {
    throw ConfigError("substitution and deletion rates must sum to at most 1");
  }
}

FamilyConfig parse_family_config(const std::vector<ConfigBlock>& blocks) {
  FamilyConfig config;
  bool saw_family = false;
  for (const auto& block : blocks) {
    if (block.kind == "family") {
      if (saw_family) throw ConfigError("multiple 'family' blocks");
      saw_family = true;
      config.feature_dim = static_cast<int>(block.require_int("feature_dim"));
      config.noise_sigma = block.require_double("noise_sigma");
      config.frames_per_char =
          parse_range(block.require("frames_per_char"), "frames_per_char");
    } else if (block.kind == "language") {
      LanguageConfig lang;
      lang.lang_id = block.require("id");
      lang.script = block.require("script");
      lang.alphabet = block.require("alphabet");
      lang.proximity = block.require_double("proximity");
      lang.end_prob = block.require_double("end_prob");
      lang.word_len = parse_range(block.require("word_len"), "word_len");
      lang.words_per_utt =
          parse_range(block.require("words_per_utt"), "words_per_utt");
      config.languages.push_back(std::move(lang));
    }
  }
  if (!saw_family) throw ConfigError("config has no 'family' block");
  return config;
}

DataConfig parse_data_config(const std::vector<ConfigBlock>& blocks) {
  for (const auto& block : blocks) {
    if (block.kind != "data") continue;
    DataConfig data;
    data.nw_counts = parse_count_map(block.require("nw"), "nw");
    data.bl_counts = parse_count_map(block.require("bl"), "bl");
    data.dev_counts = parse_count_map(block.require("dev"), "dev");
    data.test_counts = parse_count_map(block.require("test"), "test");
    data.reference_rates.sub = block.require_double("ref_sub");
    data.reference_rates.del = block.require_double("ref_del");
    data.reference_rates.ins = block.require_double("ref_ins");
    data.reference_rates.validate();
    return data;
  }
  throw ConfigError("config has no 'data' block");
}

Mat script_pool_matrix(const FamilyConfig& config, std::uint64_t seed,
                       const std::string& script) {
  std::vector<const LanguageConfig*> members;
  for (const auto& lang : config.languages) {
    if (lang.script == script) members.push_back(&lang);
  }
  if (members.empty()) throw ConfigError("unknown script group: " + script);
  const auto pool = sorted_union(members);
  Mat m(pool.size() + 1, pool.size());
  Rng rng(derive_seed(seed, "base:" + script, 0));
  for (std::size_t r = 0; r < m.rows; ++r) fill_stochastic_row(m.row(r), rng);
  return m;
}

Mat language_perturbation(const FamilyConfig& config, std::uint64_t seed,
                          const LanguageConfig& lang) {
  const auto alphabet = utf8_chars(lang.alphabet);
  Mat m(alphabet.size() + 1, alphabet.size());
  Rng rng(derive_seed(seed, "perturb:" + lang.lang_id, 0));
  for (std::size_t r = 0; r < m.rows; ++r) fill_stochastic_row(m.row(r), rng);
  return m;
}

Mat restrict_pool_matrix(const Mat& pool_matrix,
                         const std::vector<std::string>& pool,
                         const std::vector<std::string>& alphabet) {
  std::vector<std::size_t> index;
  for (const auto& c : alphabet) {
    auto it = std::find(pool.begin(), pool.end(), c);
    if (it == pool.end()) {
      throw ConfigError("character '" + c + "' missing from script pool");
    }
    index.push_back(static_cast<std::size_t>(it - pool.begin()));
  }
  Mat out(alphabet.size() + 1, alphabet.size());
  for (std::size_t r = 0; r < out.rows; ++r) {
    // Last row is the word-start state in both layouts.
    const std::size_t src_row = r < alphabet.size() ? index[r] : pool.size();
    double total = 0.0;
    for (std::size_t c = 0; c < out.cols; ++c) {
      out.at(r, c) = pool_matrix.at(src_row, index[c]);
      total += out.at(r, c);
    }
    for (std::size_t c = 0; c < out.cols; ++c) out.at(r, c) /= total;
  }
  return out;
}

Mat fold_end_prob(const Mat& char_matrix, double end_prob) {
  const std::size_t a = char_matrix.cols;
  Mat out(a + 1, a + 1);
  for (std::size_t r = 0; r < a; ++r) {
    for (std::size_t c = 0; c < a; ++c) {
      out.at(r, c) = char_matrix.at(r, c) * (1.0 - end_prob);
    }
    out.at(r, a) = end_prob;
  }
  for (std::size_t c = 0; c < a; ++c) out.at(a, c) = char_matrix.at(a, c);
  out.at(a, a) = 0.0;
  return out;
}

FamilySpec build_family(const FamilyConfig& config, std::uint64_t seed) {
  if (config.feature_dim < 2) {
    throw ConfigError("feature_dim must be at least 2");
  }
  if (config.frames_per_char.lo < 1 ||
      config.frames_per_char.lo > config.frames_per_char.hi) {
    throw ConfigError("frames_per_char interval is invalid");
  }
  if (config.noise_sigma < 0.0) {
    throw ConfigError("noise_sigma must be non-negative");
  }
  if (config.languages.size() != 5) {
    throw ConfigError("family must name exactly 5 languages, got " +
                      std::to_string(config.languages.size()));
  }
  std::set<std::string> scripts;
  std::set<std::string> ids;
  for (const auto& lang : config.languages) {
    scripts.insert(lang.script);
    if (!ids.insert(lang.lang_id).second) {
      throw ConfigError("duplicate language id: " + lang.lang_id);
    }
    if (lang.alphabet.empty()) {
      throw ConfigError("language " + lang.lang_id + " has an empty alphabet");
    }
    const auto chars = utf8_chars(lang.alphabet);
    if (std::set<std::string>(chars.begin(), chars.end()).size() !=
        chars.size()) {
      throw ConfigError("language " + lang.lang_id +
                        " repeats a character in its alphabet");
    }
    if (!(lang.proximity >= 0.0 && lang.proximity <= 1.0)) {
      throw ConfigError("proximity must lie in [0,1]");
    }
    if (!(lang.end_prob >= 0.0 && lang.end_prob <= 1.0)) {
      throw ConfigError("end_prob must lie in [0,1]");
    }
    if (lang.word_len.lo < 1) {
      throw ConfigError("word_len must start at 1 or above");
    }
    if (lang.words_per_utt.lo < 1) {
      throw ConfigError("words_per_utt must start at 1 or above");
    }
  }
  if (scripts.size() != 2) {
    throw ConfigError("family must use exactly 2 script groups, got " +
                      std::to_string(scripts.size()));
  }
  // Same-script languages must share characters, or transfer is meaningless.
  for (const auto& a : config.languages) {
    for (const auto& b : config.languages) {
      if (&a >= &b || a.script != b.script) continue;
      const auto ca = utf8_chars(a.alphabet);
      const auto cb = utf8_chars(b.alphabet);
      const std::set<std::string> sa(ca.begin(), ca.end());
      if (std::none_of(cb.begin(), cb.end(),
                       [&](const std::string& c) { return sa.count(c); })) {
        throw ConfigError("languages " + a.lang_id + " and " + b.lang_id +
                          " share a script but no characters");
      }
    }
  }

  FamilySpec spec;
  spec.feature_dim = config.feature_dim;
  spec.noise_sigma = config.noise_sigma;
  spec.frames_per_char_range = config.frames_per_char;

  std::map<std::string, Mat> pool_matrices;
  std::map<std::string, std::vector<std::string>> pools;
  for (const auto& script : scripts) {
    std::vector<const LanguageConfig*> members;
    for (const auto& lang : config.languages) {
      if (lang.script == script) members.push_back(&lang);
    }
    pools[script] = sorted_union(members);
    pool_matrices[script] = script_pool_matrix(config, seed, script);
  }

  for (const auto& lang : config.languages) {
    LanguageSpec out;
    out.lang_id = lang.lang_id;
    out.alphabet = utf8_chars(lang.alphabet);
    out.word_len_range = lang.word_len;
    out.words_per_utt_range = lang.words_per_utt;
    out.relatedness_seed = derive_seed(seed, "perturb:" + lang.lang_id, 0);

    const Mat base = restrict_pool_matrix(pool_matrices.at(lang.script),
                                          pools.at(lang.script), out.alphabet);
    const Mat own = language_perturbation(config, seed, lang);
    Mat mixed(base.rows, base.cols);
    for (std::size_t i = 0; i < mixed.data.size(); ++i) {
      mixed.data[i] =
          lang.proximity * base.data[i] + (1.0 - lang.proximity) * own.data[i];
    }
    out.transition_matrix = fold_end_prob(mixed, lang.end_prob);
    spec.languages.push_back(std::move(out));
  }

  // One prototype per character, shared across all languages.
  std::vector<const LanguageConfig*> all;
  for (const auto& lang : config.languages) all.push_back(&lang);
  for (const auto& c : sorted_union(all)) {
    Rng rng(derive_seed(seed, "proto:" + c, 0));
    std::vector<float> proto(static_cast<std::size_t>(config.feature_dim));
    for (float& v : proto) v = static_cast<float>(rng.normal());
    spec.prototype_table.emplace(c, std::move(proto));
  }
  return spec;
}

std::string sample_word(const LanguageSpec& lang, Rng& rng) {
  const std::size_t a = lang.alphabet.size();
  std::string word;
  int len = 0;
  std::size_t state = a;  // word-start row
  while (len < lang.word_len_range.hi) {
    const auto row = lang.transition_matrix.row(state);
    std::size_t next;
    if (len < lang.word_len_range.lo) {
      next = rng.choose(row.first(a));  // too short to end yet
    } else {
      next = rng.choose(row);
    }
    if (next == a) break;
    word += lang.alphabet[next];
    state = next;
    ++len;
  }
  return word;
}

Utterance sample_utterance(const FamilySpec& spec, const std::string& lang_id,
                           Rng& rng) {
  const LanguageSpec& lang = spec.language(lang_id);
  const int nwords = static_cast<int>(rng.uniform_int(
      lang.words_per_utt_range.lo, lang.words_per_utt_range.hi));
  Utterance utt;
  for (int w = 0; w < nwords; ++w) {
    if (w > 0) utt.transcript += ' ';
    utt.transcript += sample_word(lang, rng);
  }

  const int f = spec.feature_dim;
  std::vector<float> rows;
  for (const auto& c : utf8_chars(utt.transcript)) {
    if (c == " ") continue;  // spaces render no frames
    const auto& proto = spec.prototype_table.at(c);
    const int dur = static_cast<int>(rng.uniform_int(
        spec.frames_per_char_range.lo, spec.frames_per_char_range.hi));
    for (int d = 0; d < dur; ++d) {
      for (int j = 0; j < f; ++j) {
        rows.push_back(proto[static_cast<std::size_t>(j)] +
                       static_cast<float>(spec.noise_sigma * rng.normal()));
      }
    }
  }
  utt.features.frames = static_cast<std::int32_t>(rows.size() / f);
  utt.features.dim = f;
  utt.features.data = std::move(rows);
  return utt;
}

std::string reference_transcribe(const LanguageSpec& lang,
                                 const std::string& transcript,
                                 const ErrorRates& rates, Rng& rng) {
  rates.validate();
  std::vector<std::string> out;
  std::istringstream in(transcript);
  std::string word;
  while (in >> word) {
    const double roll = rng.uniform();
    bool kept = false;
    if (roll < rates.sub) {
      out.push_back(sample_word(lang, rng));
      kept = true;
    } else if (roll < rates.sub + rates.del) {
      // dropped
    } else {
      out.push_back(word);
      kept = true;
    }
    if (kept && rng.uniform() < rates.ins) {
      out.push_back(sample_word(lang, rng));
    }
  }
  std::string joined;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (i > 0) joined += ' ';
    joined += out[i];
  }
  return joined;
}

Manifest generate_dataset(const FamilySpec& spec,
                          const std::map<std::string, int>& counts,
                          std::uint64_t seed,
                          const std::filesystem::path& out_dir,
                          const std::string& tag) {
  struct Job {
    std::string lang;
    int index;
  };
  std::vector<Job> jobs;
  for (const auto& [lang, count] : counts) {
    if (count < 0) throw ConfigError("negative utterance count for " + lang);
    spec.language(lang);  // fail early on unknown languages
    for (int i = 0; i < count; ++i) jobs.push_back({lang, i});
  }

  Manifest manifest;
  manifest.base_dir = out_dir;
  manifest.records.resize(jobs.size());
  if (!jobs.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir / "feats", ec);
    if (ec) {
      throw DataError("cannot create directory: " + (out_dir / "feats").string());
    }
  }
  parallel_for(jobs.size(), [&](std::size_t j) {
    const Job& job = jobs[j];
    Rng rng(derive_seed(seed, tag + ":" + job.lang, job.index));
    Utterance utt = sample_utterance(spec, job.lang, rng);
    UttRecord rec;
    rec.utt_id = format_utt_id(job.lang, tag, job.index);
    rec.lang = job.lang;
    rec.feature_path = "feats/" + rec.utt_id + ".feat";
    rec.transcript = std::move(utt.transcript);
    rec.source = TranscriptSource::truth();
    save_features(out_dir / rec.feature_path, utt.features);
    manifest.records[j] = std::move(rec);
  });
  return manifest;
}

Manifest reference_manifest(const FamilySpec& spec, const Manifest& truth,
                            const ErrorRates& rates, std::uint64_t seed) {
  Manifest out;
  out.base_dir = truth.base_dir;
  out.records = truth.records;
  for (std::size_t i = 0; i < out.records.size(); ++i) {
    UttRecord& rec = out.records[i];
    Rng rng(derive_seed(seed, "ref:" + rec.lang, static_cast<int>(i)));
    rec.transcript =
        reference_transcribe(spec.language(rec.lang), rec.transcript, rates, rng);
    rec.source = TranscriptSource::reference();
    rec.certainty.reset();
  }
  return out;
}

Manifest subsample(const Manifest& manifest,
                   const std::map<std::string, int>& targets,
                   std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> by_lang;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    by_lang[manifest.records[i].lang].push_back(i);
  }
  std::set<std::size_t> keep;
  for (const auto& [lang, indices] : by_lang) {
    auto it = targets.find(lang);
    if (it == targets.end()) {
      keep.insert(indices.begin(), indices.end());
      continue;
    }
    const int target = it->second;
    if (target < 0) throw SelectionError("negative target for " + lang);
    if (static_cast<std::size_t>(target) > indices.size()) {
      throw SelectionError("subsample target for " + lang + " is " +
                           std::to_string(target) + " but only " +
                           std::to_string(indices.size()) + " available");
    }
    std::vector<std::size_t> shuffled = indices;
    Rng rng(derive_seed(seed, "subsample:" + lang, 0));
    rng.shuffle(shuffled);
    keep.insert(shuffled.begin(), shuffled.begin() + target);
  }
  Manifest out;
  out.base_dir = manifest.base_dir;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    if (keep.count(i)) out.records.push_back(manifest.records[i]);
  }
  return out;
}

std::filesystem::path DatasetPaths::nw_truth(const std::string& lang) const {
  return root / (lang + "_nw_truth.tsv");
}
std::filesystem::path DatasetPaths::nw_ref(const std::string& lang) const {
  return root / (lang + "_nw_ref.tsv");
}
std::filesystem::path DatasetPaths::bl_truth(const std::string& lang) const {
  return root / (lang + "_bl_truth.tsv");
}
std::filesystem::path DatasetPaths::bl_ref(const std::string& lang) const {
  return root / (lang + "_bl_ref.tsv");
}
std::filesystem::path DatasetPaths::dev(const std::string& lang) const {
  return root / (lang + "_dev.tsv");
}
std::filesystem::path DatasetPaths::test(const std::string& lang) const {
  return root / (lang + "_test.tsv");
}
std::filesystem::path DatasetPaths::test_ref(const std::string& lang) const {
  return root / (lang + "_test_ref.tsv");
}

DatasetPaths generate_datasets(const FamilySpec& spec, const DataConfig& data,
                               std::uint64_t seed,
                               const std::filesystem::path& out_dir) {
  DatasetPaths paths{out_dir};

  // One feature pool per language covers both weightings; NW and BL are
  // subsets of it, so their records agree wherever they overlap.
  std::map<std::string, int> pool_counts;
  std::map<std::string, int> nw_full;
  std::map<std::string, int> bl_full;
  for (const auto& [lang, n] : data.nw_counts) pool_counts[lang] = n;
  for (const auto& [lang, n] : data.bl_counts) {
    auto& cur = pool_counts[lang];
    cur = std::max(cur, n);
  }
  for (const auto& [lang, n] : pool_counts) {
    nw_full[lang] = 0;
    bl_full[lang] = 0;
  }
  for (const auto& [lang, n] : data.nw_counts) nw_full[lang] = n;
  for (const auto& [lang, n] : data.bl_counts) bl_full[lang] = n;

  const Manifest pool_truth =
      generate_dataset(spec, pool_counts, seed, out_dir, "train");
  const Manifest pool_ref = reference_manifest(
      spec, pool_truth, data.reference_rates, derive_seed(seed, "ref-train", 0));

  const std::uint64_t nw_seed = derive_seed(seed, "nw", 0);
  const std::uint64_t bl_seed = derive_seed(seed, "bl", 0);
  const Manifest nw_truth = subsample(pool_truth, nw_full, nw_seed);
  const Manifest nw_ref = subsample(pool_ref, nw_full, nw_seed);
  const Manifest bl_truth = subsample(pool_truth, bl_full, bl_seed);
  const Manifest bl_ref = subsample(pool_ref, bl_full, bl_seed);

  for (const auto& [lang, n] : data.nw_counts) {
    if (n == 0) continue;
    save_manifest(paths.nw_truth(lang), filter_lang(nw_truth, lang));
    save_manifest(paths.nw_ref(lang), filter_lang(nw_ref, lang));
  }
  for (const auto& [lang, n] : data.bl_counts) {
    if (n == 0) continue;
    save_manifest(paths.bl_truth(lang), filter_lang(bl_truth, lang));
    save_manifest(paths.bl_ref(lang), filter_lang(bl_ref, lang));
  }

  const Manifest dev_all =
      generate_dataset(spec, data.dev_counts, seed, out_dir, "dev");
  for (const auto& [lang, n] : data.dev_counts) {
    if (n == 0) continue;
    save_manifest(paths.dev(lang), filter_lang(dev_all, lang));
  }

  const Manifest test_all =
      generate_dataset(spec, data.test_counts, seed, out_dir, "test");
  const Manifest test_ref = reference_manifest(
      spec, test_all, data.reference_rates, derive_seed(seed, "ref-test", 0));
  for (const auto& [lang, n] : data.test_counts) {
    if (n == 0) continue;
    save_manifest(paths.test(lang), filter_lang(test_all, lang));
    save_manifest(paths.test_ref(lang), filter_lang(test_ref, lang));
  }
  return paths;
}

}  // namespace iplforge
