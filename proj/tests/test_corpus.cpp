#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "iplforge/corpus.hpp"
#include "iplforge/error.hpp"
#include "iplforge/metrics.hpp"
#include "iplforge/rng.hpp"
#include "iplforge/text.hpp"
#include "support/oracles.hpp"

using namespace iplforge;
namespace fs = std::filesystem;

namespace {

LanguageConfig make_lang(std::string id, std::string script,
                         std::string alphabet, double proximity,
                         double end_prob = 0.3, IntRange word_len = {1, 6},
                         IntRange words = {1, 3}) {
  LanguageConfig l;
  l.lang_id = std::move(id);
  l.script = std::move(script);
  l.alphabet = std::move(alphabet);
  l.proximity = proximity;
  l.end_prob = end_prob;
  l.word_len = word_len;
  l.words_per_utt = words;
  return l;
}

// Five languages, two scripts, with the first pair's knobs adjustable.
FamilyConfig pair_family(double proximity, const std::string& alpha_a = "abc",
                         const std::string& alpha_b = "abd") {
  FamilyConfig config;
  config.feature_dim = 4;
  config.noise_sigma = 0.0;
  config.frames_per_char = {1, 1};
  config.languages = {
      make_lang("AAA", "s1", alpha_a, proximity),
      make_lang("BBB", "s1", alpha_b, proximity),
      make_lang("CCC", "s2", "xyz", 0.5),
      make_lang("DDD", "s2", "xyw", 0.5),
      make_lang("EEE", "s2", "xyv", 0.5),
  };
  return config;
}

}  // namespace

TEST_CASE("build_family is deterministic") {
  const auto config = oracle::tiny_family();
  const auto a = build_family(config, 7);
  const auto b = build_family(config, 7);
  REQUIRE(a.languages.size() == 5);
  for (std::size_t i = 0; i < a.languages.size(); ++i) {
    CHECK(a.languages[i].transition_matrix == b.languages[i].transition_matrix);
  }
  CHECK(a.prototype_table == b.prototype_table);
  CHECK(build_family(config, 8).languages[0].transition_matrix !=
        a.languages[0].transition_matrix);
}

TEST_CASE("transition rows are stochastic with a silent start row") {
  const auto spec = build_family(oracle::tiny_family(), 3);
  for (const auto& lang : spec.languages) {
    const auto& m = lang.transition_matrix;
    const std::size_t a = lang.alphabet.size();
    REQUIRE(m.rows == a + 1);
    REQUIRE(m.cols == a + 1);
    for (std::size_t r = 0; r < m.rows; ++r) {
      double total = 0.0;
      for (double v : m.row(r)) {
        CHECK(v >= 0.0);
        total += v;
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    }
    CHECK(m.at(a, a) == 0.0);  // a word never ends before its first character
  }
}

TEST_CASE("proximity 1.0 gives same-alphabet languages identical chains") {
  const auto spec = build_family(pair_family(1.0, "abc", "abc"), 11);
  CHECK(spec.language("AAA").transition_matrix ==
        spec.language("BBB").transition_matrix);
}

TEST_CASE("proximity 0.0 reduces to the language's own perturbation") {
  const auto config = pair_family(0.0);
  const auto spec = build_family(config, 11);
  const Mat own = language_perturbation(config, 11, config.languages[0]);
  const Mat folded = fold_end_prob(own, config.languages[0].end_prob);
  CHECK(spec.language("AAA").transition_matrix == folded);
}

TEST_CASE("language chains recompute from pool and perturbation") {
  const auto config = pair_family(0.7);
  const auto spec = build_family(config, 23);

  const std::vector<std::string> pool{"a", "b", "c", "d"};
  const Mat base = restrict_pool_matrix(script_pool_matrix(config, 23, "s1"),
                                        pool, utf8_chars("abc"));
  const Mat own = language_perturbation(config, 23, config.languages[0]);
  Mat mixed(base.rows, base.cols);
  for (std::size_t i = 0; i < mixed.data.size(); ++i) {
    mixed.data[i] = 0.7 * base.data[i] + 0.3 * own.data[i];
  }
  const Mat want = fold_end_prob(mixed, config.languages[0].end_prob);

  const Mat& got = spec.language("AAA").transition_matrix;
  REQUIRE(got.rows == want.rows);
  for (std::size_t i = 0; i < want.data.size(); ++i) {
    CHECK(got.data[i] == doctest::Approx(want.data[i]).epsilon(1e-12));
  }
}

TEST_CASE("family validation rejects malformed configs") {
  auto config = pair_family(0.5);
  config.languages.pop_back();
  CHECK_THROWS_AS(build_family(config, 1), ConfigError);

  config = pair_family(0.5);
  config.languages[2].script = "s3";
  CHECK_THROWS_AS(build_family(config, 1), ConfigError);

  config = pair_family(1.5);
  CHECK_THROWS_AS(build_family(config, 1), ConfigError);

  config = pair_family(0.5);
  config.languages[0].alphabet = "aab";
  CHECK_THROWS_AS(build_family(config, 1), ConfigError);

  config = pair_family(0.5, "abc", "def");  // shared script, no shared chars
  CHECK_THROWS_AS(build_family(config, 1), ConfigError);

  config = pair_family(0.5);
  config.frames_per_char = {3, 2};
  CHECK_THROWS_AS(build_family(config, 1), ConfigError);
}

TEST_CASE("noiseless rendering emits exact prototype rows") {
  const auto spec = build_family(pair_family(0.6), 5);
  Rng rng(derive_seed(5, "utt", 0));
  const auto utt = sample_utterance(spec, "AAA", rng);

  std::vector<std::string> chars;
  for (const auto& c : utf8_chars(utt.transcript)) {
    if (c != " ") chars.push_back(c);
  }
  REQUIRE(utt.features.frames == static_cast<int>(chars.size()));
  REQUIRE(utt.features.dim == spec.feature_dim);
  for (std::size_t t = 0; t < chars.size(); ++t) {
    const auto& proto = spec.prototype_table.at(chars[t]);
    for (int f = 0; f < spec.feature_dim; ++f) {
      CHECK(utt.features.at(static_cast<int>(t), f) == proto[f]);
    }
  }
}

TEST_CASE("nearest prototype classification inverts a noiseless render") {
  const auto spec = build_family(pair_family(0.6), 9);
  for (int i = 0; i < 20; ++i) {
    Rng rng(derive_seed(9, "invert", i));
    const auto utt = sample_utterance(spec, "BBB", rng);
    std::string recovered;
    for (int t = 0; t < utt.features.frames; ++t) {
      const auto frame = utt.features.frame(t);
      double best = 1e300;
      std::string best_char;
      for (const auto& [c, proto] : spec.prototype_table) {
        double d2 = 0.0;
        for (int f = 0; f < spec.feature_dim; ++f) {
          const double diff = frame[f] - proto[f];
          d2 += diff * diff;
        }
        if (d2 < best) {
          best = d2;
          best_char = c;
        }
      }
      recovered += best_char;
    }
    std::string expect;
    for (const auto& c : utf8_chars(utt.transcript)) {
      if (c != " ") expect += c;
    }
    CHECK(recovered == expect);
  }
}

TEST_CASE("degenerate ranges produce single-character transcripts") {
  auto config = pair_family(0.6);
  config.languages[0].word_len = {1, 1};
  config.languages[0].words_per_utt = {1, 1};
  const auto spec = build_family(config, 2);
  for (int i = 0; i < 10; ++i) {
    Rng rng(derive_seed(2, "single", i));
    const auto utt = sample_utterance(spec, "AAA", rng);
    CHECK(utf8_chars(utt.transcript).size() == 1);
  }
}

TEST_CASE("sampled words reproduce the transition matrix empirically") {
  auto config = pair_family(0.6);
  config.languages[0].word_len = {1, 100};
  const auto spec = build_family(config, 31);
  const auto& lang = spec.language("AAA");
  const std::size_t a = lang.alphabet.size();

  std::map<std::string, std::size_t> char_index;
  for (std::size_t i = 0; i < a; ++i) char_index[lang.alphabet[i]] = i;

  Mat counts(a + 1, a + 1);
  Rng rng(derive_seed(31, "bigram", 0));
  for (int w = 0; w < 10000; ++w) {
    const std::string word = sample_word(lang, rng);
    const auto chars = utf8_chars(word);
    std::size_t state = a;
    for (const auto& c : chars) {
      counts.at(state, char_index.at(c)) += 1.0;
      state = char_index.at(c);
    }
    if (chars.size() < 100) counts.at(state, a) += 1.0;
  }
  for (std::size_t r = 0; r <= a; ++r) {
    double total = 0.0;
    for (double v : counts.row(r)) total += v;
    REQUIRE(total > 1000);
    for (std::size_t c = 0; c <= a; ++c) {
      CHECK(std::abs(counts.at(r, c) / total -
                     lang.transition_matrix.at(r, c)) < 0.02);
    }
  }
}

TEST_CASE("reference transcription is exact at the rate extremes") {
  const auto spec = build_family(pair_family(0.6), 3);
  const auto& lang = spec.language("AAA");
  Rng rng(derive_seed(3, "ref", 0));
  CHECK(reference_transcribe(lang, "ab ba abc", {0, 0, 0}, rng) == "ab ba abc");
  CHECK(reference_transcribe(lang, "ab ba abc", {0, 1, 0}, rng).empty());
  CHECK_THROWS_AS(reference_transcribe(lang, "ab", {0.8, 0.5, 0}, rng),
                  ConfigError);
}

TEST_CASE("reference transcription hits its configured corpus WER") {
  // Long words over a 12-character alphabet make accidental matches between
  // random replacement words and the truth negligibly rare.
  auto config = pair_family(0.6, "abcdefghijkl", "abcdefghijkm");
  config.languages[0].word_len = {3, 8};
  const auto spec = build_family(config, 17);
  const auto& lang = spec.language("AAA");

  const ErrorRates rates{0.1, 0.05, 0.05};
  Rng rng(derive_seed(17, "mc-ref", 0));
  std::vector<std::pair<std::string, std::string>> pairs;
  for (int i = 0; i < 1000; ++i) {
    std::string truth;
    for (int w = 0; w < 10; ++w) {
      if (w > 0) truth += ' ';
      truth += sample_word(lang, rng);
    }
    pairs.emplace_back(truth, reference_transcribe(lang, truth, rates, rng));
  }
  // sub + del + (1 - del) * ins = 0.1975.
  CHECK(std::abs(corpus_wer(pairs) - 0.20) < 0.01);
}

TEST_CASE("generate_dataset writes loadable features and truth records") {
  const auto dir = oracle::fresh_dir("gen-dataset");
  const auto spec = build_family(oracle::tiny_family(), 41);
  const auto manifest =
      generate_dataset(spec, {{"TGT", 3}, {"SML", 2}}, 41, dir, "train");
  REQUIRE(manifest.size() == 5);
  manifest.validate();
  std::set<std::string> langs;
  for (const auto& rec : manifest.records) {
    langs.insert(rec.lang);
    CHECK(rec.source == TranscriptSource::truth());
    CHECK(rec.utt_id.find(rec.lang + "-train-") == 0);
    const auto f = load_features(manifest.feature_file(rec));
    CHECK(f.dim == spec.feature_dim);
    CHECK(f.frames >= 1);
  }
  CHECK(langs == std::set<std::string>{"TGT", "SML"});

  // Same seed, fresh directory: bitwise-identical features and records.
  const auto dir2 = oracle::fresh_dir("gen-dataset-again");
  const auto again =
      generate_dataset(spec, {{"TGT", 3}, {"SML", 2}}, 41, dir2, "train");
  CHECK(again.records == manifest.records);
  std::string diff;
  CHECK_MESSAGE(oracle::identical_trees(dir, dir2, &diff), diff);
}

TEST_CASE("zero counts produce an empty dataset and no files") {
  const auto dir = oracle::fresh_dir("gen-empty");
  const auto spec = build_family(oracle::tiny_family(), 1);
  const auto manifest = generate_dataset(spec, {{"TGT", 0}}, 1, dir, "train");
  CHECK(manifest.empty());
  CHECK(!fs::exists(dir / "feats"));
}

TEST_CASE("reference_manifest keeps ids and flips the source") {
  const auto dir = oracle::fresh_dir("ref-manifest");
  const auto spec = build_family(oracle::tiny_family(), 13);
  const auto truth = generate_dataset(spec, {{"TGT", 4}}, 13, dir, "train");
  const auto ref = reference_manifest(spec, truth, {0.5, 0.2, 0.2}, 99);
  REQUIRE(ref.size() == truth.size());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    CHECK(ref.records[i].utt_id == truth.records[i].utt_id);
    CHECK(ref.records[i].feature_path == truth.records[i].feature_path);
    CHECK(ref.records[i].source == TranscriptSource::reference());
  }
  // Zero rates leave every transcript untouched.
  const auto clean = reference_manifest(spec, truth, {0, 0, 0}, 99);
  for (std::size_t i = 0; i < clean.size(); ++i) {
    CHECK(clean.records[i].transcript == truth.records[i].transcript);
  }
}

TEST_CASE("subsample keeps targeted counts and untargeted languages") {
  const auto dir = oracle::fresh_dir("subsample");
  const auto spec = build_family(oracle::tiny_family(), 29);
  const auto full =
      generate_dataset(spec, {{"TGT", 6}, {"SML", 4}}, 29, dir, "train");

  auto by_lang = [](const Manifest& m, const std::string& lang) {
    std::set<std::string> ids;
    for (const auto& rec : m.records) {
      if (rec.lang == lang) ids.insert(rec.utt_id);
    }
    return ids;
  };

  // Targets matching availability return the same record set.
  const auto same = subsample(full, {{"TGT", 6}, {"SML", 4}}, 1);
  CHECK(by_lang(same, "TGT") == by_lang(full, "TGT"));
  CHECK(by_lang(same, "SML") == by_lang(full, "SML"));

  const auto dropped = subsample(full, {{"SML", 0}}, 1);
  CHECK(by_lang(dropped, "SML").empty());
  CHECK(by_lang(dropped, "TGT") == by_lang(full, "TGT"));  // untargeted: full

  const auto three = subsample(full, {{"TGT", 3}}, 1);
  CHECK(by_lang(three, "TGT").size() == 3);
  CHECK(subsample(full, {{"TGT", 3}}, 1).records == three.records);

  CHECK_THROWS_WITH_AS(subsample(full, {{"TGT", 7}}, 1),
                       doctest::Contains("TGT"), SelectionError);
}

TEST_CASE("subsample picks each record uniformly across seeds") {
  const auto dir = oracle::fresh_dir("subsample-mc");
  const auto spec = build_family(oracle::tiny_family(), 37);
  const auto full = generate_dataset(spec, {{"TGT", 8}}, 37, dir, "train");

  std::map<std::string, int> hits;
  const int trials = 1000;
  for (int s = 0; s < trials; ++s) {
    const auto picked = subsample(full, {{"TGT", 3}}, static_cast<std::uint64_t>(s));
    CHECK(picked.size() == 3);
    for (const auto& rec : picked.records) hits[rec.utt_id] += 1;
  }
  for (const auto& rec : full.records) {
    const double freq = static_cast<double>(hits[rec.utt_id]) / trials;
    CHECK(std::abs(freq - 3.0 / 8.0) < 0.05);
  }
}

TEST_CASE("family and data blocks parse from config text") {
  const std::string text =
      "family\n"
      "feature_dim = 4\n"
      "noise_sigma = 0.25\n"
      "frames_per_char = 1:2\n"
      "language\n"
      "id = AAA\n"
      "script = s1\n"
      "alphabet = abc\n"
      "proximity = 0.7\n"
      "end_prob = 0.3\n"
      "word_len = 1:4\n"
      "words_per_utt = 2:3\n"
      "data\n"
      "nw = AAA:10,BBB:2\n"
      "bl = AAA:5\n"
      "dev = AAA:3\n"
      "test = AAA:3\n"
      "ref_sub = 0.1\n"
      "ref_del = 0.05\n"
      "ref_ins = 0.05\n";
  const auto blocks = parse_config_text(text);
  const auto family = parse_family_config(blocks);
  CHECK(family.feature_dim == 4);
  CHECK(family.frames_per_char.lo == 1);
  CHECK(family.frames_per_char.hi == 2);
  REQUIRE(family.languages.size() == 1);
  CHECK(family.languages[0].words_per_utt.lo == 2);

  const auto data = parse_data_config(blocks);
  CHECK(data.nw_counts == std::map<std::string, int>{{"AAA", 10}, {"BBB", 2}});
  CHECK(data.reference_rates.ins == doctest::Approx(0.05));

  CHECK_THROWS_AS(parse_family_config(parse_config_text("data\nnw = A:1\n")),
                  ConfigError);
  CHECK_THROWS_AS(
      parse_data_config(parse_config_text(
          "data\nnw = A:x\nbl = A:1\ndev = A:1\ntest = A:1\n"
          "ref_sub = 0\nref_del = 0\nref_ins = 0\n")),
      ConfigError);
}
