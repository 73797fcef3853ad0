#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "iplforge/manifest.hpp"
#include "iplforge/tokenizer.hpp"
#include "support/oracles.hpp"

using namespace iplforge;
using oracle::run_cli;

namespace {

const std::string kFamilyText =
    "family\nfeature_dim = 8\nnoise_sigma = 0.3\nframes_per_char = 2:2\n"
    "language\nid = AAA\nscript = s1\nalphabet = abc\nproximity = 0.7\n"
    "end_prob = 0.4\nword_len = 1:3\nwords_per_utt = 1:2\n"
    "language\nid = BBB\nscript = s1\nalphabet = abd\nproximity = 0.7\n"
    "end_prob = 0.4\nword_len = 1:3\nwords_per_utt = 1:2\n"
    "language\nid = CCC\nscript = s2\nalphabet = xyz\nproximity = 0.6\n"
    "end_prob = 0.4\nword_len = 1:3\nwords_per_utt = 1:2\n"
    "language\nid = DDD\nscript = s2\nalphabet = xyw\nproximity = 0.6\n"
    "end_prob = 0.4\nword_len = 1:3\nwords_per_utt = 1:2\n"
    "language\nid = EEE\nscript = s2\nalphabet = xyv\nproximity = 0.6\n"
    "end_prob = 0.4\nword_len = 1:3\nwords_per_utt = 1:2\n";

const std::string kDataText =
    "data\nseed = 4\nnw = AAA:6,BBB:8,CCC:5,DDD:5,EEE:4\n"
    "bl = AAA:8,BBB:6,CCC:6,DDD:6,EEE:5\ndev = AAA:3\ntest = AAA:4\n"
    "ref_sub = 0.1\nref_del = 0.05\nref_ins = 0.05\n";

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

// One generated dataset plus arch/trainer configs, shared by the command
// tests; everything downstream of gen-data reuses these files.
struct CliFixture {
  std::filesystem::path dir;

  CliFixture() {
    dir = oracle::fresh_dir("cli");
    write_file(dir / "gen.cfg", kFamilyText + kDataText);
    write_file(dir / "arch.cfg",
               "arch\nfeature_dim = 8\nencoder_dim = 10\nlabel_dim = 6\n"
               "joiner_dim = 8\ndownsample = 2\nattention = on\n");
    write_file(dir / "trainer.cfg",
               "trainer\nsteps = 40\nbatch = 4\nlr = 0.002\n"
               "eval_every = 20\nseed = 3\n");
    const auto gen = run_cli("gen-data --config " + (dir / "gen.cfg").string() +
                             " --out " + (dir / "data").string());
    REQUIRE(gen.exit_code == 0);

    const auto tok = run_cli(
        "train-tokenizer --manifests " +
        (dir / "data" / "AAA_bl_ref.tsv").string() + " --size 10 --out " +
        (dir / "tok.vocab").string());
    REQUIRE(tok.exit_code == 0);

    const auto train = run_cli(
        "train --arch " + (dir / "arch.cfg").string() + " --train " +
        (dir / "data" / "AAA_bl_ref.tsv").string() + " --dev " +
        (dir / "data" / "AAA_dev.tsv").string() + " --vocab " +
        (dir / "tok.vocab").string() + " --cfg " +
        (dir / "trainer.cfg").string() + " --out " +
        (dir / "model").string());
    REQUIRE(train.exit_code == 0);
    REQUIRE(train.err.find("best step") != std::string::npos);
  }
};

CliFixture& fixture() {
  static CliFixture fx;
  return fx;
}

}  // namespace

TEST_CASE("gen-data announces its seed and is deterministic") {
  const CliFixture& fx = fixture();
  CHECK(std::filesystem::exists(fx.dir / "data" / "AAA_nw_truth.tsv"));
  CHECK(std::filesystem::exists(fx.dir / "data" / "AAA_test_ref.tsv"));

  const auto again = run_cli("gen-data --config " +
                             (fx.dir / "gen.cfg").string() + " --out " +
                             (fx.dir / "data2").string());
  REQUIRE(again.exit_code == 0);
  CHECK(again.err.find("seed 4\n") != std::string::npos);  // config fallback
  std::string diff;
  CHECK(oracle::identical_trees(fx.dir / "data", fx.dir / "data2", &diff));
}

TEST_CASE("seed resolution prefers the flag over the environment") {
  const CliFixture& fx = fixture();
  setenv("IPLFORGE_SEED", "9", 1);
  const auto env_run = run_cli("gen-data --config " +
                               (fx.dir / "gen.cfg").string() + " --out " +
                               (fx.dir / "data-env").string());
  CHECK(env_run.err.find("seed 9\n") != std::string::npos);

  const auto flag_run = run_cli("gen-data --seed 5 --config " +
                                (fx.dir / "gen.cfg").string() + " --out " +
                                (fx.dir / "data-flag").string());
  CHECK(flag_run.err.find("seed 5\n") != std::string::npos);
  unsetenv("IPLFORGE_SEED");

  setenv("IPLFORGE_SEED", "not-a-number", 1);
  const auto bad = run_cli("gen-data --config " +
                           (fx.dir / "gen.cfg").string() + " --out " +
                           (fx.dir / "data-bad").string());
  CHECK(bad.exit_code == 1);
  unsetenv("IPLFORGE_SEED");
}

TEST_CASE("trained vocabulary file carries the format header") {
  const CliFixture& fx = fixture();
  const std::string text = oracle::read_bytes(fx.dir / "tok.vocab");
  CHECK(text.rfind("bpe-vocab v1 ", 0) == 0);
  const Vocab vocab = load_vocab(fx.dir / "tok.vocab");
  CHECK(vocab.size() <= 10);
}

TEST_CASE("decode emits pseudo labels with certainties") {
  const CliFixture& fx = fixture();
  const auto result = run_cli(
      "decode --ckpt " + (fx.dir / "model" / "model.ckpt").string() +
      " --manifest " + (fx.dir / "data" / "AAA_bl_ref.tsv").string() +
      " --vocab " + (fx.dir / "tok.vocab").string() +
      " --stage-ref st1 --out " + (fx.dir / "pseudo.tsv").string());
  REQUIRE(result.exit_code == 0);
  CHECK(result.err.find("8 records decoded") != std::string::npos);

  const Manifest decoded = load_manifest(fx.dir / "pseudo.tsv");
  REQUIRE(decoded.size() == 8);
  for (const auto& rec : decoded.records) {
    CHECK(rec.source == TranscriptSource::pseudo("st1"));
    CHECK(rec.certainty.has_value());
  }
}

TEST_CASE("select keeps the requested fraction") {
  const CliFixture& fx = fixture();
  const auto all = run_cli("select --manifest " +
                           (fx.dir / "pseudo.tsv").string() +
                           " --fraction 1.0 --out " +
                           (fx.dir / "sel-all.tsv").string());
  REQUIRE(all.exit_code == 0);
  CHECK(all.err.find("8 of 8 records kept") != std::string::npos);

  const auto half = run_cli("select --manifest " +
                            (fx.dir / "pseudo.tsv").string() +
                            " --fraction 0.5 --out " +
                            (fx.dir / "sel-half.tsv").string());
  REQUIRE(half.exit_code == 0);
  CHECK(half.err.find("4 of 8 records kept") != std::string::npos);

  const auto bad = run_cli("select --manifest " +
                           (fx.dir / "pseudo.tsv").string() +
                           " --fraction 0 --out " +
                           (fx.dir / "sel-none.tsv").string());
  CHECK(bad.exit_code == 2);
  CHECK(bad.err.find("error:") != std::string::npos);
}

TEST_CASE("a model scores zero error against its own labels") {
  const CliFixture& fx = fixture();
  const auto result = run_cli(
      "evaluate --ckpt " + (fx.dir / "model" / "model.ckpt").string() +
      " --manifest " + (fx.dir / "pseudo.tsv").string() + " --vocab " +
      (fx.dir / "tok.vocab").string());
  REQUIRE(result.exit_code == 0);
  CHECK(result.out == "wer 0.000000\n");
}

TEST_CASE("usage errors exit with one and a single message line") {
  const auto unknown = run_cli("frobnicate");
  CHECK(unknown.exit_code == 1);

  const CliFixture& fx = fixture();
  const auto no_mode = run_cli(
      "train --arch " + (fx.dir / "arch.cfg").string() + " --train x "
      "--dev y --vocab z --cfg w --out v --warm-start ckpt");
  CHECK(no_mode.exit_code == 1);
  CHECK(no_mode.err.rfind("usage error: ", 0) == 0);
  CHECK(std::count(no_mode.err.begin(), no_mode.err.end(), '\n') == 1);
}

TEST_CASE("module failures exit with two") {
  const auto missing = run_cli(
      "evaluate --ckpt /nonexistent.ckpt --manifest /nonexistent.tsv "
      "--vocab /nonexistent.vocab");
  CHECK(missing.exit_code == 2);
  CHECK(missing.err.find("error:") != std::string::npos);
}

TEST_CASE("curriculum runs are reproducible byte for byte") {
  const CliFixture& fx = fixture();
  const std::string curriculum =
      kFamilyText + kDataText +
      "arch\nfeature_dim = 8\nencoder_dim = 10\nlabel_dim = 6\n"
      "joiner_dim = 8\ndownsample = 2\nattention = on\n"
      "tokenizer\nname = tok\nlanguages = AAA,BBB\nsize = 10\n"
      "stage\nstage_ref = base\nlanguages = AAA\nweighting = BL\n"
      "source = reference\ntokenizer = tok\nwarm_start = none\n"
      "select = none\nsteps = 30\nbatch = 4\nlr = 0.002\neval_every = 15\n"
      "seed = 3\n"
      "stage\nstage_ref = pass\nlanguages = AAA\nweighting = BL\n"
      "source = pseudo:base\ntokenizer = tok\nwarm_start = base\n"
      "select = 0.5\nsteps = 10\nbatch = 4\nlr = 0.001\neval_every = 5\n"
      "seed = 3\n";
  write_file(fx.dir / "curriculum.cfg", curriculum);

  const auto run1 = run_cli("run-curriculum --file " +
                            (fx.dir / "curriculum.cfg").string() + " --out " +
                            (fx.dir / "run1").string());
  REQUIRE(run1.exit_code == 0);
  CHECK(std::count(run1.out.begin(), run1.out.end(), '\n') == 2);
  CHECK(run1.out.find("base\t") != std::string::npos);
  CHECK(run1.out.find("pass\t") != std::string::npos);
  CHECK(std::filesystem::exists(fx.dir / "run1" / "registry.tsv"));
  CHECK(std::filesystem::exists(fx.dir / "run1" / "report.tsv"));

  const auto run2 = run_cli("run-curriculum --file " +
                            (fx.dir / "curriculum.cfg").string() + " --out " +
                            (fx.dir / "run2").string());
  REQUIRE(run2.exit_code == 0);
  CHECK(run1.out == run2.out);
  std::string diff;
  CHECK(oracle::identical_trees(fx.dir / "run1", fx.dir / "run2", &diff));

  const auto report = run_cli(
      "report --registry " + (fx.dir / "run1").string() + " --test " +
      (fx.dir / "run1" / "data" / "AAA_test.tsv").string() +
      " --reference-wer 0.2");
  REQUIRE(report.exit_code == 0);
  CHECK(report.out.find("base\t") != std::string::npos);
}
