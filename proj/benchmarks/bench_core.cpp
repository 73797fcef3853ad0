// Microbenchmarks for the numeric hot paths: joint-network forward, loss,
// backward, BPE training and encoding, edit distance, and greedy decoding.

#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "iplforge/decoder.hpp"
#include "iplforge/metrics.hpp"
#include "iplforge/rng.hpp"
#include "iplforge/tokenizer.hpp"
#include "iplforge/transducer.hpp"

using namespace iplforge;

namespace {

ArchConfig bench_arch() {
  ArchConfig arch;
  arch.vocab_size = 31;
  return arch;
}

Features random_features(int frames, int dim, std::uint64_t seed) {
  Rng rng(seed);
  Features feats;
  feats.frames = frames;
  feats.dim = dim;
  feats.data.resize(static_cast<std::size_t>(frames) * dim);
  for (float& x : feats.data) {
    x = static_cast<float>(rng.uniform(-1.0, 1.0));
  }
  return feats;
}

std::vector<int> random_labels(int count, int vocab, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<int> labels(count);
  for (int& id : labels) {
    id = static_cast<int>(rng.uniform_int(1, vocab));
  }
  return labels;
}

std::string random_corpus(std::size_t chars, std::uint64_t seed) {
  Rng rng(seed);
  std::string out;
  while (out.size() < chars) {
    const int len = 1 + static_cast<int>(rng.uniform_int(0, 5));
    if (!out.empty()) out += ' ';
    for (int i = 0; i < len; ++i) {
      out += static_cast<char>('a' + rng.uniform_int(0, 7));
    }
  }
  return out;
}

void BM_Forward(benchmark::State& state) {
  const ArchConfig arch = bench_arch();
  const Model model = init_model(arch, 1);
  const Features feats = random_features(40, arch.feature_dim, 2);
  const std::vector<int> labels = random_labels(8, arch.vocab_size, 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(forward(model, feats, labels));
  }
}
BENCHMARK(BM_Forward);

void BM_Loss(benchmark::State& state) {
  const ArchConfig arch = bench_arch();
  const Model model = init_model(arch, 1);
  const Features feats = random_features(40, arch.feature_dim, 2);
  const std::vector<int> labels = random_labels(8, arch.vocab_size, 3);
  const LogitLattice lattice = forward(model, feats, labels);
  for (auto _ : state) {
    benchmark::DoNotOptimize(transducer_loss(lattice, labels));
  }
}
BENCHMARK(BM_Loss);

void BM_Backward(benchmark::State& state) {
  const ArchConfig arch = bench_arch();
  const Model model = init_model(arch, 1);
  const Features feats = random_features(40, arch.feature_dim, 2);
  const std::vector<int> labels = random_labels(8, arch.vocab_size, 3);
  const ForwardTrace trace = forward_trace(model, feats, labels);
  const LossResult loss = transducer_loss(trace.lattice, labels);
  for (auto _ : state) {
    benchmark::DoNotOptimize(backward(model, trace, labels, loss.grad));
  }
}
BENCHMARK(BM_Backward);

void BM_BpeTrain(benchmark::State& state) {
  const std::string corpus = random_corpus(4000, 4);
  for (auto _ : state) {
    benchmark::DoNotOptimize(train_bpe(corpus, 64));
  }
}
BENCHMARK(BM_BpeTrain);

void BM_BpeEncode(benchmark::State& state) {
  const std::string corpus = random_corpus(4000, 4);
  const Vocab vocab = train_bpe(corpus, 64);
  const std::string line = random_corpus(80, 5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(encode(vocab, line));
  }
}
BENCHMARK(BM_BpeEncode);

void BM_EditDistance(benchmark::State& state) {
  Rng rng(6);
  std::vector<std::string> ref, hyp;
  for (int i = 0; i < 40; ++i) {
    ref.push_back(std::string(1, static_cast<char>('a' + rng.uniform_int(0, 5))));
    hyp.push_back(std::string(1, static_cast<char>('a' + rng.uniform_int(0, 5))));
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(edit_distance(ref, hyp));
  }
}
BENCHMARK(BM_EditDistance);

void BM_GreedyDecode(benchmark::State& state) {
  const ArchConfig arch = bench_arch();
  const Model model = init_model(arch, 1);
  const Features feats = random_features(40, arch.feature_dim, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(greedy_decode(model, feats));
  }
}
BENCHMARK(BM_GreedyDecode);

}  // namespace

BENCHMARK_MAIN();
