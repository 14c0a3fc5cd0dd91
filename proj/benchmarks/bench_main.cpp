#include <benchmark/benchmark.h>

#include "streamtts/lattice/lattice.hpp"
#include "streamtts/numerics/rng.hpp"
#include "streamtts/pipeline/synthesis.hpp"
#include "streamtts/transducer/training.hpp"

using namespace streamtts;

namespace {

lattice::LatticeLogProbs random_lattice(std::size_t h, std::size_t s) {
  num::Rng rng(h * 131 + s);
  lattice::LatticeLogProbs lp(h, s);
  for (auto& v : lp.emit.values()) v = std::log(0.05 + 0.9 * rng.uniform());
  for (auto& v : lp.wait.values()) v = std::log(0.05 + 0.9 * rng.uniform());
  return lp;
}

const transducer::TransducerModel& toy_transducer() {
  static const transducer::TransducerModel m(transducer::TransducerConfig{}, 1);
  return m;
}

const ar::ArModel& toy_ar() {
  static const ar::ArModel m(ar::ArConfig{}, 2);
  return m;
}

TextSequence random_text(std::size_t len, std::uint64_t seed) {
  num::Rng rng(seed);
  std::vector<TokenId> xs(len);
  for (auto& x : xs) x = static_cast<TokenId>(kFirstTextToken + rng.index(14));
  return TextSequence::from_interior(xs, 16);
}

void BM_LatticeForward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto lp = random_lattice(n, 2 * n);
  for (auto _ : state) benchmark::DoNotOptimize(lattice::forward_loss(lp).loss);
}
BENCHMARK(BM_LatticeForward)->Arg(10)->Arg(50)->Arg(200);

void BM_LatticeGradients(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto lp = random_lattice(n, 2 * n);
  for (auto _ : state) benchmark::DoNotOptimize(lattice::lattice_gradients(lp).loss);
}
BENCHMARK(BM_LatticeGradients)->Arg(10)->Arg(50)->Arg(200);

void BM_TransducerLoss(benchmark::State& state) {
  const auto text = random_text(static_cast<std::size_t>(state.range(0)), 3);
  SemanticTokenSequence y;
  for (std::size_t i = 0; i < 2 * text.size(); ++i) y.tokens.push_back(static_cast<TokenId>(i % 32));
  for (auto _ : state) benchmark::DoNotOptimize(transducer::transducer_loss_value(toy_transducer(), text, y));
}
BENCHMARK(BM_TransducerLoss)->Arg(5)->Arg(20);

void BM_DecodeStream(benchmark::State& state) {
  const auto text = random_text(static_cast<std::size_t>(state.range(0)), 4);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        transducer::decode_stream(toy_transducer(), text, {.top_k = 15, .emission_cap = 10, .seed = seed++}));
  }
}
BENCHMARK(BM_DecodeStream)->Arg(5)->Arg(20)->Arg(100);

void BM_ArStep(benchmark::State& state) {
  const ar::ArModel& m = toy_ar();
  const auto prefix = static_cast<std::size_t>(state.range(0));
  num::Rng rng(5);
  ar::DecoderCache base = m.empty_cache();
  const num::Tensor prev({1, m.config().mel_dim});
  for (std::size_t t = 0; t < prefix; ++t) m.prefill(base, t, 1, 2, prev, rng);
  for (auto _ : state) {
    ar::DecoderCache cache = base;
    benchmark::DoNotOptimize(m.step(cache, {.position = prefix, .y = 3, .x = 4, .mel_prev = &prev}, rng).mel);
  }
}
BENCHMARK(BM_ArStep)->Arg(0)->Arg(50)->Arg(200);

/// Time to the first frame of a streaming run over growing texts.
void BM_FirstFrame(benchmark::State& state) {
  const pipeline::Models models{toy_transducer(), toy_ar()};
  const auto text = random_text(static_cast<std::size_t>(state.range(0)), 6);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    pipeline::RunConfig cfg;
    cfg.seed = seed++;
    transducer::InstrumentedText src(text);
    bool seen = false;
    try {
      pipeline::synthesize_stream(models, cfg, nullptr, src, [&](std::size_t, const num::Tensor&) {
        seen = true;
        throw std::runtime_error("first frame");
      });
    } catch (const std::runtime_error&) {
    }
    benchmark::DoNotOptimize(seen);
  }
}
BENCHMARK(BM_FirstFrame)->Arg(5)->Arg(50)->Arg(200);

}  // namespace
BENCHMARK_MAIN();
