#include <gtest/gtest.h>

#include <cmath>

#include "streamtts/ar/losses.hpp"
#include "streamtts/ar/training.hpp"
#include "streamtts/error.hpp"
#include "streamtts/numerics/rng.hpp"

using namespace streamtts;
using namespace streamtts::ar;

namespace {

ArConfig small_config() {
  ArConfig c;
  c.text_vocab = 8;
  c.sem_vocab = 6;
  c.mel_dim = 6;
  c.latent_dim = 6;
  c.d_model = 16;
  c.blocks = 2;
  c.heads = 2;
  c.ffn = 32;
  c.prenet_hidden = 16;
  c.mlp_hidden = 16;
  return c;
}

/// Frames that follow the token deterministically, plus a little noise.
ArTriple make_triple(num::Rng& rng, std::size_t length, std::size_t mel_dim) {
  ArTriple t;
  t.mel = num::Tensor({length, mel_dim});
  for (std::size_t s = 0; s < length; ++s) {
    const TokenId y = static_cast<TokenId>(rng.index(6));
    t.tokens.push_back(y);
    t.text.push_back(static_cast<TokenId>(2 + y % 3));
    for (std::size_t d = 0; d < mel_dim; ++d) {
      t.mel(s, d) = (d == static_cast<std::size_t>(y) ? 2.0 : -1.0) + 0.05 * rng.normal();
    }
  }
  return t;
}

/// Noise-free evaluation of the loss: eps = 0 and no dropout.
ArLossBreakdown eval_loss(const ArModel& m, const ArTriple& t, double lambda, double beta) {
  num::Tape tape;
  nn::Binding p(tape, m.params(), false);
  ForwardNoise noise{num::Tensor({t.tokens.size(), m.config().latent_dim}), nullptr};
  const ArLossVars l = ar_loss(p, m, t, noise, lambda, beta);
  return {l.total.value().item(), l.reg.value().item(), l.kl.value().item(),
          l.flux.value().item()};
}

std::vector<ArStepResult> run_steps(const ArModel& m, const ArTriple& t, std::uint64_t seed,
                                    bool zero_eps) {
  DecoderCache cache = m.empty_cache();
  num::Rng rng(seed);
  num::Tensor prev({1, m.config().mel_dim});
  std::vector<ArStepResult> out;
  for (std::size_t s = 0; s < t.tokens.size(); ++s) {
    ArStepInput in{.position = s, .y = t.tokens[s], .x = t.text[s], .mel_prev = &prev};
    if (zero_eps) in.eps = std::vector<double>(m.config().latent_dim, 0.0);
    out.push_back(m.step(cache, in, rng));
    prev = num::Tensor({1, m.config().mel_dim});
    for (std::size_t d = 0; d < m.config().mel_dim; ++d) prev[d] = t.mel(s, d);
  }
  return out;
}

}  // namespace

TEST(ArStep, ZeroNoiseSamplesTheMean) {
  ArModel m(small_config(), 1);
  num::Rng rng(2);
  const ArTriple t = make_triple(rng, 5, 6);
  for (const auto& r : run_steps(m, t, 3, true)) EXPECT_EQ(r.z, r.latent.mu);
}

TEST(ArStep, SameSeedIsDeterministic) {
  ArModel m(small_config(), 1);
  num::Rng rng(2);
  const ArTriple t = make_triple(rng, 6, 6);
  const auto a = run_steps(m, t, 9, false), b = run_steps(m, t, 9, false);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].mel, b[i].mel);
  const auto c = run_steps(m, t, 10, false);
  EXPECT_NE(a[0].mel, c[0].mel);
}

TEST(ArStep, ReparameterisationUsesSigma) {
  ArModel m(small_config(), 1);
  num::Rng rng(2);
  const ArTriple t = make_triple(rng, 1, 6);
  DecoderCache cache = m.empty_cache();
  num::Tensor prev({1, 6});
  num::Rng step_rng(1);
  const ArStepResult r = m.step(
      cache, {.position = 0, .y = t.tokens[0], .x = t.text[0], .mel_prev = &prev,
              .eps = std::vector<double>(6, 1.0)},
      step_rng);
  const num::Tensor sigma = r.latent.sigma();
  for (std::size_t d = 0; d < 6; ++d) EXPECT_NEAR(r.z[d], r.latent.mu[d] + sigma[d], 1e-14);
}

TEST(ArStep, CacheMismatchIsStateError) {
  ArModel m(small_config(), 1);
  DecoderCache cache = m.empty_cache();
  num::Tensor prev({1, 6});
  num::Rng rng(1);
  EXPECT_THROW(m.step(cache, {.position = 1, .y = 0, .x = 2, .mel_prev = &prev}, rng), StateError);
}

TEST(ArStep, IncrementalMatchesTeacherForcedPass) {
  ArConfig c = small_config();
  c.infer_mel_dropout = 0.0;
  ArModel m(c, 4);
  num::Rng rng(5);
  const ArTriple t = make_triple(rng, 7, 6);
  const auto steps = run_steps(m, t, 1, true);
  num::Tape tape;
  nn::Binding p(tape, m.params(), false);
  const SequenceOutputs seq =
      m.forward_sequence(p, t.tokens, t.text, tape.constant(shifted_mel_inputs(t.mel)),
                         {num::Tensor({7, 6}), nullptr});
  for (std::size_t s = 0; s < 7; ++s) {
    for (std::size_t d = 0; d < 6; ++d) {
      EXPECT_NEAR(seq.mu.value()(s, d), steps[s].latent.mu[d], 1e-10);
      EXPECT_NEAR(seq.mel.value()(s, d), steps[s].mel[d], 1e-10);
    }
  }
}

TEST(ArStep, FutureInputsDoNotChangeEarlierRows) {
  ArModel m(small_config(), 6);
  num::Rng rng(7);
  const ArTriple a = make_triple(rng, 6, 6);
  ArTriple b = a;
  b.tokens[4] = (b.tokens[4] + 1) % 6;
  b.text[5] = 7;
  b.mel(3, 0) += 10.0;  // feeds row 4 as the previous frame
  auto rows = [&](const ArTriple& t) {
    num::Tape tape;
    nn::Binding p(tape, m.params(), false);
    return m.forward_sequence(p, t.tokens, t.text, tape.constant(shifted_mel_inputs(t.mel)),
                              {num::Tensor({6, 6}), nullptr})
        .mu.value();
  };
  const num::Tensor ra = rows(a), rb = rows(b);
  for (std::size_t s = 0; s < 4; ++s) {
    for (std::size_t d = 0; d < 6; ++d) EXPECT_EQ(ra(s, d), rb(s, d));
  }
  EXPECT_NE(ra(4, 0), rb(4, 0));
}

TEST(KlLoss, ClosedFormExamples) {
  EXPECT_EQ(kl_loss(LatentGaussian{num::Tensor({1, 3}), num::Tensor({1, 3})}), 0.0);
  EXPECT_NEAR(kl_loss(LatentGaussian{num::Tensor({1, 2}, 1.0), num::Tensor({1, 2})}), 1.0, 1e-15);
  // Two frames: the second contributes 0.5 * (e - 2) per dimension.
  LatentGaussian g{num::Tensor({2, 1}), num::Tensor::matrix({{0.0}, {1.0}})};
  EXPECT_NEAR(kl_loss(g), 0.25 * (std::exp(1.0) - 2.0), 1e-15);
}

TEST(KlLoss, AgreesWithMonteCarlo) {
  const double mu = 0.5, lv = std::log(0.64), sigma = 0.8;
  num::Rng rng(11);
  double acc = 0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) {
    const double e = rng.normal(), z = mu + sigma * e;
    // log q(z) - log p(z)
    acc += -0.5 * e * e - std::log(sigma) + 0.5 * z * z;
  }
  const double closed = kl_loss(LatentGaussian{num::Tensor({1, 1}, mu), num::Tensor({1, 1}, lv)});
  EXPECT_NEAR(acc / n, closed, 5e-3);
}

TEST(RegLoss, Examples) {
  const num::Tensor target({1, 2});
  EXPECT_EQ(reg_loss(target, target), 0.0);
  EXPECT_DOUBLE_EQ(reg_loss(num::Tensor({1, 2}, 1.0), target), 4.0);
  EXPECT_DOUBLE_EQ(reg_loss(num::Tensor::matrix({{0.5, -2.0}, {0.0, 0.0}}), num::Tensor({2, 2})),
                   0.5 * (0.5 + 0.25 + 2.0 + 4.0));
  EXPECT_THROW(reg_loss(num::Tensor({1, 3}), target), DimensionError);
}

TEST(RegLoss, MatchesLoopOracle) {
  num::Rng rng(3);
  num::Tensor a({5, 4}), b({5, 4});
  for (auto& v : a.values()) v = rng.normal();
  for (auto& v : b.values()) v = rng.normal();
  double want = 0;
  for (std::size_t s = 0; s < 5; ++s) {
    for (std::size_t d = 0; d < 4; ++d) {
      const double e = a(s, d) - b(s, d);
      want += std::fabs(e) + e * e;
    }
  }
  EXPECT_NEAR(reg_loss(a, b), want / 5.0, 1e-13);
  num::Tape tape;
  EXPECT_NEAR(reg_loss(tape.constant(a), tape.constant(b)).value().item(), want / 5.0, 1e-13);
}

TEST(FluxLoss, Examples) {
  const num::Tensor alt = num::Tensor::matrix({{1.0}, {-1.0}, {1.0}});
  EXPECT_DOUBLE_EQ(flux_loss(alt, alt), -2.0);
  EXPECT_EQ(flux_loss(num::Tensor({1, 3}, 5.0), num::Tensor({1, 3})), 0.0);
  const num::Tensor flat({4, 2}, 0.7);
  EXPECT_EQ(flux_loss(flat, flat), 0.0);
  num::Tape tape;
  EXPECT_DOUBLE_EQ(flux_loss(tape.constant(alt), tape.constant(alt)).value().item(), -2.0);
}

TEST(ArLoss, ZeroWeightsReduceToRegression) {
  ArModel m(small_config(), 8);
  num::Rng rng(4);
  const ArTriple t = make_triple(rng, 5, 6);
  const ArLossBreakdown l = eval_loss(m, t, 0.0, 0.0);
  EXPECT_EQ(l.total, l.reg);
  const ArLossBreakdown w = eval_loss(m, t, 0.05, 0.5);
  EXPECT_NEAR(w.total, w.reg + 0.05 * w.kl + 0.5 * w.flux, 1e-12);
}

TEST(ArLoss, RejectsMismatchedTriple) {
  ArModel m(small_config(), 8);
  num::Rng rng(4);
  ArTriple t = make_triple(rng, 5, 6);
  t.text.pop_back();
  EXPECT_THROW(eval_loss(m, t, 0.0, 0.0), DimensionError);
}

TEST(ArTraining, KlWeightWarmsUp) {
  ArModel m(small_config(), 9);
  num::Rng rng(1);
  const std::vector<ArTriple> batch{make_triple(rng, 4, 6)};
  ArTrainer trainer(m, {.kl_warmup = 2});
  EXPECT_EQ(trainer.current_lambda(), 0.0);
  trainer.train_step(batch, 1);
  EXPECT_EQ(trainer.current_lambda(), 0.0);
  trainer.train_step(batch, 2);
  EXPECT_EQ(trainer.current_lambda(), 0.05);
}

TEST(ArTraining, TwoHundredStepsHalveLossOnTenTriples) {
  ArModel m(small_config(), 10);
  num::Rng rng(12);
  std::vector<ArTriple> triples;
  for (int i = 0; i < 10; ++i) triples.push_back(make_triple(rng, 4 + rng.index(5), 6));
  const ArTrainOptions opts;
  auto mean_loss = [&](double lambda) {
    double s = 0;
    for (const auto& t : triples) s += eval_loss(m, t, lambda, opts.beta).total;
    return s / 10.0;
  };
  const double before = mean_loss(opts.lambda);
  ArTrainer trainer(m, opts);
  for (std::uint64_t step = 0; step < 200; ++step) {
    const std::size_t first = (step * 2) % 10;
    trainer.train_step(std::span<const ArTriple>(triples.data() + first, 2), step);
  }
  const double after = mean_loss(opts.lambda);
  EXPECT_LE(after, 0.5 * before) << before << " -> " << after;
}

TEST(ArTraining, NonFiniteLossIsTrainingError) {
  ArModel m(small_config(), 11);
  num::Rng rng(1);
  std::vector<ArTriple> batch{make_triple(rng, 3, 6)};
  batch[0].mel(1, 1) = std::nan("");
  ArTrainer trainer(m, {});
  EXPECT_THROW(trainer.train_step(batch, 1), TrainingError);
}
