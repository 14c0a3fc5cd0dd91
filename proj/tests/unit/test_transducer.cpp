#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "streamtts/error.hpp"
#include "streamtts/lattice/lattice.hpp"
#include "streamtts/numerics/rng.hpp"
#include "streamtts/transducer/decode.hpp"
#include "streamtts/transducer/training.hpp"

using namespace streamtts;
using namespace streamtts::transducer;

namespace {

TransducerConfig small_config() {
  TransducerConfig c;
  c.text_vocab = 8;
  c.sem_vocab = 6;
  c.embed = 8;
  c.enc_hidden = 12;
  c.pred_hidden = 12;
  c.joint_hidden = 12;
  return c;
}

TextSequence text_of(std::vector<TokenId> interior) { return TextSequence::from_interior(interior, 8); }

/// Model whose joint puts almost all mass on output index `index`.
TransducerModel biased_model(std::size_t index) {
  TransducerModel m(small_config(), 3);
  m.params().at("tr.joint.out.b")[index] = 60.0;
  return m;
}

double max_abs_diff(const num::Tensor& a, const num::Tensor& b) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::fabs(a[i] - b[i]));
  return d;
}

}  // namespace

TEST(Joint, ZeroWeightsGiveUniform) {
  TransducerModel m(small_config(), 1);
  for (auto& [name, t] : m.params().all()) {
    if (name.rfind("tr.joint", 0) == 0) {
      for (auto& v : t.values()) v = 0.0;
    }
  }
  const auto lp = m.joint(num::Tensor({1, 12}, 0.3), num::Tensor({1, 12}, -0.2));
  for (double v : lp.values()) EXPECT_NEAR(v, -std::log(7.0), 1e-15);
}

TEST(Joint, IsNormalisedAndMatchesComposedPrimitives) {
  TransducerModel m(small_config(), 2);
  num::Rng rng(4);
  num::Tensor enc({1, 12}), pred({1, 12});
  for (auto& v : enc.values()) v = rng.normal();
  for (auto& v : pred.values()) v = rng.normal();
  const auto lp = m.joint(enc, pred);
  double total = 0;
  for (double v : lp.values()) total += std::exp(v);
  EXPECT_NEAR(total, 1.0, 1e-9);

  const auto& P = m.params();
  num::Tensor h = num::matmul_plain(enc, P.at("tr.joint.enc.W"));
  const num::Tensor hp = num::matmul_plain(pred, P.at("tr.joint.pred.W"));
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = std::tanh(h[i] + (hp[i] + P.at("tr.joint.b")[i]));
  num::Tensor logits = num::matmul_plain(h, P.at("tr.joint.out.W"));
  double mx = -1e300;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    logits[i] += P.at("tr.joint.out.b")[i];
    mx = std::max(mx, logits[i]);
  }
  double z = 0;
  for (double v : logits.values()) z += std::exp(v - mx);
  for (std::size_t i = 0; i < logits.size(); ++i) EXPECT_NEAR(lp[i], logits[i] - mx - std::log(z), 1e-12);
}

TEST(TransducerLoss, EmptyTargetIsAllBlankPath) {
  TransducerModel m(small_config(), 5);
  const TextSequence x = text_of({2, 3, 4});
  auto enc = m.encoder_initial();
  auto pred = m.predictor_initial();
  const num::Tensor p0 = m.predictor_step(pred, m.config().initial_state_row());
  double want = 0;
  for (TokenId t : x.tokens()) want -= m.joint(m.encoder_step(enc, t), p0)[kBlank];
  EXPECT_NEAR(transducer_loss_value(m, x, SemanticTokenSequence{}), want, 1e-12);
}

TEST(TransducerLoss, MatchesLatticeEnumerationOracle) {
  TransducerModel m(small_config(), 6);
  const TextSequence x = text_of({2, 5});
  const SemanticTokenSequence y{{1, 4, 4}};
  // Joint outputs from the incremental API, independent of the grid code.
  std::vector<num::Tensor> enc_rows, pred_rows;
  auto es = m.encoder_initial();
  for (TokenId t : x.tokens()) enc_rows.push_back(m.encoder_step(es, t));
  auto ps = m.predictor_initial();
  pred_rows.push_back(m.predictor_step(ps, m.config().initial_state_row()));
  for (TokenId t : y.tokens) pred_rows.push_back(m.predictor_step(ps, t));
  lattice::LatticeLogProbs lp(x.size(), y.size(), -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = 0; j <= y.size(); ++j) {
      const auto d = m.joint(enc_rows[i], pred_rows[j]);
      lp.wait(i, j) = d[kBlank];
      if (j < y.size()) lp.emit(i, j) = d[static_cast<std::size_t>(y.tokens[j]) + 1];
    }
  }
  double total = -std::numeric_limits<double>::infinity();
  for (const auto& p : lattice::enumerate_paths(lp)) total = lattice::log_add(total, p.log_prob);
  const double got = transducer_loss_value(m, x, y);
  EXPECT_LE(std::fabs(got + total), 1e-10 * std::fabs(total));
}

TEST(TransducerTraining, OneSmallStepDescends) {
  TransducerModel m(small_config(), 7);
  const TextSequence x = text_of({2, 3});
  const SemanticTokenSequence y{{1, 2, 2, 5}};
  const double before = transducer_loss_value(m, x, y);
  TransducerTrainer trainer(m, {.lr = 1e-3, .clip_norm = 0.0});
  trainer.train_step(x, y);
  EXPECT_LT(transducer_loss_value(m, x, y), before);
}

TEST(TransducerTraining, TwoHundredStepsHalveLossOnTwentyPairs) {
  TransducerModel m(small_config(), 8);
  num::Rng rng(9);
  std::vector<TransducerPair> pairs;
  for (int i = 0; i < 20; ++i) {
    std::vector<TokenId> interior;
    SemanticTokenSequence y;
    for (std::size_t k = 0, n = 2 + rng.index(3); k < n; ++k) {
      const auto t = static_cast<TokenId>(2 + rng.index(6));
      interior.push_back(t);
      y.tokens.push_back(t - 2);  // a learnable one-to-one mapping
      if (t % 2 == 0) y.tokens.push_back(t - 2);
    }
    pairs.push_back({text_of(interior), y});
  }
  auto mean_loss = [&] {
    double s = 0;
    for (const auto& p : pairs) s += transducer_loss_value(m, p.text, p.tokens);
    return s / static_cast<double>(pairs.size());
  };
  const double before = mean_loss();
  TransducerTrainer trainer(m, {});
  for (std::size_t step = 0; step < 200; ++step) {
    std::vector<TransducerPair> batch(pairs.begin() + static_cast<long>((step * 4) % 20),
                                      pairs.begin() + static_cast<long>((step * 4) % 20 + 4));
    trainer.train_step(batch);
  }
  EXPECT_LE(mean_loss(), 0.5 * before);
}

TEST(TransducerTraining, NonFiniteJointReportsNode) {
  TransducerModel m(small_config(), 9);
  m.params().at("tr.joint.out.b")[0] = std::nan("");
  num::Tape tape;
  nn::Binding p(tape, m.params(), true);
  try {
    transducer_loss(p, m, text_of({2}), SemanticTokenSequence{{1}});
    FAIL();
  } catch (const TrainingError& e) {
    EXPECT_EQ(e.row(), 0);
    EXPECT_EQ(e.col(), 0);
  }
}

TEST(Decode, BlankModelOnlyAdvances) {
  const TransducerModel m = biased_model(kBlank);
  const TextSequence x = text_of({2, 3, 4});
  const auto events = decode_stream(m, x, {.top_k = 1, .emission_cap = 10, .seed = 1});
  ASSERT_EQ(events.size(), x.size());
  for (std::size_t i = 0; i + 1 < events.size(); ++i) EXPECT_EQ(events[i].kind, EventKind::kAdvance);
  EXPECT_EQ(events.back().kind, EventKind::kDone);
  EXPECT_TRUE(emitted_tokens(events).empty());
}

TEST(Decode, EmissionCapForcesAdvance) {
  const TransducerModel m = biased_model(3);
  const TextSequence x = text_of({2, 3});
  const auto events = decode_stream(m, x, {.top_k = 1, .emission_cap = 3, .seed = 1});
  EXPECT_EQ(emitted_tokens(events).size(), 3 * x.size());
  std::size_t forced = 0;
  for (const auto& e : events) forced += e.forced;
  EXPECT_EQ(forced, x.size());
  EXPECT_EQ(events.back().kind, EventKind::kDone);
}

TEST(Decode, SameSeedIsBitIdentical) {
  TransducerModel m(small_config(), 10);
  const TextSequence x = text_of({2, 7, 3, 3, 6});
  const DecodeOptions o{.top_k = 5, .emission_cap = 4, .seed = 77};
  EXPECT_EQ(decode_stream(m, x, o), decode_stream(m, x, o));
}

TEST(Decode, EventReplayEqualsOnlineDurationText) {
  TransducerModel m(small_config(), 11);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const TextSequence x = text_of({2, 7, 3, 5});
    const auto events = decode_stream(m, x, {.top_k = 7, .emission_cap = 4, .seed = seed});
    const auto path = events_to_path(events);
    EXPECT_EQ(path.wait_count(), x.size());
    EXPECT_EQ(path.emit_count(), emitted_tokens(events).size());
    EXPECT_EQ(lattice::path_to_duration_text(path, x.tokens()).tokens,
              emitted_duration_text(events).tokens);
  }
}

TEST(Decode, TruncatedTextGivesIdenticalPrefix) {
  TransducerModel m(small_config(), 12);
  const TextSequence full = text_of({2, 7, 3, 5, 6});
  const DecodeOptions o{.top_k = 7, .emission_cap = 4, .seed = 5};
  const auto reference = decode_stream(m, full, o);
  for (std::size_t i = 0; i + 1 < full.size(); ++i) {
    // A source that stops after x_{0:i}.
    InstrumentedText src(full);
    for (std::size_t k = 0; k < i; ++k) src.arrive();
    StreamingDecoder d(m, o);
    std::vector<DecodeEvent> prefix;
    while (auto e = d.next(src)) prefix.push_back(*e);
    ASSERT_LE(prefix.size(), reference.size());
    EXPECT_TRUE(std::equal(prefix.begin(), prefix.end(), reference.begin())) << "prefix " << i;
    EXPECT_LE(src.max_position_read(), i);
  }
}

TEST(Decode, TopKRestrictsSamples) {
  num::Rng rng(3);
  const std::vector<double> lp = {std::log(0.05), std::log(0.3), std::log(0.1), std::log(0.25),
                                  std::log(0.2), std::log(0.1)};
  for (int i = 0; i < 2000; ++i) {
    const std::size_t s = top_k_sample(lp, 3, rng);
    EXPECT_TRUE(s == 1 || s == 3 || s == 4) << s;
  }
  EXPECT_EQ(top_k_sample(lp, 1, rng), 1u);
}

TEST(Decode, EventsRoundTripThroughText) {
  TransducerModel m(small_config(), 13);
  const auto events = decode_stream(m, text_of({4, 5}), {.top_k = 7, .emission_cap = 3, .seed = 2});
  const std::string text = format_events(events);
  EXPECT_EQ(text.substr(text.size() - 5), "DONE\n");
  const auto back = parse_events(text);
  ASSERT_EQ(back.size(), events.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].kind, events[i].kind);
    EXPECT_EQ(back[i].y, events[i].y);
    EXPECT_EQ(back[i].x, events[i].x);
  }
  EXPECT_EQ(format_event(DecodeEvent{.kind = EventKind::kEmit, .y = 3, .x = 5}), "EMIT 3 5");
}

TEST(InstrumentedText, FaultsOnPrematureRead) {
  InstrumentedText src(text_of({4, 5}));
  EXPECT_EQ(src.token(0), kBos);
  EXPECT_THROW(src.token(1), StreamingViolation);
  src.arrive();
  EXPECT_EQ(src.token(1), 4);
}

TEST(Model, RejectsMismatchedParameterShapes) {
  TransducerModel m(small_config(), 1);
  nn::ParamStore bad = m.params();
  bad.at("tr.joint.out.W") = num::Tensor({3, 3});
  EXPECT_THROW(TransducerModel(small_config(), bad), Error);
}

TEST(Model, EncoderIsCausal) {
  TransducerModel m(small_config(), 14);
  auto a = m.encoder_initial(), b = m.encoder_initial();
  std::vector<num::Tensor> ra, rb;
  for (TokenId t : {kBos, 2, 3, 4}) ra.push_back(m.encoder_step(a, t));
  for (TokenId t : {kBos, 2, 7, 7}) rb.push_back(m.encoder_step(b, t));
  EXPECT_EQ(max_abs_diff(ra[1], rb[1]), 0.0);
  EXPECT_GT(max_abs_diff(ra[2], rb[2]), 0.0);
}
