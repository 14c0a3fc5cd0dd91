#include "streamtts_cli/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <ostream>

#include "streamtts/ar/losses.hpp"
#include "streamtts/ar/training.hpp"
#include "streamtts/dbm/dbm.hpp"
#include "streamtts/error.hpp"
#include "streamtts/lattice/lattice.hpp"
#include "streamtts/numerics/grad_check.hpp"
#include "streamtts/transducer/training.hpp"

namespace streamtts::cli {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kGradTol = 1e-5;
constexpr double kGradStep = 1e-5;

std::string sci(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

num::Tensor random_tensor(num::Shape shape, num::Rng& rng, double scale) {
  num::Tensor t(std::move(shape));
  for (auto& v : t.values()) v = scale * rng.normal();
  return t;
}

/// Random framed text with `interior` regular tokens.
TextSequence random_text(std::size_t interior, std::size_t vocab, num::Rng& rng) {
  std::vector<TokenId> xs(interior);
  for (auto& x : xs) x = static_cast<TokenId>(kFirstTextToken + rng.index(vocab - kFirstTextToken));
  return TextSequence::from_interior(xs, vocab);
}

}  // namespace

bool SuiteResult::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

void SuiteResult::add(std::string name, bool ok, std::string detail) {
  checks.push_back({std::move(name), ok, std::move(detail)});
}

void print_suite(const SuiteResult& result, std::ostream& out) {
  for (const auto& c : result.checks) {
    out << result.suite << "  " << (c.passed ? "PASS" : "FAIL") << "  " << c.name << "  "
        << c.detail << "\n";
  }
}

SuiteResult verify_lattice(const LatticeSuiteOptions& options) {
  SuiteResult r{"lattice", {}};
  num::Rng rng(options.seed);
  double worst = 0.0;
  std::size_t count_mismatch = 0, loss_fail = 0, forbidden_cases = 0;
  for (std::size_t k = 0; k < options.count; ++k) {
    const std::size_t total = 1 + rng.index(options.max_moves);
    const std::size_t h = 1 + rng.index(total);
    const std::size_t s = total - h;
    lattice::LatticeLogProbs lp(h, s);
    // Every tenth lattice forbids a few edges.
    const bool forbid = k % 10 == 9;
    forbidden_cases += forbid;
    for (auto& v : lp.emit.values()) v = forbid && rng.bernoulli(0.15) ? kNegInf : std::log(0.001 + 0.999 * rng.uniform());
    for (auto& v : lp.wait.values()) v = forbid && rng.bernoulli(0.15) ? kNegInf : std::log(0.001 + 0.999 * rng.uniform());

    const auto paths = lattice::enumerate_paths(lp, options.max_moves);
    if (static_cast<double>(paths.size()) != lattice::binomial(h + s, s)) ++count_mismatch;
    double brute = kNegInf;
    for (const auto& p : paths) brute = lattice::log_add(brute, p.log_prob);
    if (brute == kNegInf) {
      bool threw = false;
      try {
        lattice::forward_loss(lp);
      } catch (const InfeasibleLatticeError&) {
        threw = true;
      }
      if (!threw) ++loss_fail;
      continue;
    }
    const double expected = -brute;
    const double got = lattice::forward_loss(lp).loss;
    const double rel = expected == 0.0 ? std::fabs(got) : std::fabs(got - expected) / std::fabs(expected);
    worst = std::max(worst, rel);
    if (!(rel <= 1e-10)) ++loss_fail;
  }
  r.add("forward_loss vs enumeration (" + std::to_string(options.count) + " lattices, H+S<=" +
            std::to_string(options.max_moves) + ", " + std::to_string(forbidden_cases) +
            " with forbidden edges)",
        loss_fail == 0, "max rel err " + sci(worst) + " tol 1e-10, failures " + std::to_string(loss_fail));
  r.add("path count = C(H+S,S)", count_mismatch == 0,
        "mismatches " + std::to_string(count_mismatch) + " tol exact");
  return r;
}

namespace {

void add_grad(SuiteResult& r, const std::string& name, const num::ScalarFn& f, const num::Tensor& x) {
  double err = 0.0;
  std::string note;
  try {
    err = num::grad_check(f, x, kGradStep);
  } catch (const std::exception& e) {
    err = std::numeric_limits<double>::infinity();
    note = std::string(" (") + e.what() + ")";
  }
  r.add(name, err < kGradTol, "max rel err " + sci(err) + " tol " + sci(kGradTol) + note);
}

}  // namespace

SuiteResult verify_gradients(std::uint64_t seed) {
  SuiteResult r{"gradients", {}};
  num::Rng rng(seed);

  for (std::size_t k = 0; k < 4; ++k) {
    const std::size_t h = 2 + k % 4, s = 1 + (k * 2) % 5;
    lattice::LatticeLogProbs lp(h, s);
    for (auto& v : lp.emit.values()) v = std::log(0.05 + 0.9 * rng.uniform());
    for (auto& v : lp.wait.values()) v = std::log(0.05 + 0.9 * rng.uniform());
    const std::string dims = std::to_string(h) + "x" + std::to_string(s);
    add_grad(r, "lattice loss d/d emit " + dims,
             [&](num::Tape& t, num::Var e) { return transducer::lattice_loss(e, t.constant_ref(lp.wait)); },
             lp.emit);
    add_grad(r, "lattice loss d/d wait " + dims,
             [&](num::Tape& t, num::Var w) { return transducer::lattice_loss(t.constant_ref(lp.emit), w); },
             lp.wait);
  }

  transducer::TransducerConfig tc;
  tc.text_vocab = 6;
  tc.sem_vocab = 5;
  tc.embed = 6;
  tc.enc_hidden = 6;
  tc.pred_hidden = 6;
  tc.pred_layers = 1;
  tc.joint_hidden = 6;
  const transducer::TransducerModel tm(tc, num::derive_seed(seed, 1));
  const TextSequence text = random_text(3, tc.text_vocab, rng);
  SemanticTokenSequence y;
  for (int i = 0; i < 4; ++i) y.tokens.push_back(static_cast<TokenId>(rng.index(tc.sem_vocab)));
  for (const char* name : {"tr.joint.out.W", "tr.joint.enc.W", "tr.joint.pred.W"}) {
    add_grad(r, std::string("transducer loss d/d ") + name,
             [&, name](num::Tape& t, num::Var w) {
               nn::Binding p(t, tm.params(), false);
               p.set(name, w);
               return transducer::transducer_loss(p, tm, text, y);
             },
             tm.params().at(name));
  }

  const std::size_t frames = 4, dim = 5;
  const num::Tensor pred = random_tensor({frames, dim}, rng, 1.0);
  const num::Tensor target = random_tensor({frames, dim}, rng, 1.0);
  add_grad(r, "reg loss d/d prediction",
           [&](num::Tape& t, num::Var v) { return ar::reg_loss(v, t.constant_ref(target)); }, pred);
  const num::Tensor mu = random_tensor({frames, dim}, rng, 1.0);
  const num::Tensor lv = random_tensor({frames, dim}, rng, 0.5);
  add_grad(r, "kl loss d/d mu",
           [&](num::Tape& t, num::Var v) { return ar::kl_loss(v, t.constant_ref(lv)); }, mu);
  add_grad(r, "kl loss d/d log_var",
           [&](num::Tape& t, num::Var v) { return ar::kl_loss(t.constant_ref(mu), v); }, lv);
  add_grad(r, "flux loss d/d predicted mean",
           [&](num::Tape& t, num::Var v) { return ar::flux_loss(v, t.constant_ref(target)); }, pred);

  ar::ArConfig ac;
  ac.text_vocab = 6;
  ac.sem_vocab = 5;
  ac.mel_dim = 4;
  ac.latent_dim = 4;
  ac.d_model = 8;
  ac.blocks = 1;
  ac.heads = 2;
  ac.ffn = 8;
  ac.prenet_hidden = 6;
  ac.mlp_hidden = 6;
  const ar::ArModel am(ac, num::derive_seed(seed, 2));
  ar::ArTriple triple;
  for (int i = 0; i < 4; ++i) {
    triple.text.push_back(static_cast<TokenId>(kFirstTextToken + rng.index(ac.text_vocab - 2)));
    triple.tokens.push_back(static_cast<TokenId>(rng.index(ac.sem_vocab)));
  }
  triple.mel = random_tensor({4, ac.mel_dim}, rng, 1.0);
  const num::Tensor eps = random_tensor({4, ac.latent_dim}, rng, 1.0);
  const std::uint64_t dropout_seed = num::derive_seed(seed, 3);
  for (const char* name : {"ar.latent.mu.W", "ar.latent.logvar.W"}) {
    add_grad(r, std::string("L_AR d/d ") + name,
             [&, name](num::Tape& t, num::Var w) {
               nn::Binding p(t, am.params(), false);
               p.set(name, w);
               num::Rng drop(dropout_seed);
               ar::ForwardNoise noise{eps, &drop};
               return ar::ar_loss(p, am, triple, noise, 0.05, 0.5).total;
             },
             am.params().at(name));
  }
  return r;
}

SuiteResult verify_dbm(std::size_t count, std::uint64_t seed) {
  SuiteResult r{"dbm", {}};
  num::Rng rng(seed);
  std::size_t fails[5] = {0, 0, 0, 0, 0};
  std::size_t with_bos = 0;
  for (std::size_t k = 0; k < count; ++k) {
    const TextSequence text = random_text(rng.index(6), 10, rng);
    lattice::AlignmentPath path;
    for (std::size_t i = 0; i < text.size(); ++i) {
      const std::size_t emits = rng.index(4);
      for (std::size_t e = 0; e < emits; ++e) path.moves.push_back(lattice::Move::kEmit);
      path.moves.push_back(lattice::Move::kWait);
    }
    const DurationAlignedText s = lattice::path_to_duration_text(path, text.tokens());
    const dbm::DbmText d = dbm::apply_dbm(s);
    with_bos += d.bos_count > 0;

    if (d.tokens.size() != s.size()) ++fails[0];

    std::map<TokenId, long> balance;
    for (TokenId t : s.tokens) ++balance[t];
    for (TokenId t : d.tokens) --balance[t];
    balance[kBos] -= static_cast<long>(d.bos_count);
    balance[kEos] += static_cast<long>(d.bos_count);
    if (std::any_of(balance.begin(), balance.end(), [](const auto& kv) { return kv.second != 0; })) {
      ++fails[1];
    }

    const dbm::DbmText again = dbm::apply_dbm(DurationAlignedText{d.tokens});
    if (again.tokens != d.tokens || again.bos_count != 0) ++fails[2];

    for (std::size_t t = 0; t + d.bos_count < s.size(); ++t) {
      if (d.tokens[t] != s.tokens[t + d.bos_count]) {
        ++fails[3];
        break;
      }
    }

    dbm::OnlineDbm online;
    std::vector<TokenId> streamed;
    std::size_t holds = 0;
    for (TokenId t : s.tokens) {
      if (auto out = online.push(t)) {
        streamed.push_back(*out);
      } else {
        ++holds;
      }
    }
    for (TokenId t : online.finish()) streamed.push_back(t);
    if (streamed != d.tokens || holds != d.bos_count) ++fails[4];
  }
  const char* names[5] = {"length preservation", "conservation", "idempotence",
                          "lookahead shift", "online/offline equivalence"};
  for (int i = 0; i < 5; ++i) {
    r.add(std::string(names[i]) + " (" + std::to_string(count) + " sequences, " +
              std::to_string(with_bos) + " with leading <bos>)",
          fails[i] == 0, "failures " + std::to_string(fails[i]) + " tol 0");
  }
  return r;
}

namespace {

struct ToyModels {
  transducer::TransducerModel transducer;
  ar::ArModel ar;
};

ToyModels toy_models(std::uint64_t seed) {
  transducer::TransducerConfig tc;
  tc.embed = 16;
  tc.enc_hidden = 16;
  tc.pred_hidden = 16;
  tc.pred_layers = 1;
  tc.joint_hidden = 16;
  ar::ArConfig ac;
  ac.mel_dim = 8;
  ac.latent_dim = 8;
  ac.d_model = 16;
  ac.blocks = 1;
  ac.ffn = 32;
  ac.prenet_hidden = 16;
  ac.mlp_hidden = 16;
  return {transducer::TransducerModel(tc, num::derive_seed(seed, 11)),
          ar::ArModel(ac, num::derive_seed(seed, 12))};
}

bool same_row(const num::Tensor& a, const num::Tensor& b, std::size_t row) {
  for (std::size_t c = 0; c < a.cols(); ++c) {
    if (a(row, c) != b(row, c)) return false;
  }
  return true;
}

}  // namespace

SuiteResult verify_causality(const CausalitySuiteOptions& options) {
  SuiteResult r{"causality", {}};
  std::optional<ToyModels> toy;
  std::optional<pipeline::Models> toy_view;
  if (options.models == nullptr) {
    toy.emplace(toy_models(options.seed));
    toy_view.emplace(pipeline::Models{toy->transducer, toy->ar});
  }
  const pipeline::Models& models = options.models != nullptr ? *options.models : *toy_view;
  const std::size_t vocab = models.transducer.config().text_vocab;
  num::Rng rng(options.seed);

  std::size_t violations = 0, errors = 0, prefix_fail = 0, frames_checked = 0;
  std::string first_error;
  for (std::size_t run = 0; run < options.runs; ++run) {
    const TextSequence a = random_text(1 + rng.index(12), vocab, rng);
    pipeline::RunConfig cfg;
    cfg.seed = num::derive_seed(options.seed, 100 + run);
    transducer::InstrumentedText source(a);
    std::vector<std::size_t> reads;
    try {
      const auto res = pipeline::synthesize_stream(
          models, cfg, nullptr, source,
          [&](std::size_t, const num::Tensor&) { reads.push_back(source.max_position_read()); });

      // Mutate every position after p and compare frames that had read at most p.
      const std::size_t p = 1 + rng.index(a.size() - 2);
      std::vector<TokenId> mutated(a.tokens().begin(), a.tokens().begin() + static_cast<long>(p) + 1);
      const std::size_t tail = rng.index(12);
      for (std::size_t i = 0; i < tail; ++i) {
        mutated.push_back(static_cast<TokenId>(kFirstTextToken + rng.index(vocab - kFirstTextToken)));
      }
      mutated.push_back(kEos);
      const TextSequence b(mutated, vocab);
      transducer::InstrumentedText source_b(b);
      const auto res_b = pipeline::synthesize_stream(models, cfg, nullptr, source_b);
      for (std::size_t f = 0; f < reads.size() && reads[f] <= p; ++f) {
        ++frames_checked;
        if (f >= res_b.frames() || !same_row(res.mel, res_b.mel, f)) {
          ++prefix_fail;
          break;
        }
      }
    } catch (const StreamingViolation& e) {
      ++violations;
      if (first_error.empty()) first_error = e.what();
    } catch (const std::exception& e) {
      ++errors;
      if (first_error.empty()) first_error = e.what();
    }
  }
  r.add("no premature text reads (" + std::to_string(options.runs) + " streaming runs)",
        violations == 0 && errors == 0,
        "violations " + std::to_string(violations) + ", other errors " + std::to_string(errors) +
            " tol 0" + (first_error.empty() ? "" : " (" + first_error + ")"));
  r.add("mel frames invariant under future-text mutation", prefix_fail == 0 && frames_checked > 0,
        "frames compared " + std::to_string(frames_checked) + ", mismatching runs " +
            std::to_string(prefix_fail) + " tol bit-exact");

  // Teacher-forced decoder: rows <= t ignore every input after t.
  const ar::ArModel& am = models.ar;
  const auto& ac = am.config();
  std::size_t ar_fail = 0, ar_checks = 0;
  for (std::size_t trial = 0; trial < 10; ++trial) {
    const std::size_t s = 6;
    std::vector<TokenId> y(s), x(s);
    for (std::size_t i = 0; i < s; ++i) {
      y[i] = static_cast<TokenId>(rng.index(ac.sem_vocab));
      x[i] = static_cast<TokenId>(kFirstTextToken + rng.index(ac.text_vocab - kFirstTextToken));
    }
    const num::Tensor mel_in = random_tensor({s, ac.mel_dim}, rng, 1.0);
    const num::Tensor eps = random_tensor({s, ac.latent_dim}, rng, 1.0);
    const std::uint64_t drop_seed = num::derive_seed(options.seed, 500 + trial);
    auto run = [&](const std::vector<TokenId>& yy, const std::vector<TokenId>& xx,
                   const num::Tensor& mm) {
      num::Tape tape;
      nn::Binding p(tape, am.params(), false);
      num::Rng drop(drop_seed);
      return am.forward_sequence(p, yy, xx, tape.constant_ref(mm), ar::ForwardNoise{eps, &drop})
          .mel.value();
    };
    const num::Tensor base = run(y, x, mel_in);
    const std::size_t t = rng.index(s - 1);
    auto y2 = y;
    auto x2 = x;
    num::Tensor m2 = mel_in;
    for (std::size_t i = t + 1; i < s; ++i) {
      y2[i] = static_cast<TokenId>((y2[i] + 1) % static_cast<TokenId>(ac.sem_vocab));
      x2[i] = x2[i] == kFirstTextToken + 1 ? kFirstTextToken : kFirstTextToken + 1;
      for (std::size_t c = 0; c < ac.mel_dim; ++c) m2(i, c) += 1.0;
    }
    const num::Tensor changed = run(y2, x2, m2);
    for (std::size_t row = 0; row <= t; ++row) {
      ++ar_checks;
      if (!same_row(base, changed, row)) ++ar_fail;
    }
  }
  r.add("teacher-forced AR rows invariant under future mutation", ar_fail == 0,
        "rows compared " + std::to_string(ar_checks) + ", mismatches " + std::to_string(ar_fail) +
            " tol bit-exact");
  return r;
}

}  // namespace streamtts::cli
