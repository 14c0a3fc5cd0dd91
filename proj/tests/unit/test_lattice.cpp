#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <map>

#include "streamtts/error.hpp"
#include "streamtts/lattice/lattice.hpp"
#include "streamtts/numerics/grad_check.hpp"
#include "streamtts/numerics/rng.hpp"
#include "streamtts/transducer/training.hpp"

using namespace streamtts;
using lattice::LatticeLogProbs;
using lattice::Move;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

LatticeLogProbs random_lattice(std::size_t h, std::size_t s, num::Rng& rng) {
  LatticeLogProbs lp(h, s);
  for (auto& v : lp.emit.values()) v = std::log(0.05 + 0.9 * rng.uniform());
  for (auto& v : lp.wait.values()) v = std::log(0.05 + 0.9 * rng.uniform());
  return lp;
}

double brute_loss(const LatticeLogProbs& lp) {
  double total = kNegInf;
  for (const auto& p : lattice::enumerate_paths(lp)) total = lattice::log_add(total, p.log_prob);
  return -total;
}

}  // namespace

TEST(ForwardLoss, TwoByTwoHalves) {
  LatticeLogProbs lp(2, 2, std::log(0.5));
  EXPECT_NEAR(lattice::forward_loss(lp).loss, -std::log(6 * std::pow(0.5, 4)), 1e-12);
  EXPECT_NEAR(lattice::forward_loss(lp).loss, 0.98083, 1e-5);
}

TEST(ForwardLoss, EmptyTargetIsAllBlankPath) {
  LatticeLogProbs lp(3, 0);
  const double w[] = {-0.1, -0.7, -1.3};
  for (int i = 0; i < 3; ++i) lp.wait(i, 0) = w[i];
  EXPECT_NEAR(lattice::forward_loss(lp).loss, 0.1 + 0.7 + 1.3, 1e-14);
}

TEST(ForwardLoss, RandomThreeByThreeMatchesEnumeration) {
  num::Rng rng(2);
  for (int k = 0; k < 20; ++k) {
    const auto lp = random_lattice(3, 3, rng);
    const double want = brute_loss(lp);
    EXPECT_LE(std::fabs(lattice::forward_loss(lp).loss - want), 1e-10 * std::fabs(want));
  }
}

TEST(ForwardLoss, ZeroHorizontalWithTargetsIsInfeasible) {
  LatticeLogProbs lp(0, 2);
  EXPECT_THROW(lattice::forward_loss(lp), InfeasibleLatticeError);
}

TEST(ForwardLoss, AlphaOriginAndRecurrence) {
  num::Rng rng(4);
  const auto lp = random_lattice(2, 3, rng);
  const auto fwd = lattice::forward_loss(lp);
  const auto& a = fwd.table.alpha;
  EXPECT_EQ(a(0, 0), 0.0);
  EXPECT_NEAR(a(1, 1), lattice::log_add(a(0, 1) + lp.wait(0, 1), a(1, 0) + lp.emit(1, 0)), 1e-14);
  EXPECT_EQ(fwd.loss, -a(2, 3));
}

TEST(ForwardLoss, DumpIsTabSeparatedFullPrecision) {
  LatticeLogProbs lp(1, 1, std::log(0.5));
  const std::string tsv = lattice::forward_loss(lp).table.dump_tsv();
  EXPECT_NE(tsv.find('\t'), std::string::npos);
  EXPECT_NE(tsv.find("-0.69314718055994529"), std::string::npos) << tsv;
}

TEST(EnumeratePaths, Counts) {
  EXPECT_EQ(lattice::enumerate_paths(LatticeLogProbs(2, 2)).size(), 6u);
  const auto only = lattice::enumerate_paths(LatticeLogProbs(3, 0));
  ASSERT_EQ(only.size(), 1u);
  EXPECT_EQ(only[0].str(), "HHH");
}

TEST(EnumeratePaths, TwoByOneSumsToForward) {
  num::Rng rng(8);
  const auto lp = random_lattice(2, 1, rng);
  const auto paths = lattice::enumerate_paths(lp);
  ASSERT_EQ(paths.size(), 3u);
  double p = 0;
  for (const auto& path : paths) p += std::exp(path.log_prob);
  EXPECT_NEAR(p, std::exp(-lattice::forward_loss(lp).loss), 1e-14);
}

TEST(EnumeratePaths, SizeGuardReportsEstimate) {
  try {
    lattice::enumerate_paths(LatticeLogProbs(11, 11));
    FAIL();
  } catch (const SizeGuardError& e) {
    EXPECT_EQ(e.estimated_paths(), lattice::binomial(22, 11));
  }
}

TEST(LatticeGradients, OneByOneClosedForm) {
  // Paths: V then H (emit(0,0) + wait(0,1)) and H then V (wait(0,0) + emit(1,0)).
  LatticeLogProbs lp(1, 1);
  lp.emit(0, 0) = std::log(0.3);
  lp.wait(0, 1) = std::log(0.6);
  lp.wait(0, 0) = std::log(0.4);
  lp.emit(1, 0) = std::log(0.8);
  const double p1 = 0.3 * 0.6, p2 = 0.4 * 0.8;
  const auto g = lattice::lattice_gradients(lp);
  EXPECT_NEAR(g.loss, -std::log(p1 + p2), 1e-14);
  EXPECT_NEAR(g.d_emit(0, 0), -p1 / (p1 + p2), 1e-14);
  EXPECT_NEAR(g.d_wait(0, 1), -p1 / (p1 + p2), 1e-14);
  EXPECT_NEAR(g.d_wait(0, 0), -p2 / (p1 + p2), 1e-14);
  EXPECT_NEAR(g.d_emit(1, 0), -p2 / (p1 + p2), 1e-14);
}

TEST(LatticeGradients, UnreachableEdgeHasZeroGradient) {
  LatticeLogProbs lp(2, 1, std::log(0.5));
  lp.emit(0, 0) = kNegInf;  // forces the first move to be H
  const auto g = lattice::lattice_gradients(lp);
  EXPECT_EQ(g.d_emit(0, 0), 0.0);
  EXPECT_EQ(g.d_wait(0, 1), 0.0);
}

TEST(LatticeGradients, RandomThreeByThreeFiniteDifferences) {
  num::Rng rng(13);
  for (int k = 0; k < 3; ++k) {
    const auto lp = random_lattice(3, 3, rng);
    EXPECT_LT(num::grad_check([&](num::Tape& t, num::Var e) {
                return transducer::lattice_loss(e, t.constant_ref(lp.wait));
              }, lp.emit, 1e-5), 1e-5);
    EXPECT_LT(num::grad_check([&](num::Tape& t, num::Var w) {
                return transducer::lattice_loss(t.constant_ref(lp.emit), w);
              }, lp.wait, 1e-5), 1e-5);
  }
}

TEST(Validate, RejectsPositiveAndNaNEntries) {
  LatticeLogProbs lp(1, 1, -0.5);
  lp.emit(0, 0) = 0.1;
  EXPECT_THROW(lattice::validate(lp), Error);
  lp.emit(0, 0) = std::nan("");
  EXPECT_THROW(lattice::validate(lp), Error);
}

TEST(PathToDurationText, ReplaysCursor) {
  const std::vector<TokenId> x = {kBos, 5, kEos};
  const auto path = lattice::AlignmentPath::parse("HVVHVH");
  EXPECT_EQ(lattice::path_to_duration_text(path, x).tokens, (std::vector<TokenId>{5, 5, kEos}));
}

TEST(PathToDurationText, AllHorizontalIsEmpty) {
  const std::vector<TokenId> x = {kBos, 5, kEos};
  EXPECT_TRUE(lattice::path_to_duration_text(lattice::AlignmentPath::parse("HHH"), x).tokens.empty());
}

TEST(PathToDurationText, CountMismatchIsAlignmentError) {
  const std::vector<TokenId> x = {kBos, 5, kEos};
  EXPECT_THROW(lattice::path_to_duration_text(lattice::AlignmentPath::parse("HVH"), x), AlignmentError);
  EXPECT_THROW(lattice::path_to_duration_text(lattice::AlignmentPath::parse("HHHV"), x), AlignmentError);
}

TEST(PathToDurationText, RandomPathsMatchIndependentReplay) {
  num::Rng rng(21);
  const std::vector<TokenId> x = {kBos, 2, 3, 4, kEos};
  for (int trial = 0; trial < 50; ++trial) {
    lattice::AlignmentPath path;
    std::map<std::size_t, std::size_t> emits_at;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const std::size_t n = rng.index(4);
      emits_at[i] = n;
      for (std::size_t k = 0; k < n; ++k) path.moves.push_back(Move::kEmit);
      path.moves.push_back(Move::kWait);
    }
    std::vector<TokenId> want;
    for (std::size_t i = 0; i < x.size(); ++i) want.insert(want.end(), emits_at[i], x[i]);
    EXPECT_EQ(lattice::path_to_duration_text(path, x).tokens, want);
  }
}
