#include <gtest/gtest.h>

#include "streamtts/dbm/dbm.hpp"
#include "streamtts/error.hpp"
#include "streamtts_cli/verify.hpp"

using namespace streamtts;

namespace {
constexpr TokenId a = 5, b = 6;
}

TEST(ApplyDbm, RemovesLeadingBosAndPadsEos) {
  const auto d = dbm::apply_dbm({{kBos, kBos, a, a, b, kEos}});
  EXPECT_EQ(d.tokens, (std::vector<TokenId>{a, a, b, kEos, kEos, kEos}));
  EXPECT_EQ(d.bos_count, 2u);
}

TEST(ApplyDbm, NoBosIsIdentity) {
  const auto d = dbm::apply_dbm({{a, b, kEos}});
  EXPECT_EQ(d.tokens, (std::vector<TokenId>{a, b, kEos}));
  EXPECT_EQ(d.bos_count, 0u);
}

TEST(ApplyDbm, AllBosBecomesAllEos) {
  EXPECT_EQ(dbm::apply_dbm({{kBos, kBos}}).tokens, (std::vector<TokenId>{kEos, kEos}));
}

TEST(ApplyDbm, InteriorBosIsMalformed) {
  EXPECT_THROW(dbm::apply_dbm({{kBos, a, kBos, kEos}}), AlignmentError);
}

TEST(OnlineDbm, HoldsThenPassesThrough) {
  dbm::OnlineDbm o;
  EXPECT_FALSE(o.push(kBos));
  EXPECT_FALSE(o.push(kBos));
  EXPECT_EQ(o.push(a), a);
  EXPECT_TRUE(o.passing_through());
  EXPECT_EQ(o.holds(), 2u);
  EXPECT_EQ(o.finish(), (std::vector<TokenId>{kEos, kEos}));
}

TEST(OnlineDbm, ZeroBosIsPurePassThrough) {
  dbm::OnlineDbm o;
  EXPECT_EQ(o.push(a), a);
  EXPECT_EQ(o.push(b), b);
  EXPECT_EQ(o.holds(), 0u);
  EXPECT_TRUE(o.finish().empty());
}

TEST(OnlineDbm, LateBosAndUseAfterFinishFail) {
  dbm::OnlineDbm o;
  o.push(a);
  EXPECT_THROW(o.push(kBos), AlignmentError);
  dbm::OnlineDbm done;
  done.finish();
  EXPECT_THROW(done.push(a), StateError);
}

TEST(DbmProperties, HoldOnRandomSequences) {
  const auto r = cli::verify_dbm(2000, 17);
  for (const auto& c : r.checks) EXPECT_TRUE(c.passed) << c.name << " " << c.detail;
}
