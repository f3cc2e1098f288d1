#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "ctlab/engine.hpp"

using namespace ctlab;

namespace {

std::vector<SubjectId> ids(int n) {
  std::vector<SubjectId> v;
  for (int i = 0; i < n; ++i) v.push_back("s" + std::to_string(i));
  return v;
}

RoundConfig config_of(int n) {
  RoundConfig c;
  c.group_size = n;
  return c;
}

GameEvent contrib(const SubjectId& s, int amount, Millis at, std::int64_t seq = 0) {
  GameEvent e;
  e.kind = EventKind::Contributed;
  e.subject_id = s;
  e.amount = amount;
  e.at_ms = at;
  e.seq = seq;
  return e;
}

GameEvent pass(const SubjectId& s, Millis at) {
  GameEvent e;
  e.kind = EventKind::Passed;
  e.subject_id = s;
  e.at_ms = at;
  return e;
}

void expect_code(ErrorCode code, auto&& fn) {
  try {
    fn();
    ADD_FAILURE() << "no error, expected " << to_string(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

}  // namespace

TEST(NewRound, OpensWithBaseDeadline) {
  const auto s = new_round(config_of(8), ids(8));
  EXPECT_EQ(s.phase, Phase::Open);
  EXPECT_EQ(s.deadline_ms, 50'000);
  EXPECT_TRUE(s.contributions.empty());
}

TEST(NewRound, SevenMembersProvisionPoint) {
  const auto s = new_round(config_of(7), ids(7));
  EXPECT_EQ(provision_point(s.config), 42);
  EXPECT_EQ(provision_point(config_of(8)), 48);
  EXPECT_EQ(provision_point(config_of(10)), 60);
}

TEST(NewRound, RejectsWrongSizeAndDuplicates) {
  expect_code(ErrorCode::ConfigError, [] { new_round(config_of(8), ids(7)); });
  auto dup = ids(8);
  dup[7] = dup[0];
  expect_code(ErrorCode::ConfigError, [&] { new_round(config_of(8), dup); });
}

TEST(Apply, EarlyContributionLeavesDeadline) {
  const auto s = new_round(config_of(8), ids(8));
  const auto t = apply(s, contrib("s1", 5, 10'000));
  ASSERT_EQ(t.state.contributions.size(), 1u);
  EXPECT_EQ(t.state.contributions[0].amount, 5);
  EXPECT_EQ(t.state.contributions[0].at_ms, 10'000);
  EXPECT_EQ(t.state.deadline_ms, 50'000);
  EXPECT_FALSE(t.extended_to);
  EXPECT_TRUE(s.contributions.empty());
}

TEST(Apply, LateContributionExtends) {
  const auto s = new_round(config_of(8), ids(8));
  const auto t = apply(s, contrib("s1", 5, 47'000));
  EXPECT_EQ(t.state.deadline_ms, 55'000);
  EXPECT_EQ(t.extended_to, 55'000);
  EXPECT_EQ(t.state.extensions_granted, 1);
}

TEST(Apply, WindowBoundaryIsInclusive) {
  const auto s = new_round(config_of(8), ids(8));
  EXPECT_EQ(apply(s, contrib("s1", 1, 45'000)).state.deadline_ms, 55'000);
  EXPECT_EQ(apply(s, contrib("s1", 1, 44'999)).state.deadline_ms, 50'000);
}

TEST(Apply, ExtensionsRepeatUpToCap) {
  auto s = new_round(config_of(10), ids(10));
  Millis at = 49'000;
  for (int i = 0; i < 10; ++i) {
    const auto t = apply(s, contrib("s" + std::to_string(i), 1, at));
    EXPECT_GE(t.state.deadline_ms, s.deadline_ms);
    EXPECT_LE(t.state.deadline_ms, 120'000);
    s = t.state;
    at = s.deadline_ms - 1;
  }
  EXPECT_EQ(s.deadline_ms, 100'000);
  EXPECT_EQ(s.extensions_granted, 10);

  RoundConfig c = config_of(8);
  c.max_duration_ms = 52'000;
  const auto capped = apply(new_round(c, ids(8)), contrib("s0", 1, 49'000));
  EXPECT_EQ(capped.state.deadline_ms, 50'000);
  EXPECT_FALSE(capped.extended_to);
}

TEST(Apply, Rejections) {
  const auto s = new_round(config_of(8), ids(8));
  const auto one = apply(s, contrib("s1", 5, 100)).state;
  expect_code(ErrorCode::DuplicateAction, [&] { apply(one, contrib("s1", 5, 200)); });
  expect_code(ErrorCode::DuplicateAction, [&] { apply(one, pass("s1", 200)); });
  expect_code(ErrorCode::RoundClosed, [&] { apply(s, contrib("s1", 5, 50'001)); });
  expect_code(ErrorCode::InvalidAmount, [&] { apply(s, contrib("s1", 0, 1)); });
  expect_code(ErrorCode::InvalidAmount, [&] { apply(s, contrib("s1", 11, 1)); });
  expect_code(ErrorCode::NotAMember, [&] { apply(s, contrib("x", 5, 1)); });
  GameEvent start;
  start.kind = EventKind::RoundStarted;
  expect_code(ErrorCode::InvalidEvent, [&] { apply(s, start); });
  auto closed = s;
  closed.phase = Phase::Closed;
  expect_code(ErrorCode::RoundClosed, [&] { apply(closed, contrib("s1", 5, 1)); });
}

TEST(Apply, PassThenContributeIsDuplicate) {
  const auto s = apply(new_round(config_of(8), ids(8)), pass("s2", 10)).state;
  EXPECT_TRUE(s.passes.contains("s2"));
  expect_code(ErrorCode::DuplicateAction, [&] { apply(s, contrib("s2", 3, 20)); });
}

TEST(SocialInfo, CountsOthersOnly) {
  auto s = new_round(config_of(8), ids(8));
  EXPECT_EQ(social_info(s, "s0"), 0);
  for (int i = 1; i <= 3; ++i) s = apply(s, contrib("s" + std::to_string(i), 2, i * 100)).state;
  EXPECT_EQ(social_info(s, "s0"), 3);
  EXPECT_EQ(social_info(s, "s1"), 2);
  expect_code(ErrorCode::NotAMember, [&] { social_info(s, "x"); });
}

TEST(Settle, EveryoneGivesSix) {
  auto s = new_round(config_of(8), ids(8));
  for (int i = 0; i < 8; ++i) s = apply(s, contrib("s" + std::to_string(i), 6, 1000 + i)).state;
  const auto o = close_and_settle(s, 50'000);
  EXPECT_EQ(o.total, 48);
  EXPECT_TRUE(o.funded);
  for (const auto& [id, p] : o.payoffs) EXPECT_EQ(p, 10 - 6 + 15) << id;
}

TEST(Settle, OneShortIsUnfunded) {
  auto s = new_round(config_of(8), ids(8));
  const int amounts[] = {10, 10, 10, 10, 7};
  for (int i = 0; i < 5; ++i) s = apply(s, contrib("s" + std::to_string(i), amounts[i], i)).state;
  const auto o = close_and_settle(s, 50'000);
  EXPECT_EQ(o.total, 47);
  EXPECT_FALSE(o.funded);
  EXPECT_EQ(o.payoffs.at("s0"), 0);
  EXPECT_EQ(o.payoffs.at("s7"), 10);
}

TEST(Settle, PasserBeatsContributorsWhenFunded) {
  auto s = new_round(config_of(8), ids(8));
  s = apply(s, pass("s0", 1)).state;
  const int amounts[] = {7, 7, 7, 7, 7, 7, 6};
  for (int i = 1; i < 8; ++i) s = apply(s, contrib("s" + std::to_string(i), amounts[i - 1], i)).state;
  const auto o = close_and_settle(s, 60'000);
  EXPECT_EQ(o.total, 48);
  EXPECT_EQ(o.payoffs.at("s0"), 25);
  for (int i = 1; i < 8; ++i) EXPECT_LT(o.payoffs.at("s" + std::to_string(i)), 25);
  EXPECT_FALSE(o.ranks.contains("s0"));
}

TEST(Settle, NotYetClosed) {
  const auto s = new_round(config_of(8), ids(8));
  expect_code(ErrorCode::NotYetClosed, [&] { close_and_settle(s, 49'999); });
  auto closed = s;
  closed.phase = Phase::Closed;
  EXPECT_NO_THROW(close_and_settle(closed, 0));
}

TEST(Settle, RanksFollowTimeThenSeq) {
  auto s = new_round(config_of(8), ids(8));
  s = apply(s, contrib("s3", 1, 500, 4)).state;
  s = apply(s, contrib("s1", 1, 200, 5)).state;
  s = apply(s, contrib("s2", 1, 200, 6)).state;
  const auto o = close_and_settle(s, 50'000);
  EXPECT_EQ(o.ranks.at("s1"), 1);
  EXPECT_EQ(o.ranks.at("s2"), 2);
  EXPECT_EQ(o.ranks.at("s3"), 3);
}

TEST(Settle, RanksAreBijectiveOnRandomRounds) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 7 + static_cast<int>(rng() % 4);
    auto s = new_round(config_of(n), ids(n));
    int k = 0;
    for (int i = 0; i < n; ++i) {
      if (rng() % 3 == 0) continue;
      s = apply(s, contrib("s" + std::to_string(i), 1 + static_cast<int>(rng() % 10),
                           static_cast<Millis>(rng() % 40'000), i + 1))
              .state;
      ++k;
    }
    const auto o = close_and_settle(s, s.deadline_ms);
    std::vector<int> r;
    for (const auto& [id, rank] : o.ranks) r.push_back(rank);
    std::sort(r.begin(), r.end());
    std::vector<int> want(static_cast<std::size_t>(k));
    std::iota(want.begin(), want.end(), 1);
    EXPECT_EQ(r, want);
    int total = 0;
    for (const auto& c : s.contributions) total += c.amount;
    EXPECT_EQ(o.funded, total >= provision_point(s.config));
  }
}

TEST(Payment, DeterministicAndUniformish) {
  std::vector<RoundId> rounds;
  for (int i = 1; i <= 28; ++i) rounds.push_back("R" + std::to_string(i));
  EXPECT_EQ(select_payment_round(rounds, 42), select_payment_round(rounds, 42));
  std::map<RoundId, int> hits;
  for (std::uint64_t seed = 0; seed < 2800; ++seed) ++hits[select_payment_round(rounds, seed)];
  EXPECT_EQ(hits.size(), 28u);
  for (const auto& [id, n] : hits) EXPECT_GT(n, 50) << id;
  const std::vector<RoundId> one = {"only"};
  EXPECT_EQ(select_payment_round(one, 9), "only");
  expect_code(ErrorCode::NoRounds, [] { select_payment_round(std::vector<RoundId>{}, 1); });
}

TEST(OutcomeJson, RoundTrips) {
  auto s = new_round(config_of(7), ids(7));
  s = apply(s, contrib("s4", 9, 10)).state;
  const auto o = close_and_settle(s, 50'000);
  const Json j = o;
  EXPECT_EQ(j.get<RoundOutcome>(), o);
  EXPECT_EQ(j.begin().key(), "round_id");
}
