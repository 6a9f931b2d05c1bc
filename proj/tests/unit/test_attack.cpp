#include <gtest/gtest.h>

#include <cmath>

#include "cyberops/attack.hpp"
#include "test_util.hpp"

using namespace cyberops;

TEST(SuccessProbability, MatchesClosedFormOnGrid) {
  for (int i = 0; i <= 100; ++i) {
    for (int j = 0; j <= 100; ++j) {
      const double rs = i / 100.0, v = j / 100.0;
      const double expected = rs == 0.0 ? 0.0 : std::min(rs * rs / (rs + (1.0 - v)), 1.0);
      ASSERT_NEAR(attack_success_probability(rs, v), expected, 1e-12) << rs << " " << v;
    }
  }
}

TEST(SuccessProbability, KnownValues) {
  EXPECT_DOUBLE_EQ(attack_success_probability(0.5, 0.5), 0.25);
  EXPECT_DOUBLE_EQ(attack_success_probability(1.0, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(attack_success_probability(0.0, 1.0), 0.0);
  EXPECT_NEAR(attack_success_probability(0.7, 0.2), 0.49 / 1.5, 1e-15);
}

TEST(SuccessProbability, RejectsOutOfRange) {
  EXPECT_THROW(attack_success_probability(1.1, 0.5), DomainError);
  EXPECT_THROW(attack_success_probability(0.5, -0.1), DomainError);
  EXPECT_THROW(attack_success_probability(std::nan(""), 0.5), DomainError);
}

TEST(SuccessProbability, MonotoneInBothArguments) {
  for (int i = 1; i <= 20; ++i) {
    for (int j = 0; j < 20; ++j) {
      const double rs = i / 20.0, v = j / 20.0;
      EXPECT_LE(attack_success_probability(rs, v), attack_success_probability(rs, v + 0.05) + 1e-15);
      if (i < 20) EXPECT_LE(attack_success_probability(rs, v), attack_success_probability(rs + 0.05, v) + 1e-15);
    }
  }
}

TEST(Visibility, EntriesAndFootholdNeighbours) {
  auto s = testutil::line_state(5);
  Attacker a;
  EXPECT_EQ(visible_targets(s, a), std::vector<NodeId>{node_id(0)});
  s.nodes[0].health = Health::Compromised;
  a.footholds = {node_id(0)};
  EXPECT_EQ(visible_targets(s, a), std::vector<NodeId>{node_id(1)});
  s.nodes[1].isolated = true;
  EXPECT_TRUE(visible_targets(s, a).empty());
}

TEST(TargetSelection, PenetrateTakesMostVulnerable) {
  auto s = testutil::line_state(5, 0.3);
  s.nodes[0].is_entry = true;
  s.nodes[2].is_entry = true;
  s.nodes[2].vulnerability = 0.8;
  Attacker a;
  a.policy = AttackPolicy::Penetrate;
  Rng rng(1);
  EXPECT_EQ(select_target(s, a, rng), node_id(2));
}

TEST(TargetSelection, ImpactTakesClosestToHvn) {
  auto s = testutil::line_state(6, 0.3);
  s.nodes[1].is_entry = true;
  s.nodes[3].is_entry = true;
  Attacker a;
  a.policy = AttackPolicy::Impact;
  Rng rng(1);
  EXPECT_EQ(select_target(s, a, rng), node_id(3));
}

TEST(AttackStep, SuccessAddsFootholdAndRecordsSource) {
  auto s = testutil::line_state(4, 1.0);
  auto attackers = make_attackers(1, 1.0, AttackPolicy::Recon);
  Rng rng(3);
  auto [s1, ev1] = attackers_step(s, attackers, rng);
  ASSERT_EQ(ev1.size(), 1u);
  EXPECT_TRUE(ev1[0].success);
  EXPECT_FALSE(ev1[0].source);
  EXPECT_EQ(ev1[0].target, node_id(0));
  s1.time = 1;
  auto [s2, ev2] = attackers_step(s1, attackers, rng);
  ASSERT_EQ(ev2.size(), 1u);
  EXPECT_EQ(ev2[0].source, node_id(0));
  EXPECT_EQ(ev2[0].target, node_id(1));
  EXPECT_EQ(ev2[0].step, 1u);
  EXPECT_TRUE(s2.nodes[1].compromised());
}

TEST(AttackStep, ResetNodePrunedFromFootholds) {
  auto s = testutil::line_state(4, 0.0);
  s.nodes[0].health = Health::Compromised;
  auto attackers = make_attackers(1, 0.5, AttackPolicy::Recon);
  attackers[0].footholds = {node_id(0)};
  s.nodes[0].health = Health::Healthy;
  Rng rng(3);
  auto [next, events] = attackers_step(s, attackers, rng);
  for (NodeId f : attackers[0].footholds) EXPECT_TRUE(next.node(f).compromised());
  ASSERT_EQ(events.size(), 1u);
  EXPECT_FALSE(events[0].source);  // foothold gone, so the entry is attacked from outside
}

TEST(AttackStep, MonteCarloFrequencyAtHalfHalf) {
  Rng rng(2024);
  std::size_t hits = 0;
  const std::size_t trials = 100000;
  const double p = attack_success_probability(0.5, 0.5);
  for (std::size_t i = 0; i < trials; ++i) hits += uniform01(rng) < p ? 1 : 0;
  EXPECT_NEAR(static_cast<double>(hits) / trials, 0.25, 0.01);
}

TEST(AttackPolicy, ParseRoundTrip) {
  for (auto p : {AttackPolicy::Recon, AttackPolicy::Penetrate, AttackPolicy::Impact}) {
    EXPECT_EQ(parse_attack_policy(to_string(p)), p);
  }
  EXPECT_THROW(parse_attack_policy("stealth"), ConfigError);
}
