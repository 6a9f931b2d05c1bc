#include <gtest/gtest.h>

#include <map>

#include "cyberops/scenario.hpp"

using namespace cyberops;

namespace {

// Subnet table of the reference cloud network: name -> (nodes, entries).
const std::map<std::string, std::pair<std::size_t, std::size_t>> kSubnets = {
    {"Dep1", {100, 5}}, {"Dep2", {100, 6}}, {"Dep3", {100, 4}},
    {"Dep4", {100, 5}}, {"Dep5", {20, 3}},  {"Servers", {30, 2}},
};

struct Expected {
  std::vector<std::string> subnets;
  std::size_t attackers;
  AttackPolicy policy;
};

const std::map<std::string, Expected> kScenarios = {
    {"sce1", {{"Servers"}, 6, AttackPolicy::Recon}},
    {"sce2", {{"Servers"}, 7, AttackPolicy::Recon}},
    {"sce3", {{"Servers"}, 8, AttackPolicy::Recon}},
    {"sce4", {{"Servers", "Dep1", "Dep2"}, 6, AttackPolicy::Recon}},
    {"sce5", {{"Servers", "Dep1", "Dep2"}, 6, AttackPolicy::Penetrate}},
    {"sce6", {{"Servers", "Dep1", "Dep2"}, 6, AttackPolicy::Impact}},
    {"sce7", {{"Servers", "Dep1", "Dep2", "Dep3", "Dep4", "Dep5"}, 6, AttackPolicy::Recon}},
};

}  // namespace

TEST(Presets, MatchReferenceTables) {
  for (const auto& [name, exp] : kScenarios) {
    SCOPED_TRACE(name);
    const auto cfg = load_scenario(name);
    EXPECT_EQ(cfg.name, name);
    ASSERT_EQ(cfg.subnets.size(), exp.subnets.size());
    for (std::size_t i = 0; i < exp.subnets.size(); ++i) {
      EXPECT_EQ(cfg.subnets[i].name, exp.subnets[i]);
      const auto [nodes, entries] = kSubnets.at(cfg.subnets[i].name);
      EXPECT_EQ(cfg.subnets[i].node_scale, nodes);
      EXPECT_EQ(cfg.subnets[i].entry_count, entries);
      EXPECT_FALSE(cfg.subnets[i].hvns.empty());
    }
    EXPECT_EQ(cfg.attack.attacker_count, exp.attackers);
    EXPECT_EQ(cfg.attack.policy, exp.policy);
    EXPECT_EQ(cfg.env.max_steps, 100u);
  }
}

TEST(Presets, Sce7Totals) {
  const auto cfg = load_scenario("sce7");
  EXPECT_EQ(cfg.node_count(), 450u);
  EXPECT_EQ(cfg.entry_count(), 25u);
  const auto s = build_scenario(cfg, 1);
  EXPECT_EQ(s.size(), 450u);
  EXPECT_EQ(s.graph->subnets().size(), 6u);
}

TEST(Build, InitialStateInvariants) {
  for (const auto& [name, exp] : kScenarios) {
    SCOPED_TRACE(name);
    const auto cfg = load_scenario(name);
    const auto s = build_scenario(cfg, 3);
    EXPECT_EQ(s.time, 0u);
    EXPECT_FALSE(s.human_instruction);
    std::size_t entries = 0, hvns = 0, expected_hvns = 0;
    for (const auto& sub : cfg.subnets) expected_hvns += sub.hvns.size();
    for (const auto& n : s.nodes) {
      EXPECT_FALSE(n.compromised());
      EXPECT_FALSE(n.isolated);
      EXPECT_GE(n.vulnerability, cfg.vulnerability.min);
      EXPECT_LE(n.vulnerability, cfg.vulnerability.max);
      EXPECT_FALSE(n.is_entry && n.is_hvn);
      entries += n.is_entry ? 1 : 0;
      hvns += n.is_hvn ? 1 : 0;
    }
    EXPECT_EQ(entries, cfg.entry_count());
    EXPECT_EQ(hvns, expected_hvns);
    ASSERT_TRUE(s.context);
    EXPECT_EQ(s.context->per_subnet.size(), cfg.subnets.size());
  }
}

TEST(Build, SubnetsAreConnected) {
  const auto s = build_scenario(load_scenario("sce7"), 9);
  for (const auto& sub : s.graph->subnets()) {
    std::vector<bool> seen(s.size(), false);
    std::vector<NodeId> stack{sub.nodes.front()};
    seen[sub.nodes.front().index()] = true;
    std::size_t reached = 0;
    while (!stack.empty()) {
      const NodeId n = stack.back();
      stack.pop_back();
      ++reached;
      for (NodeId m : s.graph->adjacent(n)) {
        if (s.graph->subnet_of(m) == sub.id && !seen[m.index()]) {
          seen[m.index()] = true;
          stack.push_back(m);
        }
      }
    }
    EXPECT_EQ(reached, sub.nodes.size()) << sub.name;
  }
}

TEST(Build, DeterministicPerSeed) {
  const auto cfg = load_scenario("sce4");
  EXPECT_EQ(build_scenario(cfg, 5), build_scenario(cfg, 5));
  EXPECT_FALSE(build_scenario(cfg, 5) == build_scenario(cfg, 6));
}

TEST(Config, Errors) {
  EXPECT_THROW(load_scenario("sce99"), ConfigError);
  EXPECT_THROW(scenario_from_json(nlohmann::json{{"name", "empty"}, {"subnets", nlohmann::json::array()}}), ConfigError);
  auto bad_hvn = nlohmann::json::parse(R"({"name":"x","subnets":[{"name":"A","node_scale":3,"entry_count":1,
      "hvns":[{"index":5,"asset":"db"}]}]})");
  EXPECT_THROW(scenario_from_json(bad_hvn), ConfigError);
  auto negative = nlohmann::json::parse(R"({"name":"x","subnets":[{"name":"A","node_scale":-3}]})");
  EXPECT_THROW(scenario_from_json(negative), ConfigError);
  auto zero_steps = nlohmann::json::parse(R"({"name":"x","max_steps":0,"subnets":[{"name":"A","node_scale":3}]})");
  EXPECT_THROW(scenario_from_json(zero_steps), ConfigError);
  auto dup = nlohmann::json::parse(R"({"name":"x","subnets":[{"name":"A","node_scale":3},{"name":"A","node_scale":3}]})");
  EXPECT_THROW(scenario_from_json(dup), ConfigError);
}

TEST(Config, JsonRoundTrip) {
  for (const auto& [name, exp] : kScenarios) {
    const auto cfg = load_scenario(name);
    const auto again = scenario_from_json(scenario_to_json(cfg));
    EXPECT_EQ(build_scenario(cfg, 2), build_scenario(again, 2)) << name;
  }
}
