#include <gtest/gtest.h>

#include <deque>

#include "cyberops/net_model.hpp"
#include "test_util.hpp"

using namespace cyberops;

TEST(HopDistance, UnreachableOrdersLast) {
  EXPECT_LT(HopDistance::hops(0), HopDistance::hops(1));
  EXPECT_LT(HopDistance::hops(1000), HopDistance::unreachable());
  EXPECT_EQ(HopDistance::unreachable(), HopDistance::unreachable());
  EXPECT_THROW(HopDistance::unreachable().value(), DomainError);
  EXPECT_EQ(HopDistance::unreachable().str(), "unreachable");
}

TEST(Random, StreamsAreReproducible) {
  Rng a(mix_seed(3, 1)), b(mix_seed(3, 1));
  for (int i = 0; i < 100; ++i) EXPECT_EQ(uniform_index(a, 17), uniform_index(b, 17));
  EXPECT_NE(mix_seed(3, 1), mix_seed(3, 2));
  EXPECT_THROW(uniform_index(a, 0), DomainError);
}

TEST(Random, Uniform01InRange) {
  Rng r(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = uniform01(r);
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Graph, RejectsSelfLoopsAndDanglingEdges) {
  std::vector<SubnetId> part(3, subnet_id(0));
  EXPECT_THROW(NetworkGraph(part, {"A"}, {{node_id(1), node_id(1)}}), ConfigError);
  EXPECT_THROW(NetworkGraph(part, {"A"}, {{node_id(1), node_id(5)}}), ConfigError);
  EXPECT_THROW(NetworkGraph({subnet_id(2)}, {"A"}, {}), ConfigError);
}

TEST(Graph, DeduplicatesAndNormalizesEdges) {
  NetworkGraph g(std::vector<SubnetId>(3, subnet_id(0)), {"A"},
                 {{node_id(2), node_id(0)}, {node_id(0), node_id(2)}, {node_id(1), node_id(2)}});
  ASSERT_EQ(g.edges().size(), 2u);
  EXPECT_EQ(g.edges()[0], Edge(node_id(0), node_id(2)));
  EXPECT_TRUE(g.has_edge(node_id(2), node_id(0)));
  EXPECT_FALSE(g.has_edge(node_id(0), node_id(1)));
  EXPECT_THROW(g.adjacent(node_id(9)), LookupError);
  EXPECT_THROW(g.subnet(subnet_id(4)), LookupError);
  EXPECT_EQ(g.find_subnet("A"), subnet_id(0));
  EXPECT_FALSE(g.find_subnet("B"));
}

TEST(Graph, IsolationRemovesNodeFromTraversal) {
  auto s = testutil::line_state(5);
  EXPECT_EQ(shortest_distance_to_hvn(s, node_id(0)), HopDistance::hops(4));
  s.nodes[2].isolated = true;
  EXPECT_TRUE(neighbors(s, node_id(2)).empty());
  EXPECT_EQ(neighbors(s, node_id(1)), std::vector<NodeId>{node_id(0)});
  EXPECT_EQ(shortest_distance_to_hvn(s, node_id(0)), HopDistance::unreachable());
  EXPECT_EQ(shortest_distance_to_hvn(s, node_id(2)), HopDistance::unreachable());
  EXPECT_EQ(shortest_distance_to_hvn(s, node_id(4)), HopDistance::hops(0));
}

// Independent Floyd-Warshall oracle for the BFS.
TEST(Graph, DistanceToHvnMatchesAllPairsOracle) {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + uniform_index(rng, 11);
    auto s = testutil::random_state(rng, n, 0.3, 1, 1 + uniform_index(rng, 2));
    for (auto& node : s.nodes) node.isolated = bernoulli(rng, 0.15) && !node.is_hvn;
    constexpr int kInf = 1 << 20;
    std::vector<std::vector<int>> d(n, std::vector<int>(n, kInf));
    for (std::size_t i = 0; i < n; ++i) d[i][i] = 0;
    for (const auto& [a, b] : s.graph->edges()) {
      if (s.nodes[a.index()].isolated || s.nodes[b.index()].isolated) continue;
      d[a.index()][b.index()] = d[b.index()][a.index()] = 1;
    }
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
    for (std::size_t i = 0; i < n; ++i) {
      int best = kInf;
      if (s.nodes[i].is_hvn) best = 0;
      else if (!s.nodes[i].isolated)
        for (std::size_t j = 0; j < n; ++j)
          if (s.nodes[j].is_hvn) best = std::min(best, d[i][j]);
      const auto expected = best >= kInf ? HopDistance::unreachable() : HopDistance::hops(static_cast<std::size_t>(best));
      ASSERT_EQ(shortest_distance_to_hvn(s, node_id(i)), expected) << "trial " << trial << " node " << i;
    }
  }
}

TEST(State, DigestTracksFlagsAndClock) {
  auto s = testutil::line_state(4);
  const auto d0 = state_digest(s);
  s.time = 1;
  EXPECT_NE(state_digest(s), d0);
  s.time = 0;
  EXPECT_EQ(state_digest(s), d0);
  s.nodes[1].health = Health::Compromised;
  EXPECT_NE(state_digest(s), d0);
}

TEST(State, HealthyAvailableExcludesAbnormal) {
  auto s = testutil::line_state(4);
  s.nodes[0].health = Health::Compromised;
  s.nodes[1].isolated = true;
  EXPECT_EQ(count_healthy_available(s), 2u);
  EXPECT_THROW(s.node(node_id(4)), LookupError);
}

TEST(Perturbation, KeepsNodeCountAndPartition) {
  Rng rng(5);
  auto s = testutil::random_state(rng, 40, 0.1, 2, 3);
  for (std::size_t i = 0; i < 4; ++i) s.nodes[10 + i].is_entry = true;
  PerturbationConfig cfg{1.0, 1.0, 0.5, 0.1};
  const auto p = perturb_structure(s, cfg, rng);
  ASSERT_EQ(p.size(), s.size());
  EXPECT_EQ(p.graph, s.graph);
  auto count = [](const GlobalState& st, bool NodeState::*m, SubnetId sub) {
    std::size_t c = 0;
    for (NodeId n : st.graph->subnet(sub).nodes) c += st.node(n).*m ? 1 : 0;
    return c;
  };
  for (std::size_t sub = 0; sub < 2; ++sub) {
    EXPECT_EQ(count(p, &NodeState::is_hvn, subnet_id(sub)), count(s, &NodeState::is_hvn, subnet_id(sub)));
    EXPECT_EQ(count(p, &NodeState::is_entry, subnet_id(sub)), count(s, &NodeState::is_entry, subnet_id(sub)));
  }
  for (const auto& n : p.nodes) {
    EXPECT_GE(n.vulnerability, 0.0);
    EXPECT_LE(n.vulnerability, 1.0);
  }
  PerturbationConfig bad;
  bad.isolation_rate = 1.5;
  EXPECT_THROW(perturb_structure(s, bad, rng), ConfigError);
}
