#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cyberops/types.hpp"

namespace cyberops {

enum class Health : std::uint8_t { Healthy, Compromised };

struct NodeState {
  Health health = Health::Healthy;
  bool isolated = false;
  double vulnerability = 0.0;
  bool is_hvn = false;
  bool is_entry = false;

  bool compromised() const { return health == Health::Compromised; }
  /// Compromised or isolated.
  bool abnormal() const { return compromised() || isolated; }

  bool operator==(const NodeState&) const = default;
};

struct Subnet {
  SubnetId id;
  std::string name;
  std::vector<NodeId> nodes;  // ascending

  bool operator==(const Subnet&) const = default;
};

using Edge = std::pair<NodeId, NodeId>;  // first < second

/// Undirected graph with a subnet partition. Immutable after construction.
class NetworkGraph {
 public:
  NetworkGraph() = default;

  /// `subnet_of[i]` gives the subnet of node i; `subnet_names[s]` its label.
  NetworkGraph(std::vector<SubnetId> subnet_of, std::vector<std::string> subnet_names,
               std::vector<Edge> edges)
      : subnet_of_(std::move(subnet_of)), adjacency_(subnet_of_.size()) {
    for (std::size_t s = 0; s < subnet_names.size(); ++s) {
      subnets_.push_back(Subnet{subnet_id(s), std::move(subnet_names[s]), {}});
    }
    for (std::size_t i = 0; i < subnet_of_.size(); ++i) {
      const auto s = subnet_of_[i].index();
      if (s >= subnets_.size()) throw ConfigError("node assigned to unknown subnet");
      subnets_[s].nodes.push_back(node_id(i));
    }
    for (auto [a, b] : edges) {
      if (a == b) throw ConfigError("self-loop on node " + std::to_string(a.value));
      if (a.index() >= size() || b.index() >= size()) throw ConfigError("edge references missing node");
      if (b < a) std::swap(a, b);
      edges_.emplace_back(a, b);
    }
    std::sort(edges_.begin(), edges_.end());
    edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
    for (const auto& [a, b] : edges_) {
      adjacency_[a.index()].push_back(b);
      adjacency_[b.index()].push_back(a);
    }
    for (auto& adj : adjacency_) std::sort(adj.begin(), adj.end());
  }

  std::size_t size() const { return subnet_of_.size(); }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<Subnet>& subnets() const { return subnets_; }

  /// Raw adjacency, ignoring isolation.
  const std::vector<NodeId>& adjacent(NodeId n) const {
    check(n);
    return adjacency_[n.index()];
  }

  bool has_edge(NodeId a, NodeId b) const {
    const auto& adj = adjacent(a);
    return std::binary_search(adj.begin(), adj.end(), b);
  }

  SubnetId subnet_of(NodeId n) const {
    check(n);
    return subnet_of_[n.index()];
  }

  const Subnet& subnet(SubnetId s) const {
    if (s.index() >= subnets_.size()) throw LookupError("unknown subnet " + std::to_string(s.value));
    return subnets_[s.index()];
  }

  std::optional<SubnetId> find_subnet(const std::string& name) const {
    for (const auto& s : subnets_) {
      if (s.name == name) return s.id;
    }
    return std::nullopt;
  }

  void check(NodeId n) const {
    if (n.index() >= size()) throw LookupError("unknown node " + std::to_string(n.value));
  }

  bool operator==(const NetworkGraph&) const = default;

 private:
  std::vector<SubnetId> subnet_of_;
  std::vector<Subnet> subnets_;
  std::vector<Edge> edges_;
  std::vector<std::vector<NodeId>> adjacency_;
};

/// Free-text context per subnet: exposure, vulnerability profile, assets,
/// service continuity.
struct ContextBlocks {
  std::string exposure;
  std::string vulnerability;
  std::string assets;
  std::string service;

  bool operator==(const ContextBlocks&) const = default;
};

struct NetworkContext {
  std::vector<ContextBlocks> per_subnet;  // indexed by SubnetId

  bool operator==(const NetworkContext&) const = default;
};

/// Full security posture at one step. Graph and context are shared between
/// successive states; only node flags, the instruction and the clock change.
struct GlobalState {
  std::shared_ptr<const NetworkGraph> graph;
  std::vector<NodeState> nodes;
  std::shared_ptr<const NetworkContext> context;
  std::optional<std::string> human_instruction;
  std::size_t time = 0;

  std::size_t size() const { return nodes.size(); }

  const NodeState& node(NodeId n) const {
    if (n.index() >= nodes.size()) throw LookupError("unknown node " + std::to_string(n.value));
    return nodes[n.index()];
  }
  NodeState& node(NodeId n) {
    if (n.index() >= nodes.size()) throw LookupError("unknown node " + std::to_string(n.value));
    return nodes[n.index()];
  }

  bool operator==(const GlobalState& o) const {
    const bool same_graph = graph == o.graph || (graph && o.graph && *graph == *o.graph);
    const bool same_context = context == o.context || (context && o.context && *context == *o.context);
    return same_graph && same_context && nodes == o.nodes &&
           human_instruction == o.human_instruction && time == o.time;
  }
};

// ---------------------------------------------------------------------------
// Graph queries
// ---------------------------------------------------------------------------

/// Neighbours of `n` over traversable edges. An isolated node has none and is
/// never returned as a neighbour.
inline std::vector<NodeId> neighbors(const GlobalState& state, NodeId n) {
  state.graph->check(n);
  std::vector<NodeId> out;
  if (state.node(n).isolated) return out;
  for (NodeId m : state.graph->adjacent(n)) {
    if (!state.node(m).isolated) out.push_back(m);
  }
  return out;
}

/// BFS hop count from `n` to the nearest HVN over non-isolated nodes.
inline HopDistance shortest_distance_to_hvn(const GlobalState& state, NodeId n) {
  state.graph->check(n);
  if (state.node(n).is_hvn) return HopDistance::hops(0);
  if (state.node(n).isolated) return HopDistance::unreachable();
  std::vector<int> dist(state.size(), -1);
  std::deque<NodeId> queue{n};
  dist[n.index()] = 0;
  while (!queue.empty()) {
    const NodeId cur = queue.front();
    queue.pop_front();
    for (NodeId m : state.graph->adjacent(cur)) {
      const auto& ms = state.nodes[m.index()];
      if (ms.isolated || dist[m.index()] >= 0) continue;
      dist[m.index()] = dist[cur.index()] + 1;
      if (ms.is_hvn) return HopDistance::hops(static_cast<std::size_t>(dist[m.index()]));
      queue.push_back(m);
    }
  }
  return HopDistance::unreachable();
}

inline std::size_t count_healthy_available(const GlobalState& state) {
  return static_cast<std::size_t>(
      std::count_if(state.nodes.begin(), state.nodes.end(), [](const NodeState& s) { return !s.abnormal(); }));
}

inline double mean_vulnerability(const GlobalState& state) {
  if (state.nodes.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& s : state.nodes) sum += s.vulnerability;
  return sum / static_cast<double>(state.nodes.size());
}

/// Stable 64-bit digest of node flags and the clock.
inline std::uint64_t state_digest(const GlobalState& state) {
  std::uint64_t h = fnv1a(&state.time, sizeof(state.time));
  for (const auto& s : state.nodes) {
    const unsigned char flags = static_cast<unsigned char>(
        (s.compromised() ? 1 : 0) | (s.isolated ? 2 : 0) | (s.is_hvn ? 4 : 0) | (s.is_entry ? 8 : 0));
    h = fnv1a(&flags, 1, h);
    h = fnv1a(&s.vulnerability, sizeof(double), h);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Structural perturbation
// ---------------------------------------------------------------------------

struct PerturbationConfig {
  double entry_reshuffle_rate = 0.0;
  double hvn_reshuffle_rate = 0.0;
  double vulnerability_redraw_rate = 0.0;
  double isolation_rate = 0.0;
  double vulnerability_min = 0.1;
  double vulnerability_max = 0.9;

  void validate() const {
    for (double r : {entry_reshuffle_rate, hvn_reshuffle_rate, vulnerability_redraw_rate, isolation_rate}) {
      if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("perturbation rate outside [0,1]");
    }
    if (!(vulnerability_min >= 0.0 && vulnerability_min <= vulnerability_max && vulnerability_max <= 1.0)) {
      throw ConfigError("perturbation vulnerability range invalid");
    }
  }
};

namespace detail {

// Moves the flag selected by `member` from each flagged node, with
// probability `rate`, to a random unflagged node of the same subnet.
inline void reshuffle_flag(GlobalState& state, bool NodeState::*member, double rate, Rng& rng) {
  if (rate <= 0.0) return;
  for (const auto& subnet : state.graph->subnets()) {
    for (NodeId n : subnet.nodes) {
      if (!(state.nodes[n.index()].*member)) continue;
      if (!bernoulli(rng, rate)) continue;
      std::vector<NodeId> free;
      for (NodeId m : subnet.nodes) {
        const auto& ms = state.nodes[m.index()];
        if (!(ms.*member) && !ms.is_hvn && !ms.is_entry) free.push_back(m);
      }
      if (free.empty()) continue;
      const NodeId to = free[uniform_index(rng, free.size())];
      state.nodes[n.index()].*member = false;
      state.nodes[to.index()].*member = true;
    }
  }
}

}  // namespace detail

/// Randomly moves entry/HVN flags within subnets, redraws vulnerabilities and
/// isolates nodes. Node count and partition are unchanged.
inline GlobalState perturb_structure(const GlobalState& state, const PerturbationConfig& config, Rng& rng) {
  config.validate();
  GlobalState out = state;
  detail::reshuffle_flag(out, &NodeState::is_entry, config.entry_reshuffle_rate, rng);
  detail::reshuffle_flag(out, &NodeState::is_hvn, config.hvn_reshuffle_rate, rng);
  if (config.vulnerability_redraw_rate > 0.0) {
    for (auto& s : out.nodes) {
      if (bernoulli(rng, config.vulnerability_redraw_rate)) {
        s.vulnerability = uniform_real(rng, config.vulnerability_min, config.vulnerability_max);
      }
    }
  }
  if (config.isolation_rate > 0.0) {
    for (auto& s : out.nodes) {
      if (bernoulli(rng, config.isolation_rate)) s.isolated = true;
    }
  }
  return out;
}

}  // namespace cyberops
