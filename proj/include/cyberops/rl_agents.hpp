#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <deque>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "cyberops/defense_env.hpp"
#include "cyberops/net_model.hpp"
#include "cyberops/tactical.hpp"
#include "cyberops/value_network.hpp"

namespace cyberops {

inline constexpr std::size_t kDefaultCapacity = 30;

// ---------------------------------------------------------------------------
// Observation layout
// ---------------------------------------------------------------------------

enum class NodeFeature : std::uint8_t { Present, Health, Isolated, Vulnerability, Hvn, Entry };

struct ObservationLayout {
  std::vector<NodeFeature> node_features;
  bool adjacency = false;
  bool active_edges_only = false;  // isolation removes an edge from the adjacency block
};

/// Per-type feature selection. Block follows {Adj, h, HVN}; the other sets
/// are chosen for the operations each type performs.
inline ObservationLayout observation_layout(AgentType t) {
  using F = NodeFeature;
  switch (t) {
    case AgentType::Fortify: return {{F::Present, F::Health, F::Vulnerability, F::Hvn, F::Entry}, false, false};
    case AgentType::Recover: return {{F::Present, F::Health, F::Isolated, F::Hvn, F::Entry}, true, false};
    case AgentType::Purge: return {{F::Present, F::Health, F::Isolated, F::Vulnerability, F::Hvn}, false, false};
    case AgentType::Block: return {{F::Present, F::Health, F::Hvn}, true, true};
  }
  return {};
}

inline std::size_t observation_size(AgentType t, std::size_t capacity) {
  const auto layout = observation_layout(t);
  std::size_t n = layout.node_features.size() * capacity;
  if (layout.adjacency) n += capacity * (capacity - 1) / 2;
  return n;
}

inline std::size_t action_count(AgentType t, std::size_t capacity) {
  return operation_set(t).size() * capacity + 1;
}

struct LocalObservation {
  AgentType type = AgentType::Fortify;
  std::size_t capacity = kDefaultCapacity;
  std::vector<double> features;
  std::vector<NodeId> slots;       // slot i -> node; size <= capacity
  std::vector<bool> action_mask;   // op_index * capacity + slot, NoOp last

  std::size_t noop_index() const { return action_mask.size() - 1; }

  bool operator==(const LocalObservation&) const = default;
};

/// Encodes `region` (ascending NodeIds, at most `capacity`) for an agent of
/// type `t`. Slots past the region are zero-padded and masked.
inline LocalObservation project_region(const GlobalState& state, std::vector<NodeId> region, AgentType t,
                                       std::size_t capacity = kDefaultCapacity, const EnvParams& params = {}) {
  if (region.size() > capacity) {
    throw CapacityError("region of " + std::to_string(region.size()) + " nodes exceeds observation capacity " +
                            std::to_string(capacity) + "; required capacity " + std::to_string(region.size()),
                        region.size());
  }
  std::sort(region.begin(), region.end());
  LocalObservation obs;
  obs.type = t;
  obs.capacity = capacity;
  obs.slots = region;
  const auto layout = observation_layout(t);
  const std::size_t nf = layout.node_features.size();
  obs.features.assign(observation_size(t, capacity), 0.0);
  for (std::size_t i = 0; i < region.size(); ++i) {
    const auto& s = state.node(region[i]);
    for (std::size_t f = 0; f < nf; ++f) {
      double v = 0.0;
      switch (layout.node_features[f]) {
        case NodeFeature::Present: v = 1.0; break;
        case NodeFeature::Health: v = s.compromised() ? 1.0 : 0.0; break;
        case NodeFeature::Isolated: v = s.isolated ? 1.0 : 0.0; break;
        case NodeFeature::Vulnerability: v = s.vulnerability; break;
        case NodeFeature::Hvn: v = s.is_hvn ? 1.0 : 0.0; break;
        case NodeFeature::Entry: v = s.is_entry ? 1.0 : 0.0; break;
      }
      obs.features[i * nf + f] = v;
    }
  }
  if (layout.adjacency) {
    std::size_t k = nf * capacity;
    for (std::size_t i = 0; i < capacity; ++i) {
      for (std::size_t j = i + 1; j < capacity; ++j, ++k) {
        if (i >= region.size() || j >= region.size()) continue;
        if (!state.graph->has_edge(region[i], region[j])) continue;
        if (layout.active_edges_only && (state.node(region[i]).isolated || state.node(region[j]).isolated)) continue;
        obs.features[k] = 1.0;
      }
    }
  }
  const auto ops = operation_set(t);
  obs.action_mask.assign(action_count(t, capacity), false);
  for (std::size_t o = 0; o < ops.size(); ++o) {
    for (std::size_t i = 0; i < region.size(); ++i) {
      const auto& s = state.node(region[i]);
      bool valid = false;
      switch (ops[o]) {
        case Operation::Reset: valid = s.compromised(); break;
        case Operation::Patch: valid = s.vulnerability > params.vuln_min + 1e-12; break;
        case Operation::Isolate: valid = !s.isolated; break;
        case Operation::Restore: valid = s.isolated; break;
        case Operation::NoOp: break;
      }
      obs.action_mask[o * capacity + i] = valid;
    }
  }
  obs.action_mask.back() = true;
  return obs;
}

/// Whole-subnet projection; raises CapacityError for oversized subnets.
inline LocalObservation project_observation(const GlobalState& state, SubnetId subnet, AgentType t,
                                            std::size_t capacity = kDefaultCapacity, const EnvParams& params = {}) {
  const auto& nodes = state.graph->subnet(subnet).nodes;
  if (nodes.size() > capacity) {
    throw CapacityError("subnet " + state.graph->subnet(subnet).name + " has " + std::to_string(nodes.size()) +
                            " nodes; required capacity " + std::to_string(nodes.size()) + " exceeds " +
                            std::to_string(capacity),
                        nodes.size());
  }
  return project_region(state, nodes, t, capacity, params);
}

/// Up to `capacity` nodes of `subnet` around its most threatened point: the
/// compromised node nearest an HVN, else an HVN, else the first node. BFS
/// within the subnet over raw edges, ties by NodeId.
inline std::vector<NodeId> focus_region(const GlobalState& state, SubnetId subnet,
                                        std::size_t capacity = kDefaultCapacity) {
  const auto& nodes = state.graph->subnet(subnet).nodes;
  if (nodes.size() <= capacity) return nodes;
  std::optional<NodeId> seed;
  HopDistance best = HopDistance::unreachable();
  for (NodeId n : nodes) {
    if (!state.node(n).compromised()) continue;
    const auto d = shortest_distance_to_hvn(state, n);
    if (!seed || d < best) {
      seed = n;
      best = d;
    }
  }
  if (!seed) {
    for (NodeId n : nodes) {
      if (state.node(n).is_hvn) {
        seed = n;
        break;
      }
    }
  }
  if (!seed) seed = nodes.front();
  std::vector<NodeId> out{*seed};
  std::vector<bool> seen(state.size(), false);
  seen[seed->index()] = true;
  for (std::size_t head = 0; head < out.size() && out.size() < capacity; ++head) {
    for (NodeId m : state.graph->adjacent(out[head])) {
      if (seen[m.index()] || state.graph->subnet_of(m) != subnet) continue;
      seen[m.index()] = true;
      out.push_back(m);
      if (out.size() == capacity) break;
    }
  }
  // Disconnected remainder (possible only with hand-built graphs).
  for (NodeId n : nodes) {
    if (out.size() == capacity) break;
    if (!seen[n.index()]) {
      seen[n.index()] = true;
      out.push_back(n);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline AtomicAction decode_action(const LocalObservation& obs, std::size_t index) {
  if (index >= obs.action_mask.size()) throw DomainError("action index out of range");
  if (index == obs.noop_index()) return AtomicAction::noop();
  const auto ops = operation_set(obs.type);
  const std::size_t op = index / obs.capacity;
  const std::size_t slot = index % obs.capacity;
  if (slot >= obs.slots.size()) throw DomainError("action refers to a padded slot");
  return AtomicAction::on(ops[op], obs.slots[slot]);
}

// ---------------------------------------------------------------------------
// Agents
// ---------------------------------------------------------------------------

struct DefenseAgent {
  AgentType type = AgentType::Fortify;
  std::size_t capacity = kDefaultCapacity;
  ValueNetwork network;
  nlohmann::json metadata = nlohmann::json::object();

  static DefenseAgent untrained(AgentType t, std::size_t capacity, std::uint64_t seed,
                                std::vector<std::size_t> hidden = {64, 64}) {
    return DefenseAgent{t, capacity,
                        ValueNetwork(observation_size(t, capacity), action_count(t, capacity), std::move(hidden), seed),
                        nlohmann::json::object()};
  }
};

struct ActionChoice {
  std::size_t index = 0;
  AtomicAction action;
};

inline std::size_t greedy_index(const Eigen::VectorXd& q, const std::vector<bool>& mask) {
  std::size_t best = mask.size() - 1;
  bool found = false;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    if (!found || q(static_cast<Eigen::Index>(i)) > q(static_cast<Eigen::Index>(best))) {
      best = i;
      found = true;
    }
  }
  return best;
}

/// Epsilon-greedy over unmasked actions; greedy ties go to the lowest index.
inline ActionChoice select_action(const DefenseAgent& agent, const LocalObservation& obs, double epsilon, Rng& rng) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw DomainError("epsilon outside [0,1]");
  std::vector<std::size_t> valid;
  for (std::size_t i = 0; i < obs.action_mask.size(); ++i) {
    if (obs.action_mask[i]) valid.push_back(i);
  }
  if (valid.empty()) return {obs.action_mask.empty() ? 0 : obs.noop_index(), AtomicAction::noop()};
  std::size_t index;
  if (epsilon > 0.0 && uniform01(rng) < epsilon) {
    index = valid[uniform_index(rng, valid.size())];
  } else {
    index = greedy_index(agent.network.forward(obs.features), obs.action_mask);
  }
  return {index, decode_action(obs, index)};
}

/// Linear decay from `start` at step 0 to `end` at step `p`, flat afterwards.
inline double epsilon_schedule(std::size_t step, double start = 0.6, double end = 0.0, std::size_t p = 2000) {
  if (step >= p) return end;
  return start + (end - start) * static_cast<double>(step) / static_cast<double>(p);
}

// ---------------------------------------------------------------------------
// Specialized rewards
// ---------------------------------------------------------------------------

struct SpecializedRewardConfig {
  double emphasis = 2.0;            // multiplier on the emphasized component
  double restore_bonus = 0.5;       // Recover, per node brought back clean and connected
  double patch_bonus = 0.5;         // Fortify, per unit of vulnerability removed
};

inline double specialized_reward(AgentType t, const GlobalState& s, std::span<const AtomicAction> actions,
                                 const GlobalState& s_next, const RewardWeights& w,
                                 const SpecializedRewardConfig& cfg = {}) {
  const auto c = reward_components(s, actions, s_next, w);
  const double global = c.total();
  switch (t) {
    case AgentType::Fortify: {
      double removed = 0.0;
      for (std::size_t i = 0; i < s.size(); ++i) {
        removed += std::max(0.0, s.nodes[i].vulnerability - s_next.nodes[i].vulnerability);
      }
      return global + cfg.patch_bonus * removed;
    }
    case AgentType::Recover: {
      std::size_t restored = 0;
      for (std::size_t i = 0; i < s.size(); ++i) {
        restored += (s.nodes[i].isolated && !s_next.nodes[i].abnormal()) ? 1 : 0;
      }
      return global + cfg.restore_bonus * static_cast<double>(restored);
    }
    case AgentType::Purge:
      return global + (cfg.emphasis - 1.0) * c.security;
    case AgentType::Block:
      return global + (cfg.emphasis - 1.0) * c.asset;
  }
  return global;
}

inline double specialized_reward(AgentType t, const GlobalState& s, const AtomicAction& a, const GlobalState& s_next,
                                 const RewardWeights& w, const SpecializedRewardConfig& cfg = {}) {
  return specialized_reward(t, s, std::span<const AtomicAction>(&a, 1), s_next, w, cfg);
}

// ---------------------------------------------------------------------------
// Replay buffer
// ---------------------------------------------------------------------------

struct Transition {
  std::vector<double> observation;
  std::size_t action = 0;
  double reward = 0.0;
  std::vector<double> next_observation;
  std::vector<bool> next_mask;
  bool terminal = false;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 100'000) : capacity_(capacity) {
    if (capacity == 0) throw DomainError("replay buffer capacity must be positive");
  }

  void push(Transition t) {
    if (data_.size() < capacity_) {
      data_.push_back(std::move(t));
    } else {
      data_[head_] = std::move(t);
      head_ = (head_ + 1) % capacity_;
    }
  }

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }

  /// Oldest-first view index.
  const Transition& at(std::size_t i) const { return data_[(head_ + i) % data_.size()]; }

  /// Uniform sampling with replacement.
  std::vector<const Transition*> sample(std::size_t n, Rng& rng) const {
    if (data_.empty()) throw DomainError("sampling from an empty replay buffer");
    std::vector<const Transition*> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(&data_[uniform_index(rng, data_.size())]);
    return out;
  }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // oldest element once full
  std::vector<Transition> data_;
};

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[8] = {'C', 'Y', 'O', 'P', 'A', 'G', 'N', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout: magic, u32 version, u64 metadata length, metadata JSON, u64
/// parameter count, f64 parameters, u64 FNV-1a checksum of the parameters.
inline void save_agent(const DefenseAgent& agent, const std::filesystem::path& path) {
  nlohmann::json meta = agent.metadata;
  meta["type"] = to_string(agent.type);
  meta["capacity"] = agent.capacity;
  meta["input_dim"] = agent.network.input_dim();
  meta["output_dim"] = agent.network.output_dim();
  meta["hidden"] = agent.network.hidden();
  const std::string meta_text = meta.dump();
  const auto params = agent.network.flatten();
  const std::uint64_t checksum = fnv1a(params.data(), params.size() * sizeof(double));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot write checkpoint " + path.string());
  auto put = [&](const void* p, std::size_t n) { out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); };
  const std::uint64_t meta_len = meta_text.size();
  const std::uint64_t count = params.size();
  put(kCheckpointMagic, sizeof(kCheckpointMagic));
  put(&kCheckpointVersion, sizeof(kCheckpointVersion));
  put(&meta_len, sizeof(meta_len));
  put(meta_text.data(), meta_text.size());
  put(&count, sizeof(count));
  put(params.data(), params.size() * sizeof(double));
  put(&checksum, sizeof(checksum));
  if (!out) throw LoadError("failed writing checkpoint " + path.string());
}

inline DefenseAgent load_agent(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint " + path.string());
  auto get = [&](void* p, std::size_t n) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) throw LoadError("checkpoint " + path.string() + " is truncated");
  };
  char magic[8];
  get(magic, sizeof(magic));
  if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) throw LoadError("not an agent checkpoint: " + path.string());
  std::uint32_t version = 0;
  get(&version, sizeof(version));
  if (version != kCheckpointVersion) {
    throw LoadError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                    std::to_string(kCheckpointVersion) + ")");
  }
  std::uint64_t meta_len = 0;
  get(&meta_len, sizeof(meta_len));
  if (meta_len > (1u << 24)) throw LoadError("checkpoint metadata too large");
  std::string meta_text(meta_len, '\0');
  get(meta_text.data(), meta_len);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_text);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("corrupt checkpoint metadata: ") + e.what());
  }
  std::uint64_t count = 0;
  get(&count, sizeof(count));
  if (count > (1u << 26)) throw LoadError("checkpoint parameter count implausible");
  std::vector<double> params(count);
  get(params.data(), count * sizeof(double));
  std::uint64_t checksum = 0;
  get(&checksum, sizeof(checksum));
  if (checksum != fnv1a(params.data(), params.size() * sizeof(double))) throw LoadError("checkpoint checksum mismatch");

  DefenseAgent agent;
  try {
    const auto type = parse_agent_type(meta.at("type").get<std::string>());
    if (!type) throw LoadError("unknown agent type in checkpoint");
    agent.type = *type;
    agent.capacity = meta.at("capacity").get<std::size_t>();
    agent.network = ValueNetwork(meta.at("input_dim").get<std::size_t>(), meta.at("output_dim").get<std::size_t>(),
                                 meta.at("hidden").get<std::vector<std::size_t>>(), 0);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("incomplete checkpoint metadata: ") + e.what());
  }
  if (agent.network.input_dim() != observation_size(agent.type, agent.capacity) ||
      agent.network.output_dim() != action_count(agent.type, agent.capacity)) {
    throw LoadError("checkpoint dimensions do not match its agent type");
  }
  agent.network.unflatten(params);
  agent.metadata = std::move(meta);
  return agent;
}

}  // namespace cyberops
