#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cyberops/defense_env.hpp"
#include "cyberops/rl_agents.hpp"
#include "cyberops/scenario.hpp"

namespace cyberops {

struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Reset generator, attack configuration and termination predicate for one
/// agent type's pre-training.
struct TrainingScenarioTriple {
  std::string name;
  std::function<GlobalState(Rng&)> reset;
  AttackConfig attack;
  std::function<bool(const GlobalState&)> terminate;
  RewardWeights weights;
  EnvParams env;
  SubnetId subnet;  // the region the agent is assigned to

  std::vector<Attacker> make_attackers() const {
    return cyberops::make_attackers(attack.attacker_count, attack.skill, attack.policy);
  }
};

struct MicroScenarioParams {
  std::size_t nodes_min = 10;
  std::size_t nodes_max = 10;
  std::size_t entries = 2;
  std::size_t hvns = 1;
  double edge_density = 0.2;
  std::size_t max_steps = 30;
  bool random_layout = false;  // HVN positions drawn per episode instead of fixed at 0..hvns-1
  std::size_t attackers = 2;

  /// Subnets the size of the observation window with several HVNs, so that
  /// every slot is exercised before deployment on the named scenarios.
  static MicroScenarioParams deployment() { return {20, 30, 2, 3, 0.08, 30, true, 4}; }

  /// Missing keys keep the deployment preset's values.
  static MicroScenarioParams from_json(const nlohmann::json& j) {
    MicroScenarioParams p = deployment();
    try {
      p.nodes_min = j.value("nodes_min", p.nodes_min);
      p.nodes_max = j.value("nodes_max", p.nodes_max);
      p.entries = j.value("entries", p.entries);
      p.hvns = j.value("hvns", p.hvns);
      p.edge_density = j.value("edge_density", p.edge_density);
      p.max_steps = j.value("max_steps", p.max_steps);
      p.random_layout = j.value("random_layout", p.random_layout);
      p.attackers = j.value("attackers", p.attackers);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("invalid training scenario: ") + e.what());
    }
    if (p.nodes_min == 0 || p.nodes_max < p.nodes_min || p.hvns + p.entries > p.nodes_min) {
      throw ConfigError("training scenario needs 0 < nodes_min <= nodes_max and room for entries and HVNs");
    }
    return p;
  }
};

namespace detail {

inline ScenarioConfig micro_config(const MicroScenarioParams& p, std::size_t nodes, std::vector<std::size_t> hvn_idx,
                                   double vmin, double vmax) {
  ScenarioConfig c;
  c.name = "micro";
  SubnetConfig s;
  s.name = "Micro";
  s.node_scale = nodes;
  s.entry_count = p.entries;
  s.edge_density = p.edge_density;
  for (auto i : hvn_idx) s.hvns.push_back(HvnSpec{i, "critical host " + std::to_string(i)});
  s.context = {"internet-facing hosts", "mixed patch levels", "critical hosts", "best effort"};
  c.subnets = {s};
  c.vulnerability = {vmin, vmax, 0};
  c.env.max_steps = p.max_steps;
  return c;
}

inline std::vector<std::size_t> non_hvn_nodes(const GlobalState& s) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!s.nodes[i].is_hvn) out.push_back(i);
  }
  return out;
}

inline void pick_k(std::vector<std::size_t>& pool, std::size_t k, Rng& rng) {
  k = std::min(k, pool.size());
  for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
  pool.resize(k);
}

/// Fresh topology for one episode: size in [nodes_min, nodes_max], HVNs at
/// 0..hvns-1 or at random positions.
inline GlobalState micro_state(const MicroScenarioParams& p, double vmin, double vmax, Rng& rng) {
  const std::size_t nodes = p.nodes_min + uniform_index(rng, p.nodes_max - p.nodes_min + 1);
  std::vector<std::size_t> hvn_idx(nodes);
  for (std::size_t i = 0; i < nodes; ++i) hvn_idx[i] = i;
  if (p.random_layout) {
    pick_k(hvn_idx, p.hvns, rng);
  } else {
    hvn_idx.resize(std::min(p.hvns, nodes));
  }
  return build_scenario(micro_config(p, nodes, hvn_idx, vmin, vmax), rng());
}

}  // namespace detail

/// Per-type training scenarios. Topology is redrawn every episode.
///   Fortify - healthy net with high vulnerabilities, recon attackers
///   Recover - about half the hosts isolated (a few of them compromised)
///   Purge   - three hosts already compromised (two isolated), recon attackers
///   Block   - a compromised host two hops from an HVN, impact attackers
inline TrainingScenarioTriple training_triple(AgentType t, const MicroScenarioParams& p = {}) {
  if (p.nodes_min == 0 || p.nodes_max < p.nodes_min) throw ConfigError("invalid training subnet size range");
  TrainingScenarioTriple tr;
  tr.name = "micro-" + to_string(t);
  tr.subnet = subnet_id(0);
  double vmin = 0.1, vmax = 0.9;
  if (t == AgentType::Fortify) vmin = 0.6, vmax = 0.95;
  const ScenarioConfig cfg = detail::micro_config(p, p.nodes_min, {0}, vmin, vmax);
  tr.weights = cfg.weights;
  tr.env = cfg.env;
  // Fixed-length episodes: ending on HVN loss would cut off the penalty that
  // follows it and make an early breach look cheap.
  tr.env.terminate_on_hvn = false;
  const std::size_t n_att = p.attackers;

  switch (t) {
    case AgentType::Fortify:
      tr.attack = {n_att, AttackPolicy::Recon, 0.7};
      tr.reset = [p, vmin, vmax](Rng& rng) { return detail::micro_state(p, vmin, vmax, rng); };
      break;
    case AgentType::Recover:
      tr.attack = {n_att, AttackPolicy::Recon, 0.7};
      tr.reset = [p, vmin, vmax](Rng& rng) {
        auto s = detail::micro_state(p, vmin, vmax, rng);
        auto pool = detail::non_hvn_nodes(s);
        detail::pick_k(pool, pool.size() / 2, rng);
        for (auto i : pool) s.nodes[i].isolated = true;
        // Some isolated hosts are still infected; restoring them is a mistake.
        for (std::size_t k = 0; k < pool.size() / 4; ++k) s.nodes[pool[k]].health = Health::Compromised;
        return s;
      };
      break;
    case AgentType::Purge:
      tr.attack = {n_att, AttackPolicy::Recon, 0.7};
      tr.reset = [p, vmin, vmax](Rng& rng) {
        auto s = detail::micro_state(p, vmin, vmax, rng);
        auto pool = detail::non_hvn_nodes(s);
        detail::pick_k(pool, 3, rng);
        for (auto i : pool) s.nodes[i].health = Health::Compromised;
        // Two of them already contained, as the planner's containment leaves them.
        for (std::size_t k = 0; k + 1 < pool.size(); ++k) s.nodes[pool[k]].isolated = true;
        return s;
      };
      break;
    case AgentType::Block:
      tr.attack = {n_att, AttackPolicy::Impact, 0.7};
      tr.reset = [p, vmin, vmax](Rng& rng) {
        auto s = detail::micro_state(p, vmin, vmax, rng);
        std::vector<std::size_t> two_hop;
        for (std::size_t i = 0; i < s.size(); ++i) {
          if (s.nodes[i].is_hvn) continue;
          if (shortest_distance_to_hvn(s, node_id(i)) == HopDistance::hops(2)) two_hop.push_back(i);
        }
        if (two_hop.empty()) two_hop = detail::non_hvn_nodes(s);
        s.nodes[two_hop[uniform_index(rng, two_hop.size())]].health = Health::Compromised;
        return s;
      };
      break;
  }
  return tr;
}

/// Attackers for a reset state: existing compromised hosts become footholds
/// of the first attacker so that pre-seeded breaches can propagate.
inline std::vector<Attacker> attackers_for(const TrainingScenarioTriple& tr, const GlobalState& s) {
  auto attackers = tr.make_attackers();
  if (!attackers.empty()) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s.nodes[i].compromised()) attackers.front().footholds.push_back(node_id(i));
    }
  }
  return attackers;
}

struct TrainingHyperparams {
  double learning_rate = 0.01;
  std::size_t batch_size = 256;
  double gamma = 0.8;
  std::size_t buffer_capacity = 100'000;
  std::size_t target_update_interval = 1000;
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t episodes = 10'000;
  double epsilon_start = 0.6;
  double epsilon_end = 0.0;
  std::size_t epsilon_decay_steps = 2000;
  double grad_clip = 10.0;
  std::size_t capacity = kDefaultCapacity;
  SpecializedRewardConfig reward;
};

struct UpdateProbe {
  std::size_t step = 0;
  double loss = 0.0;
  bool synced = false;
  std::uint64_t online_checksum = 0;
  std::uint64_t target_checksum = 0;
};

struct TrainingResult {
  DefenseAgent agent;
  std::vector<double> episode_rewards;
  std::vector<std::size_t> episode_lengths;
  std::size_t total_steps = 0;
  std::size_t updates = 0;
};

/// Per-step hook; when set it is invoked after every gradient step.
using UpdateObserver = std::function<void(const UpdateProbe&)>;

namespace detail {

inline Eigen::MatrixXd stack(const std::vector<const Transition*>& batch, bool next) {
  const auto& first = next ? batch.front()->next_observation : batch.front()->observation;
  Eigen::MatrixXd x(static_cast<Eigen::Index>(first.size()), static_cast<Eigen::Index>(batch.size()));
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& v = next ? batch[b]->next_observation : batch[b]->observation;
    x.col(static_cast<Eigen::Index>(b)) = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  return x;
}

}  // namespace detail

/// Heterogeneous separated pre-training of one agent type (DQN with replay
/// and a periodically synced target network).
inline TrainingResult train_agent(AgentType type, const TrainingScenarioTriple& triple, const TrainingHyperparams& hp,
                                  std::uint64_t seed, const UpdateObserver& observer = {}) {
  if (hp.batch_size == 0 || hp.target_update_interval == 0) throw ConfigError("batch size and target interval must be positive");
  TrainingResult res;
  res.agent = DefenseAgent::untrained(type, hp.capacity, mix_seed(seed, 2), hp.hidden);
  res.agent.metadata = {{"seed", seed},
                        {"scenario", triple.name},
                        {"episodes", hp.episodes},
                        {"learning_rate", hp.learning_rate},
                        {"batch_size", hp.batch_size},
                        {"gamma", hp.gamma},
                        {"target_update_interval", hp.target_update_interval}};
  ValueNetwork target = res.agent.network;
  AdamOptimizer adam(hp.learning_rate);
  ReplayBuffer buffer(hp.buffer_capacity);
  Rng rng(mix_seed(seed, 1));
  ValueNetwork::Gradients grads;
  std::vector<std::size_t> actions(hp.batch_size);
  Eigen::VectorXd targets(static_cast<Eigen::Index>(hp.batch_size));

  for (std::size_t ep = 0; ep < hp.episodes; ++ep) {
    GlobalState state = triple.reset(rng);
    auto attackers = attackers_for(triple, state);
    auto obs = project_observation(state, triple.subnet, type, hp.capacity, triple.env);
    double total = 0.0;
    std::size_t len = 0;
    for (;;) {
      const double eps = epsilon_schedule(res.total_steps, hp.epsilon_start, hp.epsilon_end, hp.epsilon_decay_steps);
      const auto choice = select_action(res.agent, obs, eps, rng);
      const AtomicAction act[1] = {choice.action};
      auto out = env_step(state, act, attackers, triple.weights, triple.env, rng);
      const double r = specialized_reward(type, state, act, out.next_state, triple.weights, hp.reward);
      const bool done = out.terminal || (triple.terminate && triple.terminate(out.next_state));
      auto next_obs = project_observation(out.next_state, triple.subnet, type, hp.capacity, triple.env);
      buffer.push({obs.features, choice.index, r, next_obs.features, next_obs.action_mask, done});
      total += r;
      ++len;
      ++res.total_steps;

      if (buffer.size() >= hp.batch_size) {
        const auto batch = buffer.sample(hp.batch_size, rng);
        const Eigen::MatrixXd x = detail::stack(batch, false);
        const Eigen::MatrixXd qn = target.forward(detail::stack(batch, true));
        for (std::size_t b = 0; b < batch.size(); ++b) {
          double y = batch[b]->reward;
          if (!batch[b]->terminal) {
            const auto col = static_cast<Eigen::Index>(b);
            y += hp.gamma * qn(static_cast<Eigen::Index>(greedy_index(qn.col(col), batch[b]->next_mask)), col);
          }
          targets(static_cast<Eigen::Index>(b)) = y;
          actions[b] = batch[b]->action;
        }
        const double loss = res.agent.network.loss_and_gradient(x, actions, targets, grads);
        if (!std::isfinite(loss)) {
          throw DivergenceError("training diverged at step " + std::to_string(res.total_steps) + " (episode " +
                                std::to_string(ep) + "): non-finite loss");
        }
        const double norm = std::sqrt(grads.squared_norm());
        if (norm > hp.grad_clip) grads.scale(hp.grad_clip / norm);
        adam.step(res.agent.network, grads);
        if (!res.agent.network.all_finite()) {
          throw DivergenceError("training diverged at step " + std::to_string(res.total_steps) +
                                ": non-finite parameters after update");
        }
        ++res.updates;
        UpdateProbe probe{res.total_steps, loss, false, 0, 0};
        if (res.total_steps % hp.target_update_interval == 0) {
          target = res.agent.network;
          probe.synced = true;
        }
        if (observer) {
          probe.online_checksum = res.agent.network.checksum();
          probe.target_checksum = target.checksum();
          observer(probe);
        }
      } else if (res.total_steps % hp.target_update_interval == 0) {
        target = res.agent.network;
      }

      state = std::move(out.next_state);
      obs = std::move(next_obs);
      if (done) break;
    }
    res.episode_rewards.push_back(total);
    res.episode_lengths.push_back(len);
  }
  return res;
}

using LocalPolicy = std::function<AtomicAction(const LocalObservation&, Rng&)>;

inline LocalPolicy greedy_policy(const DefenseAgent& agent) {
  return [&agent](const LocalObservation& obs, Rng& rng) { return select_action(agent, obs, 0.0, rng).action; };
}

inline LocalPolicy uniform_random_policy() {
  return [](const LocalObservation& obs, Rng& rng) {
    std::vector<std::size_t> valid;
    for (std::size_t i = 0; i < obs.action_mask.size(); ++i) {
      if (obs.action_mask[i]) valid.push_back(i);
    }
    return decode_action(obs, valid[uniform_index(rng, valid.size())]);
  };
}

/// Specialized return of `policy` over `episodes` episodes. Episode i uses a
/// seed derived only from (seed, i), so two policies evaluated with the same
/// seed face identical initial states.
inline std::vector<double> evaluate_policy(AgentType type, const TrainingScenarioTriple& triple,
                                           const LocalPolicy& policy, std::size_t episodes, std::uint64_t seed,
                                           std::size_t capacity = kDefaultCapacity,
                                           const SpecializedRewardConfig& rcfg = {}) {
  std::vector<double> out;
  out.reserve(episodes);
  for (std::size_t ep = 0; ep < episodes; ++ep) {
    Rng reset_rng(mix_seed(seed, ep));
    Rng env_rng(mix_seed(seed ^ 0xe7a1, ep));
    Rng policy_rng(mix_seed(seed ^ 0x9011c7, ep));
    GlobalState state = triple.reset(reset_rng);
    auto attackers = attackers_for(triple, state);
    double total = 0.0;
    for (;;) {
      const auto obs = project_observation(state, triple.subnet, type, capacity, triple.env);
      const AtomicAction act[1] = {policy(obs, policy_rng)};
      auto o = env_step(state, act, attackers, triple.weights, triple.env, env_rng);
      total += specialized_reward(type, state, act, o.next_state, triple.weights, rcfg);
      const bool done = o.terminal || (triple.terminate && triple.terminate(o.next_state));
      state = std::move(o.next_state);
      if (done) break;
    }
    out.push_back(total);
  }
  return out;
}

inline void write_training_curve_csv(std::ostream& os, const TrainingResult& r) {
  os << "episode,reward,length\n";
  for (std::size_t i = 0; i < r.episode_rewards.size(); ++i) {
    os << i << ',' << r.episode_rewards[i] << ',' << r.episode_lengths[i] << '\n';
  }
}

}  // namespace cyberops
