#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cyberops/net_model.hpp"
#include "cyberops/types.hpp"

namespace cyberops {

enum class AttackPolicy : std::uint8_t { Recon, Penetrate, Impact };

inline std::string to_string(AttackPolicy p) {
  switch (p) {
    case AttackPolicy::Recon: return "recon";
    case AttackPolicy::Penetrate: return "penetrate";
    case AttackPolicy::Impact: return "impact";
  }
  return "recon";
}

inline AttackPolicy parse_attack_policy(const std::string& s) {
  if (s == "recon") return AttackPolicy::Recon;
  if (s == "penetrate") return AttackPolicy::Penetrate;
  if (s == "impact") return AttackPolicy::Impact;
  throw ConfigError("unknown attack policy '" + s + "'");
}

struct Attacker {
  std::uint32_t id = 0;
  double skill = 0.7;
  AttackPolicy policy = AttackPolicy::Recon;
  std::vector<NodeId> footholds;  // acquisition order, oldest first
};

struct AttackEvent {
  std::size_t step = 0;
  std::uint32_t attacker = 0;
  std::optional<NodeId> source;  // nullopt: external entry
  NodeId target;
  bool success = false;

  bool operator==(const AttackEvent&) const = default;
};

/// min(RS^2 / (RS + (1 - vuln)), 1), with RS = 0 mapped to 0.
inline double attack_success_probability(double skill, double target_vulnerability) {
  if (!(skill >= 0.0 && skill <= 1.0)) throw DomainError("attacker skill outside [0,1]");
  if (!(target_vulnerability >= 0.0 && target_vulnerability <= 1.0)) {
    throw DomainError("vulnerability outside [0,1]");
  }
  if (skill == 0.0) return 0.0;
  return std::min(skill * skill / (skill + (1.0 - target_vulnerability)), 1.0);
}

/// Non-isolated, non-compromised entry nodes plus the same kind of neighbours
/// of every foothold. Sorted by NodeId.
inline std::vector<NodeId> visible_targets(const GlobalState& state, const Attacker& attacker) {
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < state.size(); ++i) {
    const auto& s = state.nodes[i];
    if (s.is_entry && !s.isolated && !s.compromised()) out.push_back(node_id(i));
  }
  for (NodeId f : attacker.footholds) {
    for (NodeId m : neighbors(state, f)) {
      if (!state.node(m).compromised()) out.push_back(m);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline std::optional<NodeId> select_target(const GlobalState& state, const Attacker& attacker, Rng& rng) {
  const auto visible = visible_targets(state, attacker);
  if (visible.empty()) return std::nullopt;
  switch (attacker.policy) {
    case AttackPolicy::Recon:
      return visible[uniform_index(rng, visible.size())];
    case AttackPolicy::Penetrate: {
      NodeId best = visible.front();
      for (NodeId n : visible) {
        if (state.node(n).vulnerability > state.node(best).vulnerability) best = n;
      }
      return best;
    }
    case AttackPolicy::Impact: {
      NodeId best = visible.front();
      HopDistance best_d = shortest_distance_to_hvn(state, best);
      for (NodeId n : visible) {
        const HopDistance d = shortest_distance_to_hvn(state, n);
        if (d < best_d || (d == best_d && state.node(n).vulnerability > state.node(best).vulnerability)) {
          best = n;
          best_d = d;
        }
      }
      return best;
    }
  }
  return std::nullopt;
}

/// Drops footholds that are no longer compromised (e.g. after a Reset).
inline void prune_footholds(const GlobalState& state, Attacker& attacker) {
  std::erase_if(attacker.footholds, [&](NodeId f) { return !state.node(f).compromised(); });
}

/// Source of an attack on `target`: the most recently acquired foothold
/// adjacent to it, else the outside.
inline std::optional<NodeId> attack_source(const GlobalState& state, const Attacker& attacker, NodeId target) {
  for (auto it = attacker.footholds.rbegin(); it != attacker.footholds.rend(); ++it) {
    const auto nb = neighbors(state, *it);
    if (std::binary_search(nb.begin(), nb.end(), target)) return *it;
  }
  return std::nullopt;
}

/// Each attacker, in id order, picks one target and attempts it. Later
/// attackers see earlier successes in the same step.
inline std::pair<GlobalState, std::vector<AttackEvent>> attackers_step(const GlobalState& state,
                                                                        std::vector<Attacker>& attackers, Rng& rng) {
  GlobalState next = state;
  std::vector<AttackEvent> events;
  std::vector<std::size_t> order(attackers.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return attackers[a].id < attackers[b].id; });

  for (std::size_t idx : order) {
    Attacker& attacker = attackers[idx];
    prune_footholds(next, attacker);
    const auto target = select_target(next, attacker, rng);
    if (!target) continue;
    AttackEvent ev;
    ev.step = state.time;
    ev.attacker = attacker.id;
    ev.source = attack_source(next, attacker, *target);
    ev.target = *target;
    const double p = attack_success_probability(attacker.skill, next.node(*target).vulnerability);
    ev.success = uniform01(rng) < p;
    if (ev.success) {
      next.node(*target).health = Health::Compromised;
      attacker.footholds.push_back(*target);
    }
    events.push_back(ev);
  }
  return {std::move(next), std::move(events)};
}

inline std::vector<Attacker> make_attackers(std::size_t count, double skill, AttackPolicy policy) {
  std::vector<Attacker> out;
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(Attacker{static_cast<std::uint32_t>(i), skill, policy, {}});
  }
  return out;
}

}  // namespace cyberops
