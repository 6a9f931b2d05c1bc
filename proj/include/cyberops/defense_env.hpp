#pragma once

#include <array>
#include <cctype>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cyberops/attack.hpp"
#include "cyberops/net_model.hpp"
#include "cyberops/types.hpp"

namespace cyberops {

enum class Operation : std::uint8_t { Reset, Patch, Isolate, Restore, NoOp };

inline constexpr std::array<Operation, 5> kAllOperations = {Operation::Reset, Operation::Patch, Operation::Isolate,
                                                            Operation::Restore, Operation::NoOp};

inline std::string to_string(Operation op) {
  switch (op) {
    case Operation::Reset: return "Reset";
    case Operation::Patch: return "Patch";
    case Operation::Isolate: return "Isolate";
    case Operation::Restore: return "Restore";
    case Operation::NoOp: return "NoOp";
  }
  return "NoOp";
}

inline std::optional<Operation> parse_operation(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (s == "reset") return Operation::Reset;
  if (s == "patch") return Operation::Patch;
  if (s == "isolate") return Operation::Isolate;
  if (s == "restore") return Operation::Restore;
  if (s == "noop") return Operation::NoOp;
  return std::nullopt;
}

struct AtomicAction {
  Operation operation = Operation::NoOp;
  std::optional<NodeId> target;

  static AtomicAction noop() { return {}; }
  static AtomicAction on(Operation op, NodeId n) { return {op, n}; }

  std::string str() const {
    if (operation == Operation::NoOp) return "NoOp";
    return to_string(operation) + "(" + (target ? std::to_string(target->value) : std::string("?")) + ")";
  }

  bool operator==(const AtomicAction&) const = default;
};

struct RewardWeights {
  double lambda_hva = 10.0;
  double alpha = 0.5;
  double beta = 1.0;
  // Indexed by Operation.
  std::array<double, 5> cost = {1.0, 0.2, 0.5, 0.2, 0.0};
  double gamma = 0.8;

  double cost_of(Operation op) const { return cost[static_cast<std::size_t>(op)]; }

  void validate() const {
    if (lambda_hva < 0 || alpha < 0 || beta < 0) throw ConfigError("reward weights must be non-negative");
    for (double c : cost) {
      if (c < 0) throw ConfigError("action costs must be non-negative");
    }
    if (cost_of(Operation::NoOp) != 0.0) throw ConfigError("NoOp cost must be 0");
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0,1)");
  }
};

struct EnvParams {
  double patch_delta = 0.2;
  double vuln_min = 0.05;
  std::size_t max_steps = 100;
  std::size_t action_budget = 4;
  bool terminate_on_hvn = true;

  void validate() const {
    if (max_steps < 1) throw ConfigError("max_steps must be >= 1");
    if (!(patch_delta >= 0.0 && vuln_min >= 0.0 && vuln_min <= 1.0)) throw ConfigError("invalid patch parameters");
  }
};

struct RewardComponents {
  double asset = 0.0;
  double security = 0.0;
  double cost = 0.0;

  double total() const { return asset + security + cost; }
  bool operator==(const RewardComponents&) const = default;
};

enum class TerminalReason : std::uint8_t { None, MaxSteps, HvnCompromised };

inline std::string to_string(TerminalReason r) {
  switch (r) {
    case TerminalReason::None: return "None";
    case TerminalReason::MaxSteps: return "MaxSteps";
    case TerminalReason::HvnCompromised: return "HvnCompromised";
  }
  return "None";
}

struct ApplyResult {
  GlobalState state;
  bool warning = false;  // action had no effect because it was illegal
};

/// Applies one defensive action. Isolate on an isolated node and Restore on a
/// connected node are no-ops flagged with a warning.
inline ApplyResult apply_action(const GlobalState& state, const AtomicAction& action, const EnvParams& params = {}) {
  ApplyResult r{state, false};
  if (action.operation == Operation::NoOp) return r;
  if (!action.target) throw DomainError(to_string(action.operation) + " requires a target");
  NodeState& n = r.state.node(*action.target);
  switch (action.operation) {
    case Operation::Reset:
      n.health = Health::Healthy;
      break;
    case Operation::Patch:
      n.vulnerability = std::max(params.vuln_min, n.vulnerability - params.patch_delta);
      if (n.vulnerability > 1.0) n.vulnerability = 1.0;
      break;
    case Operation::Isolate:
      if (n.isolated) r.warning = true;
      n.isolated = true;
      break;
    case Operation::Restore:
      if (!n.isolated) r.warning = true;
      n.isolated = false;
      break;
    case Operation::NoOp:
      break;
  }
  return r;
}

inline std::size_t compromised_hvn_count(const GlobalState& s) {
  std::size_t c = 0;
  for (const auto& n : s.nodes) c += (n.is_hvn && n.compromised()) ? 1 : 0;
  return c;
}

inline std::size_t abnormal_count(const GlobalState& s) {
  std::size_t c = 0;
  for (const auto& n : s.nodes) c += n.abnormal() ? 1 : 0;
  return c;
}

inline double asset_reward(const GlobalState& next_state, const RewardWeights& w) {
  return -w.lambda_hva * static_cast<double>(compromised_hvn_count(next_state));
}

/// -(alpha * N_{t+1} + beta * newly abnormal nodes).
inline double security_reward(const GlobalState& state, const GlobalState& next_state, const RewardWeights& w) {
  if (state.size() != next_state.size()) throw DomainError("states have different node sets");
  std::size_t newly = 0;
  for (std::size_t i = 0; i < state.size(); ++i) {
    if (next_state.nodes[i].abnormal() && !state.nodes[i].abnormal()) ++newly;
  }
  return -(w.alpha * static_cast<double>(abnormal_count(next_state)) + w.beta * static_cast<double>(newly));
}

inline double cost_reward(const AtomicAction& action, const RewardWeights& w) {
  return -w.cost_of(action.operation);
}

inline double cost_reward(std::span<const AtomicAction> actions, const RewardWeights& w) {
  double c = 0.0;
  for (const auto& a : actions) c += cost_reward(a, w);
  return c;
}

inline RewardComponents reward_components(const GlobalState& s, std::span<const AtomicAction> actions,
                                          const GlobalState& s_next, const RewardWeights& w) {
  return {asset_reward(s_next, w), security_reward(s, s_next, w), cost_reward(actions, w)};
}

inline std::pair<double, RewardComponents> global_reward(const GlobalState& s, const AtomicAction& a,
                                                         const GlobalState& s_next, const RewardWeights& w) {
  const auto c = reward_components(s, std::span<const AtomicAction>(&a, 1), s_next, w);
  return {c.total(), c};
}

struct StepOutcome {
  GlobalState next_state;
  double reward = 0.0;
  RewardComponents components;
  std::vector<AttackEvent> events;
  bool terminal = false;
  TerminalReason terminal_reason = TerminalReason::None;
  std::size_t warnings = 0;
};

/// One MDP transition: defender actions in order, then attackers, then reward
/// over (s_t, joint action, s_{t+1}).
inline StepOutcome env_step(const GlobalState& state, std::span<const AtomicAction> defender_actions,
                            std::vector<Attacker>& attackers, const RewardWeights& weights, const EnvParams& params,
                            Rng& rng) {
  if (defender_actions.size() > params.action_budget) {
    throw BudgetError("action list of " + std::to_string(defender_actions.size()) + " exceeds budget " +
                      std::to_string(params.action_budget));
  }
  StepOutcome out;
  GlobalState cur = state;
  for (const auto& a : defender_actions) {
    auto r = apply_action(cur, a, params);
    out.warnings += r.warning ? 1 : 0;
    cur = std::move(r.state);
  }
  auto [after_attack, events] = attackers_step(cur, attackers, rng);
  after_attack.time = state.time + 1;
  out.components = reward_components(state, defender_actions, after_attack, weights);
  out.reward = out.components.total();
  out.events = std::move(events);
  if (params.terminate_on_hvn && compromised_hvn_count(after_attack) > 0) {
    out.terminal = true;
    out.terminal_reason = TerminalReason::HvnCompromised;
  } else if (after_attack.time >= params.max_steps) {
    out.terminal = true;
    out.terminal_reason = TerminalReason::MaxSteps;
  }
  out.next_state = std::move(after_attack);
  return out;
}

}  // namespace cyberops
