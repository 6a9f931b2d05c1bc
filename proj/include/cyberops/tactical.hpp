#pragma once

#include <array>
#include <cctype>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cyberops/defense_env.hpp"
#include "cyberops/types.hpp"

namespace cyberops {

enum class AgentType : std::uint8_t { Fortify, Recover, Purge, Block };

inline constexpr std::array<AgentType, 4> kAllAgentTypes = {AgentType::Fortify, AgentType::Recover, AgentType::Purge,
                                                            AgentType::Block};

inline std::string to_string(AgentType t) {
  switch (t) {
    case AgentType::Fortify: return "Fortify";
    case AgentType::Recover: return "Recover";
    case AgentType::Purge: return "Purge";
    case AgentType::Block: return "Block";
  }
  return "Fortify";
}

inline std::optional<AgentType> parse_agent_type(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (s == "fortify") return AgentType::Fortify;
  if (s == "recover") return AgentType::Recover;
  if (s == "purge") return AgentType::Purge;
  if (s == "block") return AgentType::Block;
  return std::nullopt;
}

/// Operations each agent type may emit (NoOp is always available on top).
inline std::span<const Operation> operation_set(AgentType t) {
  static constexpr Operation fortify[] = {Operation::Patch};
  static constexpr Operation recover[] = {Operation::Restore};
  static constexpr Operation purge[] = {Operation::Reset, Operation::Patch};
  static constexpr Operation block[] = {Operation::Isolate};
  switch (t) {
    case AgentType::Fortify: return fortify;
    case AgentType::Recover: return recover;
    case AgentType::Purge: return purge;
    case AgentType::Block: return block;
  }
  return fortify;
}

struct ExecuteAction {
  Operation operation = Operation::NoOp;
  NodeId target;
  bool operator==(const ExecuteAction&) const = default;
};

struct AssignAgent {
  AgentType agent_type = AgentType::Fortify;
  SubnetId subnet;
  bool operator==(const AssignAgent&) const = default;
};

struct TacticalNoOp {
  bool operator==(const TacticalNoOp&) const = default;
};

using TacticalAction = std::variant<ExecuteAction, AssignAgent, TacticalNoOp>;

/// Action-block line for a validated action, e.g. "ASSIGN Block Servers".
inline std::string describe(const TacticalAction& a, const std::vector<std::string>& subnet_names) {
  if (const auto* e = std::get_if<ExecuteAction>(&a)) {
    return "EXEC " + to_string(e->operation) + " " + std::to_string(e->target.value);
  }
  if (const auto* s = std::get_if<AssignAgent>(&a)) {
    const std::string name =
        s->subnet.index() < subnet_names.size() ? subnet_names[s->subnet.index()] : std::to_string(s->subnet.value);
    return "ASSIGN " + to_string(s->agent_type) + " " + name;
  }
  return "NOOP";
}

}  // namespace cyberops
