#pragma once

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "json.hpp"

#include "cyberops/memory.hpp"
#include "cyberops/perception.hpp"
#include "cyberops/rl_agents.hpp"
#include "cyberops/tactical.hpp"

// After Eigen: <resolv.h>, pulled in by httplib, defines a `_res` macro.
#include "httplib.h"

namespace cyberops {

struct TransportError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kToolCatalogVersion = "tools-v1";

// ---------------------------------------------------------------------------
// Action block grammar
// ---------------------------------------------------------------------------

/// One line of a fenced ```actions block, before name resolution.
struct ProposedAction {
  std::string line;                 // verbatim, trimmed
  std::vector<std::string> tokens;  // whitespace split

  bool operator==(const ProposedAction&) const = default;
};

struct PlannerProposal {
  std::string reasoning;
  std::vector<ProposedAction> actions;
  std::string backend_id;
  std::optional<std::string> parse_error;  // set when no usable block was found
  std::string raw_response;
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

}  // namespace detail

/// Splits a free-text response into reasoning (everything outside the block)
/// and the lines of the first ```actions block. Lines starting with '#' and
/// blank lines inside the block are ignored.
inline PlannerProposal parse_action_block(const std::string& response, std::string backend_id = "") {
  PlannerProposal p;
  p.backend_id = std::move(backend_id);
  p.raw_response = response;
  static constexpr std::string_view kOpen = "```actions";
  const auto open = response.find(kOpen);
  if (open == std::string::npos) {
    p.reasoning = detail::trim(response);
    p.parse_error = "no ```actions block in response";
    return p;
  }
  const auto body_start = response.find('\n', open);
  if (body_start == std::string::npos) {
    p.reasoning = detail::trim(response.substr(0, open));
    p.parse_error = "action block opened but never closed";
    return p;
  }
  const auto close = response.find("```", body_start + 1);
  if (close == std::string::npos) {
    p.reasoning = detail::trim(response.substr(0, open));
    p.parse_error = "action block opened but never closed";
    return p;
  }
  p.reasoning = detail::trim(response.substr(0, open) + response.substr(close + 3));
  std::istringstream body(response.substr(body_start + 1, close - body_start - 1));
  for (std::string line; std::getline(body, line);) {
    line = detail::trim(line);
    if (line.empty() || line.front() == '#') continue;
    p.actions.push_back({line, detail::split_ws(line)});
  }
  return p;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

enum class RejectReason : std::uint8_t {
  Malformed,
  UnknownNode,
  UnknownSubnet,
  UnknownAgentType,
  UnknownOperation,
  OverBudget,
  Duplicate,
  AgentUnavailable,
};

inline std::string to_string(RejectReason r) {
  switch (r) {
    case RejectReason::Malformed: return "Malformed";
    case RejectReason::UnknownNode: return "UnknownNode";
    case RejectReason::UnknownSubnet: return "UnknownSubnet";
    case RejectReason::UnknownAgentType: return "UnknownAgentType";
    case RejectReason::UnknownOperation: return "UnknownOperation";
    case RejectReason::OverBudget: return "OverBudget";
    case RejectReason::Duplicate: return "Duplicate";
    case RejectReason::AgentUnavailable: return "AgentUnavailable";
  }
  return "Malformed";
}

struct Rejection {
  std::string line;
  RejectReason reason = RejectReason::Malformed;
  std::string detail;

  bool operator==(const Rejection&) const = default;
};

struct ValidationResult {
  std::vector<TacticalAction> accepted;  // NOOP lines are dropped, never counted
  std::vector<Rejection> rejected;
  bool invalid = false;  // parse failure or any rejection
};

/// Running count of proposals and invalid proposals.
struct ProposalStats {
  std::size_t proposals = 0;
  std::size_t invalid = 0;

  double invalid_rate() const { return proposals == 0 ? 0.0 : static_cast<double>(invalid) / static_cast<double>(proposals); }
};

/// Resolves names against `state`, applies dedup and the budget `k` (shared
/// by EXEC and ASSIGN), and bumps `stats` when given.
inline ValidationResult validate_proposal(const PlannerProposal& proposal, const GlobalState& state, std::size_t k,
                                          ProposalStats* stats = nullptr) {
  ValidationResult r;
  auto reject = [&](const ProposedAction& a, RejectReason why, std::string detail) {
    r.rejected.push_back({a.line, why, std::move(detail)});
  };
  std::size_t used = 0;
  for (const auto& a : proposal.actions) {
    if (a.tokens.empty()) {
      reject(a, RejectReason::Malformed, "empty line");
      continue;
    }
    const std::string verb = detail::lower(a.tokens[0]);
    if (verb == "noop") {
      if (a.tokens.size() != 1) reject(a, RejectReason::Malformed, "NOOP takes no arguments");
      continue;
    }
    if (verb != "assign" && verb != "exec") {
      reject(a, RejectReason::Malformed, "unknown verb '" + a.tokens[0] + "'");
      continue;
    }
    if (a.tokens.size() != 3) {
      reject(a, RejectReason::Malformed, "expected 3 tokens, got " + std::to_string(a.tokens.size()));
      continue;
    }
    TacticalAction resolved;
    if (verb == "assign") {
      const auto type = parse_agent_type(a.tokens[1]);
      if (!type) {
        reject(a, RejectReason::UnknownAgentType, "no agent type '" + a.tokens[1] + "'");
        continue;
      }
      const auto subnet = state.graph->find_subnet(a.tokens[2]);
      if (!subnet) {
        reject(a, RejectReason::UnknownSubnet, "no subnet '" + a.tokens[2] + "'");
        continue;
      }
      resolved = AssignAgent{*type, *subnet};
    } else {
      const auto op = parse_operation(a.tokens[1]);
      if (!op || *op == Operation::NoOp) {
        reject(a, RejectReason::UnknownOperation, "no operation '" + a.tokens[1] + "'");
        continue;
      }
      const std::string& n = a.tokens[2];
      const bool digits = !n.empty() && n.size() <= 9 &&
                          std::all_of(n.begin(), n.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
      if (!digits) {
        reject(a, RejectReason::Malformed, "node id '" + n + "' is not a number");
        continue;
      }
      const auto id = static_cast<std::size_t>(std::stoul(n));
      if (id >= state.size()) {
        reject(a, RejectReason::UnknownNode, "no node " + n);
        continue;
      }
      resolved = ExecuteAction{*op, node_id(id)};
    }
    if (std::find(r.accepted.begin(), r.accepted.end(), resolved) != r.accepted.end()) {
      reject(a, RejectReason::Duplicate, "already proposed this cycle");
      continue;
    }
    if (used >= k) {
      reject(a, RejectReason::OverBudget, "budget of " + std::to_string(k) + " actions exhausted");
      continue;
    }
    ++used;
    r.accepted.push_back(resolved);
  }
  r.invalid = proposal.parse_error.has_value() || !r.rejected.empty();
  if (stats) {
    ++stats->proposals;
    stats->invalid += r.invalid ? 1 : 0;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

/// What a backend sees. Text-only backends read `observation` and
/// `tool_catalog`; the scripted backend reads the structured fields.
struct PlannerInput {
  std::string observation;
  std::string tool_catalog;
  std::size_t budget = 4;
  const GlobalState* state = nullptr;
  const std::vector<SubnetMetrics>* metrics = nullptr;
};

class PlannerBackend {
 public:
  virtual ~PlannerBackend() = default;
  virtual std::string id() const = 0;
  /// Returns the raw response text. Throws TransportError when the backend
  /// could not be reached.
  virtual std::string respond(const PlannerInput& input) = 0;

  PlannerProposal propose(const PlannerInput& input) { return parse_action_block(respond(input), id()); }
};

inline std::string tool_catalog(std::size_t budget) {
  return fmt::format(
      "# Tool catalog ({})\n"
      "ASSIGN <agent_type> <subnet>  dispatch a pre-trained agent to act on one subnet this step\n"
      "  Fortify: Patch | Recover: Restore | Purge: Reset, Patch | Block: Isolate\n"
      "EXEC <operation> <node_id>    run one atomic action (Reset, Patch, Isolate, Restore)\n"
      "NOOP                          do nothing\n"
      "At most {} ASSIGN/EXEC lines per step. Give your reasoning first, then exactly one block:\n"
      "```actions\n"
      "ASSIGN Block Servers\n"
      "```\n",
      kToolCatalogVersion, budget);
}

/// Subnet names following "prioritize"/"prioritise"/"focus on" in `text`,
/// matched case-insensitively against `names`, in order of appearance.
inline std::vector<std::string> instruction_priorities(const std::string& text, const std::vector<std::string>& names) {
  const auto words = detail::split_ws(text);
  std::vector<std::string> out;
  auto clean = [](std::string w) {
    while (!w.empty() && std::ispunct(static_cast<unsigned char>(w.back()))) w.pop_back();
    return detail::lower(w);
  };
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto w = clean(words[i]);
    std::size_t arg = i + 1;
    if (w == "focus" && arg < words.size() && clean(words[arg]) == "on") ++arg;
    else if (w != "prioritize" && w != "prioritise") continue;
    if (arg >= words.size()) continue;
    const auto target = clean(words[arg]);
    for (const auto& n : names) {
      if (detail::lower(n) == target && std::find(out.begin(), out.end(), n) == out.end()) out.push_back(n);
    }
  }
  return out;
}

struct ScriptedRules {
  std::size_t theta_block = 3;
  std::size_t recover_threshold = 0;  // isolated_count above this triggers Recover
  bool direct_exec = false;           // emit EXEC lines instead of ASSIGN
  bool contain_first = true;          // ASSIGN mode: isolate exposed compromised nodes directly first
};

/// Deterministic rule table standing in for a language model.
class ScriptedBackend : public PlannerBackend {
 public:
  explicit ScriptedBackend(ScriptedRules rules = {}) : rules_(rules) {}

  std::string id() const override { return rules_.direct_exec ? "scripted-direct" : "scripted"; }

  std::string respond(const PlannerInput& in) override {
    if (!in.state || !in.metrics) throw DomainError("scripted backend needs structured metrics");
    const auto& state = *in.state;
    const auto& metrics = *in.metrics;
    std::vector<std::string> names;
    for (const auto& s : state.graph->subnets()) names.push_back(s.name);
    const auto priorities =
        state.human_instruction ? instruction_priorities(*state.human_instruction, names) : std::vector<std::string>{};

    // Subnet order: instruction priorities, then closest threat, then most
    // compromised, then id.
    std::vector<std::size_t> order(metrics.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    auto rank = [&](std::size_t i) {
      const auto it = std::find(priorities.begin(), priorities.end(), names[metrics[i].subnet.index()]);
      return static_cast<std::size_t>(it - priorities.begin());
    };
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (rank(a) != rank(b)) return rank(a) < rank(b);
      if (metrics[a].critical_distance != metrics[b].critical_distance)
        return metrics[a].critical_distance < metrics[b].critical_distance;
      return metrics[a].compromised_count > metrics[b].compromised_count;
    });

    std::vector<std::string> lines, why;
    if (!priorities.empty()) {
      std::string p;
      for (const auto& n : priorities) p += (p.empty() ? "" : ", ") + n;
      why.push_back("Operator instruction puts " + p + " first.");
    }
    auto room = [&] { return lines.size() < in.budget; };
    const HopDistance theta = HopDistance::hops(rules_.theta_block);

    if (rules_.direct_exec) {
      direct_rules(state, metrics, order, names, lines, why, in.budget);
    } else {
      std::size_t left_exposed = 0;
      if (rules_.contain_first) left_exposed = contain(state, order, names, lines, why, in.budget);
      for (std::size_t i : order) {
        const auto& m = metrics[i];
        // Once containment has covered every exposed node there is nothing
        // left for a Block agent to cut off.
        if (rules_.contain_first && left_exposed == 0) break;
        if (room() && m.critical_distance < theta) {
          lines.push_back("ASSIGN Block " + names[i]);
          why.push_back(fmt::format("Rule block: {} has a compromised node {} hop(s) from an HVN (< {}).", names[i],
                                    m.critical_distance.str(), rules_.theta_block));
        }
      }
      for (std::size_t i : order) {
        const auto& m = metrics[i];
        if (room() && m.compromised_count > 0) {
          lines.push_back("ASSIGN Purge " + names[i]);
          why.push_back(fmt::format("Rule purge: {} holds {} compromised node(s).", names[i], m.compromised_count));
        }
      }
      for (std::size_t i : order) {
        const auto& m = metrics[i];
        // A contained but unpurged host still counts as a threat: restoring
        // it would reopen the breach.
        if (room() && m.isolated_count > rules_.recover_threshold && !(m.critical_distance < theta) &&
            m.compromised_count == 0) {
          lines.push_back("ASSIGN Recover " + names[i]);
          why.push_back(fmt::format("Rule recover: {} has {} isolated node(s) and no imminent threat.", names[i],
                                    m.isolated_count));
        }
      }
      if (room()) {
        std::size_t best = order.front();
        for (std::size_t i : order) {
          if (metrics[i].avg_vulnerability > metrics[best].avg_vulnerability) best = i;
        }
        lines.push_back("ASSIGN Fortify " + names[best]);
        why.push_back(fmt::format("Rule fortify: {} has the highest average vulnerability ({:.4f}).", names[best],
                                  metrics[best].avg_vulnerability));
      }
    }
    if (lines.empty()) {
      lines.push_back("NOOP");
      why.push_back("No rule fired.");
    }
    std::string out = "Reasoning:\n";
    for (const auto& w : why) out += "- " + w + "\n";
    out += "```actions\n";
    for (const auto& l : lines) out += l + "\n";
    out += "```\n";
    return out;
  }

 private:
  // Isolate exposed compromised nodes, closest to an HVN first. Returns how
  // many exposed nodes did not fit in the budget.
  static std::size_t contain(const GlobalState& state, const std::vector<std::size_t>& order,
                             const std::vector<std::string>& names, std::vector<std::string>& lines,
                             std::vector<std::string>& why, std::size_t budget) {
    std::size_t missed = 0;
    for (std::size_t i : order) {
      std::vector<std::pair<HopDistance, NodeId>> exposed;
      for (NodeId n : state.graph->subnets()[i].nodes) {
        const auto& s = state.node(n);
        if (s.compromised() && !s.isolated) exposed.emplace_back(shortest_distance_to_hvn(state, n), n);
      }
      std::sort(exposed.begin(), exposed.end());
      for (const auto& [d, n] : exposed) {
        if (lines.size() >= budget) {
          ++missed;
          continue;
        }
        lines.push_back("EXEC Isolate " + std::to_string(n.value));
        why.push_back(fmt::format("Rule contain: node {} in {} is compromised ({} hop(s) from an HVN).", n.value,
                                  names[i], d.str()));
      }
    }
    return missed;
  }

  // Same rule priorities expressed as atomic actions.
  void direct_rules(const GlobalState& state, const std::vector<SubnetMetrics>& metrics,
                    const std::vector<std::size_t>& order, const std::vector<std::string>& names,
                    std::vector<std::string>& lines, std::vector<std::string>& why, std::size_t budget) const {
    auto room = [&] { return lines.size() < budget; };
    auto nodes_of = [&](std::size_t i) -> const std::vector<NodeId>& { return state.graph->subnets()[i].nodes; };
    contain(state, order, names, lines, why, budget);
    // Eradicate: reset isolated compromised nodes.
    for (std::size_t i : order) {
      for (NodeId n : nodes_of(i)) {
        const auto& s = state.node(n);
        if (!room()) break;
        if (s.compromised() && s.isolated) {
          lines.push_back("EXEC Reset " + std::to_string(n.value));
          why.push_back(fmt::format("Rule eradicate: node {} is contained but still compromised.", n.value));
        }
      }
    }
    // Recover clean interior nodes once the subnet holds no exposed threat.
    for (std::size_t i : order) {
      if (metrics[i].critical_distance.reachable()) continue;
      for (NodeId n : nodes_of(i)) {
        const auto& s = state.node(n);
        if (!room()) break;
        if (s.isolated && !s.compromised() && !s.is_entry) {
          lines.push_back("EXEC Restore " + std::to_string(n.value));
          why.push_back(fmt::format("Rule recover: node {} is clean and can rejoin {}.", n.value, names[i]));
        }
      }
    }
    (void)metrics;
  }

  ScriptedRules rules_;
};

/// Returns canned responses in order, then repeats the last one. Used for
/// fault injection and offline replays of recorded model output.
class CannedBackend : public PlannerBackend {
 public:
  explicit CannedBackend(std::vector<std::string> responses, std::string id = "canned")
      : responses_(std::move(responses)), id_(std::move(id)) {
    if (responses_.empty()) throw DomainError("canned backend needs at least one response");
  }
  std::string id() const override { return id_; }
  std::string respond(const PlannerInput&) override {
    const auto& r = responses_[std::min(next_, responses_.size() - 1)];
    ++next_;
    return r;
  }

 private:
  std::vector<std::string> responses_;
  std::size_t next_ = 0;
  std::string id_;
};

struct RemoteBackendConfig {
  std::string endpoint;  // e.g. http://127.0.0.1:8000/v1/chat/completions
  std::string model = "default";
  std::string token;     // overridden by CYBEROPS_API_TOKEN when set
  double timeout_seconds = 30.0;
  double temperature = 0.0;

  static RemoteBackendConfig from_json(const nlohmann::json& j) {
    RemoteBackendConfig c;
    c.endpoint = j.value("endpoint", std::string());
    c.model = j.value("model", c.model);
    c.token = j.value("token", std::string());
    c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
    c.temperature = j.value("temperature", c.temperature);
    return c;
  }
};

/// Chat-completions client. Transport problems (connection, timeout, non-2xx,
/// unreadable envelope) raise TransportError; anything the model wrote is
/// returned as-is and judged by the action-block parser.
class RemoteBackend : public PlannerBackend {
 public:
  explicit RemoteBackend(RemoteBackendConfig cfg) : cfg_(std::move(cfg)) {
    if (const char* t = std::getenv("CYBEROPS_API_TOKEN"); t && *t) cfg_.token = t;
    if (cfg_.endpoint.empty()) throw ConfigError("remote backend needs an endpoint URL");
    const auto scheme_end = cfg_.endpoint.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("endpoint must include a scheme: " + cfg_.endpoint);
    const auto path_start = cfg_.endpoint.find('/', scheme_end + 3);
    base_ = cfg_.endpoint.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/v1/chat/completions" : cfg_.endpoint.substr(path_start);
  }

  std::string id() const override { return "remote:" + cfg_.model; }

  std::string respond(const PlannerInput& in) override {
    nlohmann::json body = {
        {"model", cfg_.model},
        {"temperature", cfg_.temperature},
        {"messages",
         {{{"role", "system"},
           {"content", "You are the tactical planner of a network defense system. " + in.tool_catalog}},
          {{"role", "user"}, {"content", in.observation}}}}};
    httplib::Client cli(base_);
    const auto secs = static_cast<time_t>(cfg_.timeout_seconds);
    const auto usecs = static_cast<time_t>((cfg_.timeout_seconds - static_cast<double>(secs)) * 1e6);
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    httplib::Headers headers;
    if (!cfg_.token.empty()) headers.emplace("Authorization", "Bearer " + cfg_.token);
    auto res = cli.Post(path_, headers, body.dump(), "application/json");
    if (!res) throw TransportError("request to " + cfg_.endpoint + " failed: " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300) {
      throw TransportError("endpoint returned HTTP " + std::to_string(res->status));
    }
    try {
      const auto j = nlohmann::json::parse(res->body);
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw TransportError(std::string("unreadable chat-completion envelope: ") + e.what());
    }
  }

 private:
  RemoteBackendConfig cfg_;
  std::string base_;
  std::string path_;
};

// ---------------------------------------------------------------------------
// Audit log
// ---------------------------------------------------------------------------

struct AuditEntry {
  std::size_t step = 0;
  std::string observation;
  std::string reasoning;
  std::string backend;
  bool fallback = false;
  std::optional<std::string> transport_error;
  std::optional<std::string> parse_error;
  std::vector<std::string> accepted;  // tactical actions, block syntax
  std::vector<Rejection> rejected;
  std::vector<std::string> executed;  // atomic actions actually emitted
  std::optional<std::string> instruction;
  bool invalid = false;

  bool operator==(const AuditEntry&) const = default;
};

inline nlohmann::json to_json(const AuditEntry& e) {
  nlohmann::json rej = nlohmann::json::array();
  for (const auto& r : e.rejected) rej.push_back({{"line", r.line}, {"reason", to_string(r.reason)}, {"detail", r.detail}});
  auto opt = [](const std::optional<std::string>& s) { return s ? nlohmann::json(*s) : nlohmann::json(nullptr); };
  return {{"step", e.step},
          {"observation", e.observation},
          {"reasoning", e.reasoning},
          {"backend", e.backend},
          {"fallback", e.fallback},
          {"transport_error", opt(e.transport_error)},
          {"parse_error", opt(e.parse_error)},
          {"accepted", e.accepted},
          {"rejected", rej},
          {"executed", e.executed},
          {"instruction", opt(e.instruction)},
          {"invalid", e.invalid}};
}

inline AuditEntry audit_from_json(const nlohmann::json& j) {
  AuditEntry e;
  auto opt = [&](const char* k) -> std::optional<std::string> {
    if (!j.contains(k) || j.at(k).is_null()) return std::nullopt;
    return j.at(k).get<std::string>();
  };
  e.step = j.at("step").get<std::size_t>();
  e.observation = j.at("observation").get<std::string>();
  e.reasoning = j.at("reasoning").get<std::string>();
  e.backend = j.at("backend").get<std::string>();
  e.fallback = j.at("fallback").get<bool>();
  e.transport_error = opt("transport_error");
  e.parse_error = opt("parse_error");
  e.accepted = j.at("accepted").get<std::vector<std::string>>();
  for (const auto& r : j.at("rejected")) {
    Rejection x{r.at("line").get<std::string>(), RejectReason::Malformed, r.value("detail", std::string())};
    const auto reason = r.at("reason").get<std::string>();
    for (int k = 0; k <= static_cast<int>(RejectReason::AgentUnavailable); ++k) {
      if (to_string(static_cast<RejectReason>(k)) == reason) x.reason = static_cast<RejectReason>(k);
    }
    e.rejected.push_back(std::move(x));
  }
  e.executed = j.at("executed").get<std::vector<std::string>>();
  e.instruction = opt("instruction");
  e.invalid = j.at("invalid").get<bool>();
  return e;
}

struct AuditReadError {
  std::size_t line_number = 0;  // 1-based
  std::string message;
};

struct AuditReadResult {
  std::vector<AuditEntry> entries;
  std::vector<AuditReadError> errors;
};

/// Parses JSONL audit text. Corrupt lines are reported by line number and
/// skipped; entries with index < `from` are dropped.
inline AuditReadResult read_audit(std::istream& in, std::size_t from = 0) {
  AuditReadResult r;
  std::size_t line_no = 0, index = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    try {
      auto e = audit_from_json(nlohmann::json::parse(line));
      if (index++ >= from) r.entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      r.errors.push_back({line_no, ex.what()});
    }
  }
  return r;
}

inline AuditReadResult read_audit_file(const std::filesystem::path& path, std::size_t from = 0) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open audit log " + path.string());
  return read_audit(in, from);
}

/// Append-only JSONL sink; no file means memory only.
class AuditLog {
 public:
  AuditLog() = default;
  explicit AuditLog(std::filesystem::path path) : path_(std::move(path)) {
    if (path_->has_parent_path()) std::filesystem::create_directories(path_->parent_path());
    out_.open(*path_, std::ios::app);
    if (!out_) throw LoadError("cannot open audit log " + path_->string());
  }

  void append(const AuditEntry& e) {
    entries_.push_back(e);
    if (out_.is_open()) {
      out_ << to_json(e).dump() << '\n';
      out_.flush();
    }
  }

  const std::vector<AuditEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::optional<std::filesystem::path> path_;
  std::ofstream out_;
  std::vector<AuditEntry> entries_;
};

// ---------------------------------------------------------------------------
// ReAct cycle
// ---------------------------------------------------------------------------

/// Pre-trained lower-layer agents by type.
using AgentRoster = std::map<AgentType, DefenseAgent>;

struct CycleConfig {
  std::size_t budget = 4;
  std::size_t window = kDefaultPerceptionWindow;
  RetrievalParams retrieval;
  EnvParams env;
};

struct CycleResult {
  std::vector<AtomicAction> actions;
  std::vector<TacticalAction> accepted;
  AuditEntry audit;
  std::string observation;
};

/// Chain predictions for subnets whose critical distance is within the
/// retrieval trigger.
inline std::vector<std::pair<SubnetId, ChainPrediction>> chain_predictions(const LongTermMemory& ltm,
                                                                           const std::vector<SubnetMetrics>& metrics,
                                                                           const RetrievalParams& params) {
  std::vector<std::pair<SubnetId, ChainPrediction>> out;
  for (const auto& m : metrics) {
    const AttackChain* current = ltm.latest_in(m.subnet);
    if (!current) continue;
    auto p = reactive_retrieve(ltm, *current, m.critical_distance, params);
    if (!p.empty()) out.emplace_back(m.subnet, std::move(p));
  }
  return out;
}

/// The atomic action an assigned agent emits on `subnet` (NoOp included).
inline AtomicAction agent_act(const DefenseAgent& agent, const GlobalState& state, SubnetId subnet,
                              const EnvParams& env) {
  const auto region = focus_region(state, subnet, agent.capacity);
  const auto obs = project_region(state, region, agent.type, agent.capacity, env);
  Rng unused(0);
  return select_action(agent, obs, 0.0, unused).action;
}

/// Observe, reason, act: renders the observation from metrics and memory,
/// asks the backend (falling back on transport failure), validates, and
/// expands assignments into agent actions.
inline CycleResult react_cycle(const GlobalState& state, const PerceptionReport& report, const ShortTermMemory& stm,
                               const LongTermMemory& ltm, PlannerBackend& backend, const AgentRoster& agents,
                               const CycleConfig& cfg, PlannerBackend* fallback = nullptr,
                               ProposalStats* stats = nullptr) {
  std::vector<std::string> names;
  for (const auto& s : state.graph->subnets()) names.push_back(s.name);
  const auto predictions = chain_predictions(ltm, report.per_subnet, cfg.retrieval);
  const std::string digest = memory_digest(stm, names, predictions);
  const auto rendered = render_observation(state, report.per_subnet, report.attack_entropy, cfg.window,
                                           digest.empty() ? std::nullopt : std::optional<std::string>(digest),
                                           state.human_instruction);

  PlannerInput input{rendered.rendered_text, tool_catalog(cfg.budget), cfg.budget, &state, &report.per_subnet};
  CycleResult out;
  out.observation = rendered.rendered_text;
  out.audit.step = state.time;
  out.audit.observation = rendered.rendered_text;
  out.audit.instruction = state.human_instruction;

  PlannerProposal proposal;
  try {
    proposal = backend.propose(input);
  } catch (const TransportError& e) {
    out.audit.transport_error = e.what();
    if (!fallback) throw;
    proposal = fallback->propose(input);
    out.audit.fallback = true;
  }
  out.audit.backend = proposal.backend_id;
  out.audit.reasoning = proposal.reasoning;
  out.audit.parse_error = proposal.parse_error;

  auto v = validate_proposal(proposal, state, cfg.budget, nullptr);
  for (const auto& a : v.accepted) {
    if (const auto* s = std::get_if<AssignAgent>(&a)) {
      if (!agents.count(s->agent_type)) {
        v.rejected.push_back({describe(a, names), RejectReason::AgentUnavailable,
                              "no " + to_string(s->agent_type) + " agent loaded"});
        continue;
      }
    }
    out.accepted.push_back(a);
  }
  v.invalid = proposal.parse_error.has_value() || !v.rejected.empty();
  if (stats) {
    ++stats->proposals;
    stats->invalid += v.invalid ? 1 : 0;
  }
  for (const auto& a : out.accepted) {
    out.audit.accepted.push_back(describe(a, names));
    if (const auto* e = std::get_if<ExecuteAction>(&a)) {
      out.actions.push_back(AtomicAction::on(e->operation, e->target));
    } else if (const auto* s = std::get_if<AssignAgent>(&a)) {
      const auto act = agent_act(agents.at(s->agent_type), state, s->subnet, cfg.env);
      if (act.operation != Operation::NoOp) out.actions.push_back(act);
    }
  }
  for (const auto& a : out.actions) out.audit.executed.push_back(a.str());
  out.audit.rejected = std::move(v.rejected);
  out.audit.invalid = v.invalid;
  return out;
}

}  // namespace cyberops
