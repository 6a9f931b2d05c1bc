#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "json.hpp"

#include "cyberops/defense_env.hpp"
#include "cyberops/memory.hpp"
#include "cyberops/perception.hpp"
#include "cyberops/planner.hpp"
#include "cyberops/rl_agents.hpp"
#include "cyberops/scenario.hpp"

namespace cyberops {

enum class DefenseKind : std::uint8_t { Hierarchical, Random, GreedyIsolate, ScriptedOnly };

inline std::string to_string(DefenseKind d) {
  switch (d) {
    case DefenseKind::Hierarchical: return "hierarchical";
    case DefenseKind::Random: return "random";
    case DefenseKind::GreedyIsolate: return "greedy-isolate";
    case DefenseKind::ScriptedOnly: return "scripted-only";
  }
  return "random";
}

inline DefenseKind parse_defense_kind(const std::string& s) {
  const auto l = detail::lower(s);
  if (l == "hierarchical") return DefenseKind::Hierarchical;
  if (l == "random") return DefenseKind::Random;
  if (l == "greedy-isolate" || l == "greedy") return DefenseKind::GreedyIsolate;
  if (l == "scripted-only" || l == "scripted") return DefenseKind::ScriptedOnly;
  throw ConfigError("unknown defense '" + s + "' (hierarchical, random, greedy-isolate, scripted-only)");
}

// ---------------------------------------------------------------------------
// Agent checkpoints on disk
// ---------------------------------------------------------------------------

#ifndef CYBEROPS_DEFAULT_AGENT_DIR
#define CYBEROPS_DEFAULT_AGENT_DIR "agents"
#endif

/// CYBEROPS_AGENT_DIR overrides the compiled-in checkpoint directory.
inline std::filesystem::path default_agent_directory() {
  if (const char* env = std::getenv("CYBEROPS_AGENT_DIR"); env && *env) return env;
  return CYBEROPS_DEFAULT_AGENT_DIR;
}

inline std::filesystem::path agent_checkpoint_path(const std::filesystem::path& dir, AgentType t) {
  return dir / (detail::lower(to_string(t)) + ".agent");
}

/// Loads all four agent types from `dir`; a missing file is an error.
inline AgentRoster load_roster(const std::filesystem::path& dir) {
  AgentRoster roster;
  for (AgentType t : kAllAgentTypes) {
    const auto path = agent_checkpoint_path(dir, t);
    if (!std::filesystem::exists(path)) {
      throw LoadError("missing " + to_string(t) + " agent checkpoint: " + path.string());
    }
    auto agent = load_agent(path);
    if (agent.type != t) throw LoadError(path.string() + " holds a " + to_string(agent.type) + " agent");
    roster.emplace(t, std::move(agent));
  }
  return roster;
}

inline std::uint64_t roster_checksum(const AgentRoster& roster) {
  std::uint64_t h = 0;
  for (const auto& [t, a] : roster) h = mix_seed(h ^ a.network.checksum(), static_cast<std::uint64_t>(t));
  return h;
}

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

struct StepRecord {
  std::size_t step = 0;  // time before the transition
  std::vector<std::string> actions;
  double reward = 0.0;
  RewardComponents components;
  std::vector<AttackEvent> events;
  std::size_t healthy = 0;  // after the transition
  std::size_t compromised = 0;
  std::size_t isolated = 0;
  std::size_t warnings = 0;
};

struct EpisodeRecord {
  std::string scenario;
  std::string defense;
  std::uint64_t seed = 0;
  std::size_t node_count = 0;
  std::vector<StepRecord> steps;
  double total_reward = 0.0;  // accumulated by the runner in step order
  TerminalReason terminal_reason = TerminalReason::None;
  double initial_mean_vulnerability = 0.0;
  double final_mean_vulnerability = 0.0;
  ProposalStats proposals;

  std::size_t length() const { return steps.size(); }
};

/// Nodes neither compromised nor isolated over |V|.
inline double healthy_ratio(const GlobalState& s) {
  if (s.size() == 0) return 1.0;
  return static_cast<double>(count_healthy_available(s)) / static_cast<double>(s.size());
}

inline double healthy_ratio(const StepRecord& r, std::size_t node_count) {
  if (node_count == 0) return 1.0;
  return static_cast<double>(r.healthy) / static_cast<double>(node_count);
}

/// Mean over the episode's steps; 1.0 for an empty record.
inline double mean_healthy_ratio(const EpisodeRecord& rec) {
  if (rec.steps.empty()) return 1.0;
  double s = 0.0;
  for (const auto& st : rec.steps) s += healthy_ratio(st, rec.node_count);
  return s / static_cast<double>(rec.steps.size());
}

inline constexpr std::size_t kJumpstartEpisodes = 10;

/// Mean cumulative reward over the first 10 episodes after a switch.
inline double jumpstart(std::span<const double> episode_rewards, std::size_t n = kJumpstartEpisodes) {
  if (episode_rewards.size() < n) {
    throw InsufficientDataError("jumpstart needs " + std::to_string(n) + " episodes, got " +
                                std::to_string(episode_rewards.size()));
  }
  return std::accumulate(episode_rewards.begin(), episode_rewards.begin() + static_cast<std::ptrdiff_t>(n), 0.0) /
         static_cast<double>(n);
}

inline double jumpstart(const std::vector<EpisodeRecord>& records, std::size_t n = kJumpstartEpisodes) {
  std::vector<double> r;
  for (const auto& e : records) r.push_back(e.total_reward);
  return jumpstart(r, n);
}

inline constexpr std::size_t kRewardCvWindow = 30;

/// Population standard deviation over |mean| for rewards[start, start+window).
inline double reward_cv(std::span<const double> rewards, std::size_t window = kRewardCvWindow, std::size_t start = 0) {
  if (window == 0 || start + window > rewards.size()) {
    throw InsufficientDataError("reward_cv needs " + std::to_string(window) + " rewards from step " +
                                std::to_string(start) + ", have " + std::to_string(rewards.size()));
  }
  const auto w = rewards.subspan(start, window);
  const double mean = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(window);
  if (mean == 0.0) throw DomainError("coefficient of variation undefined for zero-mean rewards");
  double var = 0.0;
  for (double x : w) var += (x - mean) * (x - mean);
  return std::sqrt(var / static_cast<double>(window)) / std::abs(mean);
}

inline double end_vulnerability(const EpisodeRecord& rec) { return rec.final_mean_vulnerability; }

inline nlohmann::json to_json(const AttackEvent& e) {
  return {{"step", e.step},
          {"attacker", e.attacker},
          {"source", e.source ? nlohmann::json(e.source->value) : nlohmann::json(nullptr)},
          {"target", e.target.value},
          {"success", e.success}};
}

inline nlohmann::json to_json(const StepRecord& s, std::size_t node_count) {
  nlohmann::json ev = nlohmann::json::array();
  for (const auto& e : s.events) ev.push_back(to_json(e));
  return {{"kind", "step"},
          {"step", s.step},
          {"actions", s.actions},
          {"reward", s.reward},
          {"asset", s.components.asset},
          {"security", s.components.security},
          {"cost", s.components.cost},
          {"events", ev},
          {"healthy", s.healthy},
          {"compromised", s.compromised},
          {"isolated", s.isolated},
          {"healthy_ratio", healthy_ratio(s, node_count)},
          {"warnings", s.warnings}};
}

/// Header line, one line per step, then a summary line.
inline void write_episode_jsonl(std::ostream& os, const EpisodeRecord& r) {
  os << nlohmann::json{{"kind", "episode"},
                       {"scenario", r.scenario},
                       {"defense", r.defense},
                       {"seed", r.seed},
                       {"node_count", r.node_count},
                       {"initial_mean_vulnerability", r.initial_mean_vulnerability}}
            .dump()
     << '\n';
  for (const auto& s : r.steps) os << to_json(s, r.node_count).dump() << '\n';
  os << nlohmann::json{{"kind", "summary"},
                       {"length", r.length()},
                       {"total_reward", r.total_reward},
                       {"terminal_reason", to_string(r.terminal_reason)},
                       {"mean_healthy_ratio", mean_healthy_ratio(r)},
                       {"end_vulnerability", r.final_mean_vulnerability},
                       {"proposals", r.proposals.proposals},
                       {"invalid_proposals", r.proposals.invalid}}
            .dump()
     << '\n';
}

// ---------------------------------------------------------------------------
// Episode runner
// ---------------------------------------------------------------------------

struct DefenseConfig {
  DefenseKind kind = DefenseKind::Random;
  std::shared_ptr<const AgentRoster> agents;        // hierarchical only
  std::shared_ptr<PlannerBackend> backend;          // planner defenses; scripted when null
  std::shared_ptr<PlannerBackend> fallback;         // used on transport errors
  CycleConfig cycle;
};

struct RunOptions {
  std::optional<PerturbationConfig> perturbation;
  std::size_t perturb_every = 0;  // steps between perturbations; 0 disables
  std::optional<std::filesystem::path> audit_path;
};

/// Stepwise episode driver shared by the batch runner and the gateway.
class EpisodeRunner {
 public:
  EpisodeRunner(const ScenarioConfig& scenario, DefenseConfig defense, std::uint64_t seed, RunOptions opts = {})
      : scenario_(scenario),
        defense_(std::move(defense)),
        seed_(seed),
        opts_(std::move(opts)),
        env_rng_(mix_seed(seed, 11)),
        defense_rng_(mix_seed(seed, 12)),
        perturb_rng_(mix_seed(seed, 13)),
        audit_(opts_.audit_path ? AuditLog(*opts_.audit_path) : AuditLog()) {
    if (opts_.perturbation) opts_.perturbation->validate();
    if (defense_.kind == DefenseKind::Hierarchical) {
      if (!defense_.agents) throw LoadError("hierarchical defense needs loaded agent checkpoints");
      for (AgentType t : kAllAgentTypes) {
        if (!defense_.agents->count(t)) throw LoadError("hierarchical defense is missing the " + to_string(t) + " agent");
      }
    }
    if (defense_.kind == DefenseKind::Hierarchical || defense_.kind == DefenseKind::ScriptedOnly) {
      const bool direct = defense_.kind == DefenseKind::ScriptedOnly;
      if (!defense_.backend || direct) {
        defense_.backend = std::make_shared<ScriptedBackend>(ScriptedRules{defense_.cycle.retrieval.theta, 0, direct});
      }
      if (!defense_.fallback) {
        defense_.fallback = std::make_shared<ScriptedBackend>(ScriptedRules{defense_.cycle.retrieval.theta, 0, direct});
      }
    }
    defense_.cycle.env = scenario_.env;
    if (defense_.cycle.budget > scenario_.env.action_budget) defense_.cycle.budget = scenario_.env.action_budget;
    state_ = build_scenario(scenario_, seed);
    attackers_ = make_attackers(scenario_.attack.attacker_count, scenario_.attack.skill, scenario_.attack.policy);
    record_.scenario = scenario_.name;
    record_.defense = to_string(defense_.kind);
    record_.seed = seed;
    record_.node_count = state_.size();
    record_.initial_mean_vulnerability = mean_vulnerability(state_);
    record_.final_mean_vulnerability = record_.initial_mean_vulnerability;
    metrics_ = compute_metrics(state_, events_, defense_.cycle.window);
  }

  bool done() const { return done_; }
  const GlobalState& state() const { return state_; }
  const EpisodeRecord& record() const { return record_; }
  const AuditLog& audit() const { return audit_; }
  const std::vector<SubnetMetrics>& metrics() const { return metrics_; }
  const LongTermMemory& ltm() const { return ltm_; }
  const ScenarioConfig& scenario() const { return scenario_; }
  const std::string& last_observation() const { return last_observation_; }

  /// Replaces the pending operator instruction (nullopt clears it). It is
  /// read by the next decision cycle and persists until changed.
  void set_instruction(std::optional<std::string> text) {
    if (text && text->empty()) text.reset();
    state_.human_instruction = std::move(text);
  }

  /// Advances one step; no-op once the episode is over.
  const StepRecord& step() {
    if (done_) throw DomainError("episode already finished");
    std::vector<AtomicAction> actions = decide();

    auto out = env_step(state_, actions, attackers_, scenario_.weights, scenario_.env, env_rng_);
    for (const auto& e : out.events) {
      if (e.success) ltm_.record(e, *state_.graph);
    }
    events_.insert(events_.end(), out.events.begin(), out.events.end());
    trim_events(out.next_state.time);

    StepRecord rec;
    rec.step = state_.time;
    for (const auto& a : actions) rec.actions.push_back(a.str());
    rec.reward = out.reward;
    rec.components = out.components;
    rec.events = out.events;
    rec.warnings = out.warnings;
    out.next_state.human_instruction = state_.human_instruction;
    state_ = std::move(out.next_state);

    if (opts_.perturbation && opts_.perturb_every > 0 && !out.terminal && state_.time % opts_.perturb_every == 0) {
      state_ = perturb_structure(state_, *opts_.perturbation, perturb_rng_);
    }
    rec.healthy = count_healthy_available(state_);
    for (const auto& n : state_.nodes) {
      rec.compromised += n.compromised() ? 1 : 0;
      rec.isolated += n.isolated ? 1 : 0;
    }
    if (pending_stm_) stm_ = stm_update(stm_, std::move(*pending_stm_), last_observation_, state_);
    pending_stm_.reset();

    const auto previous = metrics_;
    metrics_ = compute_metrics(state_, events_, defense_.cycle.window, &previous);
    record_.total_reward += rec.reward;
    record_.final_mean_vulnerability = mean_vulnerability(state_);
    record_.steps.push_back(std::move(rec));
    if (out.terminal) {
      done_ = true;
      record_.terminal_reason = out.terminal_reason;
    }
    return record_.steps.back();
  }

  const EpisodeRecord& run_to_end() {
    while (!done_) step();
    return record_;
  }

 private:
  std::vector<AtomicAction> decide() {
    const std::size_t k = defense_.cycle.budget;
    switch (defense_.kind) {
      case DefenseKind::Random: {
        std::vector<AtomicAction> out;
        static constexpr Operation ops[] = {Operation::Reset, Operation::Patch, Operation::Isolate, Operation::Restore};
        for (std::size_t i = 0; i < k; ++i) {
          const std::size_t pick = uniform_index(defense_rng_, 4 * state_.size() + 1);
          if (pick == 4 * state_.size()) continue;
          out.push_back(AtomicAction::on(ops[pick % 4], node_id(pick / 4)));
        }
        return out;
      }
      case DefenseKind::GreedyIsolate: {
        std::vector<std::pair<HopDistance, NodeId>> exposed;
        for (std::size_t i = 0; i < state_.size(); ++i) {
          const auto& n = state_.nodes[i];
          if (n.compromised() && !n.isolated) exposed.emplace_back(shortest_distance_to_hvn(state_, node_id(i)), node_id(i));
        }
        std::sort(exposed.begin(), exposed.end());
        std::vector<AtomicAction> out;
        for (std::size_t i = 0; i < exposed.size() && i < k; ++i) out.push_back(AtomicAction::on(Operation::Isolate, exposed[i].second));
        return out;
      }
      case DefenseKind::Hierarchical:
      case DefenseKind::ScriptedOnly: {
        static const AgentRoster kNoAgents;
        PerceptionReport report;
        report.per_subnet = metrics_;
        report.attack_entropy = attack_entropy(events_, defense_.cycle.window, state_.time, *state_.graph);
        const AgentRoster& roster = defense_.agents ? *defense_.agents : kNoAgents;
        auto cycle = react_cycle(state_, report, stm_, ltm_, *defense_.backend, roster, defense_.cycle,
                                 defense_.fallback.get(), &record_.proposals);
        audit_.append(cycle.audit);
        last_observation_ = cycle.observation;
        pending_stm_ = std::move(cycle.accepted);
        return std::move(cycle.actions);
      }
    }
    return {};
  }

  // Perception only looks back `window` steps.
  void trim_events(std::size_t now) {
    const std::size_t w = defense_.cycle.window;
    std::erase_if(events_, [&](const AttackEvent& e) { return e.step + w < now; });
  }

  ScenarioConfig scenario_;
  DefenseConfig defense_;
  std::uint64_t seed_;
  RunOptions opts_;
  Rng env_rng_, defense_rng_, perturb_rng_;
  AuditLog audit_;
  GlobalState state_;
  std::vector<Attacker> attackers_;
  std::vector<AttackEvent> events_;
  std::vector<SubnetMetrics> metrics_;
  ShortTermMemory stm_;
  LongTermMemory ltm_;
  std::optional<std::vector<TacticalAction>> pending_stm_;
  std::string last_observation_;
  EpisodeRecord record_;
  bool done_ = false;
};

inline EpisodeRecord run_episode(const ScenarioConfig& scenario, const DefenseConfig& defense, std::uint64_t seed,
                                 const RunOptions& opts = {}) {
  EpisodeRunner runner(scenario, defense, seed, opts);
  return runner.run_to_end();
}

// ---------------------------------------------------------------------------
// Scenario transitions
// ---------------------------------------------------------------------------

struct TransitionExperiment {
  std::vector<std::string> phases;  // scenario names or paths
  std::size_t episodes_per_phase = 30;
  DefenseKind defense = DefenseKind::Hierarchical;
  std::uint64_t seed = 0;

  static TransitionExperiment from_json(const nlohmann::json& j) {
    TransitionExperiment t;
    try {
      t.phases = j.at("phases").get<std::vector<std::string>>();
      t.episodes_per_phase = j.value("episodes_per_phase", t.episodes_per_phase);
      t.defense = parse_defense_kind(j.value("defense", std::string("hierarchical")));
      t.seed = j.value("seed", std::uint64_t{0});
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("invalid transition experiment: ") + e.what());
    }
    if (t.phases.empty()) throw ConfigError("transition experiment has no phases");
    return t;
  }
};

/// Seed of episode `e` in phase `p`; identical across defenses so arms pair up.
inline std::uint64_t episode_seed(std::uint64_t base, std::size_t phase, std::size_t episode) {
  return mix_seed(mix_seed(base, phase), episode);
}

struct PhaseReport {
  std::string scenario;
  std::vector<EpisodeRecord> episodes;
  double mean_reward = 0.0;
  std::optional<double> jumpstart;
  double mean_healthy_ratio = 0.0;
  double mean_length = 0.0;
  double mean_end_vulnerability = 0.0;
  std::uint64_t agents_before = 0;
  std::uint64_t agents_after = 0;
};

struct TransitionReport {
  std::string defense;
  std::vector<PhaseReport> phases;

  bool agents_unchanged() const {
    for (const auto& p : phases) {
      if (p.agents_before != p.agents_after) return false;
    }
    for (std::size_t i = 1; i < phases.size(); ++i) {
      if (phases[i].agents_before != phases[0].agents_before) return false;
    }
    return true;
  }

  double mean_healthy_ratio() const {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& p : phases) {
      for (const auto& e : p.episodes) {
        s += cyberops::mean_healthy_ratio(e);
        ++n;
      }
    }
    return n ? s / static_cast<double>(n) : 1.0;
  }
};

/// Runs the phases in order with the same (frozen) defense. Agent checksums
/// are taken before and after every phase.
inline TransitionReport run_transition_experiment(const TransitionExperiment& spec, DefenseConfig defense) {
  TransitionReport report;
  report.defense = to_string(spec.defense);
  defense.kind = spec.defense;
  for (std::size_t p = 0; p < spec.phases.size(); ++p) {
    const auto scenario = load_scenario(spec.phases[p]);
    PhaseReport phase;
    phase.scenario = scenario.name;
    phase.agents_before = defense.agents ? roster_checksum(*defense.agents) : 0;
    for (std::size_t e = 0; e < spec.episodes_per_phase; ++e) {
      phase.episodes.push_back(run_episode(scenario, defense, episode_seed(spec.seed, p, e)));
    }
    phase.agents_after = defense.agents ? roster_checksum(*defense.agents) : 0;
    const double n = static_cast<double>(std::max<std::size_t>(phase.episodes.size(), 1));
    for (const auto& e : phase.episodes) {
      phase.mean_reward += e.total_reward / n;
      phase.mean_healthy_ratio += mean_healthy_ratio(e) / n;
      phase.mean_length += static_cast<double>(e.length()) / n;
      phase.mean_end_vulnerability += e.final_mean_vulnerability / n;
    }
    if (phase.episodes.size() >= kJumpstartEpisodes) phase.jumpstart = jumpstart(phase.episodes);
    report.phases.push_back(std::move(phase));
  }
  return report;
}

inline void write_transition_csv(std::ostream& os, const TransitionReport& r) {
  os << "phase,scenario,episode,seed,total_reward,length,mean_healthy_ratio,end_vulnerability,terminal_reason\n";
  for (std::size_t p = 0; p < r.phases.size(); ++p) {
    for (std::size_t e = 0; e < r.phases[p].episodes.size(); ++e) {
      const auto& ep = r.phases[p].episodes[e];
      os << fmt::format("{},{},{},{},{:.6f},{},{:.6f},{:.6f},{}\n", p, r.phases[p].scenario, e, ep.seed, ep.total_reward,
                        ep.length(), mean_healthy_ratio(ep), ep.final_mean_vulnerability, to_string(ep.terminal_reason));
    }
  }
}

inline nlohmann::json transition_summary_json(const TransitionReport& r) {
  nlohmann::json phases = nlohmann::json::array();
  for (const auto& p : r.phases) {
    phases.push_back({{"scenario", p.scenario},
                      {"episodes", p.episodes.size()},
                      {"mean_reward", p.mean_reward},
                      {"jumpstart", p.jumpstart ? nlohmann::json(*p.jumpstart) : nlohmann::json(nullptr)},
                      {"mean_healthy_ratio", p.mean_healthy_ratio},
                      {"mean_episode_length", p.mean_length},
                      {"mean_end_vulnerability", p.mean_end_vulnerability},
                      {"agent_checksum_before", fmt::format("{:016x}", p.agents_before)},
                      {"agent_checksum_after", fmt::format("{:016x}", p.agents_after)}});
  }
  return {{"defense", r.defense},
          {"phases", phases},
          {"mean_healthy_ratio", r.mean_healthy_ratio()},
          {"agents_unchanged", r.agents_unchanged()}};
}

}  // namespace cyberops
