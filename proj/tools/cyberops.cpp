// Command-line front end: train, run, eval, replay, serve.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "cyberops/gateway.hpp"
#include "cyberops/harness.hpp"
#include "cyberops/training.hpp"

namespace fs = std::filesystem;
using namespace cyberops;

namespace {

nlohmann::json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot open " + p.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(p.string() + " is not valid JSON: " + e.what());
  }
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw ConfigError("cannot write " + p.string());
  return out;
}

MicroScenarioParams training_params(const std::string& s) {
  if (s == "deployment") return MicroScenarioParams::deployment();
  if (s == "micro") return MicroScenarioParams{};
  return MicroScenarioParams::from_json(read_json_file(s));
}

std::vector<AgentType> agent_types(const std::string& s) {
  if (detail::lower(s) == "all") return {kAllAgentTypes.begin(), kAllAgentTypes.end()};
  const auto t = parse_agent_type(s);
  if (!t) throw ConfigError("unknown agent type '" + s + "' (fortify, recover, purge, block, all)");
  return {*t};
}

std::shared_ptr<PlannerBackend> make_backend(const std::string& name, const std::string& config_path) {
  if (name == "scripted") return nullptr;  // runner default
  if (name == "remote") {
    if (config_path.empty()) throw ConfigError("--backend remote needs --backend-config");
    return std::make_shared<RemoteBackend>(RemoteBackendConfig::from_json(read_json_file(config_path)));
  }
  throw ConfigError("unknown backend '" + name + "' (scripted, remote)");
}

struct TrainArgs {
  std::string agent = "block";
  std::string scenario = "deployment";
  std::uint64_t seed = 0;
  std::size_t episodes = TrainingHyperparams{}.episodes;
  std::string out;
  std::string curve;
};

int cmd_train(const TrainArgs& a) {
  const auto types = agent_types(a.agent);
  const auto params = training_params(a.scenario);
  TrainingHyperparams hp;
  hp.episodes = a.episodes;
  const bool many = types.size() > 1;
  for (AgentType t : types) {
    fs::path ckpt;
    if (many || a.out.empty()) {
      ckpt = agent_checkpoint_path(a.out.empty() ? default_agent_directory() : fs::path(a.out), t);
    } else {
      ckpt = a.out;
    }
    fs::path curve = (!many && !a.curve.empty()) ? fs::path(a.curve) : fs::path(ckpt).replace_extension(".csv");
    std::cerr << fmt::format("training {} for {} episodes (seed {})\n", to_string(t), hp.episodes, a.seed);
    const auto result = train_agent(t, training_triple(t, params), hp, a.seed);
    if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
    save_agent(result.agent, ckpt);
    auto out = open_out(curve);
    write_training_curve_csv(out, result);
    std::cout << fmt::format("{} -> {} ({} steps, curve {})\n", to_string(t), ckpt.string(), result.total_steps,
                             curve.string());
  }
  return 0;
}

struct RunArgs {
  std::string scenario = "sce1";
  std::string defense = "hierarchical";
  std::string backend = "scripted";
  std::string backend_config;
  std::size_t episodes = 1;
  std::uint64_t seed = 0;
  std::string out = "runs";
  std::string agents;
  std::string instruction;
};

int cmd_run(const RunArgs& a) {
  const auto scenario = load_scenario(a.scenario);
  DefenseConfig defense;
  defense.kind = parse_defense_kind(a.defense);
  if (defense.kind == DefenseKind::Hierarchical) {
    defense.agents = std::make_shared<const AgentRoster>(
        load_roster(a.agents.empty() ? default_agent_directory() : fs::path(a.agents)));
  }
  defense.backend = make_backend(a.backend, a.backend_config);
  const bool planner = defense.kind == DefenseKind::Hierarchical || defense.kind == DefenseKind::ScriptedOnly;
  const fs::path dir(a.out);
  fs::create_directories(dir);
  for (std::size_t e = 0; e < a.episodes; ++e) {
    const std::uint64_t seed = a.episodes == 1 ? a.seed : episode_seed(a.seed, 0, e);
    const std::string stem = fmt::format("{}-{}-{}", scenario.name, to_string(defense.kind), seed);
    RunOptions opts;
    const fs::path audit_path = dir / (stem + ".audit.jsonl");
    if (planner) {
      fs::remove(audit_path);
      opts.audit_path = audit_path;
    }
    EpisodeRunner runner(scenario, defense, seed, opts);
    if (!a.instruction.empty()) runner.set_instruction(a.instruction);
    const auto& rec = runner.run_to_end();
    auto out = open_out(dir / (stem + ".jsonl"));
    write_episode_jsonl(out, rec);
    std::cout << fmt::format("{} seed={} length={} reward={:.3f} healthy={:.4f} end={}\n", stem, seed, rec.length(),
                             rec.total_reward, mean_healthy_ratio(rec), to_string(rec.terminal_reason));
  }
  return 0;
}

struct EvalArgs {
  std::string experiment;
  std::string out = "eval";
  std::string agents;
};

int cmd_eval(const EvalArgs& a) {
  const auto j = read_json_file(a.experiment);
  auto spec = TransitionExperiment::from_json(j);
  std::vector<DefenseKind> kinds{spec.defense};
  if (j.contains("defenses")) {
    kinds.clear();
    for (const auto& d : j.at("defenses")) kinds.push_back(parse_defense_kind(d.get<std::string>()));
  }
  const fs::path dir(a.out);
  fs::create_directories(dir);
  nlohmann::json summary = nlohmann::json::array();
  for (DefenseKind k : kinds) {
    DefenseConfig defense;
    if (k == DefenseKind::Hierarchical) {
      defense.agents = std::make_shared<const AgentRoster>(
          load_roster(a.agents.empty() ? default_agent_directory() : fs::path(a.agents)));
    }
    spec.defense = k;
    const auto report = run_transition_experiment(spec, defense);
    auto csv = open_out(dir / (to_string(k) + ".csv"));
    write_transition_csv(csv, report);
    summary.push_back(transition_summary_json(report));
  }
  auto out = open_out(dir / "summary.json");
  out << summary.dump(2) << '\n';
  std::cout << summary.dump(2) << '\n';
  return 0;
}

void print_entry(const AuditEntry& e) {
  std::cout << fmt::format("== step {} [{}{}]\n", e.step, e.backend, e.fallback ? ", fallback" : "");
  if (e.instruction) std::cout << "instruction: " << *e.instruction << '\n';
  if (e.transport_error) std::cout << "transport error: " << *e.transport_error << '\n';
  if (e.parse_error) std::cout << "parse error: " << *e.parse_error << '\n';
  if (!e.reasoning.empty()) std::cout << e.reasoning << (e.reasoning.back() == '\n' ? "" : "\n");
  for (const auto& a : e.accepted) std::cout << "  accepted  " << a << '\n';
  for (const auto& r : e.rejected) std::cout << "  rejected  " << r.line << " (" << to_string(r.reason) << ")\n";
  for (const auto& x : e.executed) std::cout << "  executed  " << x << '\n';
}

int cmd_replay(const std::string& log, std::size_t from) {
  fs::path path(log);
  // An episode log points at its audit log by naming convention.
  if (path.extension() == ".jsonl" && path.stem().extension() != ".audit") {
    std::ifstream in(path);
    std::string first;
    if (in && std::getline(in, first)) {
      const auto j = nlohmann::json::parse(first, nullptr, false);
      if (j.is_object() && j.value("kind", "") == "episode") {
        path = path.parent_path() / (path.stem().string() + ".audit.jsonl");
        if (!fs::exists(path)) throw LoadError("episode log has no audit trail (" + path.string() + " not found)");
      }
    }
  }
  const auto result = read_audit_file(path, from);
  for (const auto& e : result.entries) print_entry(e);
  for (const auto& err : result.errors) std::cerr << fmt::format("line {}: {}\n", err.line_number, err.message);
  return result.errors.empty() ? 0 : 2;
}

Gateway* g_gateway = nullptr;

int cmd_serve(const std::string& config, const std::string& host, int port, const std::string& agents) {
  GatewayConfig cfg;
  if (!config.empty()) cfg = GatewayConfig::from_json(read_json_file(config));
  if (!host.empty()) cfg.host = host;
  if (port >= 0) cfg.port = port;
  if (!agents.empty()) cfg.agents_dir = agents;
  if (!cfg.agents_dir) cfg.agents_dir = default_agent_directory();
  Gateway gw(cfg);
  const int bound = gw.bind();
  std::cout << fmt::format("listening on {}:{}\n", cfg.host, bound) << std::flush;
  g_gateway = &gw;
  std::signal(SIGINT, [](int) {
    if (g_gateway) g_gateway->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_gateway) g_gateway->stop();
  });
  gw.listen();
  g_gateway = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical cyber defense simulator"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a tactical agent and write a checkpoint plus a CSV curve");
  train->add_option("--agent", ta.agent, "fortify, recover, purge, block or all")->capture_default_str();
  train->add_option("--scenario", ta.scenario, "deployment, micro, or a JSON file of training-net parameters")
      ->capture_default_str();
  train->add_option("--seed", ta.seed)->capture_default_str();
  train->add_option("--episodes", ta.episodes)->capture_default_str();
  train->add_option("--out", ta.out, "checkpoint path (directory with --agent all)");
  train->add_option("--curve", ta.curve, "CSV path; defaults next to the checkpoint");

  RunArgs ra;
  auto* run = app.add_subcommand("run", "Run episodes and write episode and audit JSONL");
  run->add_option("--scenario", ra.scenario, "preset name or JSON file")->capture_default_str();
  run->add_option("--defense", ra.defense, "hierarchical, random, greedy-isolate, scripted-only")
      ->capture_default_str();
  run->add_option("--backend", ra.backend, "scripted or remote")->capture_default_str();
  run->add_option("--backend-config", ra.backend_config, "JSON with endpoint, model, timeout_seconds");
  run->add_option("--episodes", ra.episodes)->capture_default_str();
  run->add_option("--seed", ra.seed)->capture_default_str();
  run->add_option("--out", ra.out)->capture_default_str();
  run->add_option("--agents", ra.agents, "checkpoint directory (default: $CYBEROPS_AGENT_DIR or the build tree)");
  run->add_option("--instruction", ra.instruction, "operator instruction active from the first step");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Run a scenario-transition experiment");
  eval->add_option("--experiment", ea.experiment, "JSON with phases, episodes_per_phase, defense(s), seed")
      ->required();
  eval->add_option("--out", ea.out)->capture_default_str();
  eval->add_option("--agents", ea.agents);

  std::string replay_log;
  std::size_t replay_from = 0;
  auto* replay = app.add_subcommand("replay", "Print the audit trail of a run");
  replay->add_option("--log", replay_log, "audit JSONL or episode JSONL")->required();
  replay->add_option("--from", replay_from, "first entry to print");

  std::string serve_config, serve_host, serve_agents;
  int serve_port = -1;
  auto* serve = app.add_subcommand("serve", "Start the HTTP session gateway");
  serve->add_option("--config", serve_config, "JSON with host, port, agents_dir, backend");
  serve->add_option("--host", serve_host);
  serve->add_option("--port", serve_port, "0 picks a free port");
  serve->add_option("--agents", serve_agents);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(ta);
    if (*run) return cmd_run(ra);
    if (*eval) return cmd_eval(ea);
    if (*replay) return cmd_replay(replay_log, replay_from);
    if (*serve) return cmd_serve(serve_config, serve_host, serve_port, serve_agents);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
