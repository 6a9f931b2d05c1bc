// One PASS/FAIL line per acceptance criterion. Exit status is nonzero when
// any criterion fails. Tolerances and budgets are pinned below.

#include <boost/math/distributions/students_t.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <tuple>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "cyberops/gateway.hpp"
#include "cyberops/training.hpp"

using namespace cyberops;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

constexpr double kProbabilityTol = 1e-12;
constexpr double kMonteCarloTol = 0.01;
constexpr double kProbabilityBudgetS = 5.0;
constexpr double kRewardTol = 1e-12;
constexpr double kEntropyTol = 1e-9;
constexpr double kLearningAlpha = 0.01;
constexpr double kLearningBudgetS = 600.0;
constexpr double kGradientTol = 1e-4;
constexpr double kTransitionBudgetS = 900.0;

constexpr std::size_t kAgentTrainingEpisodes = 500;
constexpr std::uint64_t kAgentTrainingSeed = 17;
constexpr std::uint64_t kTransitionSeed = 5;
constexpr std::size_t kEpisodesPerPhase = 30;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// ---------------------------------------------------------------------------

Outcome attack_probability() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (int i = 0; i <= 100; ++i) {
    for (int j = 0; j <= 100; ++j) {
      const double rs = i / 100.0, v = j / 100.0;
      const double expected = rs == 0.0 ? 0.0 : std::min(rs * rs / (rs + (1.0 - v)), 1.0);
      worst = std::max(worst, std::abs(attack_success_probability(rs, v) - expected));
    }
  }
  // Monte Carlo through the attacker step itself: one entry node at v=0.5,
  // one attacker of skill 0.5.
  GlobalState s;
  s.graph = std::make_shared<const NetworkGraph>(std::vector<SubnetId>{subnet_id(0)}, std::vector<std::string>{"A"},
                                                 std::vector<Edge>{});
  s.nodes.resize(1);
  s.nodes[0].vulnerability = 0.5;
  s.nodes[0].is_entry = true;
  Rng rng(2024);
  const std::size_t trials = 100'000;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < trials; ++i) {
    auto attackers = make_attackers(1, 0.5, AttackPolicy::Recon);
    const auto [next, events] = attackers_step(s, attackers, rng);
    hits += next.nodes[0].compromised() ? 1 : 0;
  }
  const double freq = static_cast<double>(hits) / static_cast<double>(trials);
  const double secs = seconds_since(t0);
  const bool pass = worst <= kProbabilityTol && std::abs(freq - 0.25) <= kMonteCarloTol && secs < kProbabilityBudgetS;
  return {pass, fmt::format("grid max err {:.2e}, MC freq {:.4f} over {} trials, {:.2f}s", worst, freq, trials, secs)};
}

// ---------------------------------------------------------------------------

GlobalState random_state(Rng& rng, std::size_t n, double density, std::size_t subnets) {
  std::vector<SubnetId> part(n);
  for (std::size_t i = 0; i < n; ++i) part[i] = subnet_id(i % subnets);
  std::vector<std::string> names;
  for (std::size_t k = 0; k < subnets; ++k) names.push_back("S" + std::to_string(k));
  std::vector<Edge> edges;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      if (bernoulli(rng, density)) edges.emplace_back(node_id(a), node_id(b));
  GlobalState s;
  s.graph = std::make_shared<const NetworkGraph>(part, names, edges);
  s.nodes.resize(n);
  for (auto& node : s.nodes) node.vulnerability = uniform_real(rng, 0.1, 0.9);
  return s;
}

Outcome reward_decomposition() {
  Rng rng(99);
  RewardWeights w;
  EnvParams p;
  double worst = 0.0;
  std::size_t sign_violations = 0;
  for (int i = 0; i < 1000; ++i) {
    auto s = random_state(rng, 3 + uniform_index(rng, 15), 0.3, 2);
    for (auto& n : s.nodes) {
      n.health = bernoulli(rng, 0.2) ? Health::Compromised : Health::Healthy;
      n.isolated = bernoulli(rng, 0.1);
      n.is_entry = bernoulli(rng, 0.2);
      n.is_hvn = bernoulli(rng, 0.15);
    }
    std::vector<AtomicAction> actions;
    for (std::size_t j = 0, k = uniform_index(rng, p.action_budget + 1); j < k; ++j) {
      const auto op = kAllOperations[uniform_index(rng, kAllOperations.size())];
      actions.push_back(op == Operation::NoOp ? AtomicAction::noop()
                                              : AtomicAction::on(op, node_id(uniform_index(rng, s.size()))));
    }
    auto attackers = make_attackers(1 + uniform_index(rng, 3), 0.7, AttackPolicy::Recon);
    const auto out = env_step(s, actions, attackers, w, p, rng);
    const auto& c = out.components;
    worst = std::max({worst, std::abs(out.reward - (c.asset + c.security + c.cost)),
                      std::abs(c.asset - asset_reward(out.next_state, w)),
                      std::abs(c.security - security_reward(s, out.next_state, w)),
                      std::abs(c.cost - cost_reward(actions, w))});
    sign_violations += (c.asset > 0 || c.security > 0 || c.cost > 0) ? 1 : 0;
  }
  // Asset term against the number of compromised HVNs, 0..5.
  auto base = build_scenario(load_scenario("sce7"), 1);
  std::vector<std::size_t> hvns;
  for (std::size_t i = 0; i < base.size() && hvns.size() < 5; ++i)
    if (base.nodes[i].is_hvn) hvns.push_back(i);
  double lin_err = hvns.size() == 5 ? 0.0 : 1.0;
  for (std::size_t k = 0; k <= 5 && hvns.size() == 5; ++k) {
    auto t = base;
    for (std::size_t i = 0; i < k; ++i) t.nodes[hvns[i]].health = Health::Compromised;
    lin_err = std::max(lin_err, std::abs(asset_reward(t, w) + w.lambda_hva * static_cast<double>(k)));
  }
  const bool pass = worst <= kRewardTol && sign_violations == 0 && lin_err <= kRewardTol;
  return {pass, fmt::format("1000 transitions max err {:.2e}, sign violations {}, asset linearity err {:.2e}", worst,
                            sign_violations, lin_err)};
}

// ---------------------------------------------------------------------------

Outcome perception_oracles() {
  // Entropy.
  double entropy_err = 0.0;
  Rng rng(1);
  for (std::size_t k = 1; k <= 6; ++k) {
    auto s = random_state(rng, 6 * k, 0.2, k);
    std::vector<AttackEvent> conc, uni;
    for (int r = 0; r < 12; ++r) conc.push_back({4, 0, std::nullopt, s.graph->subnets()[0].nodes[0], true});
    for (const auto& sub : s.graph->subnets())
      for (std::size_t r = 0; r < 3; ++r) uni.push_back({4, 0, std::nullopt, sub.nodes[r], true});
    entropy_err = std::max(entropy_err, std::abs(attack_entropy(conc, 5, 5, *s.graph)));
    entropy_err = std::max(entropy_err, std::abs(attack_entropy(uni, 5, 5, *s.graph) - std::log(static_cast<double>(k))));
  }

  // Connectivity: every labelled graph on up to 6 nodes.
  std::size_t conn_cases = 0, conn_bad = 0;
  for (std::size_t n = 1; n <= 6; ++n) {
    std::vector<Edge> all;
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b) all.emplace_back(node_id(a), node_id(b));
    for (std::size_t m = 0; m < (std::size_t{1} << all.size()); ++m) {
      std::vector<Edge> edges;
      for (std::size_t e = 0; e < all.size(); ++e)
        if (m & (std::size_t{1} << e)) edges.push_back(all[e]);
      GlobalState s;
      s.graph = std::make_shared<const NetworkGraph>(std::vector<SubnetId>(n, subnet_id(0)),
                                                     std::vector<std::string>{"A"}, edges);
      s.nodes.resize(n);
      const double expected = n < 2 ? 1.0 : static_cast<double>(edges.size()) / (n * (n - 1) / 2.0);
      ++conn_cases;
      conn_bad += connectivity(s, subnet_id(0)) == expected ? 0 : 1;
    }
  }

  // Critical distance against BFS from each compromised node.
  std::size_t cd_bad = 0;
  Rng g(42);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + uniform_index(g, 11);
    auto s = random_state(g, n, 0.25, 1);
    for (std::size_t h = 0, c = 1 + uniform_index(g, 2); h < c; ++h) s.nodes[uniform_index(g, n)].is_hvn = true;
    for (auto& node : s.nodes) {
      node.health = bernoulli(g, 0.3) ? Health::Compromised : Health::Healthy;
      node.isolated = bernoulli(g, 0.15);
    }
    std::optional<std::size_t> best;
    for (std::size_t c = 0; c < n; ++c) {
      if (!s.nodes[c].compromised()) continue;
      if (s.nodes[c].is_hvn) {
        best = 0;
        continue;
      }
      if (s.nodes[c].isolated) continue;
      std::vector<std::size_t> dist(n, SIZE_MAX);
      std::vector<std::size_t> queue{c};
      dist[c] = 0;
      for (std::size_t head = 0; head < queue.size(); ++head) {
        const std::size_t u = queue[head];
        if (s.nodes[u].is_hvn) {
          if (!best || dist[u] < *best) best = dist[u];
          break;
        }
        for (NodeId v : s.graph->adjacent(node_id(u))) {
          if (s.nodes[v.index()].isolated || dist[v.index()] != SIZE_MAX) continue;
          dist[v.index()] = dist[u] + 1;
          queue.push_back(v.index());
        }
      }
    }
    const auto expected = best ? HopDistance::hops(*best) : HopDistance::unreachable();
    cd_bad += critical_distance(s, subnet_id(0)) == expected ? 0 : 1;
  }
  const bool pass = entropy_err <= kEntropyTol && conn_bad == 0 && cd_bad == 0;
  return {pass, fmt::format("entropy max err {:.1e}; connectivity {}/{} graphs exact; critical distance {}/200 match",
                            entropy_err, conn_cases - conn_bad, conn_cases, 200 - cd_bad)};
}

// ---------------------------------------------------------------------------

struct OracleChain {
  std::uint32_t id;
  SubnetId subnet;
  std::vector<std::pair<NodeId, std::size_t>> hops;
  std::size_t shared;
};

// Attach to the most recent chain ending at the source, else fork from the
// most recent chain holding it mid-way, else open a new chain.
std::vector<OracleChain> oracle_group(const std::vector<AttackEvent>& events, const NetworkGraph& g) {
  std::vector<OracleChain> chains;
  std::uint32_t next = 0;
  for (const auto& e : events) {
    const SubnetId sub = g.subnet_of(e.target);
    std::optional<std::size_t> tail, mid;
    std::size_t mid_at = 0;
    auto key = [&](std::size_t c) { return std::make_tuple(chains[c].hops.back().second, chains[c].id); };
    if (e.source) {
      for (std::size_t c = 0; c < chains.size(); ++c) {
        if (chains[c].subnet != sub) continue;
        std::optional<std::size_t> at;
        for (std::size_t i = 0; i < chains[c].hops.size(); ++i)
          if (chains[c].hops[i].first == *e.source && chains[c].hops[i].second < e.step) at = i;
        if (!at) continue;
        if (*at + 1 == chains[c].hops.size()) {
          if (!tail || key(c) > key(*tail)) tail = c;
        } else if (!mid || key(c) > key(*mid)) {
          mid = c;
          mid_at = *at;
        }
      }
    }
    if (tail) {
      chains[*tail].hops.emplace_back(e.target, e.step);
    } else if (mid) {
      OracleChain f{next++, sub, {}, mid_at + 1};
      f.hops.assign(chains[*mid].hops.begin(), chains[*mid].hops.begin() + static_cast<std::ptrdiff_t>(mid_at + 1));
      f.hops.emplace_back(e.target, e.step);
      chains.push_back(std::move(f));
    } else {
      chains.push_back({next++, sub, {{e.target, e.step}}, 0});
    }
  }
  return chains;
}

Outcome memory_criteria() {
  // 50-step log from six attackers with periodic resets.
  const auto s0 = build_scenario(load_scenario("sce4"), 3);
  auto attackers = make_attackers(6, 0.8, AttackPolicy::Recon);
  Rng rng(1);
  GlobalState s = s0;
  std::vector<AttackEvent> log;
  EnvParams p;
  p.terminate_on_hvn = false;
  p.max_steps = 51;
  for (std::size_t t = 0; t < 50; ++t) {
    std::vector<AtomicAction> resets;
    if (t % 7 == 6) {
      for (std::size_t i = 0; i < s.size() && resets.size() < 4; ++i)
        if (s.nodes[i].compromised() && !s.nodes[i].is_hvn && bernoulli(rng, 0.3))
          resets.push_back(AtomicAction::on(Operation::Reset, node_id(i)));
    }
    auto o = env_step(s, resets, attackers, {}, p, rng);
    for (const auto& e : o.events)
      if (e.success) log.push_back(e);
    s = std::move(o.next_state);
  }
  LongTermMemory ltm;
  for (const auto& e : log) ltm.record(e, *s0.graph);
  const auto oracle = oracle_group(log, *s0.graph);
  bool grouping = ltm.chains().size() == oracle.size() && ltm.total_owned_hops() == log.size();
  for (std::size_t c = 0; grouping && c < oracle.size(); ++c) {
    const auto& got = ltm.chains()[c];
    grouping = got.id == oracle[c].id && got.subnet == oracle[c].subnet && got.shared_prefix == oracle[c].shared &&
               got.hops.size() == oracle[c].hops.size();
    for (std::size_t i = 0; grouping && i < got.hops.size(); ++i)
      grouping = got.hops[i].target == oracle[c].hops[i].first && got.hops[i].time == oracle[c].hops[i].second;
  }

  // Stored chain 1-2-3-4-5, current chain 1-2.
  const auto line = build_scenario(load_scenario("sce1"), 1);
  LongTermMemory mem;
  mem.record({0, 0, std::nullopt, node_id(1), true}, *line.graph);
  for (std::uint32_t i = 2; i <= 5; ++i) mem.record({i - 1, 0, NodeId{i - 1}, node_id(i), true}, *line.graph);
  mem.record({10, 1, std::nullopt, node_id(1), true}, *line.graph);
  mem.record({11, 1, node_id(1), node_id(2), true}, *line.graph);
  const AttackChain* current = mem.latest_in(subnet_id(0));
  bool boundary = current != nullptr;
  for (std::size_t theta : {2u, 3u, 5u}) {
    if (!boundary) break;
    RetrievalParams rp;
    rp.theta = theta;
    boundary = !reactive_retrieve(mem, *current, HopDistance::hops(theta - 1), rp).empty() &&
               reactive_retrieve(mem, *current, HopDistance::hops(theta), rp).empty() &&
               reactive_retrieve(mem, *current, HopDistance::hops(theta + 1), rp).empty();
  }
  bool continuation = false;
  if (current) {
    const auto pred = reactive_retrieve(mem, *current, HopDistance::hops(1));
    continuation = pred.predicted_next_nodes == std::vector<NodeId>{node_id(3), node_id(4), node_id(5)};
  }
  return {grouping && boundary && continuation,
          fmt::format("{} successes in {} chains {} oracle; trigger boundary {}; continuation {}", log.size(),
                      ltm.chains().size(), grouping ? "match" : "DIFFER from", boundary ? "ok" : "wrong",
                      continuation ? "exact" : "wrong")};
}

// ---------------------------------------------------------------------------

Outcome learning_signal() {
  const auto t0 = Clock::now();
  const auto triple = training_triple(AgentType::Block);
  TrainingHyperparams hp;
  hp.episodes = 300;
  const auto trained = train_agent(AgentType::Block, triple, hp, 42);
  const std::size_t n = 200;
  const auto greedy = evaluate_policy(AgentType::Block, triple, greedy_policy(trained.agent), n, 99);
  const auto random = evaluate_policy(AgentType::Block, triple, uniform_random_policy(), n, 99);
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += (greedy[i] - random[i]) / static_cast<double>(n);
  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i) var += std::pow(greedy[i] - random[i] - mean, 2) / static_cast<double>(n - 1);
  const double t = mean / std::sqrt(var / static_cast<double>(n));
  const double p = boost::math::cdf(boost::math::complement(boost::math::students_t(static_cast<double>(n - 1)), t));
  const double secs = seconds_since(t0);
  return {p < kLearningAlpha && secs < kLearningBudgetS,
          fmt::format("mean paired diff {:+.2f}, t={:.2f}, one-sided p={:.2e}, {:.0f}s", mean, t, p, secs)};
}

// ---------------------------------------------------------------------------

Outcome gradient_check() {
  Rng rng(11);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t in = 2 + uniform_index(rng, 6), out = 2 + uniform_index(rng, 5);
    std::vector<std::size_t> hidden;
    for (std::size_t l = 0, k = 1 + uniform_index(rng, 2); l < k; ++l) hidden.push_back(3 + uniform_index(rng, 6));
    ValueNetwork net(in, out, hidden, 100 + static_cast<std::uint64_t>(trial));
    // Zero-initialised biases can leave a pre-activation exactly on the ReLU
    // kink; check at a generic point instead.
    {
      auto jittered = net.flatten();
      for (auto& v : jittered) v += uniform_real(rng, -0.1, 0.1);
      net.unflatten(jittered);
    }
    const Eigen::Index batch = 1 + static_cast<Eigen::Index>(uniform_index(rng, 5));
    Eigen::MatrixXd x(static_cast<Eigen::Index>(in), batch);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = uniform_real(rng, -1.0, 1.0);
    std::vector<std::size_t> actions(static_cast<std::size_t>(batch));
    Eigen::VectorXd y(batch);
    for (Eigen::Index b = 0; b < batch; ++b) {
      actions[static_cast<std::size_t>(b)] = uniform_index(rng, out);
      y(b) = uniform_real(rng, -2.0, 2.0);
    }
    ValueNetwork::Gradients g;
    net.loss_and_gradient(x, actions, y, g);
    std::vector<double> analytic;
    for (std::size_t i = 0; i < g.weight.size(); ++i) {
      analytic.insert(analytic.end(), g.weight[i].data(), g.weight[i].data() + g.weight[i].size());
      analytic.insert(analytic.end(), g.bias[i].data(), g.bias[i].data() + g.bias[i].size());
    }
    auto params = net.flatten();
    ValueNetwork probe = net;
    ValueNetwork::Gradients scratch;
    double diff2 = 0.0, na = 0.0, nn = 0.0;
    const double h = 1e-6;
    for (std::size_t k = 0; k < params.size(); ++k) {
      const double orig = params[k];
      params[k] = orig + h;
      probe.unflatten(params);
      const double up = probe.loss_and_gradient(x, actions, y, scratch);
      params[k] = orig - h;
      probe.unflatten(params);
      const double down = probe.loss_and_gradient(x, actions, y, scratch);
      params[k] = orig;
      const double numeric = (up - down) / (2 * h);
      diff2 += std::pow(numeric - analytic[k], 2);
      na += analytic[k] * analytic[k];
      nn += numeric * numeric;
    }
    worst = std::max(worst, std::sqrt(diff2) / std::max(std::sqrt(na) + std::sqrt(nn), 1e-12));
  }
  return {worst < kGradientTol, fmt::format("20 networks, worst relative error {:.2e}", worst)};
}

// ---------------------------------------------------------------------------

void ensure_agents(const fs::path& dir) {
  for (AgentType t : kAllAgentTypes) {
    const auto path = agent_checkpoint_path(dir, t);
    if (fs::exists(path)) continue;
    const auto t0 = Clock::now();
    TrainingHyperparams hp;
    hp.episodes = kAgentTrainingEpisodes;
    auto r = train_agent(t, training_triple(t, MicroScenarioParams::deployment()), hp, kAgentTrainingSeed);
    save_agent(r.agent, path);
    fmt::print("  trained {} agent into {} ({:.0f}s)\n", to_string(t), path.string(), seconds_since(t0));
    std::fflush(stdout);
  }
}

Outcome no_retraining(const fs::path& agents_dir) {
  const auto roster = std::make_shared<const AgentRoster>(load_roster(agents_dir));
  const auto before = roster_checksum(*roster);
  const auto t0 = Clock::now();
  bool pass = true;
  std::string detail;
  for (const auto& phases : std::vector<std::vector<std::string>>{{"sce1", "sce2", "sce3"}, {"sce1", "sce4"}}) {
    DefenseConfig d;
    d.agents = roster;
    TransitionExperiment hier{phases, kEpisodesPerPhase, DefenseKind::Hierarchical, kTransitionSeed};
    TransitionExperiment greedy{phases, kEpisodesPerPhase, DefenseKind::GreedyIsolate, kTransitionSeed};
    const auto h = run_transition_experiment(hier, d);
    const auto g = run_transition_experiment(greedy, d);
    std::string js;
    bool jump_ok = true;
    for (const auto& p : h.phases) {
      jump_ok = jump_ok && p.jumpstart && std::isfinite(*p.jumpstart);
      js += fmt::format("{}{}={:.1f}", js.empty() ? "" : " ", p.scenario, p.jumpstart.value_or(NAN));
    }
    const bool ratio_ok = h.mean_healthy_ratio() >= g.mean_healthy_ratio();
    pass = pass && h.agents_unchanged() && jump_ok && ratio_ok;
    std::string seq;
    for (const auto& p : phases) seq += (seq.empty() ? "" : "->") + p;
    detail += fmt::format("{}: healthy {:.4f} vs greedy {:.4f}, jumpstart [{}]; ", seq, h.mean_healthy_ratio(),
                          g.mean_healthy_ratio(), js);
  }
  const double secs = seconds_since(t0);
  const auto after = roster_checksum(load_roster(agents_dir));
  const bool unchanged = before == after && roster_checksum(*roster) == before;
  pass = pass && unchanged && secs < kTransitionBudgetS;
  detail += fmt::format("agent checksum {:016x} {}, {:.0f}s", before, unchanged ? "unchanged" : "CHANGED", secs);
  return {pass, detail};
}

// ---------------------------------------------------------------------------

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string quote(const std::string& s) { return "'" + s + "'"; }

Outcome determinism(const fs::path& cli, const fs::path& agents, const fs::path& work) {
  std::vector<std::pair<std::string, std::string>> runs;
  for (const char* tag : {"det-a", "det-b"}) {
    const auto out = work / tag;
    fs::remove_all(out);
    const std::string cmd = fmt::format(
        "{} run --scenario sce1 --defense hierarchical --backend scripted --seed 7 --agents {} --out {} > {} 2>&1",
        quote(cli.string()), quote(agents.string()), quote(out.string()), quote((work / (std::string(tag) + ".log")).string()));
    if (std::system(cmd.c_str()) != 0) return {false, "cli run failed: see " + (work / tag).string() + ".log"};
    runs.emplace_back(read_file(out / "sce1-hierarchical-7.jsonl"), read_file(out / "sce1-hierarchical-7.audit.jsonl"));
  }
  const bool same_episode = runs[0].first == runs[1].first && !runs[0].first.empty();
  const bool same_audit = runs[0].second == runs[1].second && !runs[0].second.empty();
  return {same_episode && same_audit,
          fmt::format("episode log {} bytes {}, audit log {} bytes {}", runs[0].first.size(),
                      same_episode ? "identical" : "DIFFER", runs[0].second.size(), same_audit ? "identical" : "DIFFER")};
}

// ---------------------------------------------------------------------------

Outcome scenario_fidelity() {
  const std::map<std::string, std::pair<std::size_t, std::size_t>> subnets = {
      {"Dep1", {100, 5}}, {"Dep2", {100, 6}}, {"Dep3", {100, 4}}, {"Dep4", {100, 5}}, {"Dep5", {20, 3}}, {"Servers", {30, 2}}};
  const std::vector<std::tuple<std::string, std::size_t, AttackPolicy>> scen = {
      {"sce1", 6, AttackPolicy::Recon}, {"sce2", 7, AttackPolicy::Recon},     {"sce3", 8, AttackPolicy::Recon},
      {"sce4", 6, AttackPolicy::Recon}, {"sce5", 6, AttackPolicy::Penetrate}, {"sce6", 6, AttackPolicy::Impact},
      {"sce7", 6, AttackPolicy::Recon}};
  std::vector<std::string> bad;
  for (const auto& [name, attackers, policy] : scen) {
    const auto cfg = load_scenario(name);
    if (cfg.attack.attacker_count != attackers) bad.push_back(name + " attackers");
    if (cfg.attack.policy != policy) bad.push_back(name + " policy");
    const auto s = build_scenario(cfg, 1);
    for (const auto& sub : cfg.subnets) {
      const auto it = subnets.find(sub.name);
      if (it == subnets.end()) {
        bad.push_back(name + " unknown subnet " + sub.name);
        continue;
      }
      std::size_t entries = 0, nodes = 0;
      const auto id = s.graph->find_subnet(sub.name);
      for (NodeId n : s.graph->subnet(*id).nodes) {
        ++nodes;
        entries += s.node(n).is_entry ? 1 : 0;
      }
      if (nodes != it->second.first) bad.push_back(fmt::format("{} {} has {} nodes", name, sub.name, nodes));
      if (entries != it->second.second) bad.push_back(fmt::format("{} {} has {} entries", name, sub.name, entries));
    }
  }
  std::string d = bad.empty() ? "7 scenarios: subnet scales, entry counts, attackers and policies match" : "";
  for (const auto& b : bad) d += b + "; ";
  return {bad.empty(), d};
}

// ---------------------------------------------------------------------------

Outcome hitl_round_trip(const fs::path& agents) {
  GatewayConfig cfg;
  cfg.port = 0;
  cfg.agents_dir = agents;
  Gateway gw(cfg);
  gw.start_background();
  httplib::Client cli("127.0.0.1", gw.port());
  cli.set_read_timeout(60, 0);
  const std::string text = "Prioritize Servers: isolate anything touching the billing \"db\" first.";
  auto created = cli.Post("/sessions", R"({"scenario":"sce1","defense":"hierarchical","seed":7})", "application/json");
  if (!created || created->status != 201) return {false, "session creation failed"};
  const auto id = nlohmann::json::parse(created->body).at("id").get<std::string>();
  auto set = cli.Post("/sessions/" + id + "/instruction", nlohmann::json{{"text", text}}.dump(), "application/json");
  auto step = cli.Post("/sessions/" + id + "/step", "{}", "application/json");
  auto audit = cli.Get("/sessions/" + id + "/audit");
  gw.stop();
  if (!set || set->status != 200 || !step || step->status != 200 || !audit || audit->status != 200) {
    return {false, "gateway request failed"};
  }
  const auto entries = nlohmann::json::parse(audit->body).at("entries");
  if (entries.empty()) return {false, "no audit entry after step"};
  const auto& e = entries.back();
  const bool in_obs = e.at("observation").get<std::string>().find(text) != std::string::npos;
  const bool in_audit = e.at("instruction").is_string() && e.at("instruction").get<std::string>() == text;
  return {in_obs && in_audit, fmt::format("instruction verbatim in observation: {}, in audit entry: {}",
                                          in_obs ? "yes" : "no", in_audit ? "yes" : "no")};
}

// ---------------------------------------------------------------------------

std::string malformed_response(std::size_t i) {
  switch (i % 10) {
    case 0: return "Isolating the servers seems wise.";
    case 1: return "Plan:\n```actions\nEXEC Isolate 3\n";
    case 2: return "```actions\nISOLATE 3\n```";
    case 3: return "```actions\nEXEC Isolate " + std::to_string(100000 + i) + "\n```";
    case 4: return "```actions\nEXEC Reboot 4\n```";
    case 5: return "```actions\nASSIGN Firewall Servers\n```";
    case 6: return "```actions\nASSIGN Block Nowhere" + std::to_string(i) + "\n```";
    case 7: return "```actions\nEXEC Patch node-7\n```";
    case 8: return "```actions\nEXEC Patch\nASSIGN Block\n```";
    default: return "```json\n{\"action\": \"isolate\", \"node\": " + std::to_string(i) + "}\n```";
  }
}

Outcome proposal_validity(const fs::path& agents) {
  std::vector<std::string> responses;
  for (std::size_t i = 0; i < 100; ++i) responses.push_back(malformed_response(i));
  DefenseConfig d;
  d.kind = DefenseKind::Hierarchical;
  d.agents = std::make_shared<const AgentRoster>(load_roster(agents));
  d.backend = std::make_shared<CannedBackend>(responses);
  const auto cfg = load_scenario("sce1");
  std::size_t proposals = 0, invalid = 0, executed = 0;
  for (std::uint64_t seed = 1; proposals < 100; ++seed) {
    EpisodeRunner runner(cfg, d, seed);
    while (!runner.done() && proposals < 100) {
      executed += runner.step().actions.size();
      ++proposals;
    }
    invalid += runner.record().proposals.invalid;
  }
  return {invalid == 100 && executed == 0,
          fmt::format("{} malformed responses, {} invalid proposals, {} actions executed", proposals, invalid, executed)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::string cli_path, agents_dir = default_agent_directory().string(), work = "acceptance-work";
  std::vector<int> only;
  app.add_option("--cli", cli_path, "path to the cyberops executable")->required();
  app.add_option("--agents", agents_dir, "agent checkpoint directory (trained here when missing)");
  app.add_option("--work", work, "scratch directory");
  app.add_option("--only", only, "run only these criterion numbers");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  auto agents = [&] {
    ensure_agents(agents_dir);
    return fs::path(agents_dir);
  };
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"attack-probability", attack_probability},
      {"reward-decomposition", reward_decomposition},
      {"perception-oracles", perception_oracles},
      {"memory", memory_criteria},
      {"learning-signal", learning_signal},
      {"gradient-check", gradient_check},
      {"no-retraining", [&] { return no_retraining(agents()); }},
      {"determinism", [&] { return determinism(cli_path, agents(), work); }},
      {"scenario-fidelity", scenario_fidelity},
      {"hitl-round-trip", [&] { return hitl_round_trip(agents()); }},
      {"proposal-validity", [&] { return proposal_validity(agents()); }},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!only.empty() && std::find(only.begin(), only.end(), static_cast<int>(i + 1)) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    fmt::print("{} {:2} {}: {}\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail);
    std::fflush(stdout);
  }
  fmt::print("{} criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
