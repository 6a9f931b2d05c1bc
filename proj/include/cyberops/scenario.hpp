#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "cyberops/attack.hpp"
#include "cyberops/defense_env.hpp"
#include "cyberops/net_model.hpp"

namespace cyberops {

struct HvnSpec {
  std::size_t index = 0;  // position within the subnet
  std::string asset;
};

struct GatewaySpec {
  std::string from_subnet;
  std::size_t from_index = 0;
  std::string to_subnet;
  std::size_t to_index = 0;
};

struct SubnetConfig {
  std::string name;
  std::size_t node_scale = 0;
  std::size_t entry_count = 0;
  std::vector<HvnSpec> hvns;
  double edge_density = 0.05;  // probability of each extra intra-subnet edge
  ContextBlocks context;
};

struct VulnerabilityDistribution {
  double min = 0.1;
  double max = 0.9;
  std::uint64_t seed = 0;
};

struct AttackConfig {
  std::size_t attacker_count = 0;
  AttackPolicy policy = AttackPolicy::Recon;
  double skill = 0.7;
};

struct ScenarioConfig {
  std::string name;
  std::vector<SubnetConfig> subnets;
  std::vector<GatewaySpec> gateways;
  VulnerabilityDistribution vulnerability;
  AttackConfig attack;
  RewardWeights weights;
  EnvParams env;

  std::size_t node_count() const {
    std::size_t n = 0;
    for (const auto& s : subnets) n += s.node_scale;
    return n;
  }
  std::size_t entry_count() const {
    std::size_t n = 0;
    for (const auto& s : subnets) n += s.entry_count;
    return n;
  }

  void validate() const {
    if (subnets.empty()) throw ConfigError("scenario '" + name + "' has no subnets");
    std::set<std::string> names;
    for (const auto& s : subnets) {
      if (s.name.empty()) throw ConfigError("subnet without a name");
      if (!names.insert(s.name).second) throw ConfigError("duplicate subnet '" + s.name + "'");
      if (s.node_scale == 0) throw ConfigError("subnet '" + s.name + "' has no nodes");
      if (!(s.edge_density >= 0.0 && s.edge_density <= 1.0)) throw ConfigError("edge density outside [0,1]");
      std::set<std::size_t> hvn_idx;
      for (const auto& h : s.hvns) {
        if (h.index >= s.node_scale) {
          throw ConfigError("HVN '" + h.asset + "' references missing node " + std::to_string(h.index) +
                            " in subnet '" + s.name + "'");
        }
        hvn_idx.insert(h.index);
      }
      if (s.entry_count + hvn_idx.size() > s.node_scale) {
        throw ConfigError("subnet '" + s.name + "' cannot hold its entry and HVN nodes");
      }
    }
    for (const auto& g : gateways) {
      auto check = [&](const std::string& subnet, std::size_t index) {
        for (const auto& s : subnets) {
          if (s.name == subnet) {
            if (index >= s.node_scale) throw ConfigError("gateway references missing node in '" + subnet + "'");
            return;
          }
        }
        throw ConfigError("gateway references unknown subnet '" + subnet + "'");
      };
      check(g.from_subnet, g.from_index);
      check(g.to_subnet, g.to_index);
    }
    const auto& v = vulnerability;
    if (!(v.min >= 0.0 && v.min <= v.max && v.max <= 1.0)) throw ConfigError("vulnerability range invalid");
    if (!(attack.skill >= 0.0 && attack.skill <= 1.0)) throw ConfigError("attacker skill outside [0,1]");
    weights.validate();
    env.validate();
  }
};

/// Builds the initial state: per subnet a random spanning tree plus extra
/// edges at `edge_density`, HVNs at their configured positions, entry nodes
/// drawn among the remaining nodes, vulnerabilities uniform in [min, max].
inline GlobalState build_scenario(const ScenarioConfig& config, std::uint64_t seed) {
  config.validate();
  Rng topo(mix_seed(seed, 1));
  Rng vuln(mix_seed(seed ^ mix_seed(config.vulnerability.seed), 2));

  std::vector<SubnetId> subnet_of;
  std::vector<std::string> names;
  std::vector<Edge> edges;
  std::vector<std::size_t> offset;
  for (std::size_t s = 0; s < config.subnets.size(); ++s) {
    const auto& sc = config.subnets[s];
    names.push_back(sc.name);
    const std::size_t base = subnet_of.size();
    offset.push_back(base);
    for (std::size_t i = 0; i < sc.node_scale; ++i) subnet_of.push_back(subnet_id(s));
    for (std::size_t i = 1; i < sc.node_scale; ++i) {
      edges.emplace_back(node_id(base + uniform_index(topo, i)), node_id(base + i));
    }
    std::set<std::pair<std::size_t, std::size_t>> present;
    for (std::size_t e = edges.size() - (sc.node_scale - 1); e < edges.size(); ++e) {
      present.emplace(std::min(edges[e].first.index(), edges[e].second.index()),
                      std::max(edges[e].first.index(), edges[e].second.index()));
    }
    for (std::size_t i = 0; i < sc.node_scale; ++i) {
      for (std::size_t j = i + 1; j < sc.node_scale; ++j) {
        if (present.count({base + i, base + j})) continue;
        if (bernoulli(topo, sc.edge_density)) edges.emplace_back(node_id(base + i), node_id(base + j));
      }
    }
  }
  auto index_of = [&](const std::string& subnet, std::size_t i) {
    for (std::size_t s = 0; s < config.subnets.size(); ++s) {
      if (config.subnets[s].name == subnet) return node_id(offset[s] + i);
    }
    throw ConfigError("unknown subnet '" + subnet + "'");
  };
  for (const auto& g : config.gateways) {
    edges.emplace_back(index_of(g.from_subnet, g.from_index), index_of(g.to_subnet, g.to_index));
  }

  GlobalState state;
  state.graph = std::make_shared<const NetworkGraph>(std::move(subnet_of), std::move(names), std::move(edges));
  state.nodes.resize(state.graph->size());
  for (auto& n : state.nodes) {
    n.vulnerability = uniform_real(vuln, config.vulnerability.min, config.vulnerability.max);
  }
  auto context = std::make_shared<NetworkContext>();
  for (std::size_t s = 0; s < config.subnets.size(); ++s) {
    const auto& sc = config.subnets[s];
    context->per_subnet.push_back(sc.context);
    for (const auto& h : sc.hvns) state.nodes[offset[s] + h.index].is_hvn = true;
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < sc.node_scale; ++i) {
      if (!state.nodes[offset[s] + i].is_hvn) candidates.push_back(offset[s] + i);
    }
    for (std::size_t k = 0; k < sc.entry_count; ++k) {
      const std::size_t pick = k + uniform_index(topo, candidates.size() - k);
      std::swap(candidates[k], candidates[pick]);
      state.nodes[candidates[k]].is_entry = true;
    }
  }
  state.context = std::move(context);
  return state;
}

// ---------------------------------------------------------------------------
// JSON schema
// ---------------------------------------------------------------------------

inline ScenarioConfig scenario_from_json(const nlohmann::json& j) {
  ScenarioConfig c;
  try {
    c.name = j.value("name", std::string{});
    for (const auto& sj : j.at("subnets")) {
      SubnetConfig s;
      s.name = sj.at("name").get<std::string>();
      const auto scale = sj.at("node_scale").get<long long>();
      const auto entries = sj.value("entry_count", 0LL);
      if (scale < 0 || entries < 0) throw ConfigError("negative counts in subnet '" + s.name + "'");
      s.node_scale = static_cast<std::size_t>(scale);
      s.entry_count = static_cast<std::size_t>(entries);
      s.edge_density = sj.value("edge_density", 0.05);
      for (const auto& hj : sj.value("hvns", nlohmann::json::array())) {
        const auto idx = hj.at("index").get<long long>();
        if (idx < 0) throw ConfigError("negative HVN index in subnet '" + s.name + "'");
        s.hvns.push_back({static_cast<std::size_t>(idx), hj.value("asset", std::string{})});
      }
      if (sj.contains("context")) {
        const auto& cj = sj["context"];
        s.context.exposure = cj.value("exposure", std::string{});
        s.context.vulnerability = cj.value("vulnerability", std::string{});
        s.context.assets = cj.value("assets", std::string{});
        s.context.service = cj.value("service", std::string{});
      }
      c.subnets.push_back(std::move(s));
    }
    for (const auto& gj : j.value("gateways", nlohmann::json::array())) {
      c.gateways.push_back({gj.at("from").at("subnet").get<std::string>(), gj.at("from").at("index").get<std::size_t>(),
                            gj.at("to").at("subnet").get<std::string>(), gj.at("to").at("index").get<std::size_t>()});
    }
    if (j.contains("vulnerability")) {
      const auto& vj = j["vulnerability"];
      c.vulnerability.min = vj.value("min", c.vulnerability.min);
      c.vulnerability.max = vj.value("max", c.vulnerability.max);
      c.vulnerability.seed = vj.value("seed", c.vulnerability.seed);
    }
    if (j.contains("attack")) {
      const auto& aj = j["attack"];
      const auto count = aj.value("attacker_count", 0LL);
      if (count < 0) throw ConfigError("negative attacker count");
      c.attack.attacker_count = static_cast<std::size_t>(count);
      c.attack.policy = parse_attack_policy(aj.value("policy", std::string("recon")));
      c.attack.skill = aj.value("skill", c.attack.skill);
    }
    if (j.contains("rewards")) {
      const auto& rj = j["rewards"];
      c.weights.lambda_hva = rj.value("lambda_hva", c.weights.lambda_hva);
      c.weights.alpha = rj.value("alpha", c.weights.alpha);
      c.weights.beta = rj.value("beta", c.weights.beta);
      c.weights.gamma = rj.value("gamma", c.weights.gamma);
      if (rj.contains("cost")) {
        for (auto op : kAllOperations) {
          c.weights.cost[static_cast<std::size_t>(op)] =
              rj["cost"].value(to_string(op), c.weights.cost[static_cast<std::size_t>(op)]);
        }
      }
    }
    if (j.contains("env")) {
      const auto& ej = j["env"];
      c.env.patch_delta = ej.value("patch_delta", c.env.patch_delta);
      c.env.vuln_min = ej.value("vuln_min", c.env.vuln_min);
      c.env.action_budget = ej.value("action_budget", c.env.action_budget);
      c.env.terminate_on_hvn = ej.value("terminate_on_hvn", c.env.terminate_on_hvn);
    }
    const auto max_steps = j.value("max_steps", 100LL);
    if (max_steps < 1) throw ConfigError("max_steps must be >= 1");
    c.env.max_steps = static_cast<std::size_t>(max_steps);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed scenario config: ") + e.what());
  }
  c.validate();
  return c;
}

inline nlohmann::json scenario_to_json(const ScenarioConfig& c) {
  nlohmann::json j;
  j["name"] = c.name;
  j["subnets"] = nlohmann::json::array();
  for (const auto& s : c.subnets) {
    nlohmann::json sj{{"name", s.name},
                      {"node_scale", s.node_scale},
                      {"entry_count", s.entry_count},
                      {"edge_density", s.edge_density},
                      {"hvns", nlohmann::json::array()},
                      {"context",
                       {{"exposure", s.context.exposure},
                        {"vulnerability", s.context.vulnerability},
                        {"assets", s.context.assets},
                        {"service", s.context.service}}}};
    for (const auto& h : s.hvns) sj["hvns"].push_back({{"index", h.index}, {"asset", h.asset}});
    j["subnets"].push_back(std::move(sj));
  }
  j["gateways"] = nlohmann::json::array();
  for (const auto& g : c.gateways) {
    j["gateways"].push_back({{"from", {{"subnet", g.from_subnet}, {"index", g.from_index}}},
                             {"to", {{"subnet", g.to_subnet}, {"index", g.to_index}}}});
  }
  j["vulnerability"] = {{"min", c.vulnerability.min}, {"max", c.vulnerability.max}, {"seed", c.vulnerability.seed}};
  j["attack"] = {{"attacker_count", c.attack.attacker_count},
                 {"policy", to_string(c.attack.policy)},
                 {"skill", c.attack.skill}};
  nlohmann::json cost;
  for (auto op : kAllOperations) cost[to_string(op)] = c.weights.cost_of(op);
  j["rewards"] = {{"lambda_hva", c.weights.lambda_hva},
                  {"alpha", c.weights.alpha},
                  {"beta", c.weights.beta},
                  {"gamma", c.weights.gamma},
                  {"cost", cost}};
  j["env"] = {{"patch_delta", c.env.patch_delta},
              {"vuln_min", c.env.vuln_min},
              {"action_budget", c.env.action_budget},
              {"terminate_on_hvn", c.env.terminate_on_hvn}};
  j["max_steps"] = c.env.max_steps;
  return j;
}

inline ScenarioConfig load_scenario_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("scenario file " + path.string() + " is not valid JSON: " + e.what());
  }
  return scenario_from_json(j);
}

/// Directory holding the shipped presets. CYBEROPS_SCENARIO_DIR overrides the
/// compiled-in default.
inline std::filesystem::path scenario_directory() {
  if (const char* env = std::getenv("CYBEROPS_SCENARIO_DIR"); env && *env) return env;
#ifdef CYBEROPS_DEFAULT_SCENARIO_DIR
  return CYBEROPS_DEFAULT_SCENARIO_DIR;
#else
  return "scenarios";
#endif
}

/// Accepts a preset name ("sce1") or a path to a JSON file.
inline ScenarioConfig load_scenario(const std::string& name_or_path) {
  const std::filesystem::path p(name_or_path);
  if (p.has_extension() || name_or_path.find('/') != std::string::npos) return load_scenario_file(p);
  const auto preset = scenario_directory() / (name_or_path + ".json");
  if (!std::filesystem::exists(preset)) throw ConfigError("unknown scenario '" + name_or_path + "'");
  return load_scenario_file(preset);
}

}  // namespace cyberops
