#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "cyberops/attack.hpp"
#include "cyberops/net_model.hpp"

namespace cyberops {

struct SubnetMetrics {
  SubnetId subnet;
  std::size_t entry_count = 0;
  double avg_vulnerability = 0.0;
  std::size_t compromised_count = 0;
  std::size_t isolated_count = 0;
  double attack_frequency = 0.0;
  HopDistance critical_distance = HopDistance::unreachable();
  double penetration_speed = 0.0;
  bool penetration_speed_known = false;
  double connectivity = 1.0;
  std::size_t hvn_count = 0;

  bool operator==(const SubnetMetrics&) const = default;
};

struct PerceptionReport {
  std::vector<SubnetMetrics> per_subnet;  // indexed by SubnetId
  double attack_entropy = 0.0;
  std::string rendered_text;
};

inline constexpr std::size_t kDefaultPerceptionWindow = 10;

namespace detail {

/// Events with step in [now - window, now).
inline bool in_window(const AttackEvent& e, std::size_t window, std::size_t now) {
  return e.step < now && e.step + window >= now;
}

}  // namespace detail

/// Shannon entropy (natural log) of the share of attack attempts per subnet
/// over the last `window` steps before `now`. 0 when there were none.
inline double attack_entropy(std::span<const AttackEvent> events, std::size_t window, std::size_t now,
                             const NetworkGraph& graph) {
  if (window < 1) throw DomainError("entropy window must be >= 1");
  std::vector<std::size_t> counts(graph.subnets().size(), 0);
  std::size_t total = 0;
  for (const auto& e : events) {
    if (!detail::in_window(e, window, now)) continue;
    ++counts[graph.subnet_of(e.target).index()];
    ++total;
  }
  if (total == 0) return 0.0;
  double h = 0.0;
  for (std::size_t c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log(p);
  }
  return h;
}

/// Attack attempts on `subnet` per step over the window.
inline double attack_frequency(std::span<const AttackEvent> events, std::size_t window, std::size_t now,
                               const NetworkGraph& graph, SubnetId subnet) {
  if (window < 1) throw DomainError("frequency window must be >= 1");
  std::size_t count = 0;
  for (const auto& e : events) {
    if (detail::in_window(e, window, now) && graph.subnet_of(e.target) == subnet) ++count;
  }
  return static_cast<double>(count) / static_cast<double>(window);
}

/// Minimum distance to an HVN over compromised nodes of `subnet`.
inline HopDistance critical_distance(const GlobalState& state, SubnetId subnet) {
  HopDistance best = HopDistance::unreachable();
  for (NodeId n : state.graph->subnet(subnet).nodes) {
    if (!state.node(n).compromised()) continue;
    const HopDistance d = shortest_distance_to_hvn(state, n);
    if (d < best) best = d;
  }
  return best;
}

/// D_{t-1} - D_t; positive when the attack moves toward HVNs. nullopt when
/// either side is Unreachable.
inline std::optional<double> penetration_speed(HopDistance previous, HopDistance current) {
  if (!previous.reachable() || !current.reachable()) return std::nullopt;
  return static_cast<double>(previous.value()) - static_cast<double>(current.value());
}

/// Active intra-subnet edges over the complete-graph edge count. A
/// single-node subnet counts as fully connected.
inline double connectivity(const GlobalState& state, SubnetId subnet) {
  const auto& nodes = state.graph->subnet(subnet).nodes;
  const std::size_t v = nodes.size();
  if (v < 2) return 1.0;
  std::size_t active = 0;
  for (const auto& [a, b] : state.graph->edges()) {
    if (state.graph->subnet_of(a) != subnet || state.graph->subnet_of(b) != subnet) continue;
    if (state.node(a).isolated || state.node(b).isolated) continue;
    ++active;
  }
  return static_cast<double>(active) / (static_cast<double>(v) * static_cast<double>(v - 1) / 2.0);
}

/// All per-subnet metrics. `previous` (if given) supplies D_{t-1} for the
/// penetration speed.
inline std::vector<SubnetMetrics> compute_metrics(const GlobalState& state, std::span<const AttackEvent> events,
                                                  std::size_t window,
                                                  const std::vector<SubnetMetrics>* previous = nullptr) {
  std::vector<SubnetMetrics> out;
  for (const auto& subnet : state.graph->subnets()) {
    SubnetMetrics m;
    m.subnet = subnet.id;
    double vsum = 0.0;
    for (NodeId n : subnet.nodes) {
      const auto& s = state.node(n);
      m.entry_count += s.is_entry ? 1 : 0;
      m.compromised_count += s.compromised() ? 1 : 0;
      m.isolated_count += s.isolated ? 1 : 0;
      m.hvn_count += s.is_hvn ? 1 : 0;
      vsum += s.vulnerability;
    }
    m.avg_vulnerability = subnet.nodes.empty() ? 0.0 : vsum / static_cast<double>(subnet.nodes.size());
    m.attack_frequency = attack_frequency(events, window, state.time, *state.graph, subnet.id);
    m.critical_distance = critical_distance(state, subnet.id);
    if (previous && subnet.id.index() < previous->size()) {
      const auto speed = penetration_speed((*previous)[subnet.id.index()].critical_distance, m.critical_distance);
      m.penetration_speed = speed.value_or(0.0);
      m.penetration_speed_known = speed.has_value();
    }
    m.connectivity = connectivity(state, subnet.id);
    out.push_back(m);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Observation template
// ---------------------------------------------------------------------------

/// Minimal placeholder template: `{{key}}` scalars, `{{#list}}...{{/list}}`
/// repeated per item (or emitted once when a scalar of that name is present
/// and non-empty, skipped otherwise).
class TextTemplate {
 public:
  using Scope = std::map<std::string, std::string>;

  explicit TextTemplate(std::string text) : text_(std::move(text)) {}

  static TextTemplate from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw TemplateError("cannot open template " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return TextTemplate(ss.str());
  }

  const std::string& text() const { return text_; }

  std::string render(const Scope& scalars, const std::map<std::string, std::vector<Scope>>& lists) const {
    return render_range(text_, scalars, lists, nullptr);
  }

 private:
  static std::string lookup(const std::string& key, const Scope& scalars, const Scope* item) {
    if (item) {
      if (auto it = item->find(key); it != item->end()) return it->second;
    }
    if (auto it = scalars.find(key); it != scalars.end()) return it->second;
    throw TemplateError("template placeholder '" + key + "' has no value");
  }

  static std::string render_range(const std::string& text, const Scope& scalars,
                                  const std::map<std::string, std::vector<Scope>>& lists, const Scope* item) {
    std::string out;
    std::size_t pos = 0;
    while (pos < text.size()) {
      const std::size_t open = text.find("{{", pos);
      if (open == std::string::npos) {
        out.append(text, pos, std::string::npos);
        break;
      }
      out.append(text, pos, open - pos);
      const std::size_t close = text.find("}}", open);
      if (close == std::string::npos) throw TemplateError("unterminated placeholder");
      const std::string tag = text.substr(open + 2, close - open - 2);
      pos = close + 2;
      if (!tag.empty() && tag[0] == '#') {
        const std::string name = tag.substr(1);
        const std::string end_tag = "{{/" + name + "}}";
        const std::size_t end = text.find(end_tag, pos);
        if (end == std::string::npos) throw TemplateError("section '" + name + "' is not closed");
        std::string body = text.substr(pos, end - pos);
        pos = end + end_tag.size();
        // Sections own their trailing newline so absent sections leave no blank line.
        if (!body.empty() && body.front() == '\n') body.erase(0, 1);
        if (pos < text.size() && text[pos] == '\n') ++pos;
        if (auto it = lists.find(name); it != lists.end()) {
          for (const auto& child : it->second) out += render_range(body, scalars, lists, &child);
        } else if (auto s = scalars.find(name); s != scalars.end() && !s->second.empty()) {
          out += render_range(body, scalars, lists, item);
        }
        continue;
      }
      if (!tag.empty() && tag[0] == '/') throw TemplateError("unexpected section end '" + tag + "'");
      out += lookup(tag, scalars, item);
    }
    return out;
  }

  std::string text_;
};

inline constexpr const char* kObservationTemplateVersion = "observation-v1";

/// Shipped as templates/observation_v1.txt; kept in sync by a unit test.
inline constexpr const char* kDefaultObservationTemplate =
    R"(# Network situation report ({{template_version}}) step {{step}}
Attack chain concentration (entropy, last {{window}} steps): {{attack_entropy}}

{{#subnets}}
## Subnet {{name}}
[Identify]
Exposure surface: {{exposure}}
Entry node count: {{entry_count}}
[Protect]
Vulnerability profile: {{vulnerability_profile}}
Average vulnerability: {{avg_vulnerability}}
Compromised node count: {{compromised_count}}
[Detect]
Attack frequency (attempts/step): {{attack_frequency}}
[Respond]
Key assets: {{assets}}
HVN count: {{hvn_count}}
Critical distance: {{critical_distance}}
Penetration speed: {{penetration_speed}}
[Recover]
Service continuity: {{service}}
Isolated node count: {{isolated_count}}
Connectivity: {{connectivity}}

{{/subnets}}
{{#memory}}
## Memory
{{memory}}

{{/memory}}
{{#instruction}}
## Operator instruction
<<<BEGIN INSTRUCTION
{{instruction}}
END INSTRUCTION>>>
{{/instruction}}
)";

inline const TextTemplate& default_observation_template() {
  static const TextTemplate t(kDefaultObservationTemplate);
  return t;
}

inline std::string format_metric(double v) { return fmt::format("{:.4f}", v); }

/// Fills the observation template. Subnet sections follow the
/// Identify/Protect/Detect/Respond/Recover order; the instruction and memory
/// sections appear only when present.
inline PerceptionReport render_observation(const GlobalState& state, std::vector<SubnetMetrics> metrics,
                                           double entropy, std::size_t window,
                                           const std::optional<std::string>& memory_digest,
                                           const std::optional<std::string>& instruction,
                                           const TextTemplate& tmpl = default_observation_template()) {
  static constexpr const char* kBlockNames[] = {"C_exp", "C_vul", "C_ast", "C_svc"};
  TextTemplate::Scope scalars{{"template_version", kObservationTemplateVersion},
                              {"step", std::to_string(state.time)},
                              {"window", std::to_string(window)},
                              {"attack_entropy", format_metric(entropy)}};
  if (memory_digest && !memory_digest->empty()) scalars["memory"] = *memory_digest;
  if (instruction && !instruction->empty()) scalars["instruction"] = *instruction;

  std::vector<TextTemplate::Scope> subnets;
  for (const auto& m : metrics) {
    const auto& subnet = state.graph->subnet(m.subnet);
    if (!state.context || m.subnet.index() >= state.context->per_subnet.size()) {
      throw TemplateError("missing context blocks for subnet " + subnet.name);
    }
    const auto& ctx = state.context->per_subnet[m.subnet.index()];
    const std::string* blocks[] = {&ctx.exposure, &ctx.vulnerability, &ctx.assets, &ctx.service};
    for (std::size_t b = 0; b < 4; ++b) {
      if (blocks[b]->empty()) {
        throw TemplateError(std::string("missing context block ") + kBlockNames[b] + " for subnet " + subnet.name);
      }
    }
    subnets.push_back({{"name", subnet.name},
                       {"exposure", ctx.exposure},
                       {"entry_count", std::to_string(m.entry_count)},
                       {"vulnerability_profile", ctx.vulnerability},
                       {"avg_vulnerability", format_metric(m.avg_vulnerability)},
                       {"compromised_count", std::to_string(m.compromised_count)},
                       {"attack_frequency", format_metric(m.attack_frequency)},
                       {"assets", ctx.assets},
                       {"hvn_count", std::to_string(m.hvn_count)},
                       {"critical_distance", m.critical_distance.str()},
                       {"penetration_speed", m.penetration_speed_known ? fmt::format("{:+.0f}", m.penetration_speed)
                                                                        : std::string("n/a")},
                       {"service", ctx.service},
                       {"isolated_count", std::to_string(m.isolated_count)},
                       {"connectivity", format_metric(m.connectivity)}});
  }
  PerceptionReport report;
  report.rendered_text = tmpl.render(scalars, {{"subnets", subnets}});
  report.per_subnet = std::move(metrics);
  report.attack_entropy = entropy;
  return report;
}

/// Metrics, entropy and rendering in one call.
inline PerceptionReport perceive(const GlobalState& state, std::span<const AttackEvent> events, std::size_t window,
                                 const std::vector<SubnetMetrics>* previous,
                                 const std::optional<std::string>& memory_digest,
                                 const TextTemplate& tmpl = default_observation_template()) {
  auto metrics = compute_metrics(state, events, window, previous);
  const double h = attack_entropy(events, window, state.time, *state.graph);
  return render_observation(state, std::move(metrics), h, window, memory_digest, state.human_instruction, tmpl);
}

}  // namespace cyberops
