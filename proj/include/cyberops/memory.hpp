#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "json.hpp"

#include "cyberops/attack.hpp"
#include "cyberops/net_model.hpp"
#include "cyberops/tactical.hpp"

namespace cyberops {

// ---------------------------------------------------------------------------
// Short-term memory
// ---------------------------------------------------------------------------

struct ShortTermMemory {
  std::optional<std::vector<TacticalAction>> prev_action;
  std::optional<std::string> prev_observation;
  std::string current_state_digest;

  bool empty() const { return !prev_action && !prev_observation && current_state_digest.empty(); }
};

inline std::string summarize_state(const GlobalState& state) {
  std::size_t compromised = 0, isolated = 0, hvn_down = 0;
  for (const auto& n : state.nodes) {
    compromised += n.compromised() ? 1 : 0;
    isolated += n.isolated ? 1 : 0;
    hvn_down += (n.is_hvn && n.compromised()) ? 1 : 0;
  }
  return fmt::format("t={} compromised={} isolated={} hvn_compromised={} digest={:016x}", state.time, compromised,
                     isolated, hvn_down, state_digest(state));
}

/// Replaces all three slots with the latest decision cycle.
inline ShortTermMemory stm_update(const ShortTermMemory&, std::vector<TacticalAction> executed_action,
                                  std::string observation_text, const GlobalState& new_state) {
  return ShortTermMemory{std::move(executed_action), std::move(observation_text), summarize_state(new_state)};
}

// ---------------------------------------------------------------------------
// Long-term memory: attack chains
// ---------------------------------------------------------------------------

struct ChainHop {
  NodeId target;
  std::size_t time = 0;
  bool operator==(const ChainHop&) const = default;
};

/// Time-ordered compromised nodes within one subnet. A chain forked from the
/// middle of another carries the shared prefix in `hops` but owns only the
/// hops from `shared_prefix` on.
struct AttackChain {
  std::uint32_t id = 0;
  SubnetId subnet;
  std::vector<ChainHop> hops;
  std::size_t shared_prefix = 0;
  std::optional<std::uint32_t> parent;

  std::vector<NodeId> nodes() const {
    std::vector<NodeId> out;
    out.reserve(hops.size());
    for (const auto& h : hops) out.push_back(h.target);
    return out;
  }
  std::size_t owned_hops() const { return hops.size() - shared_prefix; }
  std::size_t last_time() const { return hops.empty() ? 0 : hops.back().time; }

  bool operator==(const AttackChain&) const = default;
};

class LongTermMemory {
 public:
  /// Records one successful attack. Extends the chain whose tail is the
  /// event's source, forks when the source sits mid-chain, else opens a new
  /// chain.
  void record(const AttackEvent& event, const NetworkGraph& graph) {
    if (!event.success) throw DomainError("only successful attack events enter long-term memory");
    const SubnetId subnet = graph.subnet_of(event.target);
    const ChainHop hop{event.target, event.step};
    if (event.source) {
      AttackChain* tail_match = nullptr;
      AttackChain* mid_match = nullptr;
      std::size_t mid_pos = 0;
      for (auto& c : chains_) {
        if (c.subnet != subnet) continue;
        for (std::size_t i = c.hops.size(); i-- > 0;) {
          if (c.hops[i].target != *event.source || c.hops[i].time >= event.step) continue;
          if (i + 1 == c.hops.size()) {
            if (!tail_match || more_recent(c, *tail_match)) tail_match = &c;
          } else if (!mid_match || more_recent(c, *mid_match)) {
            mid_match = &c;
            mid_pos = i;
          }
          break;
        }
      }
      if (tail_match) {
        tail_match->hops.push_back(hop);
        ++total_hops_;
        return;
      }
      if (mid_match) {
        AttackChain fork;
        fork.id = next_id_++;
        fork.subnet = subnet;
        fork.hops.assign(mid_match->hops.begin(), mid_match->hops.begin() + static_cast<std::ptrdiff_t>(mid_pos + 1));
        fork.shared_prefix = fork.hops.size();
        fork.parent = mid_match->id;
        fork.hops.push_back(hop);
        chains_.push_back(std::move(fork));
        ++total_hops_;
        return;
      }
    }
    AttackChain fresh;
    fresh.id = next_id_++;
    fresh.subnet = subnet;
    fresh.hops.push_back(hop);
    chains_.push_back(std::move(fresh));
    ++total_hops_;
  }

  const std::vector<AttackChain>& chains() const { return chains_; }
  std::size_t total_owned_hops() const { return total_hops_; }

  const AttackChain* find(std::uint32_t id) const {
    for (const auto& c : chains_) {
      if (c.id == id) return &c;
    }
    return nullptr;
  }

  /// Most recently extended chain in `subnet`, if any.
  const AttackChain* latest_in(SubnetId subnet) const {
    const AttackChain* best = nullptr;
    for (const auto& c : chains_) {
      if (c.subnet == subnet && (!best || more_recent(c, *best))) best = &c;
    }
    return best;
  }

  void mark_episode_boundary() { boundaries_.push_back(chains_.size()); }
  const std::vector<std::size_t>& episode_boundaries() const { return boundaries_; }

  void clear() {
    chains_.clear();
    boundaries_.clear();
    next_id_ = 0;
    total_hops_ = 0;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["version"] = 1;
    j["next_id"] = next_id_;
    j["boundaries"] = boundaries_;
    j["chains"] = nlohmann::json::array();
    for (const auto& c : chains_) {
      nlohmann::json cj{{"id", c.id}, {"subnet", c.subnet.value}, {"shared_prefix", c.shared_prefix}};
      if (c.parent) cj["parent"] = *c.parent;
      cj["hops"] = nlohmann::json::array();
      for (const auto& h : c.hops) cj["hops"].push_back({h.target.value, h.time});
      j["chains"].push_back(std::move(cj));
    }
    return j;
  }

  static LongTermMemory from_json(const nlohmann::json& j) {
    LongTermMemory m;
    try {
      if (j.at("version").get<int>() != 1) throw LoadError("unsupported long-term memory version");
      m.next_id_ = j.at("next_id").get<std::uint32_t>();
      m.boundaries_ = j.at("boundaries").get<std::vector<std::size_t>>();
      for (const auto& cj : j.at("chains")) {
        AttackChain c;
        c.id = cj.at("id").get<std::uint32_t>();
        c.subnet = SubnetId{cj.at("subnet").get<std::uint32_t>()};
        c.shared_prefix = cj.at("shared_prefix").get<std::size_t>();
        if (cj.contains("parent")) c.parent = cj["parent"].get<std::uint32_t>();
        for (const auto& hj : cj.at("hops")) c.hops.push_back({NodeId{hj.at(0).get<std::uint32_t>()}, hj.at(1)});
        if (c.shared_prefix >= c.hops.size() && !c.hops.empty()) throw LoadError("chain owns no hops");
        m.total_hops_ += c.owned_hops();
        m.chains_.push_back(std::move(c));
      }
    } catch (const nlohmann::json::exception& e) {
      throw LoadError(std::string("malformed long-term memory: ") + e.what());
    }
    return m;
  }

 private:
  static bool more_recent(const AttackChain& a, const AttackChain& b) {
    return a.last_time() != b.last_time() ? a.last_time() > b.last_time() : a.id > b.id;
  }

  std::vector<AttackChain> chains_;
  std::vector<std::size_t> boundaries_;
  std::uint32_t next_id_ = 0;
  std::size_t total_hops_ = 0;
};

// ---------------------------------------------------------------------------
// Similarity and retrieval
// ---------------------------------------------------------------------------

namespace detail {

/// Row `r[j]` = LCS(a, b[0..j)) for j in [0, |b|].
inline std::vector<std::size_t> lcs_last_row(const std::vector<NodeId>& a, const std::vector<NodeId>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev;
}

}  // namespace detail

inline std::size_t lcs_length(const std::vector<NodeId>& a, const std::vector<NodeId>& b) {
  return detail::lcs_last_row(a, b).back();
}

/// Swappable scoring strategy for chain retrieval.
using ChainSimilarity = double (*)(const AttackChain&, const AttackChain&);

/// LCS(a, b) / max(|a|, |b|); 0 across subnets.
inline double chain_similarity(const AttackChain& a, const AttackChain& b) {
  if (a.subnet != b.subnet) return 0.0;
  const std::size_t longest = std::max(a.hops.size(), b.hops.size());
  if (longest == 0) return 1.0;
  return static_cast<double>(lcs_length(a.nodes(), b.nodes())) / static_cast<double>(longest);
}

struct RetrievalParams {
  std::size_t theta = 3;
  std::size_t top_k = 3;
  double min_score = 0.0;
  ChainSimilarity similarity = &chain_similarity;
};

struct ChainPrediction {
  std::vector<NodeId> predicted_next_nodes;
  std::vector<std::uint32_t> source_chains;
  double match_score = 0.0;

  bool empty() const { return predicted_next_nodes.empty(); }
};

/// Fires only when `distance` < theta. Scores every other stored chain,
/// keeps the top-k, and lets each vote (weighted by score) for the node that
/// follows its best alignment with `current`.
inline ChainPrediction reactive_retrieve(const LongTermMemory& ltm, const AttackChain& current, HopDistance distance,
                                         const RetrievalParams& params = {}) {
  if (params.top_k < 1) throw DomainError("top_k must be >= 1");
  ChainPrediction out;
  if (!(distance < HopDistance::hops(params.theta))) return out;

  struct Scored {
    const AttackChain* chain;
    double score;
  };
  std::vector<Scored> scored;
  for (const auto& c : ltm.chains()) {
    if (c.id == current.id) continue;
    const double s = params.similarity(current, c);
    if (s > 0.0 && s >= params.min_score) scored.push_back({&c, s});
  }
  std::stable_sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.chain->last_time() != b.chain->last_time()) return a.chain->last_time() > b.chain->last_time();
    return a.chain->id > b.chain->id;
  });
  if (scored.size() > params.top_k) scored.resize(params.top_k);

  const auto cur_nodes = current.nodes();
  std::map<NodeId, double> votes;
  std::vector<std::pair<const Scored*, std::vector<NodeId>>> continuations;
  for (const auto& s : scored) {
    const auto nodes = s.chain->nodes();
    const auto row = detail::lcs_last_row(cur_nodes, nodes);
    // Shortest prefix of the stored chain that already attains the full LCS.
    std::size_t aligned = 0;
    while (aligned < nodes.size() && row[aligned] < row.back()) ++aligned;
    if (aligned >= nodes.size()) continue;
    std::vector<NodeId> cont(nodes.begin() + static_cast<std::ptrdiff_t>(aligned), nodes.end());
    votes[cont.front()] += s.score;
    continuations.emplace_back(&s, std::move(cont));
  }
  if (votes.empty()) return out;
  NodeId winner = votes.begin()->first;
  for (const auto& [n, w] : votes) {
    if (w > votes[winner]) winner = n;
  }
  for (const auto& [s, cont] : continuations) {
    if (cont.front() != winner) continue;
    if (out.source_chains.empty()) {
      out.predicted_next_nodes = cont;
      out.match_score = s->score;
    }
    out.source_chains.push_back(s->chain->id);
  }
  return out;
}

/// Text block for the planner observation: previous cycle plus any chain
/// prediction.
inline std::string memory_digest(const ShortTermMemory& stm, const std::vector<std::string>& subnet_names,
                                 const std::vector<std::pair<SubnetId, ChainPrediction>>& predictions) {
  std::string out;
  if (stm.prev_action) {
    out += "Previous actions:";
    if (stm.prev_action->empty()) out += " none";
    for (const auto& a : *stm.prev_action) out += " [" + describe(a, subnet_names) + "]";
    out += "\n";
  }
  if (!stm.current_state_digest.empty()) out += "State after previous cycle: " + stm.current_state_digest + "\n";
  for (const auto& [subnet, p] : predictions) {
    if (p.empty()) continue;
    out += "Predicted attack chain in " + subnet_names.at(subnet.index()) + ":";
    for (NodeId n : p.predicted_next_nodes) out += " " + std::to_string(n.value);
    out += fmt::format(" (match score {:.2f})\n", p.match_score);
  }
  if (!out.empty() && out.back() == '\n') out.pop_back();
  return out;
}

}  // namespace cyberops
