#pragma once

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>

#include "json.hpp"

#include "cyberops/harness.hpp"
#include "cyberops/planner.hpp"
#include "cyberops/scenario.hpp"

namespace cyberops {

struct GatewayConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::optional<std::filesystem::path> agents_dir;
  std::optional<RemoteBackendConfig> remote;
  std::size_t run_step_delay_ms = 0;  // pause between free-run steps

  static GatewayConfig from_json(const nlohmann::json& j) {
    GatewayConfig c;
    try {
      c.host = j.value("host", c.host);
      c.port = j.value("port", c.port);
      if (j.contains("agents_dir")) c.agents_dir = j.at("agents_dir").get<std::string>();
      if (j.contains("backend")) c.remote = RemoteBackendConfig::from_json(j.at("backend"));
      c.run_step_delay_ms = j.value("run_step_delay_ms", c.run_step_delay_ms);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("invalid gateway config: ") + e.what());
    }
    return c;
  }
};

enum class SessionMode : std::uint8_t { Paused, Running, Finished };

inline std::string to_string(SessionMode m) {
  switch (m) {
    case SessionMode::Paused: return "paused";
    case SessionMode::Running: return "running";
    case SessionMode::Finished: return "finished";
  }
  return "paused";
}

inline nlohmann::json node_json(const GlobalState& s, std::size_t i) {
  const auto& n = s.nodes[i];
  return {{"id", i},
          {"subnet", s.graph->subnet_of(node_id(i)).value},
          {"compromised", n.compromised()},
          {"isolated", n.isolated},
          {"vulnerability", n.vulnerability},
          {"hvn", n.is_hvn},
          {"entry", n.is_entry}};
}

inline nlohmann::json metrics_json(const GlobalState& s, const std::vector<SubnetMetrics>& metrics) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& m : metrics) {
    out.push_back({{"subnet", s.graph->subnet(m.subnet).name},
                   {"entry_count", m.entry_count},
                   {"avg_vulnerability", m.avg_vulnerability},
                   {"compromised_count", m.compromised_count},
                   {"isolated_count", m.isolated_count},
                   {"attack_frequency", m.attack_frequency},
                   {"critical_distance", m.critical_distance.reachable() ? nlohmann::json(m.critical_distance.value())
                                                                         : nlohmann::json(nullptr)},
                   {"penetration_speed", m.penetration_speed_known ? nlohmann::json(m.penetration_speed)
                                                                    : nlohmann::json(nullptr)},
                   {"connectivity", m.connectivity},
                   {"hvn_count", m.hvn_count}});
  }
  return out;
}

/// One live episode. Every mutation goes through `step_mutex`, so stepping
/// is single-threaded per session.
class Session {
 public:
  Session(std::string id, EpisodeRunner runner, std::string defense)
      : id_(std::move(id)), runner_(std::move(runner)), defense_(std::move(defense)) {
    snapshot_ = runner_.state();
  }
  ~Session() { stop(); }

  const std::string& id() const { return id_; }

  /// Returns nullopt when the episode has already finished.
  std::optional<nlohmann::json> step() {
    std::lock_guard lock(step_mutex_);
    return step_locked();
  }

  /// False when a step currently holds the session.
  bool try_set_instruction(std::optional<std::string> text) {
    std::unique_lock lock(step_mutex_, std::try_to_lock);
    if (!lock.owns_lock()) return false;
    runner_.set_instruction(std::move(text));
    return true;
  }

  void run(std::size_t delay_ms) {
    std::lock_guard g(thread_mutex_);
    if (mode_ != SessionMode::Paused) return;
    if (worker_.joinable()) worker_.join();
    mode_ = SessionMode::Running;
    worker_ = std::thread([this, delay_ms] {
      while (mode_ == SessionMode::Running) {
        {
          std::lock_guard lock(step_mutex_);
          if (mode_ != SessionMode::Running) break;
          step_locked();
        }
        if (delay_ms) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
        else std::this_thread::yield();
      }
    });
  }

  void pause() {
    std::lock_guard g(thread_mutex_);
    SessionMode expected = SessionMode::Running;
    mode_.compare_exchange_strong(expected, SessionMode::Paused);
    if (worker_.joinable()) worker_.join();
  }

  void stop() {
    pause();
    std::lock_guard g(thread_mutex_);
    if (worker_.joinable()) worker_.join();
  }

  SessionMode mode() const { return mode_; }

  nlohmann::json state_json() {
    std::lock_guard lock(step_mutex_);
    const auto& s = runner_.state();
    nlohmann::json nodes = nlohmann::json::array();
    for (std::size_t i = 0; i < s.size(); ++i) nodes.push_back(node_json(s, i));
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& [a, b] : s.graph->edges()) edges.push_back({a.value, b.value});
    nlohmann::json subnets = nlohmann::json::array();
    for (const auto& sn : s.graph->subnets()) subnets.push_back(sn.name);
    return {{"id", id_},
            {"scenario", runner_.scenario().name},
            {"defense", defense_},
            {"mode", to_string(mode_)},
            {"step", s.time},
            {"done", runner_.done()},
            {"terminal_reason", to_string(runner_.record().terminal_reason)},
            {"instruction", s.human_instruction ? nlohmann::json(*s.human_instruction) : nlohmann::json(nullptr)},
            {"node_count", s.size()},
            {"healthy_ratio", healthy_ratio(s)},
            {"total_reward", runner_.record().total_reward},
            {"subnets", subnets},
            {"nodes", nodes},
            {"edges", edges},
            {"metrics", metrics_json(s, runner_.metrics())}};
  }

  nlohmann::json audit_json(std::size_t from) {
    std::lock_guard lock(step_mutex_);
    const auto& entries = runner_.audit().entries();
    nlohmann::json out = nlohmann::json::array();
    for (std::size_t i = from; i < entries.size(); ++i) out.push_back(to_json(entries[i]));
    return {{"from", from}, {"total", entries.size()}, {"entries", out}};
  }

  /// Events with index >= from; waits up to `wait` for at least one.
  std::vector<std::string> events_since(std::size_t from, std::chrono::milliseconds wait, bool& finished) {
    std::unique_lock lock(event_mutex_);
    event_cv_.wait_for(lock, wait, [&] { return events_.size() > from || finished_; });
    finished = finished_;  // the batch below always runs to the last event
    if (from >= events_.size()) return {};
    return {events_.begin() + static_cast<std::ptrdiff_t>(from), events_.end()};
  }

 private:
  std::optional<nlohmann::json> step_locked() {
    if (runner_.done()) {
      mode_ = SessionMode::Finished;
      return std::nullopt;
    }
    const auto& rec = runner_.step();
    const auto& s = runner_.state();
    nlohmann::json changed = nlohmann::json::array();
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (!(s.nodes[i] == snapshot_.nodes[i])) changed.push_back(node_json(s, i));
    }
    snapshot_ = s;
    nlohmann::json delta = {{"step", s.time},
                            {"reward", rec.reward},
                            {"actions", rec.actions},
                            {"healthy_ratio", healthy_ratio(s)},
                            {"changed_nodes", changed},
                            {"metrics", metrics_json(s, runner_.metrics())},
                            {"done", runner_.done()},
                            {"terminal_reason", to_string(runner_.record().terminal_reason)}};
    if (runner_.done()) mode_ = SessionMode::Finished;
    {
      std::lock_guard lock(event_mutex_);
      events_.push_back(delta.dump());
      finished_ = runner_.done();
    }
    event_cv_.notify_all();
    return delta;
  }

  std::string id_;
  EpisodeRunner runner_;
  std::string defense_;
  GlobalState snapshot_;
  std::mutex step_mutex_;
  std::mutex thread_mutex_;
  std::thread worker_;
  std::atomic<SessionMode> mode_{SessionMode::Paused};
  std::mutex event_mutex_;
  std::condition_variable event_cv_;
  std::vector<std::string> events_;
  bool finished_ = false;
};

/// HTTP + server-sent-events front end over EpisodeRunner sessions.
class Gateway {
 public:
  explicit Gateway(GatewayConfig cfg) : cfg_(std::move(cfg)) { routes(); }
  ~Gateway() { stop(); }

  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  /// Binds (port 0 picks a free port) and returns the bound port.
  int bind() {
    if (cfg_.port == 0) {
      port_ = server_.bind_to_any_port(cfg_.host);
    } else {
      port_ = server_.bind_to_port(cfg_.host, cfg_.port) ? cfg_.port : -1;
    }
    if (port_ < 0) throw ConfigError(fmt::format("cannot bind {}:{}", cfg_.host, cfg_.port));
    return port_;
  }

  /// Blocks until stop().
  void listen() { server_.listen_after_bind(); }

  void start_background() {
    if (port_ < 0) bind();
    thread_ = std::thread([this] { listen(); });
    server_.wait_until_ready();
  }

  void stop() {
    {
      std::lock_guard g(sessions_mutex_);
      for (auto& [id, s] : sessions_) s->stop();
    }
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const { return port_; }

 private:
  static void reply(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  std::shared_ptr<Session> find(const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.path_params.at("id");
    std::lock_guard g(sessions_mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) {
      reply(res, 404, {{"error", "unknown session '" + id + "'"}});
      return nullptr;
    }
    return it->second;
  }

  std::shared_ptr<const AgentRoster> roster() {
    std::lock_guard g(sessions_mutex_);
    if (!roster_) {
      if (!cfg_.agents_dir) throw LoadError("gateway has no agents_dir configured for hierarchical sessions");
      roster_ = std::make_shared<const AgentRoster>(load_roster(*cfg_.agents_dir));
    }
    return roster_;
  }

  void routes() {
    server_.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      try {
        const auto body = req.body.empty() ? nlohmann::json::object() : nlohmann::json::parse(req.body);
        const auto scenario = load_scenario(body.value("scenario", std::string("sce1")));
        DefenseConfig defense;
        defense.kind = parse_defense_kind(body.value("defense", std::string("scripted-only")));
        const auto seed = body.value("seed", std::uint64_t{0});
        if (defense.kind == DefenseKind::Hierarchical) defense.agents = roster();
        const auto backend = body.value("backend", std::string("scripted"));
        if (backend == "remote") {
          if (!cfg_.remote) throw ConfigError("gateway has no remote backend configured");
          defense.backend = std::make_shared<RemoteBackend>(*cfg_.remote);
        } else if (backend != "scripted") {
          throw ConfigError("unknown backend '" + backend + "'");
        }
        std::string id;
        {
          std::lock_guard g(sessions_mutex_);
          id = "s" + std::to_string(++next_id_);
        }
        auto session =
            std::make_shared<Session>(id, EpisodeRunner(scenario, defense, seed), to_string(defense.kind));
        if (body.contains("instruction") && body["instruction"].is_string()) {
          session->try_set_instruction(body["instruction"].get<std::string>());
        }
        {
          std::lock_guard g(sessions_mutex_);
          sessions_[id] = session;
        }
        reply(res, 201, {{"id", id}, {"scenario", scenario.name}, {"defense", to_string(defense.kind)}, {"seed", seed}});
      } catch (const nlohmann::json::exception& e) {
        reply(res, 400, {{"error", std::string("invalid JSON body: ") + e.what()}});
      } catch (const ConfigError& e) {
        reply(res, 400, {{"error", e.what()}});
      } catch (const LoadError& e) {
        reply(res, 422, {{"error", e.what()}});
      }
    });

    server_.Post("/sessions/:id/step", [this](const httplib::Request& req, httplib::Response& res) {
      auto s = find(req, res);
      if (!s) return;
      if (s->mode() == SessionMode::Running) {
        reply(res, 409, {{"error", "session is free-running; pause it first"}});
        return;
      }
      const auto delta = s->step();
      if (!delta) {
        reply(res, 409, {{"error", "episode finished"}});
        return;
      }
      reply(res, 200, *delta);
    });

    server_.Post("/sessions/:id/run", [this](const httplib::Request& req, httplib::Response& res) {
      auto s = find(req, res);
      if (!s) return;
      s->run(cfg_.run_step_delay_ms);
      reply(res, 202, {{"id", s->id()}, {"mode", to_string(s->mode())}});
    });

    server_.Post("/sessions/:id/pause", [this](const httplib::Request& req, httplib::Response& res) {
      auto s = find(req, res);
      if (!s) return;
      s->pause();
      reply(res, 200, {{"id", s->id()}, {"mode", to_string(s->mode())}});
    });

    auto set_instruction = [this](const httplib::Request& req, httplib::Response& res, bool clear) {
      auto s = find(req, res);
      if (!s) return;
      std::optional<std::string> text;
      if (!clear) {
        try {
          const auto body = nlohmann::json::parse(req.body);
          text = body.at("text").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
          reply(res, 400, {{"error", std::string("expected {\"text\": string}: ") + e.what()}});
          return;
        }
      }
      if (!s->try_set_instruction(text)) {
        res.set_header("Retry-After", "1");
        reply(res, 409, {{"error", "a step is in flight; retry after it completes"}, {"retry_after_ms", 50}});
        return;
      }
      reply(res, 200, {{"id", s->id()}, {"instruction", text ? nlohmann::json(*text) : nlohmann::json(nullptr)}});
    };
    server_.Post("/sessions/:id/instruction",
                 [set_instruction](const httplib::Request& req, httplib::Response& res) { set_instruction(req, res, false); });
    server_.Delete("/sessions/:id/instruction",
                   [set_instruction](const httplib::Request& req, httplib::Response& res) { set_instruction(req, res, true); });

    server_.Get("/sessions/:id/state", [this](const httplib::Request& req, httplib::Response& res) {
      auto s = find(req, res);
      if (!s) return;
      reply(res, 200, s->state_json());
    });

    server_.Get("/sessions/:id/audit", [this](const httplib::Request& req, httplib::Response& res) {
      auto s = find(req, res);
      if (!s) return;
      std::size_t from = 0;
      if (req.has_param("from")) {
        try {
          from = std::stoul(req.get_param_value("from"));
        } catch (const std::exception&) {
          reply(res, 400, {{"error", "from must be a non-negative integer"}});
          return;
        }
      }
      reply(res, 200, s->audit_json(from));
    });

    // Server-sent events. ?from=k replays from event k; ?follow=0 returns
    // what exists and closes instead of waiting for more.
    server_.Get("/sessions/:id/events", [this](const httplib::Request& req, httplib::Response& res) {
      auto s = find(req, res);
      if (!s) return;
      std::size_t from = 0;
      if (req.has_param("from")) from = std::strtoul(req.get_param_value("from").c_str(), nullptr, 10);
      const bool follow = !(req.has_param("follow") && req.get_param_value("follow") == "0");
      auto cursor = std::make_shared<std::size_t>(from);
      res.set_header("Cache-Control", "no-cache");
      res.set_chunked_content_provider("text/event-stream", [s, cursor, follow](std::size_t, httplib::DataSink& sink) {
        bool finished = false;
        const auto batch = s->events_since(*cursor, std::chrono::milliseconds(follow ? 500 : 0), finished);
        for (const auto& e : batch) {
          const std::string frame = fmt::format("id: {}\nevent: step\ndata: {}\n\n", (*cursor)++, e);
          if (!sink.write(frame.data(), frame.size())) return false;
        }
        if (!follow || finished) {
          sink.done();
          return true;
        }
        if (batch.empty()) {
          static constexpr std::string_view kPing = ": keep-alive\n\n";
          if (!sink.write(kPing.data(), kPing.size())) return false;
        }
        return true;
      });
    });
  }

  GatewayConfig cfg_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
  std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::shared_ptr<const AgentRoster> roster_;
  std::size_t next_id_ = 0;
};

}  // namespace cyberops
