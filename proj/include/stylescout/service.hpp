#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <shared_mutex>
#include <string>

#include <json.hpp>

#include "stylescout/backend.hpp"
#include "stylescout/session.hpp"
#include "stylescout/synthetic_backend.hpp"

namespace httplib {
class Server;
}

namespace stylescout {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string backend = "synthetic";  // "synthetic" or "process"
  SyntheticConfig synthetic;
  std::string backend_command;        // for "process": a wire-protocol backend
  SessionConfig defaults;             // hyperparameters for new sessions
  std::string log_path;               // empty: request logs go to stderr

  static ServiceConfig from_json(const nlohmann::json& j);
  static ServiceConfig load(const std::string& path);
};

std::unique_ptr<GeneratorBackend> make_backend(const ServiceConfig& config);

/// Session-scoped JSON API over the engine.
///
/// Routes (bodies are JSON; every reply carries "revision" and "node_id"):
///   POST   /sessions                      {seed?, config?}
///   POST   /sessions/import               <session export>
///   GET    /sessions/{id}
///   GET    /sessions/{id}/export
///   POST   /sessions/{id}/highlight       {masks: [{exemplar_id, rows}]}
///   POST   /sessions/{id}/sample          {n?, k?}
///   POST   /sessions/{id}/scatter         {gathered_cluster_ids, n?, k?}
///   POST   /sessions/{id}/back
///   POST   /sessions/{id}/clusters        {k, node_id?}
///   POST   /sessions/{id}/more            {n?, node_id?}
///   POST   /sessions/{id}/test            {direction_id, base_id, lambda?}
///   GET    /sessions/{id}/bookmarks
///   POST   /sessions/{id}/bookmarks       {direction_id}
///   DELETE /sessions/{id}/bookmarks       {direction_id}
/// Mutating bodies may carry "revision"; a stale one is answered with 409.
/// Errors: 404 unknown ids, 409 stale revision, 422 contract violations,
/// 502 backend failure.
class Service {
 public:
  struct Response {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
  };

  Service(const GeneratorBackend& backend, SessionConfig defaults = {}, std::ostream* log = nullptr);

  Response handle(const std::string& method, const std::string& path, const std::string& body);

  /// Registers every route on `server`, forwarding to handle().
  void bind(httplib::Server& server);

  std::size_t session_count() const;

  /// Last published view of a session: the GET body, its export and the
  /// revision both belong to.
  struct Snapshot {
    std::string state;
    std::string export_json;
    std::uint64_t revision = 0;
  };
  std::shared_ptr<const Snapshot> snapshot(const std::string& id) const;

 private:
  struct Live {
    explicit Live(Session s) : session(std::move(s)) {}
    Session session;
    std::mutex write;
    std::uint64_t revision = 0;
    std::chrono::system_clock::time_point created;
    std::chrono::system_clock::time_point updated;
    std::map<DirectionId, std::string> thumbnails;  // base64 PNG at the default strength
    std::shared_ptr<const Snapshot> snapshot;         // atomic_load / atomic_store only
  };

  nlohmann::json route(const std::string& method, const std::vector<std::string>& parts, const nlohmann::json& body,
                       std::string& raw, std::string& session_id);
  std::shared_ptr<Live> find(const std::string& id) const;
  std::string add(Session session);
  const std::string& thumbnail(Live& live, DirectionId id) const;
  nlohmann::json node_view(Live& live, NodeId id, bool thumbnails) const;
  void publish(const std::string& id, Live& live);

  const GeneratorBackend& backend_;
  SessionConfig defaults_;
  std::ostream* log_;
  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Live>> sessions_;
  std::uint64_t next_session_ = 1;
  std::mutex log_mutex_;
};

/// Blocking server loop for the CLI.
int run_service(const ServiceConfig& config);

}  // namespace stylescout
