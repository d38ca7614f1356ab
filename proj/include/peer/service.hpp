#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <shared_mutex>
#include <string>

#include <nlohmann/json.hpp>

#include "peer/backend.hpp"
#include "peer/engine.hpp"

namespace httplib {
class Server;
}

namespace peer::service {

struct ServiceOptions {
  std::filesystem::path data_dir = "peer-sessions";
  std::size_t backend_in_flight = 4;
  std::string cors_origin = "*";
  std::optional<std::filesystem::path> static_dir;  // web UI bundle
  engine::SessionConfig defaults;
};

struct SessionRecord {
  std::string id;
  engine::SessionState state;
  std::string created;
  std::string updated;
  std::filesystem::path log_path;
};

// Sessions with one append-only JSONL log each. Operations on one id are
// serialized; different ids only contend for backend slots.
class SessionStore {
 public:
  SessionStore(std::shared_ptr<const backend::Backend> backend, ServiceOptions opts);

  // Replays every log under data_dir. A torn final line (no newline) is
  // cut off. Returns the number of sessions loaded.
  std::size_t recover();

  // Payload: initial_text, docs, mode, title, config (all optional).
  // Throws InvalidArgument.
  nlohmann::json create(const nlohmann::json& payload);
  nlohmann::json get(const std::string& id) const;
  // Payload: plan (string or null), recipe (optional override).
  nlohmann::json propose(const std::string& id, const nlohmann::json& payload);
  // Payload: index.
  nlohmann::json choose(const std::string& id, const nlohmann::json& payload);
  std::string export_jsonl(const std::string& id) const;

  std::size_t size() const;
  const ServiceOptions& options() const { return opts_; }

  // Test hook: the clock used for timestamps.
  std::function<std::string()> clock;

 private:
  struct Entry {
    mutable std::mutex mu;
    SessionRecord rec;
  };
  std::shared_ptr<Entry> find(const std::string& id) const;
  void append(const Entry& e, const nlohmann::json& line) const;
  nlohmann::json summary(const SessionRecord& r) const;
  std::string new_id();

  std::shared_ptr<const backend::Backend> backend_;
  ServiceOptions opts_;
  mutable std::shared_mutex map_mu_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  mutable std::counting_semaphore<1024> slots_;
};

// HTTP front end. Routes: POST /sessions, GET /sessions/{id},
// POST /sessions/{id}/propose, POST /sessions/{id}/choose,
// GET /sessions/{id}/export, GET /healthz.
class HttpService {
 public:
  explicit HttpService(SessionStore& store);
  ~HttpService();

  // Binds (port 0 = ephemeral) and returns the bound port.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void listen();
  void stop();

 private:
  SessionStore& store_;
  std::unique_ptr<httplib::Server> srv_;
};

// HTTP status for a toolkit error code.
int http_status(const std::string& code);

}  // namespace peer::service
