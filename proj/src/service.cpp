#include "peer/service.hpp"

#include <httplib.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <random>
#include <sstream>

#include "peer/diff.hpp"
#include "peer/errors.hpp"
#include "peer/text.hpp"

namespace peer::service {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const auto t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

template <typename Sem>
struct Slot {
  Sem& s;
  explicit Slot(Sem& sem) : s(sem) { s.acquire(); }
  ~Slot() { s.release(); }
};

json with_diffs(const std::string& current, const std::vector<engine::Candidate>& cands) {
  json out = json::array();
  for (const auto& c : cands) {
    json j = c;
    j["diff"] = diff::to_json(diff::word_diff(current, c.text));
    out.push_back(std::move(j));
  }
  return out;
}

// Applies one log line to a record (create lines are handled by the caller).
void apply_log_line(SessionRecord& r, const json& line) {
  const std::string op = line.at("op").get<std::string>();
  if (op == "propose") {
    engine::set_pending(r.state, line.at("candidates").get<std::vector<engine::Candidate>>());
  } else if (op == "choose") {
    engine::choose(r.state, line.at("index").get<std::size_t>());
  } else {
    throw ParseError("unknown log op '" + op + "'");
  }
  r.updated = line.value("at", r.updated);
}

engine::SessionState state_from_create(const json& p) {
  DocumentSet docs;
  if (p.contains("docs") && !p.at("docs").is_null()) docs = p.at("docs").get<DocumentSet>();
  std::optional<std::string> title;
  if (p.contains("title") && !p.at("title").is_null()) title = p.at("title").get<std::string>();
  return engine::new_session(p.value("initial_text", ""), std::move(docs),
                             engine::parse_mode(p.value("mode", "collaborative")), std::move(title),
                             p.at("config").get<engine::SessionConfig>());
}

}  // namespace

int http_status(const std::string& code) {
  if (code == "InvalidArgument" || code == "ParseError" || code == "IndexOutOfRange" || code == "InvalidControl" ||
      code == "UnknownKey" || code == "InvalidMarker" || code == "DanglingCitation") {
    return 400;
  }
  if (code == "NotFound") return 404;
  if (code == "Halted" || code == "NoPending") return 409;
  if (code == "CandidateRejected" || code == "NoViableCandidate") return 422;
  if (code == "Timeout") return 504;
  if (code == "ProtocolError" || code == "ConstraintUnsatisfiable" || code == "EmptyOutput") return 502;
  return 500;
}

// ---- store ----

SessionStore::SessionStore(std::shared_ptr<const backend::Backend> backend, ServiceOptions opts)
    : clock(utc_now),
      backend_(std::move(backend)),
      opts_(std::move(opts)),
      slots_(static_cast<std::ptrdiff_t>(std::clamp<std::size_t>(opts_.backend_in_flight, 1, 1024))) {
  if (!backend_) throw InvalidArgument("session store needs a backend");
  std::error_code ec;
  fs::create_directories(opts_.data_dir, ec);
  if (ec) throw IoError("cannot create data dir '" + opts_.data_dir.string() + "': " + ec.message());
}

std::size_t SessionStore::recover() {
  std::vector<fs::path> logs;
  for (const auto& e : fs::directory_iterator(opts_.data_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".jsonl") logs.push_back(e.path());
  }
  std::sort(logs.begin(), logs.end());
  std::size_t loaded = 0;
  for (const auto& path : logs) {
    std::string content;
    {
      std::ifstream in(path, std::ios::binary);
      std::ostringstream ss;
      ss << in.rdbuf();
      content = ss.str();
    }
    // a crash mid-append leaves a partial last line
    if (!content.empty() && content.back() != '\n') {
      const auto cut = content.rfind('\n');
      content.resize(cut == std::string::npos ? 0 : cut + 1);
      fs::resize_file(path, content.size());
    }
    if (content.empty()) continue;

    auto entry = std::make_shared<Entry>();
    std::istringstream in(content);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception& e) {
        throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
      }
      if (lineno == 1) {
        if (j.value("op", "") != "create") throw ParseError(path.string() + ": log does not start with create");
        entry->rec.id = j.at("id").get<std::string>();
        entry->rec.created = entry->rec.updated = j.value("at", "");
        entry->rec.state = state_from_create(j.at("payload"));
        entry->rec.log_path = path;
      } else {
        apply_log_line(entry->rec, j);
      }
    }
    std::unique_lock lock(map_mu_);
    sessions_[entry->rec.id] = entry;
    ++loaded;
  }
  return loaded;
}

std::shared_ptr<SessionStore::Entry> SessionStore::find(const std::string& id) const {
  std::shared_lock lock(map_mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFound("no session '" + id + "'");
  return it->second;
}

void SessionStore::append(const Entry& e, const json& line) const {
  const std::string s = line.dump() + "\n";
  FILE* f = std::fopen(e.rec.log_path.c_str(), "ab");
  if (!f) throw IoError("cannot open session log '" + e.rec.log_path.string() + "'");
  const bool ok = std::fwrite(s.data(), 1, s.size(), f) == s.size() && std::fflush(f) == 0 && ::fsync(fileno(f)) == 0;
  std::fclose(f);
  if (!ok) throw IoError("cannot write session log '" + e.rec.log_path.string() + "'");
}

std::string SessionStore::new_id() {
  static thread_local std::mt19937_64 gen{std::random_device{}()};
  for (;;) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(gen()));
    std::string id(buf);
    std::shared_lock lock(map_mu_);
    if (!sessions_.count(id) && !fs::exists(opts_.data_dir / (id + ".jsonl"))) return id;
  }
}

json SessionStore::summary(const SessionRecord& r) const {
  return {{"id", r.id},
          {"created", r.created},
          {"updated", r.updated},
          {"text", r.state.text()},
          {"iterations", r.state.iterations()},
          {"halted", r.state.halted},
          {"halt_reason", r.state.halt_reason},
          {"pending", with_diffs(r.state.text(), r.state.pending)},
          {"state", r.state}};
}

json SessionStore::create(const json& payload) {
  if (!payload.is_object()) throw InvalidArgument("session payload must be a JSON object");
  json p = payload;
  json cfg = opts_.defaults;
  if (payload.contains("config") && payload.at("config").is_object()) cfg.update(payload.at("config"));
  p["config"] = cfg;

  auto entry = std::make_shared<Entry>();
  try {
    entry->rec.state = state_from_create(p);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("bad session payload: ") + e.what());
  }
  // normalized payload so replay does not depend on service defaults
  json normalized = {{"initial_text", entry->rec.state.text()},
                     {"docs", entry->rec.state.docs},
                     {"mode", engine::mode_name(entry->rec.state.mode)},
                     {"title", entry->rec.state.title ? json(*entry->rec.state.title) : json(nullptr)},
                     {"config", entry->rec.state.config}};
  entry->rec.id = new_id();
  entry->rec.created = entry->rec.updated = clock();
  entry->rec.log_path = opts_.data_dir / (entry->rec.id + ".jsonl");
  append(*entry, {{"op", "create"}, {"id", entry->rec.id}, {"at", entry->rec.created}, {"payload", normalized}});
  {
    std::unique_lock lock(map_mu_);
    sessions_[entry->rec.id] = entry;
  }
  return summary(entry->rec);
}

json SessionStore::get(const std::string& id) const {
  auto e = find(id);
  std::lock_guard lock(e->mu);
  return summary(e->rec);
}

json SessionStore::propose(const std::string& id, const json& payload) {
  auto e = find(id);
  std::lock_guard lock(e->mu);
  if (e->rec.state.halted) throw Halted("session '" + id + "' has halted");
  std::optional<std::string> plan;
  if (payload.is_object() && payload.contains("plan") && !payload.at("plan").is_null()) {
    if (!payload.at("plan").is_string()) throw InvalidArgument("plan must be a string or null");
    plan = payload.at("plan").get<std::string>();
    if (text::trim(*plan).empty()) plan.reset();
  }
  engine::SessionState view = e->rec.state;
  if (payload.is_object() && payload.contains("recipe")) {
    try {
      view.config.recipe = payload.at("recipe").get<std::vector<backend::Decoding>>();
    } catch (const json::exception& ex) {
      throw InvalidArgument(std::string("bad recipe: ") + ex.what());
    }
    if (view.config.recipe.empty()) throw InvalidArgument("recipe is empty");
  }
  std::vector<engine::Candidate> cands;
  {
    Slot slot(slots_);
    cands = engine::propose(view, plan, *backend_);
  }
  const std::string at = clock();
  append(*e, {{"op", "propose"}, {"at", at}, {"candidates", cands}});
  engine::set_pending(e->rec.state, std::move(cands));
  e->rec.updated = at;
  return {{"id", id}, {"candidates", with_diffs(e->rec.state.text(), e->rec.state.pending)}};
}

json SessionStore::choose(const std::string& id, const json& payload) {
  auto e = find(id);
  std::lock_guard lock(e->mu);
  if (!payload.is_object() || !payload.contains("index") || !payload.at("index").is_number_integer() ||
      payload.at("index").get<long long>() < 0) {
    throw InvalidArgument("choose needs a non-negative integer 'index'");
  }
  const auto index = payload.at("index").get<std::size_t>();
  engine::SessionState next = e->rec.state;
  engine::choose(next, index);
  const std::string at = clock();
  append(*e, {{"op", "choose"}, {"at", at}, {"index", index}});
  e->rec.state = std::move(next);
  e->rec.updated = at;
  return summary(e->rec);
}

std::string SessionStore::export_jsonl(const std::string& id) const {
  auto e = find(id);
  std::lock_guard lock(e->mu);
  return engine::export_jsonl(e->rec.state);
}

std::size_t SessionStore::size() const {
  std::shared_lock lock(map_mu_);
  return sessions_.size();
}

// ---- HTTP ----

namespace {

void send_error(httplib::Response& res, const std::string& code, const std::string& message) {
  const int status = http_status(code);
  const bool retry = code == "Timeout" || code == "ProtocolError" || code == "ConstraintUnsatisfiable";
  res.status = status;
  res.set_content(json{{"error", {{"code", code}, {"message", message}, {"retry", retry}}}}.dump(),
                  "application/json");
}

template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const Error& e) {
    send_error(res, e.code(), e.what());
  } catch (const json::exception& e) {
    send_error(res, "InvalidArgument", e.what());
  } catch (const std::exception& e) {
    send_error(res, "Internal", e.what());
  }
}

json body_json(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("request body is not JSON: ") + e.what());
  }
}

void send_json(httplib::Response& res, const json& j, int status = 200) {
  res.status = status;
  res.set_content(j.dump(), "application/json");
}

}  // namespace

HttpService::HttpService(SessionStore& store) : store_(store), srv_(std::make_unique<httplib::Server>()) {
  auto& srv = *srv_;
  const auto& opts = store_.options();
  srv.set_default_headers({{"Access-Control-Allow-Origin", opts.cors_origin},
                           {"Access-Control-Allow-Headers", "Content-Type"},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  srv.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  srv.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
    send_json(res, {{"status", "ok"}, {"sessions", store_.size()}});
  });
  srv.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, store_.create(body_json(req)), 201); });
  });
  srv.Get(R"(/sessions/([A-Za-z0-9]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, store_.get(req.matches[1])); });
  });
  srv.Post(R"(/sessions/([A-Za-z0-9]+)/propose)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, store_.propose(req.matches[1], body_json(req))); });
  });
  srv.Post(R"(/sessions/([A-Za-z0-9]+)/choose)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, store_.choose(req.matches[1], body_json(req))); });
  });
  srv.Get(R"(/sessions/([A-Za-z0-9]+)/export)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { res.set_content(store_.export_jsonl(req.matches[1]), "application/x-ndjson"); });
  });
  if (opts.static_dir && !srv.set_mount_point("/ui", opts.static_dir->string())) {
    throw IoError("static UI directory '" + opts.static_dir->string() + "' does not exist");
  }
}

HttpService::~HttpService() { stop(); }

int HttpService::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = srv_->bind_to_any_port(host);
    if (p < 0) throw IoError("cannot bind " + host);
    return p;
  }
  if (!srv_->bind_to_port(host, port)) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpService::listen() { srv_->listen_after_bind(); }

void HttpService::stop() {
  if (srv_) srv_->stop();
}

}  // namespace peer::service
