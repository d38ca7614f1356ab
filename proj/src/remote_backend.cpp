#include <httplib.h>

#include "peer/backend.hpp"
#include "peer/errors.hpp"

namespace peer::backend {

namespace {

// Releases a semaphore slot on scope exit.
template <typename Sem>
struct SlotGuard {
  Sem& sem;
  explicit SlotGuard(Sem& s) : sem(s) { sem.acquire(); }
  ~SlotGuard() { sem.release(); }
};

}  // namespace

RemoteBackend::RemoteBackend(std::string base_url, RemoteOptions opts)
    : url_(std::move(base_url)),
      opts_(opts),
      slots_(static_cast<std::ptrdiff_t>(std::clamp<std::size_t>(opts.max_in_flight, 1, 1024))) {
  while (!url_.empty() && url_.back() == '/') url_.pop_back();
  const std::size_t scheme = url_.find("://");
  if (scheme == std::string::npos) throw InvalidArgument("backend URL needs a scheme: '" + url_ + "'");
  const std::size_t path = url_.find('/', scheme + 3);
  host_ = path == std::string::npos ? url_ : url_.substr(0, path);
  base_path_ = path == std::string::npos ? "" : url_.substr(path);
}

RemoteBackend::~RemoteBackend() = default;

nlohmann::json RemoteBackend::post(const std::string& path, const nlohmann::json& body) const {
  SlotGuard guard(slots_);
  httplib::Client cli(host_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(opts_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(opts_.timeout - secs);
  cli.set_connection_timeout(secs.count(), static_cast<time_t>(usecs.count()));
  cli.set_read_timeout(secs.count(), static_cast<time_t>(usecs.count()));
  cli.set_write_timeout(secs.count(), static_cast<time_t>(usecs.count()));

  auto res = cli.Post(base_path_ + path, body.dump(), "application/json");
  if (!res) {
    const auto err = res.error();
    if (err == httplib::Error::Read || err == httplib::Error::Write || err == httplib::Error::ConnectionTimeout) {
      throw Timeout("backend " + url_ + path + ": " + httplib::to_string(err));
    }
    throw ProtocolError("backend " + url_ + path + " unreachable: " + httplib::to_string(err));
  }
  if (res->status != 200) {
    throw ProtocolError("backend " + url_ + path + " returned HTTP " + std::to_string(res->status));
  }
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError("backend " + url_ + path + " sent invalid JSON: " + e.what());
  }
}

std::vector<GenerationCandidate> RemoteBackend::do_generate(const GenerationRequest& req) const {
  auto j = post("/generate", req);
  try {
    return j.at("candidates").get<std::vector<GenerationCandidate>>();
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed /generate response: ") + e.what());
  }
}

ScoreResult RemoteBackend::do_score(const ScoreRequest& req) const {
  auto j = post("/score", req);
  try {
    return j.get<ScoreResult>();
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed /score response: ") + e.what());
  }
}

}  // namespace peer::backend
