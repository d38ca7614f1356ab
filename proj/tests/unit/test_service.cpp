#include <doctest.h>
#include <httplib.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

#include "peer/errors.hpp"
#include "peer/service.hpp"

using namespace peer;
using namespace peer::service;
using peer::backend::MockBackend;
using peer::backend::MockScript;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const char* kScript = R"({"rules":[
  {"prefix":"Create page","output":"Create page ### {title} is a language model."},
  {"prefix":".","output":"{text} It edits text."},
  {"outputs":["remove unsourced claim ### {text}","add detail ### {text} More.","expand ### {text} Even more."]}]})";

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("peer-svc-" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::shared_ptr<const backend::Backend> scripted() {
  return std::make_shared<MockBackend>(MockScript::from_json(json::parse(kScript)));
}

json page_payload() {
  json docs = json::array();
  for (int i = 0; i < 3; ++i) {
    docs.push_back({{"id", "d" + std::to_string(i)}, {"domain", "example.com"}, {"title", "Doc"}, {"content", "Text."}});
  }
  return {{"title", "PEER (Language Model)"}, {"initial_text", ""}, {"docs", docs}};
}

int counter_clock_value = 0;

}  // namespace

TEST_CASE("store: create, propose, choose, export") {
  TempDir dir;
  SessionStore store(scripted(), {dir.path});
  auto s = store.create(page_payload());
  const std::string id = s["id"];
  CHECK(s["text"] == "");
  CHECK(s["state"]["docs"].size() == 3);
  CHECK(store.export_jsonl(id).find('\n') == store.export_jsonl(id).size() - 1);  // header only

  CHECK(store.create({{"mode", "manual"}})["state"]["docs"].empty());
  auto four = page_payload();
  four["docs"].push_back(four["docs"][0]);
  CHECK_THROWS_AS(store.create(four), InvalidArgument);
  CHECK_THROWS_AS(store.create({{"mode", "sideways"}}), InvalidArgument);
  CHECK_THROWS_AS(store.create(json::array()), InvalidArgument);

  auto p = store.propose(id, {{"plan", "Create page"}});
  REQUIRE(p["candidates"].size() == 3);
  CHECK(p["candidates"][0]["plan"] == "Create page");
  CHECK(p["candidates"][0]["plan_source"] == "user");
  CHECK(p["candidates"][0].contains("diff"));
  CHECK(store.get(id)["pending"].size() == 3);

  auto c = store.choose(id, {{"index", 1}});
  CHECK(c["iterations"] == 1);
  CHECK(c["text"] == "PEER (Language Model) is a language model.");
  CHECK_THROWS_AS(store.choose(id, {{"index", 0}}), NoPending);
  CHECK_THROWS_AS(store.choose(id, {{"index", -1}}), InvalidArgument);

  auto m = store.propose(id, json::object());
  CHECK(m["candidates"][0]["plan_source"] == "model");
  CHECK_THROWS_AS(store.choose(id, {{"index", 9}}), IndexOutOfRange);
  store.propose(id, {{"plan", "Add info on the scandal"}});
  store.choose(id, {{"index", 0}});

  auto lines = store.export_jsonl(id);
  CHECK(std::count(lines.begin(), lines.end(), '\n') == 3);
  CHECK_THROWS_AS(store.get("nope"), NotFound);
  CHECK_THROWS_AS(store.propose("nope", {}), NotFound);
}

TEST_CASE("store: halting surfaces as Halted") {
  TempDir dir;
  SessionStore store(scripted(), {dir.path});
  const std::string id = store.create({{"initial_text", "Fine as is."}, {"mode", "autonomous"}})["id"];
  auto p = store.propose(id, {{"recipe", json::array({{{"kind", "greedy"}}})}});
  REQUIRE(p["candidates"].size() == 1);
  CHECK(p["candidates"][0]["plan"] == "remove unsourced claim");
  auto c = store.choose(id, {{"index", 0}});
  CHECK(c["halted"] == true);
  CHECK(c["halt_reason"] == "fixed_point");
  CHECK_THROWS_AS(store.propose(id, {}), Halted);
  CHECK_THROWS_AS(store.propose(id, {{"recipe", json::array()}}), Halted);
}

TEST_CASE("store: restart replays logs to identical state") {
  TempDir dir;
  std::string id, before, state_before;
  {
    SessionStore store(scripted(), {dir.path});
    store.clock = [] { return "t" + std::to_string(++counter_clock_value); };
    id = store.create(page_payload())["id"];
    store.propose(id, {{"plan", "Create page"}});
    store.choose(id, {{"index", 0}});
    auto m = store.propose(id, json::object());
    int pick = 0;
    while (m["candidates"][pick]["plan"] == "remove unsourced claim") ++pick;  // would halt
    store.choose(id, {{"index", pick}});
    store.propose(id, {{"plan", "Add more information"}});  // left pending
    before = store.export_jsonl(id);
    state_before = store.get(id).dump();
  }
  SessionStore again(scripted(), {dir.path});
  CHECK(again.recover() == 1);
  CHECK(again.export_jsonl(id) == before);
  CHECK(again.get(id).dump() == state_before);
  again.choose(id, {{"index", 0}});

  // torn final line from a crash mid-append
  {
    std::ofstream out(dir.path / (id + ".jsonl"), std::ios::app);
    out << R"({"op":"choose","at":"x","ind)";
  }
  SessionStore third(scripted(), {dir.path});
  CHECK(third.recover() == 1);
  CHECK(third.get(id)["iterations"] == 3);
  third.propose(id, {});
  SessionStore fourth(scripted(), {dir.path});
  CHECK(fourth.recover() == 1);
  CHECK(fourth.get(id)["pending"].size() == 3);
}

TEST_CASE("http service end to end") {
  TempDir dir;
  ServiceOptions opts{dir.path};
  opts.cors_origin = "http://localhost:5173";
  SessionStore store(scripted(), opts);
  HttpService http(store);
  const int port = http.bind("127.0.0.1", 0);
  std::thread th([&] { http.listen(); });
  httplib::Client cli("127.0.0.1", port);
  cli.set_read_timeout(10, 0);

  auto health = cli.Get("/healthz");
  REQUIRE(health);
  CHECK(health->status == 200);
  CHECK(health->get_header_value("Access-Control-Allow-Origin") == "http://localhost:5173");

  auto created = cli.Post("/sessions", page_payload().dump(), "application/json");
  REQUIRE(created);
  CHECK(created->status == 201);
  const std::string id = json::parse(created->body)["id"];

  auto bad = cli.Post("/sessions", "{not json", "application/json");
  CHECK(bad->status == 400);
  CHECK(json::parse(bad->body)["error"]["code"] == "InvalidArgument");

  auto prop = cli.Post("/sessions/" + id + "/propose", R"({"plan":"Create page"})", "application/json");
  REQUIRE(prop);
  CHECK(prop->status == 200);
  CHECK(json::parse(prop->body)["candidates"].size() == 3);

  auto ch = cli.Post("/sessions/" + id + "/choose", R"({"index":0})", "application/json");
  CHECK(ch->status == 200);
  auto again = cli.Post("/sessions/" + id + "/choose", R"({"index":0})", "application/json");
  CHECK(again->status == 409);
  CHECK(json::parse(again->body)["error"]["code"] == "NoPending");

  auto got = cli.Get("/sessions/" + id);
  CHECK(json::parse(got->body)["iterations"] == 1);
  auto ex = cli.Get("/sessions/" + id + "/export");
  CHECK(ex->status == 200);
  CHECK(ex->body == store.export_jsonl(id));
  CHECK(cli.Get("/sessions/zzz")->status == 404);
  CHECK(cli.Options("/sessions")->status == 204);

  http.stop();
  th.join();
}

TEST_CASE("concurrent proposals") {
  TempDir dir;
  SessionStore store(scripted(), {dir.path});
  std::vector<std::string> ids;
  for (int i = 0; i < 4; ++i) ids.push_back(store.create({{"initial_text", "Start."}})["id"]);
  std::atomic<int> errors{0};
  std::vector<std::thread> ts;
  for (int t = 0; t < 8; ++t) {
    ts.emplace_back([&, t] {
      const auto& id = ids[t % 4];
      try {
        for (int k = 0; k < 5; ++k) store.propose(id, {{"plan", "Add more information"}});
      } catch (...) {
        ++errors;
      }
    });
  }
  for (auto& t : ts) t.join();
  CHECK(errors == 0);
  // every propose was logged as a whole line
  for (const auto& id : ids) {
    std::ifstream in(dir.path / (id + ".jsonl"));
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
      CHECK_NOTHROW((void)json::parse(line));
      ++n;
    }
    CHECK(n == 1 + 10);
  }
}
