#include <doctest.h>

#include <set>

#include "peer/engine.hpp"
#include "peer/errors.hpp"
#include "peer/format.hpp"

using namespace peer;
using namespace peer::engine;
using peer::backend::MockBackend;
using peer::backend::MockScript;
using nlohmann::json;

namespace {

MockBackend mock(const char* script) { return MockBackend(MockScript::from_json(json::parse(script))); }

// Grows by one sentence per step whatever the plan.
const char* kGrowing = R"({"rules":[
  {"prefix":"Create page","output":"Create page ### {title} is a thing."},
  {"prefix":".","output":"{text} More facts."},
  {"outputs":["add info ### {text} More facts.","expand ### {text} Other facts.","fix ### {text}"]}]})";

DocumentSet three_docs() {
  DocumentSet d;
  d.add({"a", "example.com", "Alpha", "Alpha content here."}, Provenance::kCited);
  d.add({"b", "example.org", "Beta", "Beta content there."}, Provenance::kRetrieved);
  d.add({"c", "example.net", "Gamma", "Reese, who was born in Gulfport, won gold."}, Provenance::kRetrieved);
  return d;
}

}  // namespace

TEST_CASE("session creation") {
  auto s = new_session("", three_docs(), Mode::kCollaborative, std::string("PEER (Language Model)"));
  CHECK(s.text().empty());
  CHECK(s.iterations() == 0);
  CHECK_NOTHROW(new_session("", {}, Mode::kManual, std::nullopt));
  auto four = three_docs();
  four.add({"d", "x", "y", "z"}, Provenance::kRetrieved);
  CHECK_THROWS_AS(new_session("", four, Mode::kManual, std::nullopt), InvalidArgument);
}

TEST_CASE("step injects the user plan as decoder prefix") {
  auto m = mock(kGrowing);
  auto s = new_session("", three_docs(), Mode::kManual, std::string("Widget"));
  step(s, std::string("Create page"), m);
  REQUIRE(s.pending.size() == 3);
  for (const auto& c : s.pending) {
    CHECK(c.output.starts_with("Create page ### "));
    CHECK(c.plan == "Create page");
    CHECK(c.plan_source == PlanSource::kUser);
    CHECK(c.text == "Widget is a thing.");
  }
  CHECK(s.pending[0].decoding == backend::Decoding::Kind::kBeam);
  CHECK(s.pending[1].decoding == backend::Decoding::Kind::kTopP);
}

TEST_CASE("step without a plan yields model plans") {
  auto m = mock(R"({"rules":[{"outputs":["remove unsourced claim ### Short.","add detail ### Short. Long."]}]})");
  auto s = new_session("Short. Claim.", {}, Mode::kAutonomous, std::nullopt);
  step(s, std::nullopt, m);
  REQUIRE(s.pending.size() == 3);
  CHECK(s.pending[0].plan == "remove unsourced claim");
  CHECK(s.pending[0].plan_source == PlanSource::kModel);

  MockBackend echo(MockScript::echo());
  auto e = new_session("plain text", {}, Mode::kAutonomous, std::nullopt);
  step(e, std::nullopt, echo);
  CHECK(e.pending[0].text == "plain text");
  CHECK(e.pending[0].plan.empty());
  CHECK(e.pending[0].unparseable);
}

TEST_CASE("choose and halting") {
  auto m = mock(kGrowing);
  auto s = new_session("Start.", {}, Mode::kCollaborative, std::nullopt);
  CHECK_THROWS_AS(choose(s, 0), NoPending);
  step(s, std::string("Add more information"), m);
  CHECK_THROWS_AS(choose(s, 7), IndexOutOfRange);
  choose(s, 0);
  CHECK(s.steps.size() == 2);
  CHECK(s.text() == "Start. More facts.");
  CHECK_FALSE(s.halted);
  CHECK_THROWS_AS(choose(s, 0), NoPending);

  auto same = mock(R"({"rules":[{"output":"fix ### {text}"}]})");
  step(s, std::nullopt, same);
  choose(s, 2);
  CHECK(s.halted);
  CHECK(s.halt_reason == "fixed_point");
  CHECK_THROWS_AS(step(s, std::nullopt, m), Halted);
  CHECK_THROWS_AS(choose(s, 0), Halted);
}

TEST_CASE("over-budget candidates are flagged and cannot be chosen") {
  auto m = mock(R"({"rules":[{"output":"p ### {input} {input} {input}"}]})");
  SessionConfig cfg;
  cfg.max_output_units = 10;
  auto s = new_session("one two three four five", {}, Mode::kManual, std::nullopt, cfg);
  step(s, std::nullopt, m);
  CHECK(s.pending[0].over_budget);
  CHECK_THROWS_AS(choose(s, 0), CandidateRejected);
  CHECK(rank_candidates(s.pending).empty());
  CHECK_THROWS_AS(run(s, m, autonomous_schedule(1)), NoViableCandidate);
}

TEST_CASE("run: the three modes") {
  auto m = mock(kGrowing);
  SUBCASE("manual schedule executes exactly three steps") {
    auto s = new_session("", three_docs(), Mode::kManual, std::string("Widget"));
    run(s, m, manual_schedule({"Create page", "Add more information", "Add more information"}));
    CHECK(s.iterations() == 3);
    CHECK(s.text() == "Widget is a thing. More facts. More facts.");
    CHECK(s.steps[1].plan == std::optional<std::string>("Create page"));
    CHECK(s.steps[3].plan == std::optional<std::string>("Add more information"));
  }
  SUBCASE("collaborative interleaves user and model plans") {
    auto sched = collaborative_schedule({"Create page", "Add more information", "Add more information"});
    REQUIRE(sched.size() == 5);
    auto s = new_session("", three_docs(), Mode::kCollaborative, std::string("Widget"));
    run(s, m, sched);
    REQUIRE(s.iterations() == 5);
    std::vector<PlanSource> src;
    for (std::size_t i = 1; i < s.steps.size(); ++i) src.push_back(s.steps[i].plan_source);
    CHECK(src == std::vector<PlanSource>{PlanSource::kUser, PlanSource::kModel, PlanSource::kUser,
                                         PlanSource::kModel, PlanSource::kUser});
  }
  SUBCASE("autonomous with a fixed point halts after one step") {
    MockBackend echo(MockScript::from_json(json::parse(R"({"rules":[{"output":"nothing to do ### {text}"}]})")));
    auto s = new_session("Done.", {}, Mode::kAutonomous, std::nullopt);
    run(s, echo, autonomous_schedule(10));
    CHECK(s.halted);
    CHECK(s.iterations() == 1);
  }
  SUBCASE("non-converging autonomous run stops at max_iterations") {
    auto s = new_session("Go.", {}, Mode::kAutonomous, std::nullopt);
    run(s, m, autonomous_schedule(s.config.max_iterations));
    CHECK(s.halted);
    CHECK(s.halt_reason == "max_iterations");
    CHECK(s.iterations() == 10);
    CHECK_THROWS_AS(run(s, m, autonomous_schedule(11)), InvalidArgument);
  }
}

TEST_CASE("run is deterministic") {
  auto m = mock(R"({"rules":[{"outputs":["a ### {text} A.","b ### {text} B.","c ### {text} C.","d ### {text} D."],"logprob":-1}]})");
  SessionConfig cfg;
  cfg.recipe = {backend::Decoding::top_p(0.9, 0), backend::Decoding::top_p(0.9, 0)};
  cfg.seed = 11;
  auto a = new_session("X.", {}, Mode::kAutonomous, std::nullopt, cfg);
  auto b = new_session("X.", {}, Mode::kAutonomous, std::nullopt, cfg);
  run(a, m, autonomous_schedule(6));
  run(b, m, autonomous_schedule(6));
  CHECK(export_jsonl(a) == export_jsonl(b));
}

TEST_CASE("ranking puts beam first then sum") {
  std::vector<Candidate> c(4);
  c[0].decoding = backend::Decoding::Kind::kTopP;
  c[0].sum_logprob = -1;
  c[1].decoding = backend::Decoding::Kind::kTopP;
  c[1].sum_logprob = -0.5;
  c[2].decoding = backend::Decoding::Kind::kBeam;
  c[2].sum_logprob = -9;
  c[3].over_budget = true;
  CHECK(rank_candidates(c) == std::vector<std::size_t>{2, 1, 0});
}

TEST_CASE("cite prefixes") {
  const std::string x = "Sentence one. Sentence two.";
  CHECK(make_cite_prefix(x, 13) == "Add a citation ### Sentence one.[[[");
  CHECK(make_cite_prefix(x, 0) == "Add a citation ### [[[");
  CHECK(make_cite_prefix(x, x.size()).ends_with("two.[[["));
  CHECK_THROWS_AS(make_cite_prefix(x, x.size() + 1), InvalidArgument);
  CHECK_THROWS_AS(make_cite_prefix("a[[[0]]] b", 3), InvalidArgument);
  CHECK_THROWS_AS(make_cite_prefix("\xc3\xa9t\xc3\xa9", 1), InvalidArgument);
}

TEST_CASE("quote prefixes and constrained completion") {
  auto docs = three_docs();
  const std::string x = "Brittney Reese won.[[[2]]] She jumps.";
  auto q = make_quote_prefix(x, 19, 2, docs);
  CHECK(q.prefix == "Add a quote ### Brittney Reese won.[[[2 quote=");
  CHECK(q.constraint.substring_of == docs.docs[2].content);
  CHECK_THROWS_AS(make_quote_prefix(x, 19, 3, docs), DanglingCitation);
  CHECK_THROWS_AS(make_quote_prefix(x, 5, 2, docs), InvalidArgument);
  CHECK_THROWS_AS(make_quote_prefix(x, 19, 0, docs), InvalidArgument);

  auto m = mock(R"({"rules":[{"output":"{quote}]]]{rest}","quote_words":4}]})");
  backend::GenerationRequest r;
  r.input = x;
  r.decoder_prefix = q.prefix;
  r.constraint = q.constraint;
  r.decoding = backend::Decoding::top_p(0.9, 3);
  auto out = m.generate(r);
  REQUIRE(out.size() == 1);
  auto quote = backend::constrained_quote(out[0].text, q.prefix);
  REQUIRE(quote);
  CHECK(docs.docs[2].content.find(*quote) != std::string::npos);
  auto parts = format::split_plan_and_text(out[0].text);
  auto dec = format::decode_citation_markers(parts.text);
  REQUIRE(dec.markers.size() == 1);
  CHECK(dec.text == "Brittney Reese won. She jumps.");
}

TEST_CASE("session-jsonl export and replay") {
  auto m = mock(kGrowing);
  auto s = new_session("", three_docs(), Mode::kManual, std::string("Widget"));
  auto fresh = export_jsonl(s);
  CHECK(std::count(fresh.begin(), fresh.end(), '\n') == 1);

  run(s, m, manual_schedule({"Create page", "Add more information", "Add more information"}));
  auto out = export_jsonl(s);
  CHECK(std::count(out.begin(), out.end(), '\n') == 4);
  auto first = json::parse(out.substr(0, out.find('\n')));
  CHECK(first["type"] == "header");
  CHECK(first["title"] == "Widget");

  auto back = replay_jsonl(out);
  CHECK(back.text() == s.text());
  CHECK(export_jsonl(back) == out);
  CHECK(json(back).dump() == json(s).dump());

  CHECK_THROWS_AS(replay_jsonl(""), ParseError);
  CHECK_THROWS_AS(replay_jsonl(R"({"type":"step","text":"x","chosen":0})"), ParseError);
}

TEST_CASE("state JSON round-trip keeps pending candidates") {
  auto m = mock(kGrowing);
  auto s = new_session("A.", three_docs(), Mode::kCollaborative, std::nullopt);
  step(s, std::nullopt, m);
  auto back = json(s).get<SessionState>();
  CHECK(json(back) == json(s));
  CHECK(back.pending.size() == 3);
  CHECK(back.pending_source == std::optional(PlanSource::kModel));
}

TEST_CASE("explain fills the last explanation") {
  auto m = mock(R"({"rules":[{"input":"More facts\\.","output":"added facts"},{"output":"p ### {text} More facts."}]})");
  auto s = new_session("A.", {}, Mode::kManual, std::nullopt);
  CHECK_THROWS_AS(explain(s, m), InvalidArgument);
  run(s, m, manual_schedule({"p"}));
  explain(s, m);
  CHECK(s.steps.back().explanation == std::optional<std::string>("added facts"));
}

TEST_CASE("length penalty tuning") {
  // penalty 5 makes the mock write longer texts, matching the long reference
  auto m = mock(R"({"rules":[
      {"length_penalty":5.0,"output":"Create page ### {title} is a long and detailed thing."},
      {"output":"Create page ### {title}."}]})");
  std::vector<DevExample> dev(3);
  for (auto& d : dev) {
    d.title = "Widget";
    d.reference = "Widget is a long and detailed thing.";
  }
  auto sched = manual_schedule({"Create page"});
  auto r = tune_length_penalty(dev, m, {2.0, 5.0}, sched, Mode::kManual);
  CHECK(r.best == 5.0);
  REQUIRE(r.scores.size() == 2);
  CHECK(r.scores[1].second > r.scores[0].second);
  CHECK(tune_length_penalty(dev, m, {7.0}, sched, Mode::kManual).best == 7.0);

  MockBackend flat(MockScript::from_json(json::parse(R"({"rules":[{"output":"Create page ### same"}]})")));
  CHECK(tune_length_penalty(dev, flat, {5.0, 2.0, 3.0}, sched, Mode::kManual).best == 2.0);
  CHECK_THROWS_AS(tune_length_penalty({}, m, {1.0}, sched, Mode::kManual), EmptyDataset);
}

TEST_CASE("dev/test split") {
  std::vector<DevExample> all(500);
  for (std::size_t i = 0; i < all.size(); ++i) all[i].reference = std::to_string(i);
  auto [dev, test] = split_dev_test(all, 100, 1);
  CHECK(dev.size() == 100);
  CHECK(test.size() == 400);
  std::set<std::string> ids;
  for (auto& d : dev) ids.insert(d.reference);
  for (auto& d : test) ids.insert(d.reference);
  CHECK(ids.size() == 500);
  CHECK(split_dev_test(all, 100, 1).first[0].reference == dev[0].reference);
}
