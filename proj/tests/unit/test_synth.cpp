#include <doctest.h>

#include <map>

#include "peer/errors.hpp"
#include "peer/synth.hpp"
#include "peer/text.hpp"
#include "support/scripts.hpp"
#include "support/stats_oracle.hpp"

using namespace peer;
using namespace peer::synth;
using peer::backend::MockBackend;
using peer::backend::MockScript;
using nlohmann::json;

namespace {

MockBackend mock(const char* script) { return MockBackend(MockScript::from_json(json::parse(script))); }

}  // namespace

TEST_CASE("clipped-normal oracle sanity") {
  // no clipping in effect -> the mean itself
  CHECK(oracle::clipped_normal_mean(0, 1, -50, 50) == doctest::Approx(0).epsilon(1e-9));
  // symmetric clip keeps the mean
  CHECK(oracle::clipped_normal_mean(3, 2, 1, 5) == doctest::Approx(3).epsilon(1e-9));
  // clipping only the upper tail pulls the mean down
  CHECK(oracle::clipped_normal_mean(-10, 8, -40, 10) < -10);
}

TEST_CASE("words sampler") {
  WordsSampler ws;
  Rng rng(derive_seed(7, "words-test"));
  double sum = 0;
  const int n = 100000;
  std::int64_t lo = 0, hi = -100;
  for (int i = 0; i < n; ++i) {
    const auto w = ws.sample(rng);
    lo = std::min(lo, w);
    hi = std::max(hi, w);
    sum += static_cast<double>(w);
  }
  CHECK(lo >= -40);
  CHECK(hi <= 10);
  CHECK(hi == 10);  // the upper clip is hit about 0.6% of the time
  const double expected = oracle::clipped_normal_mean(-10, 8, -40, 10);
  CHECK(std::abs(sum / n - expected) < 0.5);
}

TEST_CASE("plan control policy frequencies") {
  PlanControlPolicy p;
  Rng rng(3);
  int instr = 0, no_overlap = 0;
  std::map<control::Length, int> lengths;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    auto cs = p.draw(rng);
    REQUIRE(cs.type);
    REQUIRE(cs.length);
    REQUIRE(cs.overlap);
    CHECK_FALSE(cs.words);
    instr += *cs.type == control::PlanType::kInstruction;
    no_overlap += !*cs.overlap;
    ++lengths[*cs.length];
  }
  CHECK(instr / double(n) == doctest::Approx(0.8).epsilon(0.03));
  CHECK(no_overlap / double(n) == doctest::Approx(0.8).epsilon(0.03));
  REQUIRE(lengths.size() == 4);
  for (auto& [l, c] : lengths) CHECK(c / double(n) == doctest::Approx(0.25).epsilon(0.06));
}

TEST_CASE("task inputs") {
  DocumentSet docs;
  docs.add({"a", "d.com", "T", "C"}, Provenance::kCited);
  EditContext e{std::string("Title"), "src", "tgt", docs};
  CHECK(edit_task_input(e) == "Title ### src ### [0] d.com # T # C");
  CHECK(undo_task_input(e) == "Title ### tgt ### [0] d.com # T # C");
  CHECK(explain_task_input(e) == "Title ### src ### tgt ### [0] d.com # T # C");
  CHECK(document_task_input(e, "add x") == "Title ### src ### tgt ### add x");
  e.title.reset();
  e.docs = {};
  CHECK(edit_task_input(e) == "src");
}

TEST_CASE("decompose with the shrinking undo mock") {
  MockBackend undo(testsupport::shrinking_undo());
  Rng gen(99);
  for (int c = 0; c < 40; ++c) {
    const auto n = static_cast<std::size_t>(gen.uniform_int(1, 20));
    const std::string x = testsupport::random_sentences(gen, n);
    REQUIRE(text::split_sentences(x).size() == n);
    auto d = decompose(x, std::string("Page"), {}, undo, WordsSampler{}, derive_seed(5, c));
    CHECK(d.steps.size() == n);
    CHECK_FALSE(d.truncated);
    CHECK(d.steps.back().text.empty());
    auto pairs = forward_pairs(d, "Page");
    REQUIRE(pairs.size() == n);
    CHECK(pairs.front().source.empty());
    CHECK(pairs.front().comment == "remove last sentence");
    CHECK(replay("", pairs) == x);
  }
  CHECK_THROWS_AS(decompose("  ", std::nullopt, {}, undo, WordsSampler{}, 1), InvalidArgument);
}

TEST_CASE("decompose stall budget and cap") {
  // words=-40 is the only way to make this mock shrink anything
  auto m = mock(R"({"rules":[{"prefix":"^words=-40 ### ","output":"cut ### "},{"output":"noop ### {text}"}]})");
  auto d = decompose("Alpha beta gamma.", std::nullopt, {}, m, WordsSampler{}, 1);
  REQUIRE(d.steps.size() == 1);
  CHECK(d.calls == 4);
  CHECK(d.steps[0].forced);
  CHECK(d.steps[0].words == -40);
  CHECK(d.steps[0].text.empty());

  MockBackend echo(MockScript::from_json(json::parse(R"({"rules":[{"output":"noop ### {text}"}]})")));
  const std::string x = "One two three four five six seven eight nine ten eleven twelve.";
  auto stuck = decompose(x, std::nullopt, {}, echo, WordsSampler{}, 1);
  CHECK(stuck.truncated);
  CHECK(stuck.steps.empty());
  CHECK(stuck.calls == default_cap(x));
  CHECK(default_cap(x) == 12);
}

TEST_CASE("decompose one-shot and determinism") {
  MockBackend undo(testsupport::shrinking_undo());
  DecomposeOptions once;
  once.one_shot = true;
  auto d = decompose("First one here. Second one here.", std::nullopt, {}, undo, WordsSampler{}, 1, once);
  CHECK(d.steps.size() == 1);
  CHECK_FALSE(d.truncated);
  CHECK(forward_pairs(d, "").size() == 1);

  auto a = decompose("A b c. D e f.", std::nullopt, {}, undo, WordsSampler{}, 42);
  auto b = decompose("A b c. D e f.", std::nullopt, {}, undo, WordsSampler{}, 42);
  REQUIRE(a.steps.size() == b.steps.size());
  for (std::size_t i = 0; i < a.steps.size(); ++i) CHECK(a.steps[i].words == b.steps[i].words);
  CHECK_THROWS_AS(replay("x", forward_pairs(a, "")), InvalidArgument);
}

TEST_CASE("generate_plans") {
  auto m = mock(R"({"rules":[{"outputs":["add citation","add reference to JFLEG","fix typo","Added a reference"]}]})");
  auto fx = testsupport::load_fixture(PEER_FIXTURE_DIR, "ranked_plans.json");
  EditContext e{std::nullopt, fx["source"], fx["target"], {}};
  PlanControlPolicy p;
  auto a = generate_plans(e, m, p, 17);
  auto b = generate_plans(e, m, p, 17);
  REQUIRE(a.candidates.size() == 10);
  CHECK(a.controls == b.controls);
  for (std::size_t i = 0; i < 10; ++i) CHECK(a.candidates[i].plan == b.candidates[i].plan);

  p.k = 1;
  CHECK(generate_plans(e, m, p, 17).candidates.size() == 1);

  // overlap=false: a plan naming an inserted word is flagged but kept
  p.k = 3;
  p.p_no_overlap = 1.0;
  auto o = mock(R"({"rules":[{"output":"mention Napoles"}]})");
  auto d = generate_plans(e, o, p, 1);
  CHECK(d.controls.overlap == false);
  REQUIRE(d.candidates.size() == 3);
  CHECK(d.candidates[0].violates_overlap);

  e.target = e.source;
  CHECK_THROWS_AS(generate_plans(e, m, p, 1), InvalidArgument);
}

TEST_CASE("select_best_plan on the Table 6 candidates") {
  auto fx = testsupport::load_fixture(PEER_FIXTURE_DIR, "ranked_plans.json");
  MockBackend edit(testsupport::ranked_plan_scorer(fx));
  EditContext e{std::nullopt, fx["source"], fx["target"], {}};
  std::vector<std::string> plans;
  for (auto& c : fx["candidates"]) plans.push_back(c["plan"]);

  auto sel = select_best_plan(plans, e, edit);
  CHECK(plans[sel.index] == fx["winner"]);
  REQUIRE(sel.scores.size() == 5);
  // mean log-probability per token is log(score)
  auto r = edit.score({edit_task_input(e), e.target, std::string(fx["winner"]) + " ### "});
  CHECK(std::exp(r.mean_logprob) == doctest::Approx(0.26));

  std::sort(plans.begin(), plans.end());
  do {
    CHECK(plans[select_best_plan(plans, e, edit).index] == fx["winner"]);
  } while (std::next_permutation(plans.begin(), plans.end()));

  SynthOptions mean;
  mean.likelihood = Likelihood::kMean;
  CHECK(select_best_plan({"add citation", "add reference to Napoles et al., 2017"}, e, edit, mean).index == 1);

  CHECK(select_best_plan({"only"}, e, edit).index == 0);
  CHECK(select_best_plan({"only"}, e, edit).scores.empty());
  CHECK(select_best_plan({"x", "y", "z"}, e, edit).index == 0);  // all default score
  CHECK_THROWS_AS(select_best_plan({}, e, edit), InvalidArgument);
  EditContext empty_target = e;
  empty_target.target.clear();
  CHECK_THROWS_AS(select_best_plan({"x", "y"}, empty_target, edit), ScoringFailed);
}

TEST_CASE("generate_documents filters on the literal quote") {
  const std::string quote = "outperforms PEER on Natural Edits";
  auto docs = mock(R"({"rules":[{"outputs":[
      "[0] example.org # A study # Our model outperforms PEER on Natural Edits by far.",
      "[0] example.org # Other # Nothing relevant here.",
      "not a document at all",
      "[0] example.com # Third # It clearly outperforms PEER on Natural Edits and more."]}]})");
  auto edit = mock(R"({"rules":[{"output":"{text}"}],
      "scores":[{"input":"Third","logprob":-0.1}],"default_logprob":-3})");
  EditContext e{std::nullopt, "X is good.", "X is good.[[[0 quote=" + quote + "]]]", {}};
  auto r = generate_documents(e, "Add a quote", quote, 0, docs, edit, 10, 4);
  CHECK(r.samples == 10);
  CHECK(r.survivors >= 2);
  CHECK(r.scored);
  CHECK(r.doc.content.find(quote) != std::string::npos);
  CHECK(r.doc.title == "Third");

  auto one = mock(R"({"rules":[{"outputs":["[0] a.b # T # has outperforms PEER on Natural Edits"]}]})");
  auto r1 = generate_documents(e, "Add a quote", quote, 0, one, edit, 5, 4);
  CHECK(r1.survivors == 5);
  MockBackend never_scores(MockScript::from_json(json::parse(R"({"rules":[{"output":"{text}"}]})")));
  auto single = mock(R"({"rules":[{"output":"[0] a.b # T # outperforms PEER on Natural Edits"}]})");
  auto r2 = generate_documents(e, "Add a quote", quote, 0, single, never_scores, 1, 4);
  CHECK(r2.survivors == 1);
  CHECK_FALSE(r2.scored);

  auto none = mock(R"({"rules":[{"output":"[0] a.b # T # unrelated"}]})");
  CHECK_THROWS_AS(generate_documents(e, "p", quote, 0, none, edit, 10, 1), NoValidDocument);
  CHECK_THROWS_AS(generate_documents(e, "p", "", 0, none, edit, 10, 1), InvalidArgument);
}

TEST_CASE("rewrite_plans") {
  auto explain = mock(R"({"rules":[{"outputs":["add citation","add reference to Napoles et al., 2017"]}]})");
  auto fx = testsupport::load_fixture(PEER_FIXTURE_DIR, "ranked_plans.json");
  MockBackend edit(testsupport::ranked_plan_scorer(fx));
  std::vector<EditPair> pairs(3);
  for (auto& p : pairs) {
    p.source = fx["source"];
    p.target = fx["target"];
    p.comment = "ce";
  }
  pairs[1].target = pairs[1].source;  // no edit: generate_plans refuses
  PlanControlPolicy pol;
  auto out = rewrite_plans(pairs, explain, edit, pol, 9, {}, {}, 2);
  REQUIRE(out.size() == 3);
  CHECK(out[0].comment == "add reference to Napoles et al., 2017");
  CHECK(out[0].meta["original_comment"] == "ce");
  CHECK(out[0].meta["plan_rewritten"] == true);
  CHECK(out[1].comment == "ce");
  CHECK(out[1].meta.contains("plan_rewrite_error"));
  CHECK(out[2].comment == out[0].comment);
  CHECK(rewrite_plans({}, explain, edit, pol, 9).empty());

  // single-threaded and pooled runs agree
  auto seq = rewrite_plans(pairs, explain, edit, pol, 9, {}, {}, 1);
  for (std::size_t i = 0; i < 3; ++i) CHECK(json(seq[i]) == json(out[i]));
}
