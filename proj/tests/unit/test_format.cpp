#include <doctest.h>

#include <fstream>

#include "peer/errors.hpp"
#include "peer/format.hpp"

using namespace peer;
using namespace peer::format;

namespace {

SourceDocument doc(std::string id, std::string domain, std::string title, std::string content) {
  return {std::move(id), std::move(domain), std::move(title), std::move(content)};
}

DocumentSet three_docs() {
  DocumentSet s;
  s.add(doc("d0", "a.com", "A", "alpha text"), Provenance::kCited);
  s.add(doc("d1", "b.com", "B", "beta text"), Provenance::kRetrieved);
  s.add(doc("d2", "c.com", "C", "gamma text"), Provenance::kRetrieved);
  return s;
}

}  // namespace

TEST_CASE("render and decode markers") {
  CHECK(render_marker(2, std::nullopt) == "[[[2]]]");
  CHECK(render_marker(0, std::string("Reese, who was born in Inglewood, Calif., ...")) ==
        "[[[0 quote=Reese, who was born in Inglewood, Calif., ...]]]");
  CHECK_THROWS_AS(render_marker(0, std::string("a]]]b")), InvalidMarker);
  CHECK_THROWS_AS(render_marker(0, std::string("")), InvalidMarker);

  auto d = decode_citation_markers("...Mississippi.[[[0 quote=abc]]] Next");
  REQUIRE(d.markers.size() == 1);
  CHECK(d.markers[0].doc_index == 0);
  CHECK(d.markers[0].quote == "abc");
  CHECK(d.markers[0].position == std::string("...Mississippi.").size());
  CHECK(d.text == "...Mississippi. Next");

  d = decode_citation_markers("[[[12]]]");
  REQUIRE(d.markers.size() == 1);
  CHECK(d.markers[0].doc_index == 12);
  CHECK_FALSE(d.markers[0].quote);

  d = decode_citation_markers("[[[oops");
  CHECK(d.markers.empty());
  CHECK(d.malformed.size() == 1);
  CHECK(d.text == "[[[oops");
}

TEST_CASE("encode markers") {
  std::vector<CitationMarker> ms{{5, std::nullopt, 0}};
  CHECK_THROWS_AS(encode_citation_markers("x", ms, 3), DanglingCitation);
  std::vector<CitationMarker> ok{{1, std::nullopt, 1}, {0, std::string("q"), 3}};
  CHECK(encode_citation_markers("abc", ok, 2) == "a[[[1]]]bc[[[0 quote=q]]]");
}

TEST_CASE("ref placeholders") {
  auto docs = three_docs();
  std::string s = "x[[[ref:d1]]] y[[[ref:zz quote=q]]] z[[[ref:d0 quote=w v]]]";
  auto refs = find_citation_refs(s);
  REQUIRE(refs.size() == 3);
  CHECK(refs[1].id == "zz");
  CHECK(resolve_citation_refs(s, docs) == "x[[[1]]] y z[[[0 quote=w v]]]");
  CHECK(to_citation_refs("x[[[1]]] z[[[0 quote=w v]]]", docs) == "x[[[ref:d1]]] z[[[ref:d0 quote=w v]]]");
  CHECK_THROWS_AS(to_citation_refs("[[[7]]]", docs), DanglingCitation);
}

TEST_CASE("linearize document") {
  CHECK(linearize_document(1, doc("i", "iaaf.org", "", "text")) == "[1] iaaf.org #  # text");
  std::string long_content;
  for (int i = 0; i < 300; ++i) long_content += "w" + std::to_string(i) + " ";
  auto lin = linearize_document(0, doc("i", "d", "t", long_content));
  auto content = lin.substr(std::string("[0] d # t # ").size());
  CHECK(text::default_tokenizer().count(content) == 196);

  auto parsed = parse_linearized_document("[2] c.com # Title here # body text");
  CHECK(parsed.index == 2);
  CHECK(parsed.doc.domain == "c.com");
  CHECK(parsed.doc.title == "Title here");
  CHECK(parsed.doc.content == "body text");
  parsed = parse_linearized_document("[1] iaaf.org #  # text");
  CHECK(parsed.doc.title.empty());
  CHECK(parsed.doc.content == "text");
}

TEST_CASE("truncation keeps markers whole") {
  const auto& tok = text::default_tokenizer();
  CHECK(truncate_units("a b [[[0]]] c", 4, tok) == "a b");
  CHECK(truncate_units("a b [[[0]]] c", 9, tok) == "a b [[[0]]]");
}

TEST_CASE("split plan and text") {
  auto r = split_plan_and_text("fix typo ### Hello world");
  CHECK(r.plan == "fix typo");
  CHECK(r.text == "Hello world");
  CHECK_FALSE(r.missing_separator);
  r = split_plan_and_text("no separator here");
  CHECK(r.plan.empty());
  CHECK(r.text == "no separator here");
  CHECK(r.missing_separator);
  r = split_plan_and_text(join_plan_and_text("p", "a ### b"));
  CHECK(r.plan == "p");
  CHECK(r.text == "a ### b");
}

TEST_CASE("controls prefix") {
  control::ControlSequence cs;
  cs.words = -4;
  CHECK(prepend_controls(cs, "plan ### text") == "words=-4 ### plan ### text");
  CHECK(strip_controls("words=-4 ### plan ### text") == "plan ### text");
  CHECK(strip_controls("plan ### text") == "plan ### text");
}

TEST_CASE("minimize") {
  auto [s, t] = minimize("One is here. Two is here. Three is here.", "One is here. Two was there. Three is here.");
  CHECK(s == "Two is here.");
  CHECK(t == "Two was there.");
  CHECK_THROWS_AS(minimize("Same.", "Same."), EmptyAfterMinimize);
}

TEST_CASE("build example layouts") {
  EditPair p;
  p.title = "T";
  p.source = "Old text.";
  p.target = "New text.[[[ref:d0]]]";
  auto docs = three_docs();
  auto opts = FormatOptions::deterministic();
  Rng rng(1);

  auto e = build_example(Task::kEdit, p, docs, "update", opts, rng);
  CHECK(e.input == "T ### Old text. ### [0] a.com # A # alpha text [1] b.com # B # beta text [2] c.com # C # gamma text");
  CHECK(e.output == "update ### New text.[[[0]]]");

  e = build_example(Task::kUndo, p, docs, "update", opts, rng);
  CHECK(e.input.starts_with("T ### New text.[[[0]]] ### [0] a.com"));
  CHECK(e.output == "update ### Old text.");

  e = build_example(Task::kExplain, p, docs, "update", opts, rng);
  CHECK(e.input.starts_with("T ### Old text. ### New text.[[[0]]] ### [0]"));
  CHECK(e.output == "update");

  control::ControlSequence cs;
  cs.contains = "alpha";
  e = build_example(Task::kDocument, p, docs, "update", opts, rng, cs, 0);
  CHECK(e.input == "T ### Old text. ### New text.[[[0]]] ### update");
  CHECK(e.output == "contains=alpha ### [0] a.com # A # alpha text");

  auto js = nlohmann::json(e);
  auto back = js.get<LinearizedExample>();
  CHECK(back.output == e.output);
  CHECK(back.controls == e.controls);
}

TEST_CASE("augmentations") {
  EditPair p;
  p.title = "T";
  p.source = "Keep this. Old one.";
  p.target = "Keep this. New one.[[[ref:d0]]]";
  auto docs = three_docs();

  FormatOptions all = FormatOptions::deterministic();
  all.drop_title_prob = all.minimize_prob = all.drop_docs_prob = 1.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    auto e = build_example(Task::kEdit, p, docs, "p", all, rng);
    CHECK(e.input.starts_with("Old one. ### [0] a.com"));
    CHECK(e.output == "p ### New one.[[[0]]]");
    auto kept = e.meta["doc_ids"].size();
    CHECK(kept >= 1);
    CHECK(kept == 3 - e.meta["augment"]["dropped_docs"].get<std::size_t>());
  }

  // Same seed, same bytes.
  FormatOptions dflt;
  Rng a(42), b(42);
  for (int i = 0; i < 20; ++i) {
    CHECK(nlohmann::json(build_example(Task::kEdit, p, docs, "p", dflt, a)).dump() ==
          nlohmann::json(build_example(Task::kEdit, p, docs, "p", dflt, b)).dump());
  }
}

TEST_CASE("budget rejection") {
  EditPair p;
  std::string big;
  for (int i = 0; i < 400; ++i) big += "w ";
  p.source = "x";
  p.target = big;
  Rng rng(0);
  CHECK_THROWS_AS(build_example(Task::kEdit, p, {}, "p", FormatOptions::deterministic(), rng), OverTokenBudget);
}

TEST_CASE("reese example fixture") {
  std::ifstream in(std::string(PEER_FIXTURE_DIR) + "/reese_example.json");
  REQUIRE(in);
  auto fx = nlohmann::json::parse(in);
  auto pair = fx["pair"].get<EditPair>();
  auto docs = fx["docs"].get<DocumentSet>();
  Rng rng(0);
  auto e = build_example(Task::kEdit, pair, docs, fx["plan"].get<std::string>(), FormatOptions::deterministic(), rng);
  CHECK(e.input == fx["expected_input"].get<std::string>());
  CHECK(e.output == fx["expected_output"].get<std::string>());
}
