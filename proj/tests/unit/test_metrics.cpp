#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "peer/errors.hpp"
#include "peer/metrics.hpp"
#include "peer/text.hpp"
#include "support/metric_oracle.hpp"

using namespace peer;
using namespace peer::metrics;
using doctest::Approx;

namespace {

std::string random_sentence(Rng& rng, std::size_t max_len, int vocab = 5) {
  std::string s;
  auto n = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(max_len)));
  for (std::size_t i = 0; i < n; ++i) {
    if (i) s += ' ';
    s += static_cast<char>('a' + rng.uniform_int(0, vocab - 1));
  }
  return s;
}

oracle::Words toks(const std::string& s) {
  oracle::Words w;
  for (auto t : text::words(s)) w.emplace_back(t);
  return w;
}

}  // namespace

TEST_CASE("sari trivial and hand-enumerated values") {
  std::vector<std::string> r{"the cat sat"};
  CHECK(sari("the cat sat", r, "the cat sat") == Approx(100.0));
  CHECK_THROWS_AS(sari("a", {}, "a"), InvalidArgument);

  // source "a b c", ref "a d c", copy hypothesis.
  // n=1 keep P=2/3 R=1 F=0.8, del 1 (nothing deleted), add P=1 R=0 F=0
  // n=2,3 keep P=0 R=1 F=0, del 1, add F=0; n=4 all sets empty -> 1,1,1
  const double expected = 100.0 * ((0.8 + 0 + 0 + 1) / 4 + 1.0 + (0 + 0 + 0 + 1) / 4.0) / 3.0;
  std::vector<std::string> ref{"a d c"};
  CHECK(sari("a b c", ref, "a b c") == Approx(expected));
  CHECK(expected == Approx(56.6667).epsilon(1e-4));
}

TEST_CASE("sari matches the set oracle on random triples") {
  Rng rng(11);
  for (int t = 0; t < 1500; ++t) {
    std::string src = random_sentence(rng, 7), hyp = random_sentence(rng, 7);
    std::vector<std::string> refs;
    int nr = static_cast<int>(rng.uniform_int(1, 3));
    for (int i = 0; i < nr; ++i) refs.push_back(random_sentence(rng, 7));
    std::vector<oracle::Words> rw;
    for (const auto& r : refs) rw.push_back(toks(r));
    INFO(src << " | " << hyp << " | " << refs.front());
    CHECK(sari(src, refs, hyp) == Approx(oracle::sari(toks(src), rw, toks(hyp))));
  }
}

TEST_CASE("sari is case and whitespace insensitive by default") {
  std::vector<std::string> r1{"The  cat sat ."}, r2{"the cat sat."};
  CHECK(sari("A cat sat.", r1, "the Cat   sat.") == Approx(sari("a cat sat.", r2, "the cat sat.")));
}

TEST_CASE("corpus_sari pools statistics") {
  std::vector<std::string> src{"a b c", "x y z"};
  std::vector<std::vector<std::string>> refs{{"a d c"}, {"x y z"}};
  std::vector<std::string> copy = src;
  auto s = corpus_sari_scores(src, refs, copy);
  // copy: nothing added or deleted -> add and del pools empty -> 0
  CHECK(s.add == Approx(0.0));
  CHECK(s.del == Approx(0.0));
  // keep recall is 1; precision per n: kept good / kept
  // n=1: (2+3)/6, n=2: (0+2)/4, n=3: (0+1)/2, n=4: 0/0 -> 0
  auto f = [](double p) { return 2 * p / (1 + p); };
  CHECK(s.keep == Approx(100.0 * (f(5.0 / 6) + f(0.5) + f(0.5) + 0) / 4));
  CHECK(corpus_sari(src, refs, copy) == Approx(s.sari()));
  std::vector<std::string> gold{"a d c", "x y z"};
  auto perfect = corpus_sari_scores(src, refs, gold);
  CHECK(perfect.keep == Approx(100.0 * 3 / 4));  // 4-gram pool is empty for 3-word items
  CHECK_THROWS_AS(corpus_sari(src, refs, std::vector<std::string>{"a"}), InvalidArgument);
}

TEST_CASE("gleu examples") {
  // he go home / he goes home: every bigram of the hypothesis comes from the
  // source and is absent from the reference, so the bigram match is 0.
  std::vector<std::string> s{"he go home"}, h{"he go home"};
  std::vector<std::vector<std::string>> r{{"he goes home"}};
  CHECK(gleu(s, r, h) == Approx(0.0));
  CHECK(oracle::gleu_single_ref({toks("he go home")}, {toks("he goes home")}, {toks("he go home")}) == Approx(0.0));

  // a 3-word hypothesis has no 4-grams, so even a perfect one scores 0
  std::vector<std::string> g{"he goes home"};
  CHECK(gleu(s, r, g) == Approx(0.0));
  std::vector<std::string> s4{"he go to home"}, g4{"he goes to home"};
  std::vector<std::vector<std::string>> r4{{"he goes to home"}};
  CHECK(gleu(s4, r4, g4) == Approx(100.0));
  CHECK_THROWS_AS(gleu(s, r, std::vector<std::string>{}), InvalidArgument);
}

TEST_CASE("gleu matches the count oracle with single references") {
  Rng rng(5);
  for (int t = 0; t < 300; ++t) {
    std::vector<std::string> s, h;
    std::vector<std::vector<std::string>> r;
    std::vector<oracle::Words> so, ro, ho;
    int items = static_cast<int>(rng.uniform_int(1, 4));
    for (int i = 0; i < items; ++i) {
      s.push_back(random_sentence(rng, 9, 3));
      h.push_back(random_sentence(rng, 9, 3));
      r.push_back({random_sentence(rng, 9, 3)});
      so.push_back(toks(s.back()));
      ho.push_back(toks(h.back()));
      ro.push_back(toks(r.back()[0]));
    }
    GleuOptions o;
    o.iterations = 3;
    CHECK(gleu(s, r, h, o) == Approx(oracle::gleu_single_ref(so, ro, ho)));
  }
}

TEST_CASE("gleu averages over random reference draws") {
  std::vector<std::string> s{"a b c d e"}, h{"a b c d f"};
  std::vector<std::vector<std::string>> r{{"a b c d f", "a b c d e"}};
  // per draw: ref 0 -> 100, ref 1 -> oracle value; mean over many draws ~ midpoint
  const double other = oracle::gleu_single_ref({toks(s[0])}, {toks(r[0][1])}, {toks(h[0])});
  GleuOptions o;
  o.iterations = 4000;
  const double v = gleu(s, r, h, o);
  CHECK(v == Approx((100.0 + other) / 2).epsilon(0.03));
  CHECK(gleu(s, r, h, o) == v);  // seeded
}

TEST_CASE("rouge variants") {
  CHECK(rouge("a b c", "a b c", RougeVariant::k1) == Approx(100));
  CHECK(rouge("a b c", "a b c", RougeVariant::kL) == Approx(100));
  CHECK(rouge("a b", "c d", RougeVariant::k1) == Approx(0));
  CHECK(rouge("a b c d", "a c b d", RougeVariant::kL) == Approx(75.0));
  CHECK(oracle::lcs(toks("a b c d"), toks("a c b d")) == 3);
  // bigrams: hyp {ab, bc, cd}, ref {ac, cb, bd} -> 0
  CHECK(rouge("a b c d", "a c b d", RougeVariant::k2) == Approx(0));
  CHECK(rouge("The cat, sat.", "the cat sat", RougeVariant::k1) == Approx(100));
  CHECK(rouge("", "", RougeVariant::k2) == Approx(100));
  CHECK(rouge("a", "", RougeVariant::k1) == Approx(0));
  // unigram 2 of 3 vs 2 of 4: F = 2*(2/3)(1/2)/(2/3+1/2)
  CHECK(rouge("a b x", "a b y z", RougeVariant::k1) == Approx(100 * 2 * (2.0 / 3) * 0.5 / (2.0 / 3 + 0.5)));
}

TEST_CASE("update_rouge") {
  const std::string src = "First one. Second one.";
  const std::string gold = "First one. Second one changed.";
  CHECK(update_rouge(src, gold, gold, RougeVariant::k1) == Approx(100));
  CHECK(update_rouge(src, gold, src, RougeVariant::k1) == Approx(0));
  CHECK(update_rouge(src, src, src, RougeVariant::kL) == Approx(100));
  const std::string hyp = "First one. Second one was changed.";
  // updated sentences: gold "Second one changed." vs hyp "Second one was changed."
  CHECK(update_rouge(src, gold, hyp, RougeVariant::k1) ==
        Approx(rouge("Second one was changed.", "Second one changed.", RougeVariant::k1)));
}

TEST_CASE("cite_accuracy") {
  const std::string src = "Reese was born in Inglewood. She jumps.";
  const std::string gold = "Reese was born in Inglewood.[[[0]]] She jumps.";
  CHECK(cite_accuracy(src, gold, gold).correct);
  CHECK_FALSE(cite_accuracy(src, "Reese was born in Inglewood. She jumps.[[[0]]]", gold).correct);
  CHECK_FALSE(cite_accuracy(src, "Reese was born in Inglewood.[[[1]]] She jumps.", gold).correct);
  CHECK_FALSE(cite_accuracy(src, "Reese was born in Inglewood.[[[0]]][[[1]]] She jumps.", gold).correct);
  CHECK_FALSE(cite_accuracy(src, src, gold).correct);
  // quote does not matter for placement
  CHECK(cite_accuracy(src, "Reese was born in Inglewood.[[[0 quote=born]]] She jumps.", gold).correct);
  // existing markers are not counted as new
  const std::string src2 = "A.[[[1]]] B.";
  CHECK(cite_accuracy(src2, "A.[[[1]]] B.[[[0]]]", "A.[[[1]]] B.[[[0]]]").correct);
  auto bad = cite_accuracy(src, "Reese [[[x]]] was", gold);
  CHECK(bad.undecodable);
  CHECK_FALSE(bad.correct);
}

TEST_CASE("quote_rouge") {
  const std::string src = "Reese was born.[[[0]]]";
  const std::string gold = "Reese was born.[[[0 quote=born in Inglewood Calif]]]";
  auto same = quote_rouge(src, gold, gold);
  CHECK(same.r1 == Approx(100));
  CHECK(same.r2 == Approx(100));
  CHECK(same.rl == Approx(100));
  auto none = quote_rouge(src, src, gold);
  CHECK(none.r1 == 0.0);
  CHECK(none.r2 == 0.0);
  CHECK(none.rl == 0.0);
  auto part = quote_rouge(src, "Reese was born.[[[0 quote=born in Ohio]]]", gold);
  CHECK(part.r1 == Approx(rouge("born in Ohio", "born in Inglewood Calif", RougeVariant::k1)));
}

TEST_CASE("baseline_quote") {
  Rng rng(1);
  CHECK(baseline_quote("a b c d e", QuoteStrategy::kLead, 3, rng) == "a b c");
  CHECK(baseline_quote("a b  c", QuoteStrategy::kLead, 10, rng) == "a b  c");
  Rng r1(9), r2(9);
  for (int i = 0; i < 20; ++i) {
    auto q = baseline_quote("a b c d e f g", QuoteStrategy::kRandom, 3, r1);
    CHECK(q == baseline_quote("a b c d e f g", QuoteStrategy::kRandom, 3, r2));
    CHECK(text::word_count(q) == 3);
    CHECK(std::string("a b c d e f g").find(q) != std::string::npos);
  }
  CHECK_THROWS_AS(baseline_quote("  ", QuoteStrategy::kLead, 1, rng), InvalidArgument);
  std::vector<std::string> qs{"a", "a b c", "a b", "a b c d"};
  CHECK(median_length(qs) == 2);
}

TEST_CASE("evaluate_dataset") {
  std::vector<EvalItem> gold{{"1", "The cat sat.", {"The cat sat down."}, {}},
                             {"2", "A dog ran.", {"A big dog ran."}, {}}};
  auto copy = copy_predictions(gold);
  auto rep = evaluate_dataset(gold, copy, {"em", "em_diff", "sari", "rouge", "gleu"});
  CHECK(rep.count == 2);
  CHECK(rep.aggregates.at("em_diff") == Approx(0.0));
  CHECK(rep.aggregates.at("em") == Approx(0.0));
  CHECK(rep.per_example.size() == 2);
  const double mean = (rep.per_example[0]["scores"]["rouge1"].get<double>() +
                       rep.per_example[1]["scores"]["rouge1"].get<double>()) /
                      2;
  CHECK(rep.aggregates.at("rouge1") == Approx(mean));
  CHECK(rep.aggregates.count("sari_mean"));

  std::vector<Prediction> perfect{{"2", "A big dog ran."}, {"1", "The cat sat down."}};
  auto best = evaluate_dataset(gold, perfect, {"em", "em_diff", "sari", "gleu"});
  CHECK(best.aggregates.at("em") == Approx(100));
  CHECK(best.aggregates.at("em_diff") == Approx(100));
  CHECK(best.aggregates.at("gleu") == Approx(100));

  CHECK_THROWS_AS(evaluate_dataset({}, {}, {"em"}), EmptyDataset);
  std::vector<Prediction> wrong{{"1", "x"}, {"3", "y"}};
  CHECK_THROWS_AS(evaluate_dataset(gold, wrong, {"em"}), IdMismatch);
  CHECK(rep.to_json()["aggregates"].contains("sari"));
  CHECK(rep.table().find("em_diff") != std::string::npos);
  CHECK(parse_metric_set("sari, gleu") == std::set<std::string>{"sari", "gleu"});
  CHECK_THROWS_AS(parse_metric_set("bleu"), InvalidArgument);
}

TEST_CASE("dataset loaders read release layouts") {
  auto dir = std::filesystem::temp_directory_path() / "peer_loader_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir / "test");
  auto write = [](const std::filesystem::path& p, const std::string& s) { std::ofstream(p) << s; };
  write(dir / "test/test.src", "he go home .\nshe like it .\n");
  for (int i = 0; i < 4; ++i) write(dir / ("test/test.ref" + std::to_string(i)), "ref" + std::to_string(i) + " a\nr b\n");
  auto j = load_task("jfleg", dir);
  REQUIRE(j.size() == 2);
  CHECK(j[0].refs.size() == 4);
  CHECK(j[0].refs[2] == "ref2 a");

  write(dir / "asset.test.orig", "x\ny\n");
  for (int i = 0; i < 10; ++i) write(dir / ("asset.test.simp." + std::to_string(i)), "s\nt\n");
  CHECK(load_task("asset", dir)[1].refs.size() == 10);

  write(dir / "wnc.tsv", "7\tsrc tok\ttgt tok\tSrc raw\tTgt raw\tPOS\n");
  auto w = load_task("wnc", dir / "wnc.tsv");
  CHECK(w[0].id == "7");
  CHECK(w[0].source == "Src raw");

  write(dir / "iter.json", R"({"before_sent":"a b","after_sent":"a c","labels":"clarity"})" "\n");
  CHECK(load_task("iterater", dir / "iter.json")[0].refs[0] == "a c");

  write(dir / "fruit.jsonl", R"({"id":"f","inputs":"Article text. [CONTEXT] (0) evidence","targets":"Article text more."})" "\n");
  CHECK(load_task("fruit", dir / "fruit.jsonl")[0].source == "Article text.");

  write(dir / "gold.jsonl", R"({"id":1,"source":"s","target":"t"})" "\n");
  auto g = load_task("natural-edits", dir / "gold.jsonl");
  CHECK(g[0].id == "1");
  CHECK(g[0].refs == std::vector<std::string>{"t"});

  write(dir / "pred.jsonl", R"({"id":"1","prediction":"t"})" "\n");
  CHECK(load_pred_jsonl(dir / "pred.jsonl")[0].text == "t");
  CHECK_THROWS_AS(load_task("jfleg", dir / "nope"), NotFound);
  CHECK_THROWS_AS(load_task("squad", dir), InvalidArgument);
  std::filesystem::remove_all(dir);
}
