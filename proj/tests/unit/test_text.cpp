#include <doctest.h>

#include "peer/text.hpp"

using namespace peer::text;

TEST_CASE("words and paragraphs") {
  CHECK(words("  a  b\tc\n") == std::vector<std::string_view>{"a", "b", "c"});
  CHECK(word_count("") == 0);
  std::string s = "one two\n\nthree\n  \n\nfour\nfive";
  auto ps = paragraph_spans(s);
  REQUIRE(ps.size() == 3);
  CHECK(ps[0].of(s) == "one two");
  CHECK(ps[1].of(s) == "three");
  CHECK(ps[2].of(s) == "four\nfive");
}

TEST_CASE("sentence splitting") {
  std::string s = "Mr. Smith went home. He slept. \"Why?\" she asked! Then it ended.[[[0]]] Done";
  auto ss = split_sentences(s);
  REQUIRE(ss.size() == 5);
  CHECK(ss[0].chars.of(s) == "Mr. Smith went home.");
  CHECK(ss[1].chars.of(s) == "He slept.");
  CHECK(ss[2].chars.of(s) == "\"Why?\" she asked!");
  CHECK(ss[3].chars.of(s) == "Then it ended.[[[0]]]");
  CHECK(ss[4].chars.of(s) == "Done");

  std::string q = "Born in Ohio.[[[0 quote=Reese, who was born. In Inglewood]]] Next one.";
  auto qs = split_sentences(q);
  REQUIRE(qs.size() == 2);
  CHECK(qs[1].chars.of(q) == "Next one.");

  CHECK(split_sentences("J. R. R. Tolkien wrote it.").size() == 1);
  CHECK(split_sentences("").empty());
}

TEST_CASE("unit tokenizer") {
  const auto& tok = default_tokenizer();
  CHECK(tok.count("Hello, world!") == 4);
  CHECK(tok.count("[[[0]]]") == 7);
  std::string s = "a b c d";
  CHECK(s.substr(0, tok.prefix_within(s, 2)) == "a b");
  CHECK(tok.prefix_within(s, 10) == s.size());
  CHECK(tok.prefix_within(s, 0) == 0);
}

TEST_CASE("13a tokenization") {
  CHECK(tokenize_13a("Hello, world.") == "Hello , world .");
  CHECK(tokenize_13a("It costs $3.50, ok?") == "It costs $ 3.50 , ok ?");
  CHECK(tokenize_13a("don't stop") == "don't stop");
  CHECK(tokenize_13a("1990-2000") == "1990 - 2000");
  CHECK(tokenize_13a("a &amp; b") == "a & b");
  CHECK(metric_tokens("The CAT.") == std::vector<std::string>{"the", "cat", "."});
}
