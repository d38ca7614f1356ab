#include <doctest.h>

#include "peer/control.hpp"
#include "peer/errors.hpp"
#include "peer/rng.hpp"

using namespace peer;
using namespace peer::control;

TEST_CASE("encode controls") {
  ControlSequence cs;
  cs.type = PlanType::kInstruction;
  cs.length = Length::kS;
  cs.overlap = false;
  CHECK(encode_controls(cs) == "type=instruction length=s overlap=false");

  ControlSequence w;
  w.words = -3;
  CHECK(encode_controls(w) == "words=-3");

  ControlSequence c;
  c.contains = "outperforms PEER on Natural Edits";
  CHECK(encode_controls(c) == "contains=outperforms PEER on Natural Edits");

  ControlSequence bad;
  bad.contains = "";
  CHECK_THROWS_AS(encode_controls(bad), InvalidControl);
}

TEST_CASE("decode controls") {
  auto cs = decode_controls("type=other length=xl overlap=false");
  CHECK(cs.type == PlanType::kOther);
  CHECK(cs.length == Length::kXL);
  CHECK(cs.overlap == false);
  CHECK(decode_controls("words=7").words == 7);
  CHECK_THROWS_AS(decode_controls("speed=fast"), UnknownKey);
  CHECK_THROWS_AS(decode_controls("words=07"), InvalidControl);
  CHECK_THROWS_AS(decode_controls("words=x"), InvalidControl);
  CHECK_THROWS_AS(decode_controls("length=huge"), InvalidControl);
  CHECK_THROWS_AS(decode_controls("overlap"), InvalidControl);
  CHECK(decode_controls("length=m contains=a b=c words=1").contains == "a b=c words=1");
  CHECK(decode_controls("").empty());
}

TEST_CASE("control round trip") {
  Rng rng(1);
  const std::string alphabet = "ab =xyz-";
  for (int t = 0; t < 2000; ++t) {
    ControlSequence cs;
    if (rng.bernoulli(0.5)) cs.type = rng.bernoulli(0.5) ? PlanType::kInstruction : PlanType::kOther;
    if (rng.bernoulli(0.5)) cs.length = static_cast<Length>(rng.uniform_int(0, 3));
    if (rng.bernoulli(0.5)) cs.overlap = rng.bernoulli(0.5);
    if (rng.bernoulli(0.5)) cs.words = rng.uniform_int(-1000, 1000);
    if (rng.bernoulli(0.5)) {
      std::string s(1, 'q');
      auto n = rng.uniform_int(0, 12);
      for (int i = 0; i < n; ++i) s += alphabet[rng.uniform_int(0, alphabet.size() - 1)];
      cs.contains = s;
    }
    REQUIRE(decode_controls(encode_controls(cs)) == cs);
  }
}

TEST_CASE("length buckets") {
  CHECK(classify_length("") == Length::kS);
  CHECK(classify_length("fix") == Length::kS);
  CHECK(classify_length("add citation") == Length::kM);
  CHECK(classify_length("add more citation detail") == Length::kL);
  CHECK(classify_length("add reference to JFLEG") == Length::kL);
  CHECK(classify_length("a b c d e") == Length::kL);
  CHECK(classify_length("a b c d e f") == Length::kXL);
}

TEST_CASE("instruction detection") {
  CHECK(Lexicon::verbs().size() >= 250);
  CHECK(Lexicon::stopwords().size() == 50);
  CHECK(is_instruction("add citation for JFLEG and add a bit more detail"));
  CHECK(is_instruction("Fix grammar errors"));
  CHECK_FALSE(is_instruction("Added a reference to the JFLEG paper"));
  CHECK_FALSE(is_instruction(""));
}

TEST_CASE("overlap detection") {
  const std::string src = "GLEU is used for grammatical error correction.";
  const std::string tgt = "GLEU (Napoles et al., 2017) is used for grammatical error correction.";
  auto d = diff::word_diff(src, tgt);
  CHECK(has_overlap("add reference to Napoles et al., 2017", d));
  CHECK_FALSE(has_overlap("add citation", d));
  CHECK_FALSE(has_overlap("", d));
  CHECK_FALSE(has_overlap("add reference to Napoles", diff::DiffSet{}));

  auto cs = label_explain("add citation", src, tgt);
  CHECK(encode_controls(cs) == "type=instruction length=m overlap=false");
}

TEST_CASE("words delta") {
  CHECK(words_delta("a b c d", "a b") == -2);
  CHECK(words_delta("", "a") == 1);
}
