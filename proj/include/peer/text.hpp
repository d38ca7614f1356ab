#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace peer::text {

// Half-open byte range [begin, end) into some text.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  std::string_view of(std::string_view s) const { return s.substr(begin, end - begin); }
  friend bool operator==(const Span&, const Span&) = default;
};

bool is_space(char c);
std::string_view trim(std::string_view s);
std::string_view trim_right(std::string_view s);
std::string to_lower(std::string_view s);
std::size_t utf8_length(std::string_view s);
bool is_utf8_boundary(std::string_view s, std::size_t pos);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

// Words are maximal runs of non-whitespace.
std::vector<Span> word_spans(std::string_view s);
std::vector<std::string_view> words(std::string_view s);
std::size_t word_count(std::string_view s);

// Paragraphs are blocks separated by one or more blank lines.
std::vector<Span> paragraph_spans(std::string_view s);

struct Sentence {
  std::size_t first_word = 0;  // index into word_spans()
  std::size_t end_word = 0;    // exclusive
  Span chars;
};

// Boundary: a word ending in . ? or ! (ignoring closing quotes, brackets and
// trailing citation markers) followed by a word starting with an uppercase
// letter, a quote or an opening bracket; line breaks always separate.
// Common abbreviations and single-letter initials never end a sentence.
std::vector<Sentence> split_sentences(std::string_view s);

// Byte spans of "[[[...]]]" markers in `s`, in order.
std::vector<Span> marker_spans(std::string_view s);

// Counts model-budget units. The default splits on whitespace and emits
// every ASCII punctuation character as its own unit; a backend-specific
// subword tokenizer can be plugged in instead.
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::vector<Span> tokenize(std::string_view s) const = 0;

  std::size_t count(std::string_view s) const { return tokenize(s).size(); }
  // Byte length of the longest prefix holding at most `budget` units.
  std::size_t prefix_within(std::string_view s, std::size_t budget) const;
};

class UnitTokenizer final : public Tokenizer {
 public:
  std::vector<Span> tokenize(std::string_view s) const override;
};

const Tokenizer& default_tokenizer();

// mteval-v13a style tokenization (the convention used by BLEU/SARI tooling).
std::string tokenize_13a(std::string_view s);

// Tokens used by every metric: optionally lowercased, then 13a-tokenized.
std::vector<std::string> metric_tokens(std::string_view s, bool lowercase = true);

}  // namespace peer::text
