#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>

#include "peer/diff.hpp"

namespace peer::control {

enum class PlanType { kInstruction, kOther };
enum class Length { kS, kM, kL, kXL };

std::string_view to_string(PlanType t);
std::string_view to_string(Length l);
Length parse_length(std::string_view s);

// Ordered key=value controls. Encoded keys always appear in the order
// type, length, overlap, words, contains.
struct ControlSequence {
  std::optional<PlanType> type;
  std::optional<Length> length;
  std::optional<bool> overlap;
  std::optional<std::int64_t> words;
  std::optional<std::string> contains;

  bool empty() const { return !type && !length && !overlap && !words && !contains; }
  friend bool operator==(const ControlSequence&, const ControlSequence&) = default;
};

// Space-joined "key=value" pairs. `contains` is rendered last and may hold
// spaces. Throws InvalidControl for an empty `contains`.
std::string encode_controls(const ControlSequence& cs);

// Inverse of encode_controls. Throws UnknownKey or InvalidControl.
ControlSequence decode_controls(std::string_view s);

// Whitespace word count: <2 -> s, 2-3 -> m, 4-5 -> l, >=6 -> xl.
Length classify_length(std::string_view plan);

class Lexicon {
 public:
  Lexicon() = default;
  explicit Lexicon(std::string_view one_word_per_line);
  static Lexicon from_file(const std::string& path);

  // Bundled base-form verb lexicon and stopword list.
  static const Lexicon& verbs();
  static const Lexicon& stopwords();

  bool contains(std::string_view w) const { return words_.count(std::string(w)) > 0; }
  std::size_t size() const { return words_.size(); }

 private:
  std::unordered_set<std::string> words_;
};

// True iff the lowercased first word is a base-form verb.
bool is_instruction(std::string_view plan, const Lexicon& verbs = Lexicon::verbs());

// True iff a content word of the plan also appears among the inserted or
// deleted words of any hunk. Words are lowercased and stripped of
// surrounding punctuation; stopwords are ignored.
bool has_overlap(std::string_view plan, const diff::DiffSet& d,
                 const Lexicon& stopwords = Lexicon::stopwords());

// Ground-truth explain controls (type, length, overlap) for a plan and edit.
ControlSequence label_explain(std::string_view plan, std::string_view source, std::string_view target);

// Ground-truth undo control: the signed change in word count that the undo
// output induces, word_count(undo output) - word_count(undo input).
std::int64_t words_delta(std::string_view undo_input, std::string_view undo_output);

}  // namespace peer::control
