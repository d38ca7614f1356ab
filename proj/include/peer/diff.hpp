#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace peer::diff {

enum class Op { kInsert, kDelete, kReplace };

std::string_view op_name(Op op);
Op parse_op(std::string_view name);

// Half-open word index range.
struct Range {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  friend bool operator==(const Range&, const Range&) = default;
};

// One maximal run of non-equal alignment columns.
struct Hunk {
  Op op = Op::kReplace;
  Range source_span;
  Range target_span;
  std::vector<std::string> source_words;
  std::vector<std::string> target_words;

  friend bool operator==(const Hunk&, const Hunk&) = default;
};

struct DiffSet {
  std::vector<Hunk> hunks;

  bool empty() const { return hunks.empty(); }
  std::size_t size() const { return hunks.size(); }
  friend bool operator==(const DiffSet&, const DiffSet&) = default;
};

// Alignment over arbitrary token sequences. Among all alignments with the
// maximum number of matches, picks the one whose column sequence is
// lexicographically smallest under match < delete < insert; consecutive
// non-match columns are fused into a single hunk.
DiffSet diff_tokens(std::span<const std::string_view> a, std::span<const std::string_view> b);

// Word-level diff; a word is a maximal run of non-whitespace, compared
// case-sensitively.
DiffSet word_diff(std::string_view a, std::string_view b);

// Applies hunks to the words of `source`. Whitespace is not part of the
// word model, so the result joins words with single spaces.
std::vector<std::string> apply_words(std::span<const std::string_view> source, const DiffSet& d);
std::string apply(std::string_view source, const DiffSet& d);

// Exact match after trimming trailing whitespace.
bool em(std::string_view pred, std::string_view gold);

// |gold hunks ∩ pred hunks| / max(|gold hunks|, |pred hunks|), where hunks
// are diffs against the shared source and two hunks are equal when op,
// source span, and both word lists agree. 1 when both diffs are empty.
double em_diff(std::string_view source, std::string_view gold, std::string_view pred);

struct AffectedParagraphs {
  std::size_t count = 0;
  std::vector<std::size_t> source_indices;  // changed or deleted source paragraphs
  std::vector<std::size_t> target_indices;  // changed or inserted target paragraphs
};

// Paragraph-level alignment (paragraphs compared by word sequence). Each
// non-equal hunk pairs its blocks by position and contributes
// max(source blocks, target blocks) to the count.
AffectedParagraphs affected_paragraphs(std::string_view source, std::string_view target);

struct UpdatedSentence {
  std::size_t target_index = 0;  // sentence index in the target
  std::string text;              // the updated target sentence
  std::string source_context;    // source sentences touched by the same hunks
};

// Target sentences that are new or modified relative to the source.
std::vector<UpdatedSentence> updated_sentence_pairs(std::string_view source, std::string_view target);

nlohmann::json to_json(const DiffSet& d);
DiffSet diffset_from_json(const nlohmann::json& j);

}  // namespace peer::diff
