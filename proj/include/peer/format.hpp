#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "peer/control.hpp"
#include "peer/rng.hpp"
#include "peer/text.hpp"
#include "peer/types.hpp"

namespace peer::format {

inline constexpr std::string_view kSeparator = " ### ";

// "[[[i]]]" or "[[[i quote=q]]]" at byte `position` of the marker-free text.
struct CitationMarker {
  std::size_t doc_index = 0;
  std::optional<std::string> quote;
  std::size_t position = 0;
  friend bool operator==(const CitationMarker&, const CitationMarker&) = default;
};

// Throws InvalidMarker when the quote is empty, contains "]]]" or ends in
// ']' (either would make the closing bracket ambiguous).
std::string render_marker(std::size_t doc_index, const std::optional<std::string>& quote);

struct DecodedText {
  std::string text;  // markers removed; malformed ones left verbatim
  std::vector<CitationMarker> markers;
  std::vector<std::size_t> malformed;  // byte offsets in `text`
};

DecodedText decode_citation_markers(std::string_view s);

// Inserts markers (ordered by position) into marker-free text. Throws
// DanglingCitation if doc_index >= num_docs.
std::string encode_citation_markers(std::string_view clean, std::span<const CitationMarker> markers,
                                    std::size_t num_docs);

// Unresolved citations in normalized corpus text carry document ids:
// "[[[ref:ID]]]" / "[[[ref:ID quote=Q]]]".
struct CitationRef {
  text::Span span;
  std::string id;
  std::optional<std::string> quote;
};

std::string render_ref(std::string_view id, const std::optional<std::string>& quote);
std::vector<CitationRef> find_citation_refs(std::string_view s);

// Ref placeholders become index markers for `docs`; refs to documents not in
// the set are dropped from the text.
std::string resolve_citation_refs(std::string_view s, const DocumentSet& docs);

// Index markers become ref placeholders. Throws DanglingCitation.
std::string to_citation_refs(std::string_view s, const DocumentSet& docs);

struct Budgets {
  std::size_t domain = 16;
  std::size_t title = 32;
  std::size_t content = 196;
};

// Keeps at most `budget` tokenizer units. A cut never lands inside a
// "[[[...]]]" marker; the whole marker is dropped instead.
std::string truncate_units(std::string_view s, std::size_t budget, const text::Tokenizer& tok);

// "[i] domain # title # content", each field truncated to its budget.
std::string linearize_document(std::size_t i, const SourceDocument& doc, const Budgets& budgets = {},
                               const text::Tokenizer& tok = text::default_tokenizer());
std::string linearize_documents(const DocumentSet& docs, const Budgets& budgets = {},
                                const text::Tokenizer& tok = text::default_tokenizer());

struct ParsedDocument {
  std::size_t index = 0;
  SourceDocument doc;
};
// Inverse of linearize_document (document-task outputs). Throws ParseError.
ParsedDocument parse_linearized_document(std::string_view s);

enum class Task { kEdit, kUndo, kExplain, kDocument };
std::string_view task_name(Task t);
Task parse_task(std::string_view s);

struct FormatOptions {
  double drop_title_prob = 0.10;
  double minimize_prob = 0.10;
  double drop_docs_prob = 0.30;
  Budgets budgets;
  std::size_t k = 3;
  std::string separator = std::string(kSeparator);
  std::size_t max_input_units = 1024;
  std::size_t max_output_units = 384;
  const text::Tokenizer* tokenizer = nullptr;  // null = default_tokenizer()

  const text::Tokenizer& tok() const { return tokenizer ? *tokenizer : text::default_tokenizer(); }
  // Same budgets, all augmentation probabilities zero.
  static FormatOptions deterministic();
};

struct LinearizedExample {
  Task task = Task::kEdit;
  std::string input;
  std::string output;
  std::optional<control::ControlSequence> controls;
  nlohmann::json meta = nlohmann::json::object();
};

void to_json(nlohmann::json& j, const LinearizedExample& e);
void from_json(const nlohmann::json& j, LinearizedExample& e);

// Edit-task input for already-resolved text: [title sep] text sep docs.
std::string edit_input(const std::optional<std::string>& title, std::string_view text, const DocumentSet& docs,
                       const FormatOptions& opts);

// plan sep text
std::string join_plan_and_text(std::string_view plan, std::string_view text, std::string_view sep = kSeparator);

struct PlanAndText {
  std::string plan;
  std::string text;
  bool missing_separator = false;
};
PlanAndText split_plan_and_text(std::string_view model_output, std::string_view sep = kSeparator);

// "controls sep output" when the sequence is non-empty.
std::string prepend_controls(const std::optional<control::ControlSequence>& cs, std::string_view output,
                             std::string_view sep = kSeparator);

// Strips a leading control sequence if one decodes cleanly.
std::string_view strip_controls(std::string_view output, std::string_view sep = kSeparator);

// Sentences of both texts touched by the word diff, each side joined by
// single spaces. Throws EmptyAfterMinimize when nothing is left.
std::pair<std::string, std::string> minimize(std::string_view source, std::string_view target);

// Builds one training example. `plan` is the plan for edit/undo/document and
// the explanation target for explain. Accepts citations either as ref
// placeholders or as index markers against `docs`.
LinearizedExample build_example(Task task, const EditPair& pair, const DocumentSet& docs, std::string_view plan,
                                const FormatOptions& opts, Rng& rng,
                                const std::optional<control::ControlSequence>& controls = std::nullopt,
                                std::size_t document_index = 0);

}  // namespace peer::format
