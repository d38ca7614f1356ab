#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "peer/backend.hpp"
#include "peer/control.hpp"
#include "peer/format.hpp"
#include "peer/rng.hpp"
#include "peer/types.hpp"

namespace peer::synth {

// Normal(mu, sigma) clipped to [lo, hi], rounded to an integer.
struct WordsSampler {
  double mu = -10;
  double sigma = 8;
  double lo = -40;
  double hi = 10;

  std::int64_t sample(Rng& rng) const;
};

struct PlanControlPolicy {
  std::size_t k = 10;
  double p_instruction = 0.8;
  double p_no_overlap = 0.8;

  // type, length (uniform over s/m/l/xl) and overlap for one edit.
  control::ControlSequence draw(Rng& rng) const;
};

enum class Likelihood { kSum, kMean };

struct SynthOptions {
  format::FormatOptions format = format::FormatOptions::deterministic();
  double top_p = 0.9;
  Likelihood likelihood = Likelihood::kSum;
};

// One edit x_t -> x_{t+1} with resolved index markers against `docs`.
struct EditContext {
  std::optional<std::string> title;
  std::string source;
  std::string target;
  DocumentSet docs;
};

std::string edit_task_input(const EditContext& e, const SynthOptions& o = {});
std::string undo_task_input(const EditContext& e, const SynthOptions& o = {});
std::string explain_task_input(const EditContext& e, const SynthOptions& o = {});
std::string document_task_input(const EditContext& e, std::string_view plan, const SynthOptions& o = {});

// ---- decomposition ----

struct DecomposeOptions {
  std::size_t stall_budget = 3;
  std::int64_t forced_words = -40;
  std::optional<std::size_t> cap;  // default 2 * (words / 10) + 10 undo calls
  bool one_shot = false;           // a single undo call per text
};

struct UndoStep {
  std::string plan;  // plan of the forward edit text -> previous text
  std::string text;  // x_{i-1}
  std::int64_t words = 0;
  bool forced = false;
};

struct Decomposition {
  std::string text;  // x_n
  std::vector<std::string> doc_ids;
  std::vector<UndoStep> steps;
  std::size_t calls = 0;
  bool truncated = false;  // cap hit before reaching the empty text
};

std::size_t default_cap(std::string_view text);

// Throws InvalidArgument on empty text.
Decomposition decompose(std::string_view text, const std::optional<std::string>& title, const DocumentSet& docs,
                        const backend::Backend& undo, const WordsSampler& sampler, std::uint64_t seed,
                        const DecomposeOptions& opts = {}, const SynthOptions& so = {});

// Forward training pairs, shortest text first.
std::vector<EditPair> forward_pairs(const Decomposition& d, const std::string& title);

// Applies pairs in order starting from `start`. Throws InvalidArgument when
// a pair's source does not match the running text.
std::string replay(std::string_view start, const std::vector<EditPair>& pairs);

// ---- plans ----

struct PlanCandidate {
  std::string plan;
  bool violates_overlap = false;  // soft control, kept
};

struct PlanDraw {
  control::ControlSequence controls;
  std::vector<PlanCandidate> candidates;
};

// k explain samples sharing one control draw. Throws InvalidArgument when
// source == target.
PlanDraw generate_plans(const EditContext& e, const backend::Backend& explain, const PlanControlPolicy& policy,
                        std::uint64_t seed, const SynthOptions& o = {});

struct Selection {
  std::size_t index = 0;
  std::vector<std::optional<double>> scores;  // empty when nothing was scored
};

// argmax_j log p(x_{t+1} | x_t, D_t, plan_j); ties go to the earlier plan.
// Throws InvalidArgument on no plans, ScoringFailed when every score fails.
Selection select_best_plan(const std::vector<std::string>& plans, const EditContext& e,
                           const backend::Backend& edit, const SynthOptions& o = {});

// ---- documents ----

struct DocumentResult {
  SourceDocument doc;
  std::size_t samples = 0;
  std::size_t survivors = 0;
  bool scored = false;
};

// k document samples with contains=quote; keeps those whose content holds
// the quote verbatim and picks the one that makes the edit most likely when
// placed at `document_index`. Throws NoValidDocument.
DocumentResult generate_documents(const EditContext& e, std::string_view plan, std::string_view required_quote,
                                  std::size_t document_index, const backend::Backend& doc_backend,
                                  const backend::Backend& edit, std::size_t k, std::uint64_t seed,
                                  const SynthOptions& o = {});

// ---- datasets ----

using DocResolver = std::function<DocumentSet(const EditPair&)>;

// Replaces every comment with a generated and selected plan; the original
// goes to meta.original_comment. Failures keep the comment and set
// meta.plan_rewrite_error.
std::vector<EditPair> rewrite_plans(std::vector<EditPair> pairs, const backend::Backend& explain,
                                    const backend::Backend& edit, const PlanControlPolicy& policy,
                                    std::uint64_t seed, const DocResolver& resolver = {},
                                    const SynthOptions& o = {}, std::size_t threads = 1);

}  // namespace peer::synth
