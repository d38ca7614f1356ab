#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "peer/backend.hpp"
#include "peer/types.hpp"

namespace peer::engine {

enum class Mode { kAutonomous, kManual, kCollaborative };
enum class PlanSource { kUser, kModel };

std::string_view mode_name(Mode m);
Mode parse_mode(std::string_view s);
std::string_view source_name(PlanSource s);
PlanSource parse_source(std::string_view s);

struct SessionConfig {
  std::size_t max_iterations = 10;
  std::optional<double> length_penalty;
  std::optional<int> no_repeat_ngram;
  // One beam(3) output plus two top-p 0.9 samples per step.
  std::vector<backend::Decoding> recipe = {backend::Decoding::beam(3), backend::Decoding::top_p(0.9, 0),
                                           backend::Decoding::top_p(0.9, 0)};
  std::uint64_t seed = 0;
  std::size_t k = 3;
  std::size_t max_output_units = 384;
};

struct Candidate {
  std::string output;  // raw backend text, decoder prefix included
  std::string plan;
  PlanSource plan_source = PlanSource::kModel;
  std::string text;
  backend::Decoding::Kind decoding = backend::Decoding::Kind::kGreedy;
  double sum_logprob = 0;
  double mean_logprob = 0;
  bool unparseable = false;  // no plan separator; text kept verbatim
  bool over_budget = false;  // cannot be chosen
};

struct Step {
  std::string text;
  std::optional<std::string> plan;
  PlanSource plan_source = PlanSource::kModel;
  std::optional<std::string> explanation;
  std::vector<Candidate> candidates;
  std::optional<std::size_t> chosen;
};

struct SessionState {
  Mode mode = Mode::kCollaborative;
  std::optional<std::string> title;
  DocumentSet docs;  // fixed for the whole session
  SessionConfig config;
  std::vector<Step> steps;  // steps[0] holds x_0
  std::vector<Candidate> pending;
  std::optional<PlanSource> pending_source;
  bool halted = false;
  std::string halt_reason;  // "fixed_point" | "max_iterations"

  const std::string& text() const { return steps.back().text; }
  std::size_t iterations() const { return steps.size() - 1; }
};

void to_json(nlohmann::json& j, const SessionConfig& c);
void from_json(const nlohmann::json& j, SessionConfig& c);
void to_json(nlohmann::json& j, const Candidate& c);
void from_json(const nlohmann::json& j, Candidate& c);
void to_json(nlohmann::json& j, const Step& s);
void from_json(const nlohmann::json& j, Step& s);
void to_json(nlohmann::json& j, const SessionState& s);
void from_json(const nlohmann::json& j, SessionState& s);

// Throws InvalidArgument when docs exceed config.k.
SessionState new_session(std::string initial_text, DocumentSet docs, Mode mode, std::optional<std::string> title,
                         SessionConfig config = {});

// Edit-task input for the current text.
std::string edit_input(const SessionState& s);

// Generates candidates without touching the state. A user plan is forced
// as the decoder prefix "plan ### ". Throws Halted.
std::vector<Candidate> propose(const SessionState& s, const std::optional<std::string>& user_plan,
                               const backend::Backend& b);

// Stores candidates as pending (replaces any previous ones). Throws Halted.
void set_pending(SessionState& s, std::vector<Candidate> candidates);

// propose + set_pending
void step(SessionState& s, const std::optional<std::string>& user_plan, const backend::Backend& b);

// Throws Halted, NoPending, IndexOutOfRange, CandidateRejected.
void choose(SessionState& s, std::size_t index);

// Choosable candidates, beam outputs first, then by sum_logprob (stable).
std::vector<std::size_t> rank_candidates(const std::vector<Candidate>& cands);

// Fills the explanation of the last step from the explain task.
void explain(SessionState& s, const backend::Backend& b);

using Schedule = std::vector<std::optional<std::string>>;
Schedule autonomous_schedule(std::size_t n);
Schedule manual_schedule(const std::vector<std::string>& plans);
// p0, none, p1, none, ..., p_last
Schedule collaborative_schedule(const std::vector<std::string>& plans);

// Runs the schedule, auto-choosing the top-ranked candidate, until the
// schedule ends or the session halts. Throws InvalidArgument when the
// schedule is longer than max_iterations, NoViableCandidate when a step
// yields nothing choosable.
SessionState& run(SessionState& s, const backend::Backend& b, const Schedule& schedule);

// plan ### x_t[0, position) [[[
std::string make_cite_prefix(std::string_view text, std::size_t position, std::string_view plan = "Add a citation");

struct QuotePrefix {
  std::string prefix;
  backend::Constraint constraint;
};
// `position` is the byte offset of the "[[[doc_index]]]" marker in `text`.
QuotePrefix make_quote_prefix(std::string_view text, std::size_t position, std::size_t doc_index,
                              const DocumentSet& docs, std::string_view plan = "Add a quote");

// session-jsonl: a header line then one line per chosen step.
std::string export_jsonl(const SessionState& s);
// Rebuilds a state by replaying an export through choose().
SessionState replay_jsonl(std::string_view jsonl);

struct DevExample {
  std::optional<std::string> title;
  DocumentSet docs;
  std::string initial_text;
  std::string reference;
};

struct TuneResult {
  double best = 0;
  std::vector<std::pair<double, double>> scores;  // (penalty, mean Rouge-1)
};

// Runs `schedule` on every dev example per penalty and keeps the one with
// the highest mean Rouge-1 of the final text; ties go to the smallest
// penalty. Throws EmptyDataset.
TuneResult tune_length_penalty(const std::vector<DevExample>& dev, const backend::Backend& b,
                               std::vector<double> penalties, const Schedule& schedule, Mode mode,
                               const SessionConfig& base = {});

// Seeded dev/test split (100/400 for the intro experiment).
std::pair<std::vector<DevExample>, std::vector<DevExample>> split_dev_test(std::vector<DevExample> all,
                                                                           std::size_t dev_size,
                                                                           std::uint64_t seed);

}  // namespace peer::engine
