#include "peer/engine.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "peer/errors.hpp"
#include "peer/format.hpp"
#include "peer/metrics.hpp"
#include "peer/rng.hpp"
#include "peer/text.hpp"

namespace peer::engine {

using backend::Decoding;
using nlohmann::json;

std::string_view mode_name(Mode m) {
  switch (m) {
    case Mode::kAutonomous:
      return "autonomous";
    case Mode::kManual:
      return "manual";
    case Mode::kCollaborative:
      return "collaborative";
  }
  return "collaborative";
}

Mode parse_mode(std::string_view s) {
  if (s == "autonomous") return Mode::kAutonomous;
  if (s == "manual") return Mode::kManual;
  if (s == "collaborative") return Mode::kCollaborative;
  throw InvalidArgument("unknown mode '" + std::string(s) + "'");
}

std::string_view source_name(PlanSource s) { return s == PlanSource::kUser ? "user" : "model"; }

PlanSource parse_source(std::string_view s) {
  if (s == "user") return PlanSource::kUser;
  if (s == "model") return PlanSource::kModel;
  throw InvalidArgument("unknown plan source '" + std::string(s) + "'");
}

namespace {

format::FormatOptions options_for(const SessionConfig& c) {
  auto o = format::FormatOptions::deterministic();
  o.k = c.k;
  o.max_output_units = c.max_output_units;
  return o;
}

std::string plan_prefix(std::string_view plan) { return format::join_plan_and_text(plan, ""); }

}  // namespace

// ---- JSON ----

void to_json(json& j, const SessionConfig& c) {
  j = {{"max_iterations", c.max_iterations}, {"recipe", c.recipe}, {"seed", c.seed}, {"k", c.k},
       {"max_output_units", c.max_output_units}};
  if (c.length_penalty) j["length_penalty"] = *c.length_penalty;
  if (c.no_repeat_ngram) j["no_repeat_ngram"] = *c.no_repeat_ngram;
}

void from_json(const json& j, SessionConfig& c) {
  c = {};
  c.max_iterations = j.value("max_iterations", c.max_iterations);
  if (j.contains("recipe")) c.recipe = j.at("recipe").get<std::vector<Decoding>>();
  c.seed = j.value("seed", c.seed);
  c.k = j.value("k", c.k);
  c.max_output_units = j.value("max_output_units", c.max_output_units);
  if (j.contains("length_penalty") && !j.at("length_penalty").is_null()) c.length_penalty = j.at("length_penalty").get<double>();
  if (j.contains("no_repeat_ngram") && !j.at("no_repeat_ngram").is_null()) c.no_repeat_ngram = j.at("no_repeat_ngram").get<int>();
  if (c.max_iterations == 0) throw InvalidArgument("max_iterations must be positive");
  if (c.recipe.empty()) throw InvalidArgument("candidate recipe is empty");
}

void to_json(json& j, const Candidate& c) {
  j = {{"output", c.output},
       {"plan", c.plan},
       {"plan_source", source_name(c.plan_source)},
       {"text", c.text},
       {"decoding", backend::kind_name(c.decoding)},
       {"sum_logprob", c.sum_logprob},
       {"mean_logprob", c.mean_logprob},
       {"unparseable", c.unparseable},
       {"over_budget", c.over_budget}};
}

void from_json(const json& j, Candidate& c) {
  c.output = j.at("output").get<std::string>();
  c.plan = j.value("plan", "");
  c.plan_source = parse_source(j.value("plan_source", "model"));
  c.text = j.at("text").get<std::string>();
  Decoding d;
  backend::from_json(json{{"kind", j.value("decoding", "greedy")}}, d);
  c.decoding = d.kind;
  c.sum_logprob = j.value("sum_logprob", 0.0);
  c.mean_logprob = j.value("mean_logprob", 0.0);
  c.unparseable = j.value("unparseable", false);
  c.over_budget = j.value("over_budget", false);
}

void to_json(json& j, const Step& s) {
  j = {{"text", s.text}, {"plan_source", source_name(s.plan_source)}, {"candidates", s.candidates}};
  j["plan"] = s.plan ? json(*s.plan) : json(nullptr);
  j["explanation"] = s.explanation ? json(*s.explanation) : json(nullptr);
  j["chosen"] = s.chosen ? json(*s.chosen) : json(nullptr);
}

void from_json(const json& j, Step& s) {
  s = {};
  s.text = j.at("text").get<std::string>();
  if (j.contains("plan") && !j.at("plan").is_null()) s.plan = j.at("plan").get<std::string>();
  s.plan_source = parse_source(j.value("plan_source", "model"));
  if (j.contains("explanation") && !j.at("explanation").is_null()) s.explanation = j.at("explanation").get<std::string>();
  if (j.contains("candidates")) s.candidates = j.at("candidates").get<std::vector<Candidate>>();
  if (j.contains("chosen") && !j.at("chosen").is_null()) s.chosen = j.at("chosen").get<std::size_t>();
}

void to_json(json& j, const SessionState& s) {
  j = {{"mode", mode_name(s.mode)}, {"docs", s.docs},       {"config", s.config},
       {"steps", s.steps},          {"pending", s.pending}, {"halted", s.halted},
       {"halt_reason", s.halt_reason}};
  j["title"] = s.title ? json(*s.title) : json(nullptr);
  j["pending_source"] = s.pending_source ? json(source_name(*s.pending_source)) : json(nullptr);
}

void from_json(const json& j, SessionState& s) {
  s = {};
  s.mode = parse_mode(j.at("mode").get<std::string>());
  if (j.contains("title") && !j.at("title").is_null()) s.title = j.at("title").get<std::string>();
  s.docs = j.at("docs").get<DocumentSet>();
  s.config = j.at("config").get<SessionConfig>();
  s.steps = j.at("steps").get<std::vector<Step>>();
  s.pending = j.value("pending", std::vector<Candidate>{});
  if (j.contains("pending_source") && !j.at("pending_source").is_null()) {
    s.pending_source = parse_source(j.at("pending_source").get<std::string>());
  }
  s.halted = j.value("halted", false);
  s.halt_reason = j.value("halt_reason", "");
  if (s.steps.empty()) throw ParseError("session state without steps");
}

// ---- state machine ----

SessionState new_session(std::string initial_text, DocumentSet docs, Mode mode, std::optional<std::string> title,
                         SessionConfig config) {
  if (docs.size() > config.k) {
    throw InvalidArgument("session has " + std::to_string(docs.size()) + " documents, at most " +
                          std::to_string(config.k) + " allowed");
  }
  if (config.max_iterations == 0) throw InvalidArgument("max_iterations must be positive");
  if (config.recipe.empty()) throw InvalidArgument("candidate recipe is empty");
  if (docs.provenance.size() != docs.docs.size()) docs.provenance.assign(docs.docs.size(), Provenance::kCited);
  SessionState s;
  s.mode = mode;
  s.title = std::move(title);
  s.docs = std::move(docs);
  s.config = std::move(config);
  Step first;
  first.text = std::move(initial_text);
  s.steps.push_back(std::move(first));
  return s;
}

std::string edit_input(const SessionState& s) {
  return format::edit_input(s.title, s.text(), s.docs, options_for(s.config));
}

std::vector<Candidate> propose(const SessionState& s, const std::optional<std::string>& user_plan,
                               const backend::Backend& b) {
  if (s.halted) throw Halted("session has halted");
  const auto& tok = text::default_tokenizer();
  const std::uint64_t step_seed = derive_seed(derive_seed(s.config.seed, "engine"), s.iterations());

  backend::GenerationRequest req;
  req.input = edit_input(s);
  req.max_output_units = s.config.max_output_units;
  req.length_penalty = s.config.length_penalty;
  req.no_repeat_ngram = s.config.no_repeat_ngram;
  if (user_plan) req.decoder_prefix = plan_prefix(*user_plan);

  std::vector<Candidate> out;
  for (std::size_t i = 0; i < s.config.recipe.size(); ++i) {
    req.decoding = s.config.recipe[i];
    if (req.decoding.kind == Decoding::Kind::kTopP) req.decoding.seed = derive_seed(step_seed, i);
    auto gen = b.generate(req);
    // a beam search contributes its best hypothesis only
    if (req.decoding.kind != Decoding::Kind::kTopP && gen.size() > 1) gen.resize(1);
    for (auto& g : gen) {
      Candidate c;
      c.output = g.text;
      c.decoding = req.decoding.kind;
      c.sum_logprob = g.sum_logprob;
      c.mean_logprob = g.mean_logprob;
      c.plan_source = user_plan ? PlanSource::kUser : PlanSource::kModel;
      auto parts = format::split_plan_and_text(g.text);
      if (parts.missing_separator) {
        c.unparseable = true;
        c.text = g.text;
      } else {
        c.plan = std::move(parts.plan);
        c.text = std::move(parts.text);
      }
      c.over_budget = tok.count(g.text) > s.config.max_output_units;
      out.push_back(std::move(c));
    }
  }
  return out;
}

void set_pending(SessionState& s, std::vector<Candidate> candidates) {
  if (s.halted) throw Halted("session has halted");
  s.pending_source = candidates.empty() ? std::nullopt : std::optional(candidates.front().plan_source);
  s.pending = std::move(candidates);
}

void step(SessionState& s, const std::optional<std::string>& user_plan, const backend::Backend& b) {
  set_pending(s, propose(s, user_plan, b));
}

void choose(SessionState& s, std::size_t index) {
  if (s.halted) throw Halted("session has halted");
  if (s.pending.empty()) throw NoPending("no pending candidates to choose from");
  if (index >= s.pending.size()) {
    throw IndexOutOfRange("candidate " + std::to_string(index) + " of " + std::to_string(s.pending.size()));
  }
  const Candidate& c = s.pending[index];
  if (c.over_budget) throw CandidateRejected("candidate exceeds the output budget");

  Step next;
  next.text = c.text;
  next.plan = c.plan;
  next.plan_source = c.plan_source;
  next.chosen = index;
  next.candidates = std::move(s.pending);
  const bool fixed_point = next.text == s.text();
  s.steps.push_back(std::move(next));
  s.pending.clear();
  s.pending_source.reset();

  if (fixed_point) {
    s.halted = true;
    s.halt_reason = "fixed_point";
  } else if (s.iterations() >= s.config.max_iterations) {
    s.halted = true;
    s.halt_reason = "max_iterations";
  }
}

std::vector<std::size_t> rank_candidates(const std::vector<Candidate>& cands) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    if (!cands[i].over_budget) idx.push_back(i);
  }
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const bool ba = cands[a].decoding != Decoding::Kind::kTopP;
    const bool bb = cands[b].decoding != Decoding::Kind::kTopP;
    if (ba != bb) return ba;
    return cands[a].sum_logprob > cands[b].sum_logprob;
  });
  return idx;
}

void explain(SessionState& s, const backend::Backend& b) {
  if (s.steps.size() < 2) throw InvalidArgument("nothing to explain before the first edit");
  const auto opts = options_for(s.config);
  std::string input;
  if (s.title && !s.title->empty()) input = *s.title + opts.separator;
  input += s.steps[s.steps.size() - 2].text + opts.separator + s.text();
  if (!s.docs.empty()) input += opts.separator + format::linearize_documents(s.docs, opts.budgets, opts.tok());
  backend::GenerationRequest req;
  req.input = std::move(input);
  auto gen = b.generate(req);
  if (gen.empty()) throw ProtocolError("explain returned no candidates");
  s.steps.back().explanation = std::string(format::strip_controls(gen.front().text));
}

Schedule autonomous_schedule(std::size_t n) { return Schedule(n); }

Schedule manual_schedule(const std::vector<std::string>& plans) { return Schedule(plans.begin(), plans.end()); }

Schedule collaborative_schedule(const std::vector<std::string>& plans) {
  Schedule out;
  for (std::size_t i = 0; i < plans.size(); ++i) {
    if (i > 0) out.emplace_back();
    out.emplace_back(plans[i]);
  }
  return out;
}

SessionState& run(SessionState& s, const backend::Backend& b, const Schedule& schedule) {
  if (schedule.size() > s.config.max_iterations) {
    throw InvalidArgument("schedule of " + std::to_string(schedule.size()) + " steps exceeds max_iterations " +
                          std::to_string(s.config.max_iterations));
  }
  for (const auto& plan : schedule) {
    if (s.halted) break;
    step(s, plan, b);
    auto ranked = rank_candidates(s.pending);
    if (ranked.empty()) throw NoViableCandidate("every candidate exceeded the output budget");
    choose(s, ranked.front());
  }
  return s;
}

// ---- cite / quote prefixes ----

std::string make_cite_prefix(std::string_view text, std::size_t position, std::string_view plan) {
  if (position > text.size() || !text::is_utf8_boundary(text, position)) {
    throw InvalidArgument("cite position " + std::to_string(position) + " is not a character offset of the text");
  }
  for (const auto& m : text::marker_spans(text)) {
    if (position > m.begin && position < m.end) throw InvalidArgument("cite position falls inside a citation marker");
  }
  return plan_prefix(plan) + std::string(text.substr(0, position)) + "[[[";
}

QuotePrefix make_quote_prefix(std::string_view text, std::size_t position, std::size_t doc_index,
                              const DocumentSet& docs, std::string_view plan) {
  if (doc_index >= docs.size()) {
    throw DanglingCitation("document " + std::to_string(doc_index) + " is not in the document set");
  }
  const std::string marker = "[[[" + std::to_string(doc_index) + "]]]";
  if (position > text.size() || text.substr(position, marker.size()) != marker) {
    throw InvalidArgument("no " + marker + " marker at position " + std::to_string(position));
  }
  QuotePrefix q;
  q.prefix = plan_prefix(plan) + std::string(text.substr(0, position)) + "[[[" + std::to_string(doc_index) + " quote=";
  q.constraint.substring_of = docs.docs[doc_index].content;
  return q;
}

// ---- session-jsonl ----

std::string export_jsonl(const SessionState& s) {
  std::string out;
  json header = {{"type", "header"},
                 {"format", "peer-session/1"},
                 {"mode", mode_name(s.mode)},
                 {"title", s.title ? json(*s.title) : json(nullptr)},
                 {"docs", s.docs},
                 {"config", s.config},
                 {"initial_text", s.steps.front().text}};
  out += header.dump() + "\n";
  for (std::size_t i = 1; i < s.steps.size(); ++i) {
    json line = s.steps[i];
    line["type"] = "step";
    line["index"] = i;
    out += line.dump() + "\n";
  }
  return out;
}

SessionState replay_jsonl(std::string_view jsonl) {
  std::istringstream in{std::string(jsonl)};
  std::string line;
  std::optional<SessionState> s;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError("session-jsonl line " + std::to_string(lineno) + ": " + e.what());
    }
    const std::string type = j.value("type", "");
    if (type == "header") {
      if (s) throw ParseError("duplicate header at line " + std::to_string(lineno));
      std::optional<std::string> title;
      if (j.contains("title") && !j.at("title").is_null()) title = j.at("title").get<std::string>();
      s = new_session(j.value("initial_text", ""), j.at("docs").get<DocumentSet>(),
                      parse_mode(j.at("mode").get<std::string>()), title, j.at("config").get<SessionConfig>());
    } else if (type == "step") {
      if (!s) throw ParseError("step before header at line " + std::to_string(lineno));
      Step st = j.get<Step>();
      if (!st.chosen) throw ParseError("step without a chosen candidate at line " + std::to_string(lineno));
      set_pending(*s, st.candidates);
      choose(*s, *st.chosen);
      if (s->text() != st.text) throw ParseError("replayed text diverges at line " + std::to_string(lineno));
      s->steps.back().explanation = st.explanation;
    } else {
      throw ParseError("unknown line type '" + type + "' at line " + std::to_string(lineno));
    }
  }
  if (!s) throw ParseError("session-jsonl has no header");
  return std::move(*s);
}

// ---- length penalty ----

TuneResult tune_length_penalty(const std::vector<DevExample>& dev, const backend::Backend& b,
                               std::vector<double> penalties, const Schedule& schedule, Mode mode,
                               const SessionConfig& base) {
  if (dev.empty()) throw EmptyDataset("length-penalty tuning needs dev examples");
  if (penalties.empty()) throw InvalidArgument("no length penalties to try");
  std::sort(penalties.begin(), penalties.end());
  penalties.erase(std::unique(penalties.begin(), penalties.end()), penalties.end());

  TuneResult r;
  if (penalties.size() == 1) {
    r.best = penalties.front();
    return r;
  }
  double best_score = -1;
  for (double lp : penalties) {
    SessionConfig cfg = base;
    cfg.length_penalty = lp;
    double total = 0;
    for (const auto& ex : dev) {
      auto s = new_session(ex.initial_text, ex.docs, mode, ex.title, cfg);
      run(s, b, schedule);
      const auto clean = format::decode_citation_markers(s.text()).text;
      total += metrics::rouge(clean, ex.reference, metrics::RougeVariant::k1);
    }
    const double mean = total / static_cast<double>(dev.size());
    r.scores.emplace_back(lp, mean);
    if (mean > best_score) {
      best_score = mean;
      r.best = lp;
    }
  }
  return r;
}

std::pair<std::vector<DevExample>, std::vector<DevExample>> split_dev_test(std::vector<DevExample> all,
                                                                           std::size_t dev_size,
                                                                           std::uint64_t seed) {
  if (dev_size > all.size()) throw InvalidArgument("dev split larger than the dataset");
  Rng rng(derive_seed(seed, "dev-test-split"));
  rng.shuffle(std::span<DevExample>(all));
  std::vector<DevExample> dev(std::make_move_iterator(all.begin()),
                              std::make_move_iterator(all.begin() + static_cast<std::ptrdiff_t>(dev_size)));
  std::vector<DevExample> test(std::make_move_iterator(all.begin() + static_cast<std::ptrdiff_t>(dev_size)),
                               std::make_move_iterator(all.end()));
  return {std::move(dev), std::move(test)};
}

}  // namespace peer::engine
