#include "peer/synth.hpp"

#include <algorithm>
#include <cmath>

#include "peer/errors.hpp"
#include "peer/parallel.hpp"
#include "peer/text.hpp"

namespace peer::synth {

using backend::Decoding;
using backend::GenerationRequest;

std::int64_t WordsSampler::sample(Rng& rng) const {
  const double x = std::clamp(rng.normal(mu, sigma), lo, hi);
  return static_cast<std::int64_t>(std::llround(x));
}

control::ControlSequence PlanControlPolicy::draw(Rng& rng) const {
  // fixed draw order keeps streams stable when probabilities change
  const bool instruction = rng.bernoulli(p_instruction);
  const auto length = static_cast<control::Length>(rng.uniform_int(0, 3));
  const bool no_overlap = rng.bernoulli(p_no_overlap);
  control::ControlSequence cs;
  cs.type = instruction ? control::PlanType::kInstruction : control::PlanType::kOther;
  cs.length = length;
  cs.overlap = !no_overlap;
  return cs;
}

namespace {

std::string head(const EditContext& e, const SynthOptions& o) {
  return e.title && !e.title->empty() ? *e.title + o.format.separator : std::string();
}

std::string docs_tail(const DocumentSet& docs, const SynthOptions& o) {
  if (docs.empty()) return "";
  return o.format.separator + format::linearize_documents(docs, o.format.budgets, o.format.tok());
}

std::string control_prefix(const control::ControlSequence& cs, const SynthOptions& o) {
  return format::prepend_controls(cs, "", o.format.separator);
}

double pick(const backend::ScoreResult& r, Likelihood l) { return l == Likelihood::kSum ? r.sum_logprob : r.mean_logprob; }

Decoding sampling(const SynthOptions& o, std::uint64_t seed) { return Decoding::top_p(o.top_p, seed); }

}  // namespace

std::string edit_task_input(const EditContext& e, const SynthOptions& o) {
  return head(e, o) + e.source + docs_tail(e.docs, o);
}

std::string undo_task_input(const EditContext& e, const SynthOptions& o) {
  return head(e, o) + e.target + docs_tail(e.docs, o);
}

std::string explain_task_input(const EditContext& e, const SynthOptions& o) {
  return head(e, o) + e.source + o.format.separator + e.target + docs_tail(e.docs, o);
}

std::string document_task_input(const EditContext& e, std::string_view plan, const SynthOptions& o) {
  return head(e, o) + e.source + o.format.separator + e.target + o.format.separator + std::string(plan);
}

// ---- decomposition ----

std::size_t default_cap(std::string_view text) { return 2 * (text::word_count(text) / 10) + 10; }

Decomposition decompose(std::string_view text, const std::optional<std::string>& title, const DocumentSet& docs,
                        const backend::Backend& undo, const WordsSampler& sampler, std::uint64_t seed,
                        const DecomposeOptions& opts, const SynthOptions& so) {
  if (text::trim(text).empty()) throw InvalidArgument("cannot decompose an empty text");
  Decomposition d;
  d.text = std::string(text);
  for (const auto& doc : docs.docs) d.doc_ids.push_back(doc.id);

  const std::size_t cap = opts.one_shot ? 1 : opts.cap.value_or(default_cap(text));
  Rng rng(derive_seed(seed, "words"));
  std::string current(text);
  std::size_t stalls = 0;

  while (!text::trim(current).empty()) {
    if (d.calls >= cap) {
      d.truncated = !opts.one_shot;
      break;
    }
    // draw even when forcing so the stream does not depend on stalls
    const std::int64_t sampled = sampler.sample(rng);
    const bool forced = stalls >= opts.stall_budget;
    control::ControlSequence cs;
    cs.words = forced ? opts.forced_words : sampled;

    GenerationRequest req;
    req.input = undo_task_input({title, "", current, docs}, so);
    req.decoder_prefix = control_prefix(cs, so);
    req.decoding = sampling(so, derive_seed(seed, d.calls));
    req.max_output_units = so.format.max_output_units;
    ++d.calls;

    auto gen = undo.generate(req);
    bool progressed = false;
    if (!gen.empty()) {
      auto parts = format::split_plan_and_text(gen.front().text.substr(req.decoder_prefix->size()),
                                               so.format.separator);
      std::string prev = parts.missing_separator ? std::string() : parts.text;
      if (!parts.missing_separator && prev.size() < current.size()) {
        d.steps.push_back({parts.plan, prev, *cs.words, forced});
        current = std::move(prev);
        progressed = true;
      }
    }
    stalls = progressed ? 0 : stalls + 1;
    if (opts.one_shot) break;
  }
  return d;
}

std::vector<EditPair> forward_pairs(const Decomposition& d, const std::string& title) {
  std::vector<EditPair> out;
  for (std::size_t i = d.steps.size(); i-- > 0;) {
    EditPair p;
    p.title = title;
    p.source = d.steps[i].text;
    p.target = i == 0 ? d.text : d.steps[i - 1].text;
    p.comment = d.steps[i].plan;
    p.doc_ids = d.doc_ids;
    p.meta = {{"synthetic", "undo"}, {"words", d.steps[i].words}, {"forced_words", d.steps[i].forced}};
    out.push_back(std::move(p));
  }
  return out;
}

std::string replay(std::string_view start, const std::vector<EditPair>& pairs) {
  std::string current(start);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].source != current) throw InvalidArgument("pair " + std::to_string(i) + " does not continue the chain");
    current = pairs[i].target;
  }
  return current;
}

// ---- plans ----

PlanDraw generate_plans(const EditContext& e, const backend::Backend& explain, const PlanControlPolicy& policy,
                        std::uint64_t seed, const SynthOptions& o) {
  if (e.source == e.target) throw InvalidArgument("no edit to explain: source equals target");
  Rng rng(derive_seed(seed, "plan-controls"));
  PlanDraw out;
  out.controls = policy.draw(rng);
  const auto diff = diff::word_diff(e.source, e.target);

  GenerationRequest req;
  req.input = explain_task_input(e, o);
  req.decoder_prefix = control_prefix(out.controls, o);
  req.max_output_units = o.format.max_output_units;
  for (std::size_t i = 0; i < policy.k; ++i) {
    req.decoding = sampling(o, derive_seed(seed, i));
    for (const auto& g : explain.generate(req)) {
      PlanCandidate c;
      c.plan = std::string(text::trim(g.text.substr(req.decoder_prefix->size())));
      c.violates_overlap = out.controls.overlap == false && control::has_overlap(c.plan, diff);
      out.candidates.push_back(std::move(c));
      break;
    }
  }
  return out;
}

Selection select_best_plan(const std::vector<std::string>& plans, const EditContext& e, const backend::Backend& edit,
                           const SynthOptions& o) {
  if (plans.empty()) throw InvalidArgument("no plan candidates");
  Selection s;
  if (plans.size() == 1) return s;
  const std::string input = edit_task_input(e, o);
  std::optional<double> best;
  std::string last_error;
  for (std::size_t i = 0; i < plans.size(); ++i) {
    try {
      auto r = edit.score({input, e.target, format::join_plan_and_text(plans[i], "", o.format.separator)});
      const double v = pick(r, o.likelihood);
      s.scores.emplace_back(v);
      if (!best || v > *best) {
        best = v;
        s.index = i;
      }
    } catch (const Error& err) {
      s.scores.emplace_back();
      last_error = err.what();
    }
  }
  if (!best) throw ScoringFailed("every plan failed to score: " + last_error);
  return s;
}

// ---- documents ----

DocumentResult generate_documents(const EditContext& e, std::string_view plan, std::string_view required_quote,
                                  std::size_t document_index, const backend::Backend& doc_backend,
                                  const backend::Backend& edit, std::size_t k, std::uint64_t seed,
                                  const SynthOptions& o) {
  if (required_quote.empty()) throw InvalidArgument("generate_documents needs a non-empty quote");
  if (document_index > e.docs.size()) throw InvalidArgument("document index beyond the end of the set");
  control::ControlSequence cs;
  cs.contains = std::string(required_quote);

  GenerationRequest req;
  req.input = document_task_input(e, plan, o);
  req.decoder_prefix = control_prefix(cs, o);
  req.max_output_units = o.format.max_output_units;

  DocumentResult out;
  std::vector<SourceDocument> survivors;
  for (std::size_t i = 0; i < k; ++i) {
    req.decoding = sampling(o, derive_seed(seed, i));
    auto gen = doc_backend.generate(req);
    if (gen.empty()) continue;
    ++out.samples;
    try {
      auto parsed = format::parse_linearized_document(gen.front().text.substr(req.decoder_prefix->size()));
      if (parsed.doc.content.find(required_quote) == std::string::npos) continue;
      parsed.doc.id = "synthetic:" + std::to_string(seed) + ":" + std::to_string(i);
      survivors.push_back(std::move(parsed.doc));
    } catch (const ParseError&) {
    }
  }
  out.survivors = survivors.size();
  if (survivors.empty()) {
    throw NoValidDocument("none of " + std::to_string(out.samples) + " documents contains the quote");
  }
  if (survivors.size() == 1) {
    out.doc = std::move(survivors.front());
    return out;
  }

  out.scored = true;
  const std::string prefix = format::join_plan_and_text(plan, "", o.format.separator);
  std::optional<double> best;
  std::size_t best_i = 0;
  for (std::size_t i = 0; i < survivors.size(); ++i) {
    EditContext with = e;
    if (document_index == with.docs.size()) {
      with.docs.add(survivors[i], Provenance::kCited);
    } else {
      with.docs.docs[document_index] = survivors[i];
    }
    try {
      const double v = pick(edit.score({edit_task_input(with, o), e.target, prefix}), o.likelihood);
      if (!best || v > *best) {
        best = v;
        best_i = i;
      }
    } catch (const Error&) {
    }
  }
  if (!best) throw ScoringFailed("every surviving document failed to score");
  out.doc = std::move(survivors[best_i]);
  return out;
}

// ---- datasets ----

std::vector<EditPair> rewrite_plans(std::vector<EditPair> pairs, const backend::Backend& explain,
                                    const backend::Backend& edit, const PlanControlPolicy& policy,
                                    std::uint64_t seed, const DocResolver& resolver, const SynthOptions& o,
                                    std::size_t threads) {
  parallel_for(pairs.size(), threads, [&](std::size_t i) {
    EditPair& p = pairs[i];
    try {
      EditContext e;
      if (!p.title.empty()) e.title = p.title;
      if (resolver) e.docs = resolver(p);
      e.source = format::resolve_citation_refs(p.source, e.docs);
      e.target = format::resolve_citation_refs(p.target, e.docs);
      const std::uint64_t s = derive_seed(seed, static_cast<std::uint64_t>(i));
      auto draw = generate_plans(e, explain, policy, s, o);
      std::vector<std::string> plans;
      for (auto& c : draw.candidates) plans.push_back(c.plan);
      auto sel = select_best_plan(plans, e, edit, o);
      if (!p.meta.contains("original_comment")) p.meta["original_comment"] = p.comment;
      p.comment = plans[sel.index];
      p.meta["plan_rewritten"] = true;
      p.meta["plan_controls"] = control::encode_controls(draw.controls);
    } catch (const Error& err) {
      p.meta["plan_rewrite_error"] = {{"code", err.code()}, {"message", err.what()}};
    }
  });
  return pairs;
}

}  // namespace peer::synth
