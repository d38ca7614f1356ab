#include "peer/format.hpp"

#include <algorithm>
#include <set>

#include "peer/diff.hpp"
#include "peer/errors.hpp"

namespace peer::format {

namespace {

constexpr std::string_view kOpen = "[[[";
constexpr std::string_view kClose = "]]]";
constexpr std::string_view kQuote = " quote=";
constexpr std::string_view kRef = "ref:";

bool is_digit(char c) { return c >= '0' && c <= '9'; }

struct ParsedMarker {
  std::size_t length = 0;  // bytes consumed, including brackets
  std::string head;        // index digits or ref id
  std::optional<std::string> quote;
};

// Parses "[[[" head [" quote=" q] "]]]" at the start of s. `ref` selects the
// "ref:ID" head form instead of a canonical decimal index.
std::optional<ParsedMarker> parse_marker_at(std::string_view s, bool ref) {
  if (!s.starts_with(kOpen)) return std::nullopt;
  std::size_t pos = kOpen.size();
  std::size_t head_begin = pos;
  if (ref) {
    if (s.substr(pos, kRef.size()) != kRef) return std::nullopt;
    pos += kRef.size();
    head_begin = pos;
    while (pos < s.size() && !text::is_space(s[pos]) && s[pos] != ']' && s[pos] != '[') ++pos;
  } else {
    while (pos < s.size() && is_digit(s[pos])) ++pos;
    if (pos - head_begin > 1 && s[head_begin] == '0') return std::nullopt;
    if (pos - head_begin > 9) return std::nullopt;
  }
  if (pos == head_begin) return std::nullopt;
  ParsedMarker m;
  m.head = std::string(s.substr(head_begin, pos - head_begin));
  if (s.substr(pos, kClose.size()) == kClose) {
    m.length = pos + kClose.size();
    return m;
  }
  if (s.substr(pos, kQuote.size()) != kQuote) return std::nullopt;
  pos += kQuote.size();
  std::size_t close = s.find(kClose, pos);
  if (close == std::string_view::npos || close == pos) return std::nullopt;
  m.quote = std::string(s.substr(pos, close - pos));
  m.length = close + kClose.size();
  return m;
}

void check_quote(const std::optional<std::string>& quote) {
  if (!quote) return;
  if (quote->empty()) throw InvalidMarker("quote must be non-empty");
  if (quote->find(kClose) != std::string::npos) throw InvalidMarker("quote contains ']]]'");
  if (quote->back() == ']') throw InvalidMarker("quote ends with ']'");
}

std::string bracket(std::string_view head, const std::optional<std::string>& quote) {
  std::string out(kOpen);
  out += head;
  if (quote) {
    out += kQuote;
    out += *quote;
  }
  out += kClose;
  return out;
}

}  // namespace

std::string render_marker(std::size_t doc_index, const std::optional<std::string>& quote) {
  check_quote(quote);
  return bracket(std::to_string(doc_index), quote);
}

DecodedText decode_citation_markers(std::string_view s) {
  DecodedText out;
  out.text.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    std::size_t next = s.find(kOpen, i);
    if (next == std::string_view::npos) {
      out.text.append(s.substr(i));
      break;
    }
    out.text.append(s.substr(i, next - i));
    if (auto m = parse_marker_at(s.substr(next), false)) {
      out.markers.push_back({static_cast<std::size_t>(std::stoul(m->head)), m->quote, out.text.size()});
      i = next + m->length;
    } else {
      out.malformed.push_back(out.text.size());
      out.text += '[';
      i = next + 1;
    }
  }
  return out;
}

std::string encode_citation_markers(std::string_view clean, std::span<const CitationMarker> markers,
                                    std::size_t num_docs) {
  std::vector<CitationMarker> sorted(markers.begin(), markers.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const CitationMarker& a, const CitationMarker& b) { return a.position < b.position; });
  std::string out;
  std::size_t pos = 0;
  for (const auto& m : sorted) {
    if (m.doc_index >= num_docs) {
      throw DanglingCitation("citation of document " + std::to_string(m.doc_index) + " but only " +
                             std::to_string(num_docs) + " documents");
    }
    if (m.position > clean.size()) throw InvalidArgument("marker position past end of text");
    out.append(clean.substr(pos, m.position - pos));
    out += render_marker(m.doc_index, m.quote);
    pos = m.position;
  }
  out.append(clean.substr(pos));
  return out;
}

std::string render_ref(std::string_view id, const std::optional<std::string>& quote) {
  check_quote(quote);
  std::string head(kRef);
  head += id;
  return bracket(head, quote);
}

std::vector<CitationRef> find_citation_refs(std::string_view s) {
  std::vector<CitationRef> out;
  std::size_t i = 0;
  while ((i = s.find(kOpen, i)) != std::string_view::npos) {
    if (auto m = parse_marker_at(s.substr(i), true)) {
      out.push_back({{i, i + m->length}, m->head, m->quote});
      i += m->length;
    } else {
      ++i;
    }
  }
  return out;
}

std::string resolve_citation_refs(std::string_view s, const DocumentSet& docs) {
  std::string out;
  std::size_t pos = 0;
  for (const auto& r : find_citation_refs(s)) {
    out.append(s.substr(pos, r.span.begin - pos));
    if (auto idx = docs.index_of(r.id)) out += render_marker(*idx, r.quote);
    pos = r.span.end;
  }
  out.append(s.substr(pos));
  return out;
}

std::string to_citation_refs(std::string_view s, const DocumentSet& docs) {
  std::string out;
  std::size_t i = 0;
  while (i < s.size()) {
    std::size_t next = s.find(kOpen, i);
    if (next == std::string_view::npos) break;
    out.append(s.substr(i, next - i));
    if (auto m = parse_marker_at(s.substr(next), false)) {
      auto idx = static_cast<std::size_t>(std::stoul(m->head));
      if (idx >= docs.size()) throw DanglingCitation("citation of missing document " + m->head);
      out += render_ref(docs.docs[idx].id, m->quote);
      i = next + m->length;
    } else {
      out += '[';
      i = next + 1;
    }
  }
  if (i < s.size()) out.append(s.substr(i));
  return out;
}

std::string truncate_units(std::string_view s, std::size_t budget, const text::Tokenizer& tok) {
  std::size_t cut = tok.prefix_within(s, budget);
  for (const auto& m : text::marker_spans(s)) {
    if (m.begin < cut && cut < m.end) {
      cut = m.begin;
      break;
    }
  }
  return std::string(text::trim_right(s.substr(0, cut)));
}

std::string linearize_document(std::size_t i, const SourceDocument& doc, const Budgets& budgets,
                               const text::Tokenizer& tok) {
  std::string out = "[" + std::to_string(i) + "] ";
  out += truncate_units(doc.domain, budgets.domain, tok);
  out += " # ";
  out += truncate_units(doc.title, budgets.title, tok);
  out += " # ";
  out += truncate_units(doc.content, budgets.content, tok);
  return out;
}

std::string linearize_documents(const DocumentSet& docs, const Budgets& budgets, const text::Tokenizer& tok) {
  std::vector<std::string> parts;
  for (std::size_t i = 0; i < docs.size(); ++i) parts.push_back(linearize_document(i, docs.docs[i], budgets, tok));
  return text::join(parts, " ");
}

ParsedDocument parse_linearized_document(std::string_view s) {
  s = text::trim(s);
  if (s.empty() || s.front() != '[') throw ParseError("document must start with '[i]'");
  std::size_t close = s.find("] ");
  if (close == std::string_view::npos || close == 1) throw ParseError("document index not terminated");
  std::string_view digits = s.substr(1, close - 1);
  if (!std::all_of(digits.begin(), digits.end(), is_digit)) throw ParseError("document index not numeric");
  ParsedDocument out;
  out.index = std::stoul(std::string(digits));
  std::string_view rest = s.substr(close + 2);
  // Fields are separated by " # "; an empty title leaves "#  #".
  auto split = [](std::string_view& r) -> std::string_view {
    if (r.starts_with("# ")) {
      r.remove_prefix(2);
      return {};
    }
    std::size_t p = r.find(" # ");
    if (p == std::string_view::npos) {
      if (r.ends_with(" #")) {
        auto f = r.substr(0, r.size() - 2);
        r = {};
        return f;
      }
      throw ParseError("document field separator missing");
    }
    auto f = r.substr(0, p);
    r.remove_prefix(p + 3);
    return f;
  };
  out.doc.domain = std::string(split(rest));
  out.doc.title = std::string(text::trim(split(rest)));
  out.doc.content = std::string(text::trim(rest));
  return out;
}

std::string_view task_name(Task t) {
  switch (t) {
    case Task::kEdit:
      return "edit";
    case Task::kUndo:
      return "undo";
    case Task::kExplain:
      return "explain";
    case Task::kDocument:
      return "document";
  }
  return "edit";
}

Task parse_task(std::string_view s) {
  if (s == "edit") return Task::kEdit;
  if (s == "undo") return Task::kUndo;
  if (s == "explain") return Task::kExplain;
  if (s == "document") return Task::kDocument;
  throw InvalidArgument("unknown task '" + std::string(s) + "'");
}

FormatOptions FormatOptions::deterministic() {
  FormatOptions o;
  o.drop_title_prob = o.minimize_prob = o.drop_docs_prob = 0.0;
  return o;
}

void to_json(nlohmann::json& j, const LinearizedExample& e) {
  j = {{"task", task_name(e.task)}, {"input", e.input}, {"output", e.output}, {"meta", e.meta}};
  j["controls"] = e.controls ? nlohmann::json(control::encode_controls(*e.controls)) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, LinearizedExample& e) {
  e.task = parse_task(j.at("task").get<std::string>());
  e.input = j.at("input").get<std::string>();
  e.output = j.at("output").get<std::string>();
  e.controls.reset();
  if (auto it = j.find("controls"); it != j.end() && it->is_string()) {
    e.controls = control::decode_controls(it->get<std::string>());
  }
  e.meta = j.value("meta", nlohmann::json::object());
}

std::string edit_input(const std::optional<std::string>& title, std::string_view text, const DocumentSet& docs,
                       const FormatOptions& opts) {
  std::string out;
  if (title && !title->empty()) {
    out += *title;
    out += opts.separator;
  }
  out += text;
  if (!docs.empty()) {
    out += opts.separator;
    out += linearize_documents(docs, opts.budgets, opts.tok());
  }
  return out;
}

std::string join_plan_and_text(std::string_view plan, std::string_view text, std::string_view sep) {
  std::string out(plan);
  out += sep;
  out += text;
  return out;
}

PlanAndText split_plan_and_text(std::string_view model_output, std::string_view sep) {
  std::size_t p = model_output.find(sep);
  if (p == std::string_view::npos) return {"", std::string(model_output), true};
  return {std::string(model_output.substr(0, p)), std::string(model_output.substr(p + sep.size())), false};
}

std::string prepend_controls(const std::optional<control::ControlSequence>& cs, std::string_view output,
                             std::string_view sep) {
  if (!cs || cs->empty()) return std::string(output);
  return control::encode_controls(*cs) + std::string(sep) + std::string(output);
}

std::string_view strip_controls(std::string_view output, std::string_view sep) {
  std::size_t p = output.find(sep);
  if (p == std::string_view::npos) return output;
  try {
    auto cs = control::decode_controls(output.substr(0, p));
    if (cs.empty()) return output;
  } catch (const Error&) {
    return output;
  }
  return output.substr(p + sep.size());
}

namespace {

std::vector<bool> touched_sentences(const std::vector<text::Sentence>& sents, const diff::DiffSet& d, bool source) {
  std::vector<bool> hit(sents.size(), false);
  for (const auto& h : d.hunks) {
    const auto& r = source ? h.source_span : h.target_span;
    for (std::size_t k = 0; k < sents.size(); ++k) {
      const auto& s = sents[k];
      if (r.size() > 0 ? (s.first_word < r.end && r.begin < s.end_word)
                       : (s.first_word < r.begin && r.begin < s.end_word)) {
        hit[k] = true;
      }
    }
  }
  return hit;
}

std::string keep_sentences(std::string_view s, const std::vector<text::Sentence>& sents,
                           const std::vector<bool>& keep) {
  std::vector<std::string> parts;
  for (std::size_t k = 0; k < sents.size(); ++k) {
    if (keep[k]) parts.emplace_back(sents[k].chars.of(s));
  }
  return text::join(parts, " ");
}

}  // namespace

std::pair<std::string, std::string> minimize(std::string_view source, std::string_view target) {
  const auto d = diff::word_diff(source, target);
  const auto ss = text::split_sentences(source);
  const auto ts = text::split_sentences(target);
  auto src = keep_sentences(source, ss, touched_sentences(ss, d, true));
  auto tgt = keep_sentences(target, ts, touched_sentences(ts, d, false));
  if (src.empty() && tgt.empty()) throw EmptyAfterMinimize("no edited sentences left after minimizing");
  return {std::move(src), std::move(tgt)};
}

LinearizedExample build_example(Task task, const EditPair& pair, const DocumentSet& docs, std::string_view plan,
                                const FormatOptions& opts, Rng& rng,
                                const std::optional<control::ControlSequence>& controls,
                                std::size_t document_index) {
  const auto& tok = opts.tok();
  const std::string& sep = opts.separator;

  // Draws happen unconditionally and in a fixed order so that one example's
  // augmentations never shift another's random stream.
  const bool drop_title = rng.bernoulli(opts.drop_title_prob);
  const bool do_minimize = rng.bernoulli(opts.minimize_prob);
  const bool drop_docs = rng.bernoulli(opts.drop_docs_prob);

  DocumentSet pool;
  for (std::size_t i = 0; i < docs.size() && i < opts.k; ++i) pool.add(docs.docs[i], docs.provenance[i]);

  std::string src = to_citation_refs(pair.source, pool);
  std::string tgt = to_citation_refs(pair.target, pool);

  std::set<std::string> cited;
  for (const auto& r : find_citation_refs(src)) cited.insert(r.id);
  for (const auto& r : find_citation_refs(tgt)) cited.insert(r.id);

  std::size_t dropped = 0;
  if (drop_docs && !pool.empty()) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(pool.size())));
    std::vector<std::size_t> uncited;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (!cited.count(pool.docs[i].id)) uncited.push_back(i);
    }
    rng.shuffle(std::span<std::size_t>(uncited));
    std::set<std::size_t> remove(uncited.begin(), uncited.begin() + std::min(j, uncited.size()));
    DocumentSet kept;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (!remove.count(i)) kept.add(pool.docs[i], pool.provenance[i]);
    }
    dropped = remove.size();
    pool = std::move(kept);
  }

  src = resolve_citation_refs(src, pool);
  tgt = resolve_citation_refs(tgt, pool);
  if (do_minimize) std::tie(src, tgt) = minimize(src, tgt);

  std::string head;
  if (!drop_title && !pair.title.empty()) head = pair.title + sep;

  LinearizedExample ex;
  ex.task = task;
  ex.controls = controls;
  std::string body;
  switch (task) {
    case Task::kEdit:
      ex.input = head + src;
      if (!pool.empty()) ex.input += sep + linearize_documents(pool, opts.budgets, tok);
      body = join_plan_and_text(plan, tgt, sep);
      break;
    case Task::kUndo:
      ex.input = head + tgt;
      if (!pool.empty()) ex.input += sep + linearize_documents(pool, opts.budgets, tok);
      body = join_plan_and_text(plan, src, sep);
      break;
    case Task::kExplain:
      ex.input = head + src + sep + tgt;
      if (!pool.empty()) ex.input += sep + linearize_documents(pool, opts.budgets, tok);
      body = std::string(plan);
      break;
    case Task::kDocument: {
      if (document_index >= docs.size()) throw InvalidArgument("document index out of range");
      auto idx = pool.index_of(docs.docs[document_index].id);
      if (!idx) throw InvalidArgument("target document was dropped from the set");
      ex.input = head + src + sep + tgt + sep + std::string(plan);
      body = linearize_document(*idx, pool.docs[*idx], opts.budgets, tok);
      break;
    }
  }
  ex.output = prepend_controls(controls, body, sep);

  const auto in_units = tok.count(ex.input);
  const auto out_units = tok.count(ex.output);
  if (in_units > opts.max_input_units || out_units > opts.max_output_units) {
    throw OverTokenBudget("example exceeds budget: input " + std::to_string(in_units) + "/" +
                          std::to_string(opts.max_input_units) + ", output " + std::to_string(out_units) + "/" +
                          std::to_string(opts.max_output_units));
  }

  nlohmann::json ids = nlohmann::json::array();
  for (const auto& d : pool.docs) ids.push_back(d.id);
  ex.meta = {{"origin", {{"page_id", pair.origin.page_id}, {"rev_id", pair.origin.rev_id}}},
             {"doc_ids", ids},
             {"augment", {{"drop_title", drop_title}, {"minimize", do_minimize}, {"dropped_docs", dropped}}}};
  return ex;
}

}  // namespace peer::format
