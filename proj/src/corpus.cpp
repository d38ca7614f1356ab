#include "peer/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <unordered_map>

#include "peer/control.hpp"
#include "peer/diff.hpp"
#include "peer/errors.hpp"
#include "peer/format.hpp"

namespace peer::corpus {

namespace {

std::unordered_set<std::string> reverts_of(const std::vector<std::string>& ids, const std::vector<std::string>& norms) {
  std::unordered_set<std::string> out;
  std::unordered_map<std::string_view, std::size_t> last_seen;
  for (std::size_t j = 0; j < norms.size(); ++j) {
    auto it = last_seen.find(norms[j]);
    if (it != last_seen.end()) {
      for (std::size_t m = it->second + 1; m < j; ++m) out.insert(ids[m]);
    }
    last_seen[norms[j]] = j;
  }
  return out;
}

std::string join_paragraphs(std::string_view s, const std::vector<text::Span>& paras,
                            const std::vector<std::size_t>& keep) {
  std::vector<std::string> parts;
  for (auto i : keep) parts.emplace_back(paras[i].of(s));
  return text::join(parts, "\n\n");
}

}  // namespace

std::unordered_set<std::string> detect_reverts(std::span<const RawRevision> page_revisions) {
  std::vector<std::string> ids, norms;
  for (const auto& r : page_revisions) {
    ids.push_back(r.rev_id);
    norms.push_back(normalize_wikitext(r.text));
  }
  return reverts_of(ids, norms);
}

std::vector<ExtractedEdit> extract_edit_pairs(std::span<const RawRevision> revisions, ExtractStats* stats) {
  ExtractStats local;
  ExtractStats& st = stats ? *stats : local;
  std::vector<ExtractedEdit> out;

  std::size_t begin = 0;
  while (begin < revisions.size()) {
    std::size_t end = begin;
    while (end < revisions.size() && revisions[end].page_id == revisions[begin].page_id) ++end;
    auto page = revisions.subspan(begin, end - begin);

    std::vector<std::string> ids, norms;
    for (const auto& r : page) {
      ids.push_back(r.rev_id);
      norms.push_back(normalize_wikitext(r.text));
    }
    const auto reverted = reverts_of(ids, norms);
    std::unordered_map<std::string, std::size_t> seen;

    for (std::size_t j = 0; j < page.size(); ++j) {
      const auto& rev = page[j];
      std::optional<std::size_t> src;
      if (rev.parent_rev_id) {
        if (auto it = seen.find(*rev.parent_rev_id); it != seen.end()) {
          src = it->second;
        } else if (j > 0) {
          ++st.orphans;
          if (st.diagnostics.size() < 20) {
            st.diagnostics.push_back("revision " + rev.rev_id + ": parent " + *rev.parent_rev_id + " not found");
          }
        }
      } else if (j > 0) {
        src = j - 1;
      }
      seen[rev.rev_id] = j;
      if (!src) continue;

      const std::string& a = norms[*src];
      const std::string& b = norms[j];
      if (a == b) {
        ++st.unchanged;
        continue;
      }
      const auto affected = diff::affected_paragraphs(a, b);
      if (affected.count == 0) {
        ++st.unchanged;
        continue;
      }

      ExtractedEdit e;
      e.pair.title = rev.title;
      e.pair.source = join_paragraphs(a, text::paragraph_spans(a), affected.source_indices);
      e.pair.target = join_paragraphs(b, text::paragraph_spans(b), affected.target_indices);
      e.pair.comment = rev.comment;
      e.pair.origin = {rev.page_id, rev.rev_id};
      e.pair.paragraphs_affected = affected.count;
      e.pair.raw_chars = std::max(page[*src].text.size(), rev.text.size());
      std::unordered_set<std::string> dedup;
      for (const auto* side : {&e.pair.source, &e.pair.target}) {
        for (const auto& r : format::find_citation_refs(*side)) {
          if (dedup.insert(r.id).second) e.pair.doc_ids.push_back(r.id);
        }
      }
      e.revision = rev;
      e.revision.text.clear();
      e.reverted = reverted.count(rev.rev_id) > 0;
      attach_revision_meta(e);
      out.push_back(std::move(e));
      ++st.pairs;
    }
    begin = end;
  }
  return out;
}

void attach_revision_meta(ExtractedEdit& e) {
  e.pair.meta["reverted"] = e.reverted;
  e.pair.meta["revision"] = {{"page_id", e.revision.page_id},
                             {"rev_id", e.revision.rev_id},
                             {"timestamp", e.revision.timestamp},
                             {"username", e.revision.username},
                             {"is_bot", e.revision.is_bot},
                             {"is_redirect", e.revision.is_redirect}};
}

RawRevision revision_from_meta(const EditPair& pair) {
  RawRevision r;
  r.page_id = pair.origin.page_id;
  r.rev_id = pair.origin.rev_id;
  r.title = pair.title;
  r.comment = pair.comment;
  if (auto it = pair.meta.find("revision"); it != pair.meta.end() && it->is_object()) {
    r.timestamp = it->value("timestamp", "");
    r.username = it->value("username", "");
    r.is_bot = it->value("is_bot", false);
    r.is_redirect = it->value("is_redirect", false);
  }
  return r;
}

std::string_view reason_name(FilterReason r) {
  switch (r) {
    case FilterReason::kReverted:
      return "Reverted";
    case FilterReason::kBot:
      return "Bot";
    case FilterReason::kTooManyParagraphs:
      return "TooManyParagraphs";
    case FilterReason::kEvalOverlap:
      return "EvalOverlap";
    case FilterReason::kUnresolvedDoc:
      return "UnresolvedDoc";
    case FilterReason::kTooLong:
      return "TooLong";
    case FilterReason::kAutomatedComment:
      return "AutomatedComment";
    case FilterReason::kRedirect:
      return "Redirect";
    case FilterReason::kOverTokenBudget:
      return "OverTokenBudget";
    case FilterReason::kDownsampled:
      return "Downsampled";
  }
  return "Unknown";
}

FilterVerdict filter_edit_pair(const EditPair& pair, const RawRevision& revision, const FilterConfig& config) {
  using R = FilterReason;
  if (revision.is_redirect || is_redirect_text(revision.text)) return FilterVerdict::reject(R::kRedirect);
  if (revision.is_bot || looks_like_bot(revision.username)) return FilterVerdict::reject(R::kBot);
  const bool reverted = config.reverted_revs.count(revision.rev_id) > 0 ||
                        (pair.meta.is_object() && pair.meta.value("reverted", false));
  if (reverted) return FilterVerdict::reject(R::kReverted);
  if (config.eval_pages.count(pair.origin.page_id) || config.eval_pages.count(revision.page_id) ||
      (!pair.title.empty() && config.eval_pages.count(pair.title))) {
    return FilterVerdict::reject(R::kEvalOverlap);
  }
  if (std::max(pair.raw_chars, revision.text.size()) > config.max_raw_chars) return FilterVerdict::reject(R::kTooLong);
  const std::string comment = text::to_lower(pair.comment.empty() ? revision.comment : pair.comment);
  for (const auto& needle : config.comment_blocklist) {
    if (comment.find(text::to_lower(needle)) != std::string::npos) return FilterVerdict::reject(R::kAutomatedComment);
  }
  const std::size_t paragraphs =
      pair.paragraphs_affected ? pair.paragraphs_affected : diff::affected_paragraphs(pair.source, pair.target).count;
  if (paragraphs > config.max_paragraphs) return FilterVerdict::reject(R::kTooManyParagraphs);
  if (config.doc_resolvable) {
    for (const auto& id : pair.doc_ids) {
      if (!config.doc_resolvable(id)) return FilterVerdict::reject(R::kUnresolvedDoc);
    }
  }
  const auto& tok = config.tokenizer ? *config.tokenizer : text::default_tokenizer();
  if (tok.count(pair.source) > config.max_paragraph_units || tok.count(pair.target) > config.max_paragraph_units) {
    return FilterVerdict::reject(R::kOverTokenBudget);
  }
  return FilterVerdict::keep();
}

std::vector<EditPair> downsample_by_comment(std::vector<EditPair> pairs, std::size_t max_avg, Rng& rng,
                                            std::vector<FilterVerdict>* verdicts) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& p : pairs) ++counts[p.comment];
  std::vector<EditPair> out;
  if (verdicts) verdicts->clear();
  for (auto& p : pairs) {
    const std::size_t n = counts[p.comment];
    bool keep = true;
    if (n > max_avg) keep = rng.bernoulli(static_cast<double>(max_avg) / static_cast<double>(n));
    if (verdicts) verdicts->push_back(keep ? FilterVerdict::keep() : FilterVerdict::reject(FilterReason::kDownsampled));
    if (keep) out.push_back(std::move(p));
  }
  return out;
}

std::vector<SourceDocument> chunk_document(const SourceDocument& doc, std::size_t size) {
  if (size == 0) throw InvalidArgument("chunk size must be positive");
  auto ws = text::words(doc.content);
  std::vector<SourceDocument> out;
  for (std::size_t i = 0, n = 0; i < ws.size(); i += size, ++n) {
    std::vector<std::string> part(ws.begin() + static_cast<std::ptrdiff_t>(i),
                                  ws.begin() + static_cast<std::ptrdiff_t>(std::min(ws.size(), i + size)));
    out.push_back({doc.id + "@@" + std::to_string(n), doc.domain, doc.title, text::join(part, " ")});
  }
  return out;
}

std::string parent_id(std::string_view chunk_id) {
  std::size_t p = chunk_id.rfind("@@");
  return std::string(p == std::string_view::npos ? chunk_id : chunk_id.substr(0, p));
}

namespace {

std::vector<std::string> index_terms(std::string_view s) {
  std::vector<std::string> out;
  const auto& stop = control::Lexicon::stopwords();
  for (auto& t : text::metric_tokens(s, true)) {
    bool has_alnum = std::any_of(t.begin(), t.end(), [](char c) {
      auto u = static_cast<unsigned char>(c);
      return u >= 0x80 || std::isalnum(u);
    });
    if (has_alnum && !stop.contains(t)) out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

std::vector<std::size_t> Bm25Ranker::rank(std::string_view query, std::span<const SourceDocument> candidates,
                                          std::size_t top) const {
  const std::size_t n = candidates.size();
  std::vector<std::unordered_map<std::string, std::size_t>> tf(n);
  std::vector<std::size_t> len(n);
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    auto terms = index_terms(candidates[i].title + " " + candidates[i].content);
    len[i] = terms.size();
    total += static_cast<double>(terms.size());
    for (auto& t : terms) ++tf[i][t];
  }
  const double avgdl = n ? std::max(1.0, total / static_cast<double>(n)) : 1.0;
  auto q = index_terms(query);
  std::sort(q.begin(), q.end());
  q.erase(std::unique(q.begin(), q.end()), q.end());
  std::vector<double> score(n, 0.0);
  for (const auto& term : q) {
    std::size_t df = 0;
    for (std::size_t i = 0; i < n; ++i) df += tf[i].count(term);
    if (!df) continue;
    const double idf = std::log(1.0 + (static_cast<double>(n - df) + 0.5) / (static_cast<double>(df) + 0.5));
    for (std::size_t i = 0; i < n; ++i) {
      auto it = tf[i].find(term);
      if (it == tf[i].end()) continue;
      const double f = static_cast<double>(it->second);
      score[i] += idf * f * (k1_ + 1) / (f + k1_ * (1 - b_ + b_ * static_cast<double>(len[i]) / avgdl));
    }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  if (order.size() > top) order.resize(top);
  return order;
}

LocalCorpus::LocalCorpus(const std::vector<SourceDocument>& docs, std::size_t chunk_words) {
  for (const auto& d : docs) {
    auto cs = chunk_document(d, chunk_words);
    chunks_.insert(chunks_.end(), cs.begin(), cs.end());
  }
}

LocalCorpus LocalCorpus::load_jsonl(const std::filesystem::path& path, std::size_t chunk_words) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus '" + path.string() + "'");
  std::vector<SourceDocument> docs;
  std::string line;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    docs.push_back(nlohmann::json::parse(line).get<SourceDocument>());
  }
  return LocalCorpus(docs, chunk_words);
}

std::vector<SourceDocument> LocalCorpus::search(std::string_view query, std::size_t top, const Ranker& ranker,
                                                const std::unordered_set<std::string>& exclude_parents) const {
  std::vector<SourceDocument> pool;
  for (const auto& c : chunks_) {
    if (!exclude_parents.count(parent_id(c.id))) pool.push_back(c);
  }
  std::vector<SourceDocument> out;
  for (auto i : ranker.rank(query, pool, top)) out.push_back(pool[i]);
  return out;
}

std::string DocStore::file_name(std::string_view id) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : id) {
    if (std::isalnum(c) || c == '.' || c == '_' || c == '-') {
      out += static_cast<char>(c);
    } else {
      out += '%';
      out += kHex[c >> 4];
      out += kHex[c & 15];
    }
  }
  return out + ".json";
}

std::optional<SourceDocument> DocStore::get(const std::string& id) const {
  std::ifstream in(dir_ / file_name(id));
  if (!in) return std::nullopt;
  try {
    auto d = nlohmann::json::parse(in).get<SourceDocument>();
    if (d.id != id) return std::nullopt;
    return d;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

void DocStore::put(const SourceDocument& doc) const {
  std::filesystem::create_directories(dir_);
  std::ofstream out(dir_ / file_name(doc.id));
  if (!out) throw IoError("cannot write document '" + doc.id + "'");
  out << nlohmann::json(doc).dump() << '\n';
}

bool DocStore::contains(const std::string& id) const { return std::filesystem::exists(dir_ / file_name(id)); }

Resolver DocStore::resolver() const {
  return [store = *this](const std::string& id) { return store.get(id); };
}

SourceDocument best_chunk(const SourceDocument& doc, std::string_view query, const Ranker& ranker, std::size_t size) {
  auto chunks = chunk_document(doc, size);
  if (chunks.size() <= 1) return doc;
  auto best = ranker.rank(query, chunks, 1);
  SourceDocument out = doc;
  out.content = chunks[best.front()].content;
  return out;
}

DocumentSet assemble_document_set(const EditPair& pair, const Resolver& resolver, const Ranker& ranker,
                                  const LocalCorpus& corpus, std::size_t k) {
  DocumentSet set;
  std::unordered_set<std::string> used;
  for (const auto& id : pair.doc_ids) {
    if (set.size() >= k) break;
    auto d = resolver(id);
    if (!d) throw UnresolvedDoc("cannot resolve document '" + id + "'");
    set.add(best_chunk(*d, pair.target, ranker), Provenance::kCited);
    used.insert(id);
  }
  if (set.size() < k) {
    for (auto& c : corpus.search(pair.target, corpus.chunks().size(), ranker, used)) {
      if (set.size() >= k) break;
      std::string parent = parent_id(c.id);
      if (!used.insert(parent).second) continue;
      set.add(std::move(c), Provenance::kRetrieved);
    }
  }
  return set;
}

std::optional<MinedKind> classify_cite_quote(std::string_view source, std::string_view target) {
  const auto rs = format::find_citation_refs(source);
  const auto rt = format::find_citation_refs(target);
  auto without = [&](const format::CitationRef& r, bool eat_space) {
    std::size_t b = r.span.begin;
    if (eat_space && b > 0 && target[b - 1] == ' ') --b;
    std::string t(target.substr(0, b));
    t.append(target.substr(r.span.end));
    return t;
  };
  if (rt.size() == rs.size() + 1) {
    for (const auto& r : rt) {
      if (r.quote) continue;
      if (without(r, false) == source || without(r, true) == source) return MinedKind::kCite;
    }
    return std::nullopt;
  }
  if (rt.size() == rs.size() && !rt.empty()) {
    for (std::size_t i = 0; i < rt.size(); ++i) {
      if (!rt[i].quote || rs[i].quote || rt[i].id != rs[i].id) continue;
      std::string t(target.substr(0, rt[i].span.begin));
      t += format::render_ref(rt[i].id, std::nullopt);
      t.append(target.substr(rt[i].span.end));
      if (t == source) return MinedKind::kQuote;
    }
  }
  return std::nullopt;
}

namespace {

// Index of the ref that differs between source and target for a mined pair.
const format::CitationRef* gold_ref(const std::vector<format::CitationRef>& rs,
                                    const std::vector<format::CitationRef>& rt, MinedKind kind) {
  if (kind == MinedKind::kQuote) {
    for (std::size_t i = 0; i < rt.size(); ++i) {
      if (rt[i].quote && !rs[i].quote) return &rt[i];
    }
    return nullptr;
  }
  // The inserted ref is the first position where the id sequences diverge.
  for (std::size_t i = 0; i < rt.size(); ++i) {
    if (i >= rs.size() || rs[i].id != rt[i].id || rs[i].quote != rt[i].quote) return &rt[i];
  }
  return nullptr;
}

std::optional<SourceDocument> quote_chunk(const SourceDocument& doc, const std::string& quote) {
  for (auto& c : chunk_document(doc)) {
    if (c.content.find(quote) != std::string::npos) {
      SourceDocument out = doc;
      out.content = c.content;
      return out;
    }
  }
  // Quote straddles a chunk boundary: take a window starting at its first word.
  std::size_t at = doc.content.find(quote);
  if (at == std::string::npos) return std::nullopt;
  auto spans = text::word_spans(doc.content);
  std::size_t first = 0;
  while (first + 1 < spans.size() && spans[first + 1].begin <= at) ++first;
  const std::size_t need = std::max<std::size_t>(100, text::word_count(quote) + 1);
  std::vector<std::string> part;
  for (std::size_t i = first; i < spans.size() && part.size() < need; ++i) part.emplace_back(spans[i].of(doc.content));
  SourceDocument out = doc;
  out.content = text::join(part, " ");
  if (out.content.find(quote) == std::string::npos) out.content = doc.content;
  return out;
}

}  // namespace

MinedSets mine_cite_quote_pairs(std::span<const EditPair> pairs, const Resolver& resolver, const Ranker& ranker,
                                const LocalCorpus& corpus, Rng& rng, std::size_t distractors) {
  MinedSets out;
  for (const auto& p : pairs) {
    auto kind = classify_cite_quote(p.source, p.target);
    if (!kind) continue;
    const auto rs = format::find_citation_refs(p.source);
    const auto rt = format::find_citation_refs(p.target);
    const auto* ref = gold_ref(rs, rt, *kind);
    if (!ref) continue;
    auto doc = resolver(ref->id);
    if (!doc) {
      ++out.dropped;
      continue;
    }
    std::optional<SourceDocument> gold =
        *kind == MinedKind::kQuote ? quote_chunk(*doc, *ref->quote) : best_chunk(*doc, p.target, ranker);
    if (!gold) {
      ++out.dropped;
      continue;
    }

    std::vector<std::pair<SourceDocument, Provenance>> items{{*gold, Provenance::kCited}};
    for (auto& c : corpus.search(p.target, distractors, ranker, {ref->id})) {
      items.emplace_back(std::move(c), Provenance::kRetrieved);
    }
    rng.shuffle(std::span(items));

    MinedExample ex;
    ex.kind = *kind;
    for (auto& [d, prov] : items) ex.docs.add(std::move(d), prov);
    ex.pair = p;
    ex.pair.comment = *kind == MinedKind::kCite ? "Add a citation" : "Add a quote";
    ex.pair.doc_ids = {ref->id};
    ex.pair.meta["original_comment"] = p.comment;
    ex.pair.meta["gold_doc"] = ref->id;
    (*kind == MinedKind::kCite ? out.cite : out.quote).push_back(std::move(ex));
  }
  return out;
}

}  // namespace peer::corpus
