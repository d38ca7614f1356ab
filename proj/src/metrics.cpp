#include "peer/metrics.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "peer/diff.hpp"
#include "peer/errors.hpp"
#include "peer/format.hpp"
#include "peer/text.hpp"

namespace peer::metrics {

namespace {

constexpr int kMaxOrder = 4;

using Counter = std::unordered_map<std::string, double>;

Counter ngrams(const std::vector<std::string>& toks, int n) {
  Counter c;
  const auto un = static_cast<std::size_t>(n);
  for (std::size_t i = 0; i + un <= toks.size(); ++i) {
    std::string key = toks[i];
    for (std::size_t j = 1; j < un; ++j) {
      key += '\x1f';
      key += toks[i + j];
    }
    c[key] += 1;
  }
  return c;
}

Counter scaled(const Counter& c, double f) {
  Counter out;
  for (const auto& [k, v] : c) out[k] = v * f;
  return out;
}

Counter intersect(const Counter& a, const Counter& b) {
  Counter out;
  for (const auto& [k, v] : a) {
    auto it = b.find(k);
    if (it != b.end()) out[k] = std::min(v, it->second);
  }
  return out;
}

// a - b keeping positive counts only.
Counter subtract(const Counter& a, const Counter& b) {
  Counter out;
  for (const auto& [k, v] : a) {
    auto it = b.find(k);
    double r = v - (it == b.end() ? 0.0 : it->second);
    if (r > 0) out[k] = r;
  }
  return out;
}

double total(const Counter& c) {
  double s = 0;
  for (const auto& [k, v] : c) s += v;
  return s;
}

double get(const Counter& c, const std::string& k) {
  auto it = c.find(k);
  return it == c.end() ? 0.0 : it->second;
}

double f1(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }

struct SariGrams {
  Counter src_rep, hyp_rep, refs, src, hyp;
};

SariGrams sari_grams(const std::vector<std::string>& s, const std::vector<std::vector<std::string>>& rs,
                     const std::vector<std::string>& h, int n) {
  SariGrams g;
  g.src = ngrams(s, n);
  g.hyp = ngrams(h, n);
  for (const auto& r : rs) {
    for (const auto& [k, v] : ngrams(r, n)) g.refs[k] += v;
  }
  const double numref = static_cast<double>(rs.size());
  g.src_rep = scaled(g.src, numref);
  g.hyp_rep = scaled(g.hyp, numref);
  return g;
}

std::vector<std::vector<std::string>> tokenize_all(std::span<const std::string> xs, bool lowercase) {
  std::vector<std::vector<std::string>> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(tokens(x, lowercase));
  return out;
}

}  // namespace

std::vector<std::string> tokens(std::string_view s, bool lowercase) { return text::metric_tokens(s, lowercase); }

double sari(std::string_view source, std::span<const std::string> refs, std::string_view hyp, bool lowercase) {
  if (refs.empty()) throw InvalidArgument("sari needs at least one reference");
  const auto s = tokens(source, lowercase);
  const auto h = tokens(hyp, lowercase);
  const auto rs = tokenize_all(refs, lowercase);

  double keep_sum = 0, del_sum = 0, add_sum = 0;
  for (int n = 1; n <= kMaxOrder; ++n) {
    const auto g = sari_grams(s, rs, h, n);

    const Counter keep = intersect(g.src_rep, g.hyp_rep);
    const Counter keep_good = intersect(keep, g.refs);
    const Counter keep_all = intersect(g.src_rep, g.refs);
    double kp = 1, kr = 1;
    if (!keep.empty()) {
      double acc = 0;
      for (const auto& [k, v] : keep) acc += get(keep_good, k) / v;
      kp = acc / static_cast<double>(keep.size());
    }
    if (!keep_all.empty()) {
      double acc = 0;
      for (const auto& [k, v] : keep_all) acc += get(keep_good, k) / v;
      kr = acc / static_cast<double>(keep_all.size());
    }
    keep_sum += f1(kp, kr);

    const Counter del = subtract(g.src_rep, g.hyp_rep);
    const Counter del_good = subtract(del, g.refs);
    double dp = 1;
    if (!del.empty()) {
      double acc = 0;
      for (const auto& [k, v] : del) acc += get(del_good, k) / v;
      dp = acc / static_cast<double>(del.size());
    }
    del_sum += dp;

    std::size_t added = 0, good = 0, wanted = 0;
    for (const auto& [k, v] : g.hyp) {
      if (g.src.count(k)) continue;
      ++added;
      good += g.refs.count(k);
    }
    for (const auto& [k, v] : g.refs) wanted += g.src.count(k) ? 0 : 1;
    const double ap = added ? static_cast<double>(good) / static_cast<double>(added) : 1.0;
    const double ar = wanted ? static_cast<double>(good) / static_cast<double>(wanted) : 1.0;
    add_sum += f1(ap, ar);
  }
  return 100.0 * (keep_sum + del_sum + add_sum) / (3.0 * kMaxOrder);
}

SariScores corpus_sari_scores(std::span<const std::string> sources, std::span<const std::vector<std::string>> refs,
                              std::span<const std::string> hyps, bool lowercase) {
  if (sources.size() != refs.size() || sources.size() != hyps.size()) {
    throw InvalidArgument("sari: sources, refs and hyps differ in length");
  }
  double add_c[kMaxOrder]{}, add_t[kMaxOrder]{}, add_r[kMaxOrder]{};
  double keep_c[kMaxOrder]{}, keep_t[kMaxOrder]{}, keep_r[kMaxOrder]{};
  double del_c[kMaxOrder]{}, del_t[kMaxOrder]{};
  for (std::size_t i = 0; i < sources.size(); ++i) {
    if (refs[i].empty()) throw InvalidArgument("sari needs at least one reference");
    const auto s = tokens(sources[i], lowercase);
    const auto h = tokens(hyps[i], lowercase);
    const auto rs = tokenize_all(refs[i], lowercase);
    for (int n = 1; n <= kMaxOrder; ++n) {
      const auto g = sari_grams(s, rs, h, n);
      const int j = n - 1;
      for (const auto& [k, v] : g.hyp) {
        if (g.src.count(k)) continue;
        add_t[j] += 1;
        add_c[j] += static_cast<double>(g.refs.count(k));
      }
      for (const auto& [k, v] : g.refs) add_r[j] += g.src.count(k) ? 0 : 1;

      const Counter keep = intersect(g.src_rep, g.hyp_rep);
      const Counter keep_all = intersect(g.src_rep, g.refs);
      keep_c[j] += total(intersect(keep, keep_all));
      keep_t[j] += total(keep);
      keep_r[j] += total(keep_all);

      const Counter del = subtract(g.src_rep, g.hyp_rep);
      del_c[j] += total(intersect(del, subtract(g.src_rep, g.refs)));
      del_t[j] += total(del);
    }
  }
  auto ratio = [](double a, double b) { return b > 0 ? a / b : 0.0; };
  SariScores out;
  for (int j = 0; j < kMaxOrder; ++j) {
    out.add += f1(ratio(add_c[j], add_t[j]), ratio(add_c[j], add_r[j]));
    out.keep += f1(ratio(keep_c[j], keep_t[j]), ratio(keep_c[j], keep_r[j]));
    out.del += ratio(del_c[j], del_t[j]);
  }
  out.add *= 100.0 / kMaxOrder;
  out.keep *= 100.0 / kMaxOrder;
  out.del *= 100.0 / kMaxOrder;
  return out;
}

double corpus_sari(std::span<const std::string> sources, std::span<const std::vector<std::string>> refs,
                   std::span<const std::string> hyps, bool lowercase) {
  return corpus_sari_scores(sources, refs, hyps, lowercase).sari();
}

double gleu(std::span<const std::string> sources, std::span<const std::vector<std::string>> refs,
            std::span<const std::string> hyps, const GleuOptions& opts) {
  if (sources.size() != refs.size() || sources.size() != hyps.size()) {
    throw InvalidArgument("gleu: sources, refs and hyps differ in length");
  }
  if (sources.empty() || opts.iterations == 0) return 0.0;

  // Per item and reference: [hyp_len, ref_len, (match_n, total_n) for n=1..4].
  using Stats = std::array<double, 2 + 2 * kMaxOrder>;
  std::vector<std::vector<Stats>> per(sources.size());
  for (std::size_t i = 0; i < sources.size(); ++i) {
    if (refs[i].empty()) throw InvalidArgument("gleu needs at least one reference per item");
    const auto s = tokens(sources[i], opts.lowercase);
    const auto h = tokens(hyps[i], opts.lowercase);
    std::vector<Counter> sg, hg;
    for (int n = 1; n <= kMaxOrder; ++n) {
      sg.push_back(ngrams(s, n));
      hg.push_back(ngrams(h, n));
    }
    for (const auto& ref : refs[i]) {
      const auto r = tokens(ref, opts.lowercase);
      Stats st{};
      st[0] = static_cast<double>(h.size());
      st[1] = static_cast<double>(r.size());
      for (int n = 1; n <= kMaxOrder; ++n) {
        const Counter rg = ngrams(r, n);
        // source n-grams absent from this reference
        Counter s_only;
        for (const auto& [k, v] : sg[n - 1]) {
          if (!rg.count(k)) s_only[k] = v;
        }
        const double m = total(intersect(hg[n - 1], rg)) - total(intersect(hg[n - 1], s_only));
        st[2 * n] = std::max(m, 0.0);
        st[2 * n + 1] = std::max(static_cast<double>(h.size()) + 1.0 - n, 0.0);
      }
      per[i].push_back(st);
    }
  }

  double sum = 0;
  for (std::size_t it = 0; it < opts.iterations; ++it) {
    Rng rng(derive_seed(opts.seed, static_cast<std::uint64_t>(it)));
    Stats agg{};
    for (const auto& item : per) {
      const auto& st = item[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(item.size()) - 1))];
      for (std::size_t k = 0; k < agg.size(); ++k) agg[k] += st[k];
    }
    if (std::any_of(agg.begin(), agg.end(), [](double x) { return x == 0; })) continue;
    double log_prec = 0;
    for (int n = 1; n <= kMaxOrder; ++n) log_prec += std::log(agg[2 * n] / agg[2 * n + 1]);
    sum += std::exp(std::min(0.0, 1.0 - agg[1] / agg[0]) + log_prec / kMaxOrder);
  }
  return 100.0 * sum / static_cast<double>(opts.iterations);
}

namespace {

std::vector<std::string> rouge_tokens(std::string_view s) {
  std::vector<std::string> out;
  for (auto& t : tokens(s, true)) {
    if (std::any_of(t.begin(), t.end(), [](char c) {
          auto u = static_cast<unsigned char>(c);
          return u >= 0x80 || std::isalnum(u);
        })) {
      out.push_back(std::move(t));
    }
  }
  return out;
}

double rouge_n(const std::vector<std::string>& h, const std::vector<std::string>& r, int n) {
  const Counter hg = ngrams(h, n), rg = ngrams(r, n);
  const double th = total(hg), tr = total(rg);
  if (th == 0 && tr == 0) return h == r ? 100.0 : 0.0;
  if (th == 0 || tr == 0) return 0.0;
  const double overlap = total(intersect(hg, rg));
  return 100.0 * f1(overlap / th, overlap / tr);
}

double rouge_l(const std::vector<std::string>& h, const std::vector<std::string>& r) {
  if (h.empty() && r.empty()) return 100.0;
  if (h.empty() || r.empty()) return 0.0;
  std::vector<std::size_t> prev(r.size() + 1, 0), cur(r.size() + 1, 0);
  for (std::size_t i = 1; i <= h.size(); ++i) {
    for (std::size_t j = 1; j <= r.size(); ++j) {
      cur[j] = h[i - 1] == r[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  const double lcs = static_cast<double>(prev[r.size()]);
  return 100.0 * f1(lcs / static_cast<double>(h.size()), lcs / static_cast<double>(r.size()));
}

std::string updated_text(std::string_view source, std::string_view target) {
  std::vector<std::string> parts;
  for (auto& u : diff::updated_sentence_pairs(source, target)) parts.push_back(std::move(u.text));
  return text::join(parts, " ");
}

}  // namespace

double rouge(std::string_view hyp, std::string_view ref, RougeVariant variant) {
  const auto h = rouge_tokens(hyp), r = rouge_tokens(ref);
  switch (variant) {
    case RougeVariant::k1:
      return rouge_n(h, r, 1);
    case RougeVariant::k2:
      return rouge_n(h, r, 2);
    case RougeVariant::kL:
      return rouge_l(h, r);
  }
  return 0;
}

RougeScores rouge_all(std::string_view hyp, std::string_view ref) {
  const auto h = rouge_tokens(hyp), r = rouge_tokens(ref);
  return {rouge_n(h, r, 1), rouge_n(h, r, 2), rouge_l(h, r)};
}

RougeScores update_rouge_all(std::string_view source, std::string_view gold, std::string_view hyp) {
  const std::string g = updated_text(source, gold);
  const std::string h = updated_text(source, hyp);
  if (g.empty() && h.empty()) return {100, 100, 100};
  if (g.empty() || h.empty()) return {0, 0, 0};
  return rouge_all(h, g);
}

double update_rouge(std::string_view source, std::string_view gold, std::string_view hyp, RougeVariant variant) {
  return update_rouge_all(source, gold, hyp).get(variant);
}

namespace {

// Markers of `x` that are not already in `source` (multiset difference).
std::vector<format::CitationMarker> added_markers(const format::DecodedText& source, const format::DecodedText& x) {
  std::vector<format::CitationMarker> pool = source.markers, out;
  for (const auto& m : x.markers) {
    auto it = std::find(pool.begin(), pool.end(), m);
    if (it != pool.end()) {
      pool.erase(it);
    } else {
      out.push_back(m);
    }
  }
  return out;
}

}  // namespace

CiteResult cite_accuracy(std::string_view source, std::string_view pred, std::string_view gold) {
  const auto s = format::decode_citation_markers(source);
  const auto p = format::decode_citation_markers(pred);
  const auto g = format::decode_citation_markers(gold);
  CiteResult r;
  if (!p.malformed.empty()) {
    r.undecodable = true;
    return r;
  }
  const auto pn = added_markers(s, p);
  const auto gn = added_markers(s, g);
  r.correct = pn.size() == 1 && gn.size() == 1 && pn[0].doc_index == gn[0].doc_index &&
              pn[0].position == gn[0].position;
  return r;
}

RougeScores quote_rouge(std::string_view source, std::string_view pred, std::string_view gold) {
  const auto s = format::decode_citation_markers(source);
  auto first_quote = [&](std::string_view x) -> std::optional<std::string> {
    for (const auto& m : added_markers(s, format::decode_citation_markers(x))) {
      if (m.quote) return m.quote;
    }
    return std::nullopt;
  };
  const auto pq = first_quote(pred);
  const auto gq = first_quote(gold);
  if (!pq || !gq) return {};
  return rouge_all(*pq, *gq);
}

QuoteStrategy parse_quote_strategy(std::string_view s) {
  if (s == "random") return QuoteStrategy::kRandom;
  if (s == "lead") return QuoteStrategy::kLead;
  throw InvalidArgument("unknown quote strategy '" + std::string(s) + "'");
}

std::string baseline_quote(std::string_view chunk, QuoteStrategy strategy, std::size_t n, Rng& rng) {
  const auto spans = text::word_spans(chunk);
  if (spans.empty()) throw InvalidArgument("baseline_quote needs a non-empty chunk");
  n = std::clamp<std::size_t>(n, 1, spans.size());
  std::size_t start = 0;
  if (strategy == QuoteStrategy::kRandom) {
    start = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(spans.size() - n)));
  }
  return std::string(chunk.substr(spans[start].begin, spans[start + n - 1].end - spans[start].begin));
}

std::size_t median_length(std::span<const std::string> quotes) {
  if (quotes.empty()) return 0;
  std::vector<std::size_t> ls;
  for (const auto& q : quotes) ls.push_back(text::word_count(q));
  std::sort(ls.begin(), ls.end());
  return ls[(ls.size() - 1) / 2];
}

// ---- datasets ----

void to_json(nlohmann::json& j, const EvalItem& e) {
  j = {{"id", e.id}, {"source", e.source}, {"refs", e.refs}};
  if (!e.meta.empty()) j["meta"] = e.meta;
}

void from_json(const nlohmann::json& j, EvalItem& e) {
  const auto& id = j.at("id");
  e.id = id.is_string() ? id.get<std::string>() : id.dump();
  e.source = j.at("source").get<std::string>();
  e.refs.clear();
  if (j.contains("refs")) e.refs = j.at("refs").get<std::vector<std::string>>();
  if (j.contains("target")) e.refs.push_back(j.at("target").get<std::string>());
  if (e.refs.empty()) throw ParseError("gold item '" + e.id + "' has no reference");
  e.meta = j.value("meta", nlohmann::json::object());
}

namespace {

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<nlohmann::json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  while (!out.empty() && out.back().empty()) out.pop_back();
  return out;
}

std::string id_of(const nlohmann::json& j, std::size_t fallback) {
  for (const char* k : {"id", "doc_id", "sent_id"}) {
    if (j.contains(k)) return j[k].is_string() ? j[k].get<std::string>() : j[k].dump();
  }
  return std::to_string(fallback);
}

// Parallel-line datasets: one source file plus numbered reference files.
std::vector<EvalItem> parallel(const std::filesystem::path& src, const std::vector<std::filesystem::path>& ref_files) {
  if (ref_files.empty()) throw NotFound("no reference files next to '" + src.string() + "'");
  const auto sources = read_lines(src);
  std::vector<std::vector<std::string>> refs;
  for (const auto& f : ref_files) {
    refs.push_back(read_lines(f));
    if (refs.back().size() != sources.size()) {
      throw ParseError("'" + f.string() + "' has " + std::to_string(refs.back().size()) + " lines, expected " +
                       std::to_string(sources.size()));
    }
  }
  std::vector<EvalItem> out;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    EvalItem e;
    e.id = std::to_string(i);
    e.source = sources[i];
    for (const auto& r : refs) e.refs.push_back(r[i]);
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<std::filesystem::path> numbered(const std::filesystem::path& dir, const std::string& prefix) {
  std::vector<std::filesystem::path> out;
  for (int i = 0; i < 100; ++i) {
    auto p = dir / (prefix + std::to_string(i));
    if (!std::filesystem::exists(p)) {
      if (i == 0) continue;  // allow 1-based numbering
      break;
    }
    out.push_back(p);
  }
  return out;
}

std::filesystem::path find_file(const std::filesystem::path& dir, std::initializer_list<const char*> names) {
  for (const char* n : names) {
    if (std::filesystem::exists(dir / n)) return dir / n;
  }
  throw NotFound("none of the expected dataset files found in '" + dir.string() + "'");
}

std::vector<EvalItem> load_jfleg(const std::filesystem::path& path) {
  std::filesystem::path src = path;
  if (std::filesystem::is_directory(path)) src = find_file(path, {"test.src", "test/test.src", "dev.src", "dev/dev.src"});
  const std::string stem = src.stem().string();
  return parallel(src, numbered(src.parent_path(), stem + ".ref"));
}

std::vector<EvalItem> load_asset(const std::filesystem::path& path) {
  std::filesystem::path src = path;
  if (std::filesystem::is_directory(path)) {
    src = find_file(path, {"asset.test.orig", "dataset/asset.test.orig", "asset.valid.orig", "dataset/asset.valid.orig"});
  }
  std::string base = src.filename().string();
  base = base.substr(0, base.size() - std::string(".orig").size());
  return parallel(src, numbered(src.parent_path(), base + ".simp."));
}

std::vector<EvalItem> load_iterater(const std::filesystem::path& path) {
  std::filesystem::path file = path;
  if (std::filesystem::is_directory(path)) file = find_file(path, {"test.json", "test.jsonl"});
  std::vector<EvalItem> out;
  for (const auto& j : read_jsonl(file)) {
    EvalItem e;
    e.id = id_of(j, out.size());
    if (j.contains("before_sent")) {
      e.source = j["before_sent"].get<std::string>();
      e.refs = {j.at("after_sent").get<std::string>()};
    } else {
      e.source = j.at("before_revision").get<std::string>();
      e.refs = {j.at("after_revision").get<std::string>()};
    }
    if (j.contains("labels")) e.meta["labels"] = j["labels"];
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<EvalItem> load_wnc(const std::filesystem::path& path) {
  std::filesystem::path file = path;
  if (std::filesystem::is_directory(path)) file = find_file(path, {"biased.word.test", "biased.full.test"});
  std::vector<EvalItem> out;
  for (const auto& line : read_lines(file)) {
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (cols.size() < 3) throw ParseError("WNC line with fewer than 3 columns in '" + file.string() + "'");
    EvalItem e;
    e.id = cols[0];
    const bool raw = cols.size() >= 5;
    e.source = raw ? cols[3] : cols[1];
    e.refs = {raw ? cols[4] : cols[2]};
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<EvalItem> load_fruit(const std::filesystem::path& path) {
  std::filesystem::path file = path;
  if (std::filesystem::is_directory(path)) file = find_file(path, {"test.jsonl", "gold_test.jsonl"});
  std::vector<EvalItem> out;
  for (const auto& j : read_jsonl(file)) {
    EvalItem e;
    e.id = id_of(j, out.size());
    std::string src = j.contains("inputs") ? j["inputs"].get<std::string>() : j.at("source").get<std::string>();
    // evidence follows the article in the seq2seq release
    if (auto p = src.find(" [CONTEXT] "); p != std::string::npos) src.resize(p);
    e.source = src;
    e.refs = {j.contains("targets") ? j["targets"].get<std::string>() : j.at("target").get<std::string>()};
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace

std::vector<EvalItem> load_gold_jsonl(const std::filesystem::path& path) {
  std::vector<EvalItem> out;
  for (const auto& j : read_jsonl(path)) out.push_back(j.get<EvalItem>());
  return out;
}

std::vector<Prediction> load_pred_jsonl(const std::filesystem::path& path) {
  std::vector<Prediction> out;
  for (const auto& j : read_jsonl(path)) {
    Prediction p;
    p.id = id_of(j, out.size());
    bool found = false;
    for (const char* k : {"prediction", "pred", "output", "text"}) {
      if (j.contains(k)) {
        p.text = j[k].get<std::string>();
        found = true;
        break;
      }
    }
    if (!found) throw ParseError("prediction '" + p.id + "' has no prediction field");
    out.push_back(std::move(p));
  }
  return out;
}

void write_gold_jsonl(const std::filesystem::path& path, std::span<const EvalItem> items) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  for (const auto& e : items) out << nlohmann::json(e).dump() << '\n';
}

std::vector<Prediction> copy_predictions(std::span<const EvalItem> gold) {
  std::vector<Prediction> out;
  for (const auto& g : gold) out.push_back({g.id, g.source});
  return out;
}

std::vector<EvalItem> load_task(std::string_view task, const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw NotFound("dataset path '" + path.string() + "' does not exist");
  if (task == "jfleg") return load_jfleg(path);
  if (task == "asset") return load_asset(path);
  if (task == "iterater") return load_iterater(path);
  if (task == "wnc") return load_wnc(path);
  if (task == "fruit") return load_fruit(path);
  if (task == "wafer-ins" || task == "natural-edits" || task == "gold") return load_gold_jsonl(path);
  throw InvalidArgument("unknown eval task '" + std::string(task) + "'");
}

std::set<std::string> default_metrics(std::string_view task) {
  if (task == "jfleg") return {"sari", "gleu"};
  if (task == "asset" || task == "iterater") return {"sari"};
  if (task == "wnc") return {"sari", "em"};
  if (task == "fruit") return {"sari", "update_rouge"};
  return {"em", "em_diff", "sari", "rouge"};
}

std::set<std::string> parse_metric_set(std::string_view csv) {
  static const std::set<std::string> known{"em",           "em_diff",       "sari",       "gleu",
                                           "rouge",        "update_rouge",  "cite_accuracy", "quote_rouge"};
  std::set<std::string> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    std::size_t end = csv.find(',', start);
    if (end == std::string_view::npos) end = csv.size();
    std::string name(text::trim(csv.substr(start, end - start)));
    if (!name.empty()) {
      if (!known.count(name)) throw InvalidArgument("unknown metric '" + name + "'");
      out.insert(name);
    }
    start = end + 1;
  }
  if (out.empty()) throw InvalidArgument("empty metric set");
  return out;
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j;
  j["count"] = count;
  j["aggregates"] = aggregates;
  j["undecodable"] = undecodable;
  j["per_example"] = per_example;
  return j;
}

std::string MetricReport::table() const {
  std::ostringstream os;
  os << "metric            value\n";
  for (const auto& [k, v] : aggregates) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-16s %6.2f\n", k.c_str(), v);
    os << buf;
  }
  os << "examples: " << count << "\n";
  return os.str();
}

MetricReport evaluate_dataset(std::span<const EvalItem> gold, std::span<const Prediction> preds,
                              const std::set<std::string>& metrics, const GleuOptions& gleu_opts) {
  if (gold.empty()) throw EmptyDataset("no gold items");
  std::unordered_map<std::string, const Prediction*> by_id;
  for (const auto& p : preds) {
    if (!by_id.emplace(p.id, &p).second) throw IdMismatch("duplicate prediction id '" + p.id + "'");
  }
  if (by_id.size() != gold.size()) {
    throw IdMismatch(std::to_string(preds.size()) + " predictions for " + std::to_string(gold.size()) + " gold items");
  }
  std::vector<std::string> sources, hyps;
  std::vector<std::vector<std::string>> refs;
  for (const auto& g : gold) {
    auto it = by_id.find(g.id);
    if (it == by_id.end()) throw IdMismatch("no prediction for gold id '" + g.id + "'");
    if (g.refs.empty()) throw InvalidArgument("gold item '" + g.id + "' has no reference");
    sources.push_back(g.source);
    hyps.push_back(it->second->text);
    refs.push_back(g.refs);
  }

  auto has = [&](const char* m) { return metrics.count(m) > 0; };
  MetricReport rep;
  rep.count = gold.size();
  std::map<std::string, double> sums;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto& src = sources[i];
    const auto& hyp = hyps[i];
    const auto& rs = refs[i];
    nlohmann::json scores = nlohmann::json::object();
    nlohmann::json flags = nlohmann::json::array();
    auto best = [&](auto fn) {
      double b = 0;
      for (const auto& r : rs) b = std::max(b, fn(r));
      return b;
    };
    if (has("em")) scores["em"] = best([&](const std::string& r) { return diff::em(hyp, r) ? 100.0 : 0.0; });
    if (has("em_diff")) scores["em_diff"] = best([&](const std::string& r) { return 100.0 * diff::em_diff(src, r, hyp); });
    if (has("sari")) scores["sari"] = sari(src, rs, hyp);
    if (has("rouge")) {
      RougeScores b;
      for (const auto& r : rs) {
        auto s = rouge_all(hyp, r);
        b = {std::max(b.r1, s.r1), std::max(b.r2, s.r2), std::max(b.rl, s.rl)};
      }
      scores["rouge1"] = b.r1;
      scores["rouge2"] = b.r2;
      scores["rougeL"] = b.rl;
    }
    if (has("update_rouge")) {
      RougeScores b;
      for (const auto& r : rs) {
        auto s = update_rouge_all(src, r, hyp);
        b = {std::max(b.r1, s.r1), std::max(b.r2, s.r2), std::max(b.rl, s.rl)};
      }
      scores["update_rouge1"] = b.r1;
      scores["update_rouge2"] = b.r2;
      scores["update_rougeL"] = b.rl;
    }
    if (has("cite_accuracy")) {
      auto c = cite_accuracy(src, hyp, rs.front());
      scores["cite_accuracy"] = c.correct ? 100.0 : 0.0;
      if (c.undecodable) {
        flags.push_back("undecodable");
        ++rep.undecodable;
      }
    }
    if (has("quote_rouge")) {
      auto q = quote_rouge(src, hyp, rs.front());
      scores["quote_rouge1"] = q.r1;
      scores["quote_rouge2"] = q.r2;
      scores["quote_rougeL"] = q.rl;
    }
    for (const auto& [k, v] : scores.items()) sums[k] += v.get<double>();
    nlohmann::json ex = {{"id", gold[i].id}, {"scores", scores}};
    if (!flags.empty()) ex["flags"] = flags;
    rep.per_example.push_back(std::move(ex));
  }
  for (const auto& [k, v] : sums) rep.aggregates[k] = v / static_cast<double>(gold.size());
  if (has("sari")) {
    rep.aggregates["sari_mean"] = rep.aggregates["sari"];
    rep.aggregates["sari"] = corpus_sari(sources, refs, hyps);
  }
  if (has("gleu")) rep.aggregates["gleu"] = gleu(sources, refs, hyps, gleu_opts);
  return rep;
}

}  // namespace peer::metrics
