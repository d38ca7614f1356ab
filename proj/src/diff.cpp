#include "peer/diff.hpp"

#include <algorithm>
#include <cstdint>
#include <set>

#include <nlohmann/json.hpp>

#include "peer/errors.hpp"
#include "peer/text.hpp"

namespace peer::diff {

std::string_view op_name(Op op) {
  switch (op) {
    case Op::kInsert:
      return "insert";
    case Op::kDelete:
      return "delete";
    case Op::kReplace:
      return "replace";
  }
  return "replace";
}

Op parse_op(std::string_view name) {
  if (name == "insert") return Op::kInsert;
  if (name == "delete") return Op::kDelete;
  if (name == "replace") return Op::kReplace;
  throw ParseError("unknown diff op '" + std::string(name) + "'");
}

namespace {

enum class Column : std::uint8_t { kMatch, kDelete, kInsert };

// Lexicographically smallest optimal column sequence. A common prefix is
// always matched first by that rule, so it is stripped before the table is
// built. (A common suffix is not: stripping it can change the result.)
std::vector<Column> align(std::span<const std::string_view> a, std::span<const std::string_view> b) {
  std::vector<Column> cols;
  std::size_t p = 0;
  while (p < a.size() && p < b.size() && a[p] == b[p]) {
    cols.push_back(Column::kMatch);
    ++p;
  }
  const std::size_t n = a.size() - p;
  const std::size_t m = b.size() - p;
  if (n == 0 || m == 0) {
    cols.insert(cols.end(), n, Column::kDelete);
    cols.insert(cols.end(), m, Column::kInsert);
    return cols;
  }
  // suffix[i][j] = LCS length of a[p+i:] and b[p+j:].
  const std::size_t w = m + 1;
  std::vector<std::uint32_t> suffix((n + 1) * w, 0);
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t j = m; j-- > 0;) {
      if (a[p + i] == b[p + j]) {
        suffix[i * w + j] = suffix[(i + 1) * w + j + 1] + 1;
      } else {
        suffix[i * w + j] = std::max(suffix[(i + 1) * w + j], suffix[i * w + j + 1]);
      }
    }
  }
  std::size_t i = 0, j = 0;
  while (i < n && j < m) {
    if (a[p + i] == b[p + j]) {
      cols.push_back(Column::kMatch);
      ++i;
      ++j;
    } else if (suffix[(i + 1) * w + j] == suffix[i * w + j]) {
      cols.push_back(Column::kDelete);
      ++i;
    } else {
      cols.push_back(Column::kInsert);
      ++j;
    }
  }
  cols.insert(cols.end(), n - i, Column::kDelete);
  cols.insert(cols.end(), m - j, Column::kInsert);
  return cols;
}

std::vector<std::string_view> as_views(const std::vector<std::string>& v) {
  return {v.begin(), v.end()};
}

}  // namespace

DiffSet diff_tokens(std::span<const std::string_view> a, std::span<const std::string_view> b) {
  DiffSet out;
  const auto cols = align(a, b);
  std::size_t i = 0, j = 0, k = 0;
  while (k < cols.size()) {
    if (cols[k] == Column::kMatch) {
      ++i;
      ++j;
      ++k;
      continue;
    }
    Hunk h;
    h.source_span.begin = i;
    h.target_span.begin = j;
    bool del = false, ins = false;
    while (k < cols.size() && cols[k] != Column::kMatch) {
      if (cols[k] == Column::kDelete) {
        h.source_words.emplace_back(a[i++]);
        del = true;
      } else {
        h.target_words.emplace_back(b[j++]);
        ins = true;
      }
      ++k;
    }
    h.source_span.end = i;
    h.target_span.end = j;
    h.op = del && ins ? Op::kReplace : (del ? Op::kDelete : Op::kInsert);
    out.hunks.push_back(std::move(h));
  }
  return out;
}

DiffSet word_diff(std::string_view a, std::string_view b) {
  auto wa = text::words(a);
  auto wb = text::words(b);
  return diff_tokens(wa, wb);
}

std::vector<std::string> apply_words(std::span<const std::string_view> source, const DiffSet& d) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  for (const auto& h : d.hunks) {
    if (h.source_span.begin < pos || h.source_span.end > source.size()) {
      throw InvalidArgument("diff hunks out of order or out of range");
    }
    for (; pos < h.source_span.begin; ++pos) out.emplace_back(source[pos]);
    out.insert(out.end(), h.target_words.begin(), h.target_words.end());
    pos = h.source_span.end;
  }
  for (; pos < source.size(); ++pos) out.emplace_back(source[pos]);
  return out;
}

std::string apply(std::string_view source, const DiffSet& d) {
  auto ws = text::words(source);
  return text::join(apply_words(ws, d), " ");
}

bool em(std::string_view pred, std::string_view gold) {
  return text::trim_right(pred) == text::trim_right(gold);
}

double em_diff(std::string_view source, std::string_view gold, std::string_view pred) {
  const DiffSet g = word_diff(source, gold);
  const DiffSet p = word_diff(source, pred);
  if (g.empty() && p.empty()) return 1.0;
  std::size_t common = 0;
  for (const auto& hg : g.hunks) {
    for (const auto& hp : p.hunks) {
      if (hg.op == hp.op && hg.source_span == hp.source_span && hg.source_words == hp.source_words &&
          hg.target_words == hp.target_words) {
        ++common;
        break;
      }
    }
  }
  return static_cast<double>(common) / static_cast<double>(std::max(g.size(), p.size()));
}

AffectedParagraphs affected_paragraphs(std::string_view source, std::string_view target) {
  auto keys = [](std::string_view s) {
    std::vector<std::string> out;
    for (const auto& sp : text::paragraph_spans(s)) {
      std::vector<std::string> ws;
      for (auto w : text::words(sp.of(s))) ws.emplace_back(w);
      out.push_back(text::join(ws, " "));
    }
    return out;
  };
  const auto ks = keys(source);
  const auto kt = keys(target);
  const auto d = diff_tokens(as_views(ks), as_views(kt));
  AffectedParagraphs out;
  for (const auto& h : d.hunks) {
    out.count += std::max(h.source_span.size(), h.target_span.size());
    for (auto i = h.source_span.begin; i < h.source_span.end; ++i) out.source_indices.push_back(i);
    for (auto j = h.target_span.begin; j < h.target_span.end; ++j) out.target_indices.push_back(j);
  }
  return out;
}

std::vector<UpdatedSentence> updated_sentence_pairs(std::string_view source, std::string_view target) {
  const auto d = word_diff(source, target);
  const auto ss = text::split_sentences(source);
  const auto ts = text::split_sentences(target);
  std::vector<std::set<std::size_t>> context(ts.size());
  std::vector<bool> updated(ts.size(), false);

  auto overlapping = [](const std::vector<text::Sentence>& sents, Range r) {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < sents.size(); ++k) {
      const auto& s = sents[k];
      bool hit = r.size() > 0 ? (s.first_word < r.end && r.begin < s.end_word)
                              : (s.first_word < r.begin && r.begin < s.end_word);
      if (hit) out.push_back(k);
    }
    return out;
  };

  for (const auto& h : d.hunks) {
    const auto tgt = overlapping(ts, h.target_span);
    const auto src = overlapping(ss, h.source_span);
    for (auto k : tgt) {
      updated[k] = true;
      context[k].insert(src.begin(), src.end());
    }
  }

  std::vector<UpdatedSentence> out;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    if (!updated[k]) continue;
    UpdatedSentence u;
    u.target_index = k;
    u.text = std::string(ts[k].chars.of(target));
    std::vector<std::string> ctx;
    for (auto i : context[k]) ctx.emplace_back(ss[i].chars.of(source));
    u.source_context = text::join(ctx, " ");
    out.push_back(std::move(u));
  }
  return out;
}

nlohmann::json to_json(const DiffSet& d) {
  auto arr = nlohmann::json::array();
  for (const auto& h : d.hunks) {
    arr.push_back({{"op", op_name(h.op)},
                   {"source_span", {h.source_span.begin, h.source_span.end}},
                   {"target_span", {h.target_span.begin, h.target_span.end}},
                   {"source_words", h.source_words},
                   {"target_words", h.target_words}});
  }
  return arr;
}

DiffSet diffset_from_json(const nlohmann::json& j) {
  DiffSet d;
  for (const auto& h : j) {
    Hunk x;
    x.op = parse_op(h.at("op").get<std::string>());
    x.source_span = {h.at("source_span").at(0).get<std::size_t>(), h.at("source_span").at(1).get<std::size_t>()};
    x.target_span = {h.at("target_span").at(0).get<std::size_t>(), h.at("target_span").at(1).get<std::size_t>()};
    x.source_words = h.at("source_words").get<std::vector<std::string>>();
    x.target_words = h.at("target_words").get<std::vector<std::string>>();
    d.hunks.push_back(std::move(x));
  }
  return d;
}

}  // namespace peer::diff
