#include "peer/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace peer::text {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  return trim_right(s);
}

std::string_view trim_right(std::string_view s) {
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::size_t utf8_length(std::string_view s) {
  std::size_t n = 0;
  for (unsigned char c : s) {
    if ((c & 0xC0) != 0x80) ++n;
  }
  return n;
}

bool is_utf8_boundary(std::string_view s, std::size_t pos) {
  if (pos == 0 || pos >= s.size()) return pos <= s.size();
  return (static_cast<unsigned char>(s[pos]) & 0xC0) != 0x80;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::vector<Span> word_spans(std::string_view s) {
  std::vector<Span> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    if (i >= s.size()) break;
    std::size_t j = i;
    while (j < s.size() && !is_space(s[j])) ++j;
    out.push_back({i, j});
    i = j;
  }
  return out;
}

std::vector<std::string_view> words(std::string_view s) {
  std::vector<std::string_view> out;
  for (const auto& sp : word_spans(s)) out.push_back(sp.of(s));
  return out;
}

std::size_t word_count(std::string_view s) { return word_spans(s).size(); }

std::vector<Span> paragraph_spans(std::string_view s) {
  std::vector<Span> out;
  std::size_t pos = 0;
  bool open = false;
  Span cur;
  while (pos <= s.size()) {
    std::size_t eol = s.find('\n', pos);
    if (eol == std::string_view::npos) eol = s.size();
    std::string_view line = s.substr(pos, eol - pos);
    if (trim(line).empty()) {
      if (open) {
        out.push_back(cur);
        open = false;
      }
    } else {
      if (!open) {
        cur.begin = pos;
        open = true;
      }
      cur.end = pos + trim_right(line).size();
    }
    if (eol == s.size()) break;
    pos = eol + 1;
  }
  if (open) out.push_back(cur);
  return out;
}

std::vector<Span> marker_spans(std::string_view s) {
  std::vector<Span> out;
  std::size_t pos = 0;
  while ((pos = s.find("[[[", pos)) != std::string_view::npos) {
    std::size_t close = s.find("]]]", pos + 3);
    if (close == std::string_view::npos) break;
    out.push_back({pos, close + 3});
    pos = close + 3;
  }
  return out;
}

namespace {

constexpr std::array<std::string_view, 48> kAbbreviations = {
    "mr",   "mrs",  "ms",   "dr",   "prof", "sr",   "jr",   "st",   "mt",   "vs",
    "etc",  "e.g",  "i.e",  "inc",  "ltd",  "co",   "corp", "no",   "fig",  "al",
    "jan",  "feb",  "mar",  "apr",  "jun",  "jul",  "aug",  "sep",  "sept", "oct",
    "nov",  "dec",  "u.s",  "u.k",  "calif", "gen", "gov",  "sen",  "rep",  "rev",
    "col",  "lt",   "sgt",  "capt", "approx", "dept", "est", "ca"};

bool is_closer(char c) { return c == '"' || c == '\'' || c == ')' || c == ']' || c == '}'; }

// Strips trailing closers and citation markers so "word.\"" and
// "word.[[[0]]]" both expose their terminal punctuation.
std::string_view sentence_core(std::string_view w) {
  for (;;) {
    std::size_t before = w.size();
    if (w.size() >= 3 && w.substr(w.size() - 3) == "]]]") {
      std::size_t open = w.rfind("[[[");
      if (open != std::string_view::npos) w = w.substr(0, open);
    }
    while (!w.empty() && is_closer(w.back())) w.remove_suffix(1);
    // Closing curly quotes (U+201D, U+2019).
    if (w.size() >= 3 && (w.substr(w.size() - 3) == "\xE2\x80\x9D" || w.substr(w.size() - 3) == "\xE2\x80\x99")) {
      w.remove_suffix(3);
    }
    if (w.size() == before) break;
  }
  return w;
}

bool is_abbreviation(std::string_view core) {
  if (core.empty() || core.back() != '.') return false;
  std::string_view stem = core.substr(0, core.size() - 1);
  while (!stem.empty() && (stem.front() == '(' || stem.front() == '"' || stem.front() == '\'')) {
    stem.remove_prefix(1);
  }
  if (stem.size() == 1 && std::isupper(static_cast<unsigned char>(stem[0]))) return true;  // initials
  std::string lower = to_lower(stem);
  return std::find(kAbbreviations.begin(), kAbbreviations.end(), lower) != kAbbreviations.end();
}

bool opens_sentence(std::string_view w) {
  while (!w.empty() && (w.front() == '(' || w.front() == '[')) w.remove_prefix(1);
  if (w.empty()) return false;
  auto c = static_cast<unsigned char>(w.front());
  if (c == '"' || c == '\'' || c >= 0xC0) return true;
  return std::isupper(c) != 0;
}

}  // namespace

std::vector<Sentence> split_sentences(std::string_view s) {
  std::vector<Sentence> out;
  const auto spans = word_spans(s);
  if (spans.empty()) return out;
  const auto markers = marker_spans(s);
  auto inside_marker = [&](const Span& w) {
    for (const auto& m : markers) {
      if (w.end > m.begin && w.end < m.end) return true;
    }
    return false;
  };
  std::size_t start = 0;
  for (std::size_t i = 0; i < spans.size(); ++i) {
    bool boundary = i + 1 == spans.size();
    if (!boundary && !inside_marker(spans[i])) {
      std::string_view gap = s.substr(spans[i].end, spans[i + 1].begin - spans[i].end);
      if (gap.find('\n') != std::string_view::npos) {
        boundary = true;
      } else {
        // A citation marker may span several words; look at the text right
        // before the outermost marker that ends here.
        std::size_t end = spans[i].end;
        for (auto it = markers.rbegin(); it != markers.rend(); ++it) {
          if (it->end == end) end = it->begin;
        }
        std::size_t k = i;
        while (k > 0 && spans[k].begin >= end) --k;
        std::string_view core =
            end > spans[k].begin ? sentence_core(s.substr(spans[k].begin, end - spans[k].begin)) : std::string_view{};
        if (!core.empty() && (core.back() == '.' || core.back() == '?' || core.back() == '!') &&
            !is_abbreviation(core) && opens_sentence(spans[i + 1].of(s))) {
          boundary = true;
        }
      }
    }
    if (boundary) {
      out.push_back({start, i + 1, {spans[start].begin, spans[i].end}});
      start = i + 1;
    }
  }
  return out;
}

std::size_t Tokenizer::prefix_within(std::string_view s, std::size_t budget) const {
  auto toks = tokenize(s);
  if (toks.size() <= budget) return s.size();
  if (budget == 0) return 0;
  return toks[budget - 1].end;
}

std::vector<Span> UnitTokenizer::tokenize(std::string_view s) const {
  std::vector<Span> out;
  std::size_t i = 0;
  while (i < s.size()) {
    char c = s[i];
    if (is_space(c)) {
      ++i;
      continue;
    }
    auto uc = static_cast<unsigned char>(c);
    if (uc < 0x80 && std::ispunct(uc)) {
      out.push_back({i, i + 1});
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < s.size() && !is_space(s[j])) {
      auto u = static_cast<unsigned char>(s[j]);
      if (u < 0x80 && std::ispunct(u)) break;
      ++j;
    }
    out.push_back({i, j});
    i = j;
  }
  return out;
}

const Tokenizer& default_tokenizer() {
  static const UnitTokenizer instance;
  return instance;
}

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }

// The first 13a rule: every ASCII punctuation character except
// apostrophe, comma, hyphen and period is split off.
bool is_13a_punct(char c) {
  auto u = static_cast<unsigned char>(c);
  return (u >= '{' && u <= '~') || (u >= '[' && u <= '`') || (u >= ' ' && u <= '&') ||
         (u >= '(' && u <= '+') || (u >= ':' && u <= '@') || u == '/';
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

}  // namespace

std::string tokenize_13a(std::string_view in) {
  std::string line(in);
  replace_all(line, "<skipped>", "");
  replace_all(line, "-\n", "");
  std::replace(line.begin(), line.end(), '\n', ' ');
  if (line.find('&') != std::string::npos) {
    replace_all(line, "&quot;", "\"");
    replace_all(line, "&amp;", "&");
    replace_all(line, "&lt;", "<");
    replace_all(line, "&gt;", ">");
  }
  line = " " + line + " ";

  // Each pass mirrors one global, non-overlapping regex substitution.
  std::string a;
  a.reserve(line.size() * 2);
  for (char c : line) {
    if (is_13a_punct(c)) {
      a += ' ';
      a += c;
      a += ' ';
    } else {
      a += c;
    }
  }

  std::string b;
  b.reserve(a.size() * 2);
  for (std::size_t i = 0; i < a.size();) {
    if (i + 1 < a.size() && !is_digit(a[i]) && (a[i + 1] == '.' || a[i + 1] == ',')) {
      b += a[i];
      b += ' ';
      b += a[i + 1];
      b += ' ';
      i += 2;
    } else {
      b += a[i++];
    }
  }

  std::string c;
  c.reserve(b.size() * 2);
  for (std::size_t i = 0; i < b.size();) {
    if (i + 1 < b.size() && (b[i] == '.' || b[i] == ',') && !is_digit(b[i + 1])) {
      c += ' ';
      c += b[i];
      c += ' ';
      c += b[i + 1];
      i += 2;
    } else {
      c += b[i++];
    }
  }

  std::string d;
  d.reserve(c.size() * 2);
  for (std::size_t i = 0; i < c.size();) {
    if (i + 1 < c.size() && is_digit(c[i]) && c[i + 1] == '-') {
      d += c[i];
      d += " - ";
      i += 2;
    } else {
      d += c[i++];
    }
  }

  std::string out;
  for (const auto& w : words(d)) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::vector<std::string> metric_tokens(std::string_view s, bool lowercase) {
  std::string tok = lowercase ? tokenize_13a(to_lower(s)) : tokenize_13a(s);
  std::vector<std::string> out;
  for (const auto& w : words(tok)) out.emplace_back(w);
  return out;
}

}  // namespace peer::text
