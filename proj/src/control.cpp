#include "peer/control.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "peer/errors.hpp"
#include "peer/text.hpp"

namespace peer::control {

// Generated at configure time from data/verbs.txt and data/stopwords.txt.
extern const char* const kBundledVerbs;
extern const char* const kBundledStopwords;

std::string_view to_string(PlanType t) { return t == PlanType::kInstruction ? "instruction" : "other"; }

std::string_view to_string(Length l) {
  switch (l) {
    case Length::kS:
      return "s";
    case Length::kM:
      return "m";
    case Length::kL:
      return "l";
    case Length::kXL:
      return "xl";
  }
  return "s";
}

Length parse_length(std::string_view s) {
  if (s == "s") return Length::kS;
  if (s == "m") return Length::kM;
  if (s == "l") return Length::kL;
  if (s == "xl") return Length::kXL;
  throw InvalidControl("invalid length value '" + std::string(s) + "'");
}

namespace {

bool canonical_int(std::string_view s, std::int64_t& out) {
  if (s.empty()) return false;
  std::string_view digits = s.front() == '-' ? s.substr(1) : s;
  if (digits.empty() || (digits.size() > 1 && digits.front() == '0')) return false;
  if (s == "-0") return false;
  for (char c : digits) {
    if (c < '0' || c > '9') return false;
  }
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

std::string encode_controls(const ControlSequence& cs) {
  std::string out;
  auto put = [&](std::string_view key, std::string_view value) {
    if (!out.empty()) out += ' ';
    out += key;
    out += '=';
    out += value;
  };
  if (cs.type) put("type", to_string(*cs.type));
  if (cs.length) put("length", to_string(*cs.length));
  if (cs.overlap) put("overlap", *cs.overlap ? "true" : "false");
  if (cs.words) put("words", std::to_string(*cs.words));
  if (cs.contains) {
    if (cs.contains->empty()) throw InvalidControl("contains value must be non-empty");
    put("contains", *cs.contains);
  }
  return out;
}

ControlSequence decode_controls(std::string_view s) {
  ControlSequence cs;
  std::size_t pos = 0;
  while (pos < s.size()) {
    std::size_t end = s.find(' ', pos);
    if (end == std::string_view::npos) end = s.size();
    std::string_view tok = s.substr(pos, end - pos);
    std::size_t eq = tok.find('=');
    if (eq == std::string_view::npos) throw InvalidControl("expected key=value, got '" + std::string(tok) + "'");
    std::string_view key = tok.substr(0, eq);
    std::string_view value = tok.substr(eq + 1);
    if (key == "contains") {
      value = s.substr(pos + eq + 1);
      if (value.empty()) throw InvalidControl("contains value must be non-empty");
      cs.contains = std::string(value);
      break;
    }
    if (key == "type") {
      if (value == "instruction") {
        cs.type = PlanType::kInstruction;
      } else if (value == "other") {
        cs.type = PlanType::kOther;
      } else {
        throw InvalidControl("invalid type value '" + std::string(value) + "'");
      }
    } else if (key == "length") {
      cs.length = parse_length(value);
    } else if (key == "overlap") {
      if (value == "true") {
        cs.overlap = true;
      } else if (value == "false") {
        cs.overlap = false;
      } else {
        throw InvalidControl("invalid overlap value '" + std::string(value) + "'");
      }
    } else if (key == "words") {
      std::int64_t n = 0;
      if (!canonical_int(value, n)) throw InvalidControl("invalid words value '" + std::string(value) + "'");
      cs.words = n;
    } else {
      throw UnknownKey("unknown control key '" + std::string(key) + "'");
    }
    pos = end + 1;
  }
  return cs;
}

Length classify_length(std::string_view plan) {
  const auto n = text::word_count(plan);
  if (n < 2) return Length::kS;
  if (n <= 3) return Length::kM;
  if (n <= 5) return Length::kL;
  return Length::kXL;
}

Lexicon::Lexicon(std::string_view one_word_per_line) {
  std::size_t pos = 0;
  while (pos < one_word_per_line.size()) {
    std::size_t eol = one_word_per_line.find('\n', pos);
    if (eol == std::string_view::npos) eol = one_word_per_line.size();
    auto w = text::trim(one_word_per_line.substr(pos, eol - pos));
    if (!w.empty() && w.front() != '#') words_.insert(text::to_lower(w));
    pos = eol + 1;
  }
}

Lexicon Lexicon::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open lexicon '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return Lexicon(ss.str());
}

const Lexicon& Lexicon::verbs() {
  static const Lexicon lex(kBundledVerbs);
  return lex;
}

const Lexicon& Lexicon::stopwords() {
  static const Lexicon lex(kBundledStopwords);
  return lex;
}

namespace {

std::string content_key(std::string_view w) {
  auto is_edge = [](char c) {
    auto u = static_cast<unsigned char>(c);
    return u < 0x80 && !std::isalnum(u);
  };
  while (!w.empty() && is_edge(w.front())) w.remove_prefix(1);
  while (!w.empty() && is_edge(w.back())) w.remove_suffix(1);
  return text::to_lower(w);
}

}  // namespace

bool is_instruction(std::string_view plan, const Lexicon& verbs) {
  auto ws = text::words(plan);
  if (ws.empty()) return false;
  return verbs.contains(content_key(ws.front()));
}

bool has_overlap(std::string_view plan, const diff::DiffSet& d, const Lexicon& stopwords) {
  std::unordered_set<std::string> edited;
  for (const auto& h : d.hunks) {
    for (const auto& w : h.source_words) edited.insert(content_key(w));
    for (const auto& w : h.target_words) edited.insert(content_key(w));
  }
  for (auto w : text::words(plan)) {
    auto k = content_key(w);
    if (k.empty() || stopwords.contains(k)) continue;
    if (edited.count(k)) return true;
  }
  return false;
}

ControlSequence label_explain(std::string_view plan, std::string_view source, std::string_view target) {
  ControlSequence cs;
  cs.type = is_instruction(plan) ? PlanType::kInstruction : PlanType::kOther;
  cs.length = classify_length(plan);
  cs.overlap = has_overlap(plan, diff::word_diff(source, target));
  return cs;
}

std::int64_t words_delta(std::string_view undo_input, std::string_view undo_output) {
  return static_cast<std::int64_t>(text::word_count(undo_output)) -
         static_cast<std::int64_t>(text::word_count(undo_input));
}

}  // namespace peer::control
