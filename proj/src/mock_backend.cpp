#include <cmath>
#include <fstream>
#include <set>

#include "peer/backend.hpp"
#include "peer/errors.hpp"
#include "peer/format.hpp"
#include "peer/rng.hpp"
#include "peer/text.hpp"

namespace peer::backend {

namespace {

const std::set<std::string>& placeholders() {
  static const std::set<std::string> k{"input", "text", "title", "drop_last", "quote", "rest"};
  return k;
}

std::vector<std::string_view> split_all(std::string_view s, std::string_view sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t p = s.find(sep, start);
    if (p == std::string_view::npos) break;
    out.push_back(s.substr(start, p - start));
    start = p + sep.size();
  }
  out.push_back(s.substr(start));
  return out;
}

bool looks_like_docs(std::string_view seg) {
  if (seg.size() < 4 || seg[0] != '[') return false;
  std::size_t i = 1;
  while (i < seg.size() && std::isdigit(static_cast<unsigned char>(seg[i]))) ++i;
  return i > 1 && i + 1 < seg.size() && seg[i] == ']' && seg[i + 1] == ' ';
}

std::string drop_last_sentence(std::string_view text) {
  auto sents = text::split_sentences(text);
  if (sents.size() <= 1) return "";
  return std::string(text::trim_right(text.substr(0, sents.back().chars.begin)));
}

// Text still to be produced after what the decoder prefix already holds.
std::string rest_after_prefix(std::string_view text, std::string_view prefix) {
  std::string_view part = prefix;
  if (auto p = prefix.rfind(format::kSeparator); p != std::string_view::npos) {
    part = prefix.substr(p + format::kSeparator.size());
  }
  if (auto open = part.rfind("[[["); open != std::string_view::npos && part.find("]]]", open) == std::string_view::npos) {
    part = part.substr(0, open);
  }
  if (!text.starts_with(part)) return "";
  std::string_view rest = text.substr(part.size());
  if (rest.starts_with("[[[")) {
    if (auto close = rest.find("]]]"); close != std::string_view::npos) rest = rest.substr(close + 3);
  }
  return std::string(rest);
}

std::string pick_quote(std::string_view source, std::size_t n, Rng& rng) {
  auto spans = text::word_spans(source);
  if (spans.empty()) return "";
  n = std::clamp<std::size_t>(n, 1, spans.size());
  auto start = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(spans.size() - n)));
  return std::string(source.substr(spans[start].begin, spans[start + n - 1].end - spans[start].begin));
}

std::optional<std::string> opt_string(const nlohmann::json& j, const char* key) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) return it->get<std::string>();
  return std::nullopt;
}

std::regex compile(const std::string& re) {
  try {
    return std::regex(re, std::regex::ECMAScript);
  } catch (const std::regex_error& e) {
    throw InvalidScript("bad regex '" + re + "': " + e.what());
  }
}

bool matches(const std::optional<std::regex>& re, const std::string& s) { return !re || std::regex_search(s, *re); }

}  // namespace

InputParts split_input(std::string_view input) {
  auto segs = split_all(input, format::kSeparator);
  if (segs.size() > 1 && looks_like_docs(segs.back())) segs.pop_back();
  InputParts parts;
  if (segs.size() >= 2) {
    parts.title = std::string(segs.front());
    std::vector<std::string> rest(segs.begin() + 1, segs.end());
    parts.text = text::join(rest, format::kSeparator);
  } else {
    parts.text = std::string(segs.front());
  }
  return parts;
}

void MockScript::validate() const {
  if (rules.empty()) throw InvalidScript("mock script has no rules");
  if (!rules.back().catch_all()) throw InvalidScript("mock script must end with a catch-all rule");
  for (std::size_t i = 0; i < rules.size(); ++i) {
    const auto& r = rules[i];
    if (r.outputs.empty()) throw InvalidScript("rule " + std::to_string(i) + " has no outputs");
    if (r.input) compile(*r.input);
    if (r.prefix) compile(*r.prefix);
    for (const auto& o : r.outputs) {
      for (std::size_t p = o.find('{'); p != std::string::npos; p = o.find('{', p + 1)) {
        std::size_t e = o.find('}', p);
        if (e == std::string::npos) break;
        std::string name = o.substr(p + 1, e - p - 1);
        bool ident = !name.empty() && std::all_of(name.begin(), name.end(), [](char c) { return std::islower(static_cast<unsigned char>(c)) || c == '_'; });
        if (ident && !placeholders().count(name)) throw InvalidScript("unknown placeholder {" + name + "}");
      }
    }
  }
  for (const auto& s : scores) {
    if (s.input) compile(*s.input);
    if (s.prefix) compile(*s.prefix);
    if (s.output) compile(*s.output);
  }
}

MockScript MockScript::from_json(const nlohmann::json& j) {
  MockScript s;
  try {
    for (const auto& r : j.at("rules")) {
      MockRule rule;
      rule.input = opt_string(r, "input");
      rule.prefix = opt_string(r, "prefix");
      if (auto d = opt_string(r, "decoding")) {
        Decoding tmp;
        backend::from_json(nlohmann::json{{"kind", *d}}, tmp);
        rule.decoding = tmp.kind;
      }
      if (r.contains("length_penalty")) rule.length_penalty = r.at("length_penalty").get<double>();
      if (r.contains("output")) rule.outputs.push_back(r.at("output").get<std::string>());
      if (r.contains("outputs")) {
        for (const auto& o : r.at("outputs")) rule.outputs.push_back(o.get<std::string>());
      }
      rule.logprob = r.value("logprob", -1.0);
      rule.quote_words = r.value("quote_words", std::size_t{5});
      s.rules.push_back(std::move(rule));
    }
    if (j.contains("scores")) {
      for (const auto& r : j.at("scores")) {
        MockScoreRule rule;
        rule.input = opt_string(r, "input");
        rule.prefix = opt_string(r, "prefix");
        rule.output = opt_string(r, "output");
        rule.logprob = r.at("logprob").get<double>();
        s.scores.push_back(std::move(rule));
      }
    }
    s.default_logprob = j.value("default_logprob", -1.0);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidScript(std::string("malformed mock script: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw InvalidScript(e.what());
  }
  s.validate();
  return s;
}

MockScript MockScript::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open mock script '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidScript(std::string("mock script is not JSON: ") + e.what());
  }
  return from_json(j);
}

MockScript MockScript::echo() {
  MockScript s;
  MockRule r;
  r.outputs = {"{input}"};
  s.rules.push_back(r);
  return s;
}

nlohmann::json MockScript::to_json() const {
  nlohmann::json rs = nlohmann::json::array();
  for (const auto& r : rules) {
    nlohmann::json o = {{"outputs", r.outputs}, {"logprob", r.logprob}, {"quote_words", r.quote_words}};
    if (r.input) o["input"] = *r.input;
    if (r.prefix) o["prefix"] = *r.prefix;
    if (r.decoding) o["decoding"] = kind_name(*r.decoding);
    if (r.length_penalty) o["length_penalty"] = *r.length_penalty;
    rs.push_back(o);
  }
  nlohmann::json ss = nlohmann::json::array();
  for (const auto& r : scores) {
    nlohmann::json o = {{"logprob", r.logprob}};
    if (r.input) o["input"] = *r.input;
    if (r.prefix) o["prefix"] = *r.prefix;
    if (r.output) o["output"] = *r.output;
    ss.push_back(o);
  }
  return {{"rules", rs}, {"scores", ss}, {"default_logprob", default_logprob}};
}

MockBackend::MockBackend(MockScript script) : script_(std::move(script)) {
  script_.validate();
  for (const auto& r : script_.rules) {
    Compiled c;
    if (r.input) c.input = compile(*r.input);
    if (r.prefix) c.prefix = compile(*r.prefix);
    rules_.push_back(std::move(c));
  }
  for (const auto& r : script_.scores) {
    Compiled c;
    if (r.input) c.input = compile(*r.input);
    if (r.prefix) c.prefix = compile(*r.prefix);
    if (r.output) c.output = compile(*r.output);
    scores_.push_back(std::move(c));
  }
}

std::vector<GenerationCandidate> MockBackend::do_generate(const GenerationRequest& req) const {
  const std::string prefix = req.decoder_prefix.value_or("");
  std::size_t idx = 0;
  for (; idx < script_.rules.size(); ++idx) {
    const auto& r = script_.rules[idx];
    if (!matches(rules_[idx].input, req.input) || !matches(rules_[idx].prefix, prefix)) continue;
    if (r.decoding && *r.decoding != req.decoding.kind) continue;
    if (r.length_penalty && (!req.length_penalty || std::abs(*r.length_penalty - *req.length_penalty) > 1e-9)) continue;
    break;
  }
  const MockRule& rule = script_.rules[idx];

  std::vector<std::size_t> chosen;
  const std::size_t n = rule.outputs.size();
  switch (req.decoding.kind) {
    case Decoding::Kind::kGreedy:
      chosen = {0};
      break;
    case Decoding::Kind::kBeam:
      for (std::size_t i = 0; i < std::min<std::size_t>(n, static_cast<std::size_t>(req.decoding.width)); ++i) {
        chosen.push_back(i);
      }
      break;
    case Decoding::Kind::kTopP: {
      Rng rng(derive_seed(req.decoding.seed, "mock-top-p"));
      auto pool = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(req.decoding.p * static_cast<double>(n))));
      chosen = {static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(std::min(pool, n)) - 1))};
      break;
    }
  }

  const InputParts parts = split_input(req.input);
  const text::UnitTokenizer tok;
  std::vector<GenerationCandidate> out;
  for (std::size_t c = 0; c < chosen.size(); ++c) {
    Rng rng(derive_seed(req.decoding.seed, static_cast<std::uint64_t>(c)));
    const std::string& tmpl = rule.outputs[chosen[c]];
    std::string body;
    for (std::size_t i = 0; i < tmpl.size();) {
      std::size_t e = tmpl[i] == '{' ? tmpl.find('}', i) : std::string::npos;
      std::string name = e == std::string::npos ? "" : tmpl.substr(i + 1, e - i - 1);
      if (e == std::string::npos || !placeholders().count(name)) {
        body += tmpl[i++];
        continue;
      }
      if (name == "input") body += req.input;
      if (name == "text") body += parts.text;
      if (name == "title") body += parts.title.value_or("");
      if (name == "drop_last") body += drop_last_sentence(parts.text);
      if (name == "rest") body += rest_after_prefix(parts.text, prefix);
      if (name == "quote" && req.constraint) body += pick_quote(req.constraint->substring_of, rule.quote_words, rng);
      i = e + 1;
    }
    std::string full = body.starts_with(prefix) ? body : prefix + body;
    std::vector<double> lps(tok.count(std::string_view(full).substr(prefix.size())), rule.logprob);
    out.push_back(GenerationCandidate::make(std::move(full), std::move(lps)));
  }
  return out;
}

ScoreResult MockBackend::do_score(const ScoreRequest& req) const {
  const std::string prefix = req.decoder_prefix.value_or("");
  double lp = script_.default_logprob;
  for (std::size_t i = 0; i < scores_.size(); ++i) {
    if (matches(scores_[i].input, req.input) && matches(scores_[i].prefix, prefix) &&
        matches(scores_[i].output, req.output)) {
      lp = script_.scores[i].logprob;
      break;
    }
  }
  const std::size_t units = std::max<std::size_t>(1, text::default_tokenizer().count(req.output));
  return ScoreResult::make(std::vector<double>(units, lp));
}

}  // namespace peer::backend
