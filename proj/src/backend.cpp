#include "peer/backend.hpp"

#include <cstdlib>
#include <numeric>

#include "peer/errors.hpp"

namespace peer::backend {

std::string_view kind_name(Decoding::Kind k) {
  switch (k) {
    case Decoding::Kind::kGreedy:
      return "greedy";
    case Decoding::Kind::kBeam:
      return "beam";
    case Decoding::Kind::kTopP:
      return "top_p";
  }
  return "greedy";
}

namespace {

Decoding::Kind parse_kind(std::string_view s) {
  if (s == "greedy") return Decoding::Kind::kGreedy;
  if (s == "beam") return Decoding::Kind::kBeam;
  if (s == "top_p") return Decoding::Kind::kTopP;
  throw InvalidArgument("unknown decoding '" + std::string(s) + "'");
}

template <typename T>
void put_opt(nlohmann::json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

template <typename T>
void get_opt(const nlohmann::json& j, const char* key, std::optional<T>& v) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) {
    v = it->get<T>();
  } else {
    v.reset();
  }
}

}  // namespace

void GenerationRequest::validate() const {
  if (decoding.kind == Decoding::Kind::kTopP && !(decoding.p > 0.0 && decoding.p <= 1.0)) {
    throw InvalidArgument("top_p must lie in (0, 1]");
  }
  if (decoding.kind == Decoding::Kind::kBeam && decoding.width < 1) throw InvalidArgument("beam width must be >= 1");
  if (constraint && constraint->substring_of.empty()) {
    throw InvalidArgument("constrained decoding needs a non-empty substring_of source");
  }
  if (length_penalty && !(*length_penalty > 0)) throw InvalidArgument("length_penalty must be positive");
  if (no_repeat_ngram && *no_repeat_ngram < 1) throw InvalidArgument("no_repeat_ngram must be >= 1");
  if (max_output_units == 0) throw InvalidArgument("max_output_units must be positive");
}

GenerationCandidate GenerationCandidate::make(std::string text, std::vector<double> token_logprobs) {
  GenerationCandidate c;
  c.text = std::move(text);
  c.token_logprobs = std::move(token_logprobs);
  c.sum_logprob = std::accumulate(c.token_logprobs.begin(), c.token_logprobs.end(), 0.0);
  c.mean_logprob = c.token_logprobs.empty() ? 0.0 : c.sum_logprob / static_cast<double>(c.token_logprobs.size());
  return c;
}

ScoreResult ScoreResult::make(std::vector<double> token_logprobs) {
  ScoreResult r;
  r.token_logprobs = std::move(token_logprobs);
  r.sum_logprob = std::accumulate(r.token_logprobs.begin(), r.token_logprobs.end(), 0.0);
  r.mean_logprob = r.token_logprobs.empty() ? 0.0 : r.sum_logprob / static_cast<double>(r.token_logprobs.size());
  return r;
}

void to_json(nlohmann::json& j, const Decoding& d) {
  j = {{"kind", kind_name(d.kind)}};
  if (d.kind == Decoding::Kind::kBeam) j["width"] = d.width;
  if (d.kind == Decoding::Kind::kTopP) {
    j["p"] = d.p;
    j["seed"] = d.seed;
  }
}

void from_json(const nlohmann::json& j, Decoding& d) {
  d = {};
  d.kind = parse_kind(j.value("kind", "greedy"));
  d.width = j.value("width", 1);
  d.p = j.value("p", 0.9);
  d.seed = j.value("seed", std::uint64_t{0});
}

void to_json(nlohmann::json& j, const GenerationRequest& r) {
  j = {{"input", r.input}, {"max_output_units", r.max_output_units}, {"decoding", r.decoding}};
  put_opt(j, "decoder_prefix", r.decoder_prefix);
  put_opt(j, "length_penalty", r.length_penalty);
  put_opt(j, "no_repeat_ngram", r.no_repeat_ngram);
  if (r.constraint) j["constraint"] = {{"substring_of", r.constraint->substring_of}};
}

void from_json(const nlohmann::json& j, GenerationRequest& r) {
  r = {};
  r.input = j.at("input").get<std::string>();
  r.max_output_units = j.value("max_output_units", std::size_t{384});
  if (j.contains("decoding")) r.decoding = j.at("decoding").get<Decoding>();
  get_opt(j, "decoder_prefix", r.decoder_prefix);
  get_opt(j, "length_penalty", r.length_penalty);
  get_opt(j, "no_repeat_ngram", r.no_repeat_ngram);
  if (auto it = j.find("constraint"); it != j.end() && !it->is_null()) {
    r.constraint = Constraint{it->at("substring_of").get<std::string>()};
  }
}

void to_json(nlohmann::json& j, const GenerationCandidate& c) {
  j = {{"text", c.text},
       {"token_logprobs", c.token_logprobs},
       {"sum_logprob", c.sum_logprob},
       {"mean_logprob", c.mean_logprob}};
}

void from_json(const nlohmann::json& j, GenerationCandidate& c) {
  c = GenerationCandidate::make(j.at("text").get<std::string>(),
                                j.value("token_logprobs", std::vector<double>{}));
}

void to_json(nlohmann::json& j, const ScoreRequest& r) {
  j = {{"input", r.input}, {"output", r.output}};
  put_opt(j, "decoder_prefix", r.decoder_prefix);
}

void from_json(const nlohmann::json& j, ScoreRequest& r) {
  r.input = j.at("input").get<std::string>();
  r.output = j.at("output").get<std::string>();
  get_opt(j, "decoder_prefix", r.decoder_prefix);
}

void to_json(nlohmann::json& j, const ScoreResult& r) {
  j = {{"sum_logprob", r.sum_logprob}, {"mean_logprob", r.mean_logprob}, {"token_logprobs", r.token_logprobs}};
}

void from_json(const nlohmann::json& j, ScoreResult& r) {
  if (j.contains("token_logprobs") && !j.at("token_logprobs").empty()) {
    r = ScoreResult::make(j.at("token_logprobs").get<std::vector<double>>());
  } else {
    r = {};
    r.sum_logprob = j.at("sum_logprob").get<double>();
    r.mean_logprob = j.at("mean_logprob").get<double>();
  }
}

std::optional<std::string> constrained_quote(std::string_view text, std::string_view prefix) {
  static constexpr std::string_view kKey = "quote=";
  const std::size_t from = prefix.size() >= kKey.size() ? prefix.size() - kKey.size() : 0;
  const std::size_t q = text.find(kKey, from);
  if (q == std::string_view::npos) return std::nullopt;
  const std::size_t begin = q + kKey.size();
  const std::size_t end = text.find("]]]", begin);
  if (end == std::string_view::npos) return std::nullopt;
  return std::string(text.substr(begin, end - begin));
}

std::vector<GenerationCandidate> Backend::generate(const GenerationRequest& req) const {
  req.validate();
  const std::string prefix = req.decoder_prefix.value_or("");
  const int attempts = req.constraint ? 1 + std::max(0, constraint_retries) : 1;
  std::size_t rejected = 0;
  for (int a = 0; a < attempts; ++a) {
    GenerationRequest r = req;
    r.decoding.seed = req.decoding.seed + static_cast<std::uint64_t>(a);
    auto raw = do_generate(r);
    std::vector<GenerationCandidate> out;
    for (auto& c : raw) {
      if (!c.text.starts_with(prefix)) {
        throw ProtocolError("backend candidate does not start with the decoder prefix");
      }
      auto fixed = GenerationCandidate::make(std::move(c.text), std::move(c.token_logprobs));
      if (req.constraint) {
        auto q = constrained_quote(fixed.text, prefix);
        if (!q || q->empty() || req.constraint->substring_of.find(*q) == std::string::npos) {
          ++rejected;
          continue;
        }
      }
      out.push_back(std::move(fixed));
    }
    if (!out.empty()) return out;
    if (!req.constraint) throw ProtocolError("backend returned no candidates");
  }
  throw ConstraintUnsatisfiable("no candidate quoted the source verbatim after " + std::to_string(attempts) +
                                " attempts (" + std::to_string(rejected) + " rejected)");
}

ScoreResult Backend::score(const ScoreRequest& req) const {
  if (req.output.empty()) throw EmptyOutput("cannot score an empty output");
  auto r = do_score(req);
  if (!r.token_logprobs.empty()) r = ScoreResult::make(std::move(r.token_logprobs));
  return r;
}

std::shared_ptr<Backend> make_backend(std::string_view spec, RemoteOptions opts) {
  std::string s(spec);
  if (s.empty()) {
    const char* env = std::getenv("PEER_BACKEND_URL");
    if (!env || !*env) throw InvalidArgument("no backend given and PEER_BACKEND_URL is unset");
    s = env;
  }
  if (s == "mock:echo") return std::make_shared<MockBackend>(MockScript::echo());
  if (s.starts_with("mock:")) return std::make_shared<MockBackend>(MockScript::load(s.substr(5)));
  if (s.starts_with("http://") || s.starts_with("https://")) return std::make_shared<RemoteBackend>(s, opts);
  throw InvalidArgument("backend must be mock:<script> or an http(s) URL, got '" + s + "'");
}

}  // namespace peer::backend
