#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <regex>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace peer::backend {

struct Decoding {
  enum class Kind { kGreedy, kBeam, kTopP };
  Kind kind = Kind::kGreedy;
  int width = 1;       // beam
  double p = 0.9;      // top_p
  std::uint64_t seed = 0;

  static Decoding greedy() { return {}; }
  static Decoding beam(int width) { return {Kind::kBeam, width, 0.9, 0}; }
  static Decoding top_p(double p, std::uint64_t seed) { return {Kind::kTopP, 1, p, seed}; }
};
std::string_view kind_name(Decoding::Kind k);

struct Constraint {
  std::string substring_of;
};

struct GenerationRequest {
  std::string input;
  std::optional<std::string> decoder_prefix;
  std::size_t max_output_units = 384;
  Decoding decoding;
  std::optional<double> length_penalty;
  std::optional<int> no_repeat_ngram;
  std::optional<Constraint> constraint;

  // Throws InvalidArgument on a broken invariant.
  void validate() const;
};

struct GenerationCandidate {
  std::string text;  // includes the decoder prefix
  std::vector<double> token_logprobs;
  double sum_logprob = 0;
  double mean_logprob = 0;

  static GenerationCandidate make(std::string text, std::vector<double> token_logprobs);
};

struct ScoreRequest {
  std::string input;
  std::string output;
  // Forced decoder prefix; only `output` tokens are scored.
  std::optional<std::string> decoder_prefix;
};

struct ScoreResult {
  double sum_logprob = 0;
  double mean_logprob = 0;
  std::vector<double> token_logprobs;

  static ScoreResult make(std::vector<double> token_logprobs);
};

void to_json(nlohmann::json& j, const Decoding& d);
void from_json(const nlohmann::json& j, Decoding& d);
void to_json(nlohmann::json& j, const GenerationRequest& r);
void from_json(const nlohmann::json& j, GenerationRequest& r);
void to_json(nlohmann::json& j, const GenerationCandidate& c);
void from_json(const nlohmann::json& j, GenerationCandidate& c);
void to_json(nlohmann::json& j, const ScoreRequest& r);
void from_json(const nlohmann::json& j, ScoreRequest& r);
void to_json(nlohmann::json& j, const ScoreResult& r);
void from_json(const nlohmann::json& j, ScoreResult& r);

// The span after "quote=" up to "]]]" in a candidate, when the quote starts
// inside or after the decoder prefix.
std::optional<std::string> constrained_quote(std::string_view text, std::string_view prefix);

// Thread-safe generation backend. generate() enforces the decoder-prefix
// and substring contracts whatever the implementation returns.
class Backend {
 public:
  virtual ~Backend() = default;

  std::vector<GenerationCandidate> generate(const GenerationRequest& req) const;
  ScoreResult score(const ScoreRequest& req) const;
  ScoreResult score(std::string_view input, std::string_view output) const { return score({std::string(input), std::string(output), {}}); }

  // Extra attempts (with shifted seeds) when every candidate breaks the
  // substring constraint.
  int constraint_retries = 4;

 protected:
  virtual std::vector<GenerationCandidate> do_generate(const GenerationRequest& req) const = 0;
  virtual ScoreResult do_score(const ScoreRequest& req) const = 0;
};

// ---- scripted mock ----

// Output templates may use {input}, {text}, {title}, {drop_last}, {quote}
// and {rest}; see README for their meaning.
struct MockRule {
  std::optional<std::string> input;   // regex searched in the input
  std::optional<std::string> prefix;  // regex searched in the decoder prefix ("" when absent)
  std::optional<Decoding::Kind> decoding;
  std::optional<double> length_penalty;
  std::vector<std::string> outputs;
  double logprob = -1.0;  // per token
  std::size_t quote_words = 5;

  bool catch_all() const { return !input && !prefix && !decoding && !length_penalty; }
};

struct MockScoreRule {
  std::optional<std::string> input, prefix, output;
  double logprob = -1.0;  // per token
};

struct MockScript {
  std::vector<MockRule> rules;
  std::vector<MockScoreRule> scores;
  double default_logprob = -1.0;

  // Throws InvalidScript (no rules, no trailing catch-all, rule without
  // outputs, bad regex, unknown placeholder).
  void validate() const;
  static MockScript from_json(const nlohmann::json& j);
  static MockScript load(const std::filesystem::path& path);
  static MockScript echo();
  nlohmann::json to_json() const;
};

class MockBackend final : public Backend {
 public:
  explicit MockBackend(MockScript script);
  const MockScript& script() const { return script_; }

 protected:
  std::vector<GenerationCandidate> do_generate(const GenerationRequest& req) const override;
  ScoreResult do_score(const ScoreRequest& req) const override;

 private:
  struct Compiled {
    std::optional<std::regex> input, prefix, output;
  };
  MockScript script_;
  std::vector<Compiled> rules_, scores_;
};

// Pieces of an edit/undo-style input: [title sep] text [sep docs].
struct InputParts {
  std::optional<std::string> title;
  std::string text;
};
InputParts split_input(std::string_view input);

// ---- remote ----

struct RemoteOptions {
  std::chrono::milliseconds timeout{60000};
  std::size_t max_in_flight = 4;
};

// HTTP client for POST /generate and POST /score.
class RemoteBackend final : public Backend {
 public:
  explicit RemoteBackend(std::string base_url, RemoteOptions opts = {});
  ~RemoteBackend() override;
  const std::string& url() const { return url_; }

 protected:
  std::vector<GenerationCandidate> do_generate(const GenerationRequest& req) const override;
  ScoreResult do_score(const ScoreRequest& req) const override;

 private:
  nlohmann::json post(const std::string& path, const nlohmann::json& body) const;
  std::string url_, host_, base_path_;
  RemoteOptions opts_;
  mutable std::counting_semaphore<1024> slots_;
};

// "mock:<script.json>", "mock:echo", or an http(s) URL. An empty spec reads
// PEER_BACKEND_URL.
std::shared_ptr<Backend> make_backend(std::string_view spec, RemoteOptions opts = {});

}  // namespace peer::backend
