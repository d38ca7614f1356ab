#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "peer/rng.hpp"

namespace peer::metrics {

// Lowercased 13a tokens, the tokenization shared by every metric.
std::vector<std::string> tokens(std::string_view s, bool lowercase = true);

// ---- SARI ----

// Sentence-level SARI in [0,100]. Keep uses fractional counts over the
// references; delete is precision only; an empty-vs-empty component is 1.
double sari(std::string_view source, std::span<const std::string> refs, std::string_view hyp,
            bool lowercase = true);

struct SariScores {
  double add = 0, keep = 0, del = 0;
  double sari() const { return (add + keep + del) / 3.0; }
};

// Corpus-level SARI with n-gram statistics pooled over all items (the
// convention of the common simplification toolkits; empty pools score 0).
SariScores corpus_sari_scores(std::span<const std::string> sources, std::span<const std::vector<std::string>> refs,
                              std::span<const std::string> hyps, bool lowercase = true);
double corpus_sari(std::span<const std::string> sources, std::span<const std::vector<std::string>> refs,
                   std::span<const std::string> hyps, bool lowercase = true);

// ---- GLEU ----

struct GleuOptions {
  std::size_t iterations = 500;  // random single-reference draws, averaged
  std::uint64_t seed = 0;
  bool lowercase = true;
};

// Corpus GLEU in [0,100]: per draw, summed source-penalized n-gram matches
// over summed hypothesis n-grams (n=1..4), geometric mean, brevity penalty.
double gleu(std::span<const std::string> sources, std::span<const std::vector<std::string>> refs,
            std::span<const std::string> hyps, const GleuOptions& opts = {});

// ---- ROUGE ----

enum class RougeVariant { k1, k2, kL };

struct RougeScores {
  double r1 = 0, r2 = 0, rl = 0;
  double get(RougeVariant v) const { return v == RougeVariant::k1 ? r1 : v == RougeVariant::k2 ? r2 : rl; }
};

// F1 x 100 over punctuation-free lowercase tokens. Both empty -> 100.
double rouge(std::string_view hyp, std::string_view ref, RougeVariant variant);
RougeScores rouge_all(std::string_view hyp, std::string_view ref);

// Rouge between the sentences updated by source->hyp and by source->gold.
// Neither side updates anything -> 100; only one side -> 0.
double update_rouge(std::string_view source, std::string_view gold, std::string_view hyp, RougeVariant variant);
RougeScores update_rouge_all(std::string_view source, std::string_view gold, std::string_view hyp);

// ---- citations and quotes ----

struct CiteResult {
  bool correct = false;
  bool undecodable = false;
};

// True iff pred adds exactly one marker relative to source, with the same
// document index and marker-free character position as gold's added marker.
CiteResult cite_accuracy(std::string_view source, std::string_view pred, std::string_view gold);

// Rouge between the quotes of the markers pred and gold add to source; 0 when
// pred adds no quote.
RougeScores quote_rouge(std::string_view source, std::string_view pred, std::string_view gold);

enum class QuoteStrategy { kRandom, kLead };
QuoteStrategy parse_quote_strategy(std::string_view s);

// Contiguous n-word span of the chunk (whole chunk if shorter).
std::string baseline_quote(std::string_view chunk, QuoteStrategy strategy, std::size_t n, Rng& rng);

// Median word count of the given quotes (lower median for even sizes).
std::size_t median_length(std::span<const std::string> quotes);

// ---- datasets ----

struct EvalItem {
  std::string id;
  std::string source;
  std::vector<std::string> refs;
  nlohmann::json meta = nlohmann::json::object();
};

struct Prediction {
  std::string id;
  std::string text;
};

void to_json(nlohmann::json& j, const EvalItem& e);
void from_json(const nlohmann::json& j, EvalItem& e);

std::vector<EvalItem> load_gold_jsonl(const std::filesystem::path& path);
std::vector<Prediction> load_pred_jsonl(const std::filesystem::path& path);
void write_gold_jsonl(const std::filesystem::path& path, std::span<const EvalItem> items);
std::vector<Prediction> copy_predictions(std::span<const EvalItem> gold);

// Reads a public dataset's release files (file or directory) into items.
// Tasks: jfleg, asset, iterater, wnc, fruit, wafer-ins, natural-edits, gold.
std::vector<EvalItem> load_task(std::string_view task, const std::filesystem::path& path);

// Metrics reported for a task when none are requested.
std::set<std::string> default_metrics(std::string_view task);

// Known metric names: em, em_diff, sari, gleu, rouge, update_rouge,
// cite_accuracy, quote_rouge.
std::set<std::string> parse_metric_set(std::string_view csv);

struct MetricReport {
  std::size_t count = 0;
  std::map<std::string, double> aggregates;
  std::vector<nlohmann::json> per_example;  // {id, scores{...}, flags[...]}
  std::size_t undecodable = 0;

  nlohmann::json to_json() const;
  std::string table() const;
};

// Aggregates are means of per-example scores, except gleu and sari which are
// corpus-pooled (sari_mean holds the per-example mean). Predictions must
// cover exactly the gold ids.
MetricReport evaluate_dataset(std::span<const EvalItem> gold, std::span<const Prediction> preds,
                              const std::set<std::string>& metrics, const GleuOptions& gleu_opts = {});

}  // namespace peer::metrics
