#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "peer/rng.hpp"
#include "peer/text.hpp"
#include "peer/types.hpp"

namespace peer::corpus {

// ---- revision streams ----

enum class RevisionFormat { kXmlDump, kRevisionJsonl };
RevisionFormat parse_revision_format(std::string_view s);

struct ParseStats {
  std::size_t parsed = 0;
  std::size_t skipped = 0;
  std::vector<std::string> diagnostics;  // first few skip reasons
};

// Calls `sink` once per revision, in file order. Malformed records are
// skipped and counted; an unreadable stream throws IoError.
void parse_revision_stream(std::istream& in, RevisionFormat format,
                           const std::function<void(RawRevision&&)>& sink, ParseStats& stats);
std::vector<RawRevision> parse_revisions(std::istream& in, RevisionFormat format, ParseStats* stats = nullptr);

bool looks_like_bot(std::string_view username);
bool is_redirect_text(std::string_view raw);

// ---- markup ----

// Strips templates, tables, images, categories, comments and HTML tags;
// keeps headings, bold, italic, lists and [[links]]. <ref> citations become
// "[[[ref:ID]]]" / "[[[ref:ID quote=Q]]]" placeholders. Idempotent.
std::string normalize_wikitext(std::string_view raw);

// ---- edit pairs ----

// Revision ids whose text was later restored to an earlier state: for each
// revision equal (after normalization) to an earlier one of the same page,
// every revision strictly between the two is reverted.
std::unordered_set<std::string> detect_reverts(std::span<const RawRevision> page_revisions);

struct ExtractedEdit {
  EditPair pair;
  RawRevision revision;  // the target revision, text dropped
  bool reverted = false;
};

struct ExtractStats {
  std::size_t pairs = 0;
  std::size_t unchanged = 0;
  std::size_t orphans = 0;
  std::vector<std::string> diagnostics;
};

// Revisions must be grouped by page and ordered by timestamp. Untouched
// paragraphs are stripped from both sides; doc_ids are the citations in
// what remains.
std::vector<ExtractedEdit> extract_edit_pairs(std::span<const RawRevision> revisions, ExtractStats* stats = nullptr);

// Stores target-revision facts in pair.meta so filtering can run on
// editpair-jsonl alone.
void attach_revision_meta(ExtractedEdit& e);
RawRevision revision_from_meta(const EditPair& pair);

// ---- filtering ----

enum class FilterReason {
  kReverted,
  kBot,
  kTooManyParagraphs,
  kEvalOverlap,
  kUnresolvedDoc,
  kTooLong,
  kAutomatedComment,
  kRedirect,
  kOverTokenBudget,
  kDownsampled,
};
std::string_view reason_name(FilterReason r);

struct FilterVerdict {
  bool kept = true;
  std::optional<FilterReason> reason;
  static FilterVerdict keep() { return {}; }
  static FilterVerdict reject(FilterReason r) { return {false, r}; }
};

struct FilterConfig {
  std::unordered_set<std::string> eval_pages;  // page ids or titles
  std::vector<std::string> comment_blocklist{"#", "{{", "}}", "[[", "]]", "template", "image", "infobox", "pic"};
  std::size_t max_raw_chars = 50000;
  std::size_t max_paragraphs = 2;
  std::size_t max_paragraph_units = 384;
  std::unordered_set<std::string> reverted_revs;
  std::function<bool(const std::string&)> doc_resolvable;  // null = everything resolves
  const text::Tokenizer* tokenizer = nullptr;
};

// Rules in order: Redirect, Bot, Reverted, EvalOverlap, TooLong,
// AutomatedComment, TooManyParagraphs, UnresolvedDoc, OverTokenBudget.
FilterVerdict filter_edit_pair(const EditPair& pair, const RawRevision& revision, const FilterConfig& config);

// Comments seen n > max_avg times keep each occurrence with probability
// max_avg / n. `verdicts` (if given) receives one verdict per input pair.
std::vector<EditPair> downsample_by_comment(std::vector<EditPair> pairs, std::size_t max_avg, Rng& rng,
                                            std::vector<FilterVerdict>* verdicts = nullptr);

// ---- documents ----

// Non-overlapping chunks of `size` words (last one may be shorter). Chunk
// ids are "{id}@@{n}"; domain and title are inherited.
std::vector<SourceDocument> chunk_document(const SourceDocument& doc, std::size_t size = 100);
std::string parent_id(std::string_view chunk_id);

class Ranker {
 public:
  virtual ~Ranker() = default;
  // Candidate indices, best first, at most `top`.
  virtual std::vector<std::size_t> rank(std::string_view query, std::span<const SourceDocument> candidates,
                                        std::size_t top) const = 0;
};

// Okapi BM25 over lowercased, stopword-free tokens; ties keep input order.
class Bm25Ranker final : public Ranker {
 public:
  Bm25Ranker(double k1 = 1.2, double b = 0.75) : k1_(k1), b_(b) {}
  std::vector<std::size_t> rank(std::string_view query, std::span<const SourceDocument> candidates,
                                std::size_t top) const override;

 private:
  double k1_, b_;
};

// Chunked local retrieval corpus.
class LocalCorpus {
 public:
  LocalCorpus() = default;
  explicit LocalCorpus(const std::vector<SourceDocument>& docs, std::size_t chunk_words = 100);
  static LocalCorpus load_jsonl(const std::filesystem::path& path, std::size_t chunk_words = 100);

  const std::vector<SourceDocument>& chunks() const { return chunks_; }
  // Best chunks for the query, skipping chunks of excluded parent documents.
  std::vector<SourceDocument> search(std::string_view query, std::size_t top, const Ranker& ranker,
                                     const std::unordered_set<std::string>& exclude_parents = {}) const;

 private:
  std::vector<SourceDocument> chunks_;
};

using Resolver = std::function<std::optional<SourceDocument>(const std::string& id)>;

// Directory of percent-encoded "{id}.json" SourceDocument files.
class DocStore {
 public:
  explicit DocStore(std::filesystem::path dir) : dir_(std::move(dir)) {}
  std::optional<SourceDocument> get(const std::string& id) const;
  void put(const SourceDocument& doc) const;
  bool contains(const std::string& id) const;
  Resolver resolver() const;
  static std::string file_name(std::string_view id);

 private:
  std::filesystem::path dir_;
};

// Best `size`-word chunk of a document for the query; the chunk keeps the
// document's id.
SourceDocument best_chunk(const SourceDocument& doc, std::string_view query, const Ranker& ranker,
                          std::size_t size = 100);

// Cited documents first (at most k), then retrieved chunks up to k. Throws
// UnresolvedDoc when a cited id does not resolve.
DocumentSet assemble_document_set(const EditPair& pair, const Resolver& resolver, const Ranker& ranker,
                                  const LocalCorpus& corpus, std::size_t k = 3);

// ---- cite / quote mining ----

enum class MinedKind { kCite, kQuote };

struct MinedExample {
  MinedKind kind = MinedKind::kCite;
  EditPair pair;  // comment holds the plan
  DocumentSet docs;
};

struct MinedSets {
  std::vector<MinedExample> cite;
  std::vector<MinedExample> quote;
  std::size_t dropped = 0;  // gold document unresolvable
};

// Exactly one citation inserted (no quote) / exactly one quote attribute
// added to an existing citation, nothing else changed.
std::optional<MinedKind> classify_cite_quote(std::string_view source, std::string_view target);

// Each example gets the gold document (for quotes, the chunk that contains
// the quote) plus `distractors` retrieved chunks, in seeded random order.
MinedSets mine_cite_quote_pairs(std::span<const EditPair> pairs, const Resolver& resolver, const Ranker& ranker,
                                const LocalCorpus& corpus, Rng& rng, std::size_t distractors = 2);

}  // namespace peer::corpus
