#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace peer {

struct RawRevision {
  std::string page_id;
  std::string rev_id;
  std::optional<std::string> parent_rev_id;
  std::string timestamp;  // ISO-8601 UTC, compared lexicographically
  std::string title;
  std::string comment;
  std::string text;
  std::string username;
  bool is_bot = false;
  bool is_redirect = false;
};

struct Origin {
  std::string page_id;
  std::string rev_id;
  friend bool operator==(const Origin&, const Origin&) = default;
};

struct EditPair {
  std::string title;
  std::string source;
  std::string target;
  std::string comment;
  std::vector<std::string> doc_ids;
  Origin origin;
  std::size_t paragraphs_affected = 0;
  std::size_t raw_chars = 0;  // length of the larger raw revision
  nlohmann::json meta = nlohmann::json::object();
};

struct SourceDocument {
  std::string id;
  std::string domain;
  std::string title;
  std::string content;
  friend bool operator==(const SourceDocument&, const SourceDocument&) = default;
};

enum class Provenance { kCited, kRetrieved };

struct DocumentSet {
  std::vector<SourceDocument> docs;
  std::vector<Provenance> provenance;  // parallel to docs

  std::size_t size() const { return docs.size(); }
  bool empty() const { return docs.empty(); }
  void add(SourceDocument d, Provenance p) {
    docs.push_back(std::move(d));
    provenance.push_back(p);
  }
  // Index of the document with this id, if present.
  std::optional<std::size_t> index_of(const std::string& id) const;
};

void to_json(nlohmann::json& j, const RawRevision& r);
void from_json(const nlohmann::json& j, RawRevision& r);
void to_json(nlohmann::json& j, const EditPair& p);
void from_json(const nlohmann::json& j, EditPair& p);
void to_json(nlohmann::json& j, const SourceDocument& d);
void from_json(const nlohmann::json& j, SourceDocument& d);
void to_json(nlohmann::json& j, const DocumentSet& s);
void from_json(const nlohmann::json& j, DocumentSet& s);

}  // namespace peer
