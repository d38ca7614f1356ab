#include "peer/types.hpp"

#include "peer/errors.hpp"

namespace peer {

namespace {

// Ids may arrive as JSON numbers or strings.
std::string id_field(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  throw ParseError(std::string("field '") + key + "' must be a string or integer");
}

template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  return it->get<T>();
}

}  // namespace

std::optional<std::size_t> DocumentSet::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (docs[i].id == id) return i;
  }
  return std::nullopt;
}

void to_json(nlohmann::json& j, const RawRevision& r) {
  j = {{"page_id", r.page_id}, {"rev_id", r.rev_id},   {"timestamp", r.timestamp},
       {"title", r.title},     {"comment", r.comment}, {"text", r.text},
       {"username", r.username}, {"is_bot", r.is_bot}, {"is_redirect", r.is_redirect}};
  j["parent_rev_id"] = r.parent_rev_id ? nlohmann::json(*r.parent_rev_id) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, RawRevision& r) {
  r.page_id = id_field(j, "page_id");
  r.rev_id = id_field(j, "rev_id");
  if (j.contains("parent_rev_id") && !j["parent_rev_id"].is_null()) {
    r.parent_rev_id = id_field(j, "parent_rev_id");
  } else {
    r.parent_rev_id.reset();
  }
  r.text = j.at("text").get<std::string>();
  r.timestamp = get_or<std::string>(j, "timestamp", "");
  r.title = get_or<std::string>(j, "title", "");
  r.comment = get_or<std::string>(j, "comment", "");
  r.username = get_or<std::string>(j, "username", "");
  r.is_bot = get_or<bool>(j, "is_bot", false);
  r.is_redirect = get_or<bool>(j, "is_redirect", false);
}

void to_json(nlohmann::json& j, const EditPair& p) {
  j = {{"title", p.title},
       {"source", p.source},
       {"target", p.target},
       {"comment", p.comment},
       {"doc_ids", p.doc_ids},
       {"origin", {{"page_id", p.origin.page_id}, {"rev_id", p.origin.rev_id}}},
       {"paragraphs_affected", p.paragraphs_affected},
       {"raw_chars", p.raw_chars},
       {"meta", p.meta}};
}

void from_json(const nlohmann::json& j, EditPair& p) {
  p.title = get_or<std::string>(j, "title", "");
  p.source = j.at("source").get<std::string>();
  p.target = j.at("target").get<std::string>();
  p.comment = get_or<std::string>(j, "comment", "");
  p.doc_ids = get_or<std::vector<std::string>>(j, "doc_ids", {});
  if (auto it = j.find("origin"); it != j.end() && it->is_object()) {
    p.origin.page_id = it->contains("page_id") ? id_field(*it, "page_id") : "";
    p.origin.rev_id = it->contains("rev_id") ? id_field(*it, "rev_id") : "";
  }
  p.paragraphs_affected = get_or<std::size_t>(j, "paragraphs_affected", 0);
  p.raw_chars = get_or<std::size_t>(j, "raw_chars", 0);
  p.meta = get_or<nlohmann::json>(j, "meta", nlohmann::json::object());
}

void to_json(nlohmann::json& j, const SourceDocument& d) {
  j = {{"id", d.id}, {"domain", d.domain}, {"title", d.title}, {"content", d.content}};
}

void from_json(const nlohmann::json& j, SourceDocument& d) {
  d.id = id_field(j, "id");
  d.domain = get_or<std::string>(j, "domain", "");
  d.title = get_or<std::string>(j, "title", "");
  d.content = j.at("content").get<std::string>();
  if (d.content.empty()) throw InvalidArgument("document '" + d.id + "' has empty content");
}

void to_json(nlohmann::json& j, const DocumentSet& s) {
  j = nlohmann::json::array();
  for (std::size_t i = 0; i < s.docs.size(); ++i) {
    nlohmann::json d = s.docs[i];
    d["provenance"] = s.provenance[i] == Provenance::kCited ? "cited" : "retrieved";
    j.push_back(std::move(d));
  }
}

void from_json(const nlohmann::json& j, DocumentSet& s) {
  s = {};
  for (const auto& d : j) {
    auto p = get_or<std::string>(d, "provenance", "cited") == "retrieved" ? Provenance::kRetrieved : Provenance::kCited;
    s.add(d.get<SourceDocument>(), p);
  }
}

}  // namespace peer
