#include <expat.h>

#include <cctype>
#include <memory>

#include "peer/corpus.hpp"
#include "peer/errors.hpp"

namespace peer::corpus {

RevisionFormat parse_revision_format(std::string_view s) {
  if (s == "xml-dump" || s == "xml") return RevisionFormat::kXmlDump;
  if (s == "revision-jsonl" || s == "jsonl") return RevisionFormat::kRevisionJsonl;
  throw InvalidArgument("unknown revision format '" + std::string(s) + "'");
}

bool looks_like_bot(std::string_view username) {
  std::string lower = text::to_lower(username);
  std::size_t start = 0;
  for (std::size_t i = 0; i <= lower.size(); ++i) {
    if (i == lower.size() || lower[i] == ' ' || lower[i] == '_' || lower[i] == '-') {
      std::string_view tok = std::string_view(lower).substr(start, i - start);
      if (tok.ends_with("bot")) return true;
      start = i + 1;
    }
  }
  return false;
}

bool is_redirect_text(std::string_view raw) {
  raw = text::trim(raw);
  return text::to_lower(raw.substr(0, 9)) == "#redirect";
}

namespace {

void note(ParseStats& stats, std::string msg) {
  ++stats.skipped;
  if (stats.diagnostics.size() < 20) stats.diagnostics.push_back(std::move(msg));
}

void parse_jsonl(std::istream& in, const std::function<void(RawRevision&&)>& sink, ParseStats& stats) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    RawRevision r;
    try {
      auto j = nlohmann::json::parse(line);
      r = j.get<RawRevision>();
    } catch (const std::exception& e) {
      note(stats, "line " + std::to_string(lineno) + ": " + e.what());
      continue;
    }
    if (!r.is_bot) r.is_bot = looks_like_bot(r.username);
    if (!r.is_redirect) r.is_redirect = is_redirect_text(r.text);
    ++stats.parsed;
    sink(std::move(r));
  }
  if (in.bad()) throw IoError("read error in revision stream");
}

// MediaWiki export schema: page/{title,id,redirect,revision/{id,parentid,
// timestamp,contributor/{username,ip},comment,text}}.
struct XmlState {
  const std::function<void(RawRevision&&)>* sink = nullptr;
  ParseStats* stats = nullptr;
  std::vector<std::string> path;
  std::string chars;
  std::string page_id, page_title;
  bool page_redirect = false;
  RawRevision rev;
  bool has_text = false;
  bool text_deleted = false;
  bool has_rev_id = false;

  std::string_view parent() const { return path.size() >= 2 ? std::string_view(path[path.size() - 2]) : ""; }
};

void XMLCALL on_start(void* data, const XML_Char* name, const XML_Char** attrs) {
  auto* st = static_cast<XmlState*>(data);
  std::string n = name;
  st->path.push_back(n);
  st->chars.clear();
  if (n == "page") {
    st->page_id.clear();
    st->page_title.clear();
    st->page_redirect = false;
  } else if (n == "redirect") {
    st->page_redirect = true;
  } else if (n == "revision") {
    st->rev = RawRevision{};
    st->has_text = false;
    st->has_rev_id = false;
  } else if (n == "text") {
    st->text_deleted = false;
    for (int i = 0; attrs[i]; i += 2) {
      if (std::string_view(attrs[i]) == "deleted") st->text_deleted = true;
    }
  }
}

void XMLCALL on_end(void* data, const XML_Char* name) {
  auto* st = static_cast<XmlState*>(data);
  std::string n = name;
  std::string_view par = st->parent();
  if (par == "page") {
    if (n == "title") st->page_title = st->chars;
    if (n == "id") st->page_id = st->chars;
  } else if (par == "revision") {
    if (n == "id") {
      st->rev.rev_id = st->chars;
      st->has_rev_id = true;
    } else if (n == "parentid") {
      st->rev.parent_rev_id = st->chars;
    } else if (n == "timestamp") {
      st->rev.timestamp = st->chars;
    } else if (n == "comment") {
      st->rev.comment = st->chars;
    } else if (n == "text") {
      st->rev.text = st->chars;
      st->has_text = !st->text_deleted;
    }
  } else if (par == "contributor") {
    if (n == "username" || n == "ip") st->rev.username = st->chars;
  }
  if (n == "revision") {
    if (!st->has_text || !st->has_rev_id) {
      note(*st->stats, "revision " + st->rev.rev_id + " of page " + st->page_id + " lacks text or id");
    } else {
      st->rev.page_id = st->page_id;
      st->rev.title = st->page_title;
      st->rev.is_bot = looks_like_bot(st->rev.username);
      st->rev.is_redirect = st->page_redirect || is_redirect_text(st->rev.text);
      ++st->stats->parsed;
      (*st->sink)(std::move(st->rev));
    }
    st->rev = RawRevision{};
  }
  st->path.pop_back();
  st->chars.clear();
}

void XMLCALL on_chars(void* data, const XML_Char* s, int len) {
  static_cast<XmlState*>(data)->chars.append(s, static_cast<std::size_t>(len));
}

void parse_xml(std::istream& in, const std::function<void(RawRevision&&)>& sink, ParseStats& stats) {
  std::unique_ptr<std::remove_pointer_t<XML_Parser>, decltype(&XML_ParserFree)> parser(XML_ParserCreate("UTF-8"),
                                                                                      &XML_ParserFree);
  if (!parser) throw IoError("cannot create XML parser");
  XmlState st;
  st.sink = &sink;
  st.stats = &stats;
  XML_SetUserData(parser.get(), &st);
  XML_SetElementHandler(parser.get(), on_start, on_end);
  XML_SetCharacterDataHandler(parser.get(), on_chars);
  std::vector<char> buf(1 << 16);
  for (;;) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    auto got = in.gcount();
    bool done = got < static_cast<std::streamsize>(buf.size());
    if (XML_Parse(parser.get(), buf.data(), static_cast<int>(got), done) == XML_STATUS_ERROR) {
      throw ParseError(std::string("XML dump: ") + XML_ErrorString(XML_GetErrorCode(parser.get())) + " at line " +
                       std::to_string(XML_GetCurrentLineNumber(parser.get())));
    }
    if (done) break;
  }
  if (in.bad()) throw IoError("read error in revision stream");
}

}  // namespace

void parse_revision_stream(std::istream& in, RevisionFormat format, const std::function<void(RawRevision&&)>& sink,
                           ParseStats& stats) {
  if (!in) throw IoError("revision stream is not readable");
  if (format == RevisionFormat::kRevisionJsonl) {
    parse_jsonl(in, sink, stats);
  } else {
    parse_xml(in, sink, stats);
  }
}

std::vector<RawRevision> parse_revisions(std::istream& in, RevisionFormat format, ParseStats* stats) {
  ParseStats local;
  std::vector<RawRevision> out;
  parse_revision_stream(in, format, [&](RawRevision&& r) { out.push_back(std::move(r)); }, stats ? *stats : local);
  return out;
}

}  // namespace peer::corpus
