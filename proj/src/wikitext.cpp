#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "peer/corpus.hpp"
#include "peer/format.hpp"

namespace peer::corpus {

namespace {

constexpr char kProtectOpen = '\x01';
constexpr char kProtectClose = '\x02';

bool iequals_prefix(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[i])) != std::tolower(static_cast<unsigned char>(prefix[i]))) {
      return false;
    }
  }
  return true;
}

std::size_t ifind(std::string_view s, std::string_view needle, std::size_t from = 0) {
  for (std::size_t i = from; i + needle.size() <= s.size(); ++i) {
    if (iequals_prefix(s.substr(i), needle)) return i;
  }
  return std::string_view::npos;
}

std::string collapse_spaces(std::string_view s) {
  std::string out;
  bool space = false;
  for (char c : s) {
    if (text::is_space(c)) {
      space = true;
      continue;
    }
    if (space && !out.empty()) out += ' ';
    space = false;
    out += c;
  }
  return out;
}

// End of a balanced {{...}} / [[...]] construct starting at `pos`, or npos.
std::size_t balanced_end(std::string_view s, std::size_t pos, std::string_view open, std::string_view close) {
  int depth = 0;
  std::size_t i = pos;
  while (i < s.size()) {
    if (s.substr(i, open.size()) == open) {
      ++depth;
      i += open.size();
    } else if (s.substr(i, close.size()) == close) {
      --depth;
      i += close.size();
      if (depth == 0) return i;
    } else {
      ++i;
    }
  }
  return std::string_view::npos;
}

std::string remove_balanced(std::string_view s, std::string_view open, std::string_view close,
                            const std::function<bool(std::string_view)>& should_remove) {
  std::string out;
  std::size_t i = 0;
  while (i < s.size()) {
    std::size_t p = s.find(open, i);
    if (p == std::string_view::npos) break;
    out.append(s.substr(i, p - i));
    std::size_t e = balanced_end(s, p, open, close);
    if (e == std::string_view::npos) {
      out.append(open);
      i = p + open.size();
      continue;
    }
    std::string_view body = s.substr(p, e - p);
    if (should_remove(body)) {
      i = e;
    } else {
      // Keep the brackets, but still process nested constructs.
      out.append(open);
      out += remove_balanced(body.substr(open.size(), body.size() - open.size() - close.size()), open, close,
                             should_remove);
      out.append(close);
      i = e;
    }
  }
  if (i < s.size()) out.append(s.substr(i));
  return out;
}

std::string remove_comments(std::string_view s) {
  std::string out;
  std::size_t i = 0;
  while (i < s.size()) {
    std::size_t p = s.find("<!--", i);
    if (p == std::string_view::npos) break;
    out.append(s.substr(i, p - i));
    std::size_t e = s.find("-->", p + 4);
    i = e == std::string_view::npos ? s.size() : e + 3;
  }
  if (i < s.size()) out.append(s.substr(i));
  return out;
}

std::string sanitize_id(std::string_view id) {
  std::string out;
  for (char c : text::trim(id)) {
    out += (text::is_space(c) || c == '[' || c == ']' || c == kProtectOpen || c == kProtectClose) ? '_' : c;
  }
  return out;
}

std::optional<std::string> clean_quote(std::string_view q) {
  std::string s = collapse_spaces(q);
  std::size_t p;
  while ((p = s.find("]]]")) != std::string::npos) s.erase(p, 3);
  while (!s.empty() && (s.back() == ']' || s.back() == ' ')) s.pop_back();
  if (s.empty()) return std::nullopt;
  return s;
}

// Top-level '|' split of a template body (without the outer braces).
std::vector<std::string_view> split_params(std::string_view body) {
  std::vector<std::string_view> out;
  int depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (body.substr(i, 2) == "{{" || body.substr(i, 2) == "[[") {
      ++depth;
      ++i;
    } else if ((body.substr(i, 2) == "}}" || body.substr(i, 2) == "]]") && depth > 0) {
      --depth;
      ++i;
    } else if (body[i] == '|' && depth == 0) {
      out.push_back(body.substr(start, i - start));
      start = i + 1;
    }
  }
  out.push_back(body.substr(start));
  return out;
}

std::optional<std::string> first_url(std::string_view s) {
  for (std::string_view scheme : {"https://", "http://"}) {
    std::size_t p = ifind(s, scheme);
    if (p == std::string_view::npos) continue;
    std::size_t e = p;
    while (e < s.size() && !text::is_space(s[e]) && s[e] != ']' && s[e] != '|' && s[e] != '}' && s[e] != '<') ++e;
    return std::string(s.substr(p, e - p));
  }
  return std::nullopt;
}

struct RefInfo {
  std::optional<std::string> id;
  std::optional<std::string> quote;
};

RefInfo parse_ref_content(std::string_view content) {
  RefInfo info;
  std::size_t t = content.find("{{");
  if (t != std::string_view::npos) {
    std::size_t e = balanced_end(content, t, "{{", "}}");
    if (e != std::string_view::npos) {
      auto params = split_params(content.substr(t + 2, e - t - 4));
      std::map<std::string, std::string> kv;
      for (std::size_t i = 1; i < params.size(); ++i) {
        auto eq = params[i].find('=');
        if (eq == std::string_view::npos) continue;
        kv[text::to_lower(text::trim(params[i].substr(0, eq)))] = std::string(text::trim(params[i].substr(eq + 1)));
      }
      if (auto it = kv.find("url"); it != kv.end() && !it->second.empty()) info.id = sanitize_id(it->second);
      if (auto it = kv.find("quote"); it != kv.end()) info.quote = clean_quote(it->second);
    }
  }
  if (!info.id) {
    if (auto u = first_url(content)) info.id = sanitize_id(*u);
  }
  if (info.id && info.id->empty()) info.id.reset();
  return info;
}

std::optional<std::string> ref_name(std::string_view tag) {
  std::size_t p = ifind(tag, "name");
  while (p != std::string_view::npos) {
    std::size_t i = p + 4;
    while (i < tag.size() && text::is_space(tag[i])) ++i;
    if (i < tag.size() && tag[i] == '=') {
      ++i;
      while (i < tag.size() && text::is_space(tag[i])) ++i;
      if (i >= tag.size()) return std::nullopt;
      if (tag[i] == '"' || tag[i] == '\'') {
        char q = tag[i];
        std::size_t e = tag.find(q, i + 1);
        if (e == std::string_view::npos) return std::nullopt;
        return std::string(text::trim(tag.substr(i + 1, e - i - 1)));
      }
      std::size_t e = i;
      while (e < tag.size() && !text::is_space(tag[e]) && tag[e] != '/' && tag[e] != '>') ++e;
      return std::string(tag.substr(i, e - i));
    }
    p = ifind(tag, "name", p + 4);
  }
  return std::nullopt;
}

struct RefOccurrence {
  std::size_t begin = 0, end = 0;
  std::optional<std::string> name;
  bool self_closing = false;
  std::string_view content;
};

std::vector<RefOccurrence> find_refs(std::string_view s) {
  std::vector<RefOccurrence> out;
  std::size_t i = 0;
  while ((i = ifind(s, "<ref", i)) != std::string_view::npos) {
    std::size_t after = i + 4;
    if (after < s.size() && !text::is_space(s[after]) && s[after] != '>' && s[after] != '/') {
      i = after;  // <references> etc.
      continue;
    }
    std::size_t gt = s.find('>', after);
    if (gt == std::string_view::npos) break;
    RefOccurrence r;
    r.begin = i;
    std::string_view tag = s.substr(i, gt + 1 - i);
    r.name = ref_name(tag);
    if (gt > 0 && s[gt - 1] == '/') {
      r.self_closing = true;
      r.end = gt + 1;
    } else {
      std::size_t close = ifind(s, "</ref", gt + 1);
      if (close == std::string_view::npos) {
        r.end = gt + 1;
      } else {
        r.content = s.substr(gt + 1, close - gt - 1);
        std::size_t cgt = s.find('>', close);
        r.end = cgt == std::string_view::npos ? s.size() : cgt + 1;
      }
    }
    out.push_back(r);
    i = r.end;
  }
  return out;
}

std::string remove_tag_blocks(std::string_view s, std::string_view tag) {
  std::string out;
  std::string open = "<" + std::string(tag);
  std::string close = "</" + std::string(tag);
  std::size_t i = 0;
  while (i < s.size()) {
    std::size_t p = ifind(s, open, i);
    if (p == std::string_view::npos) break;
    std::size_t after = p + open.size();
    if (after < s.size() && std::isalnum(static_cast<unsigned char>(s[after]))) {
      out.append(s.substr(i, after - i));
      i = after;
      continue;
    }
    out.append(s.substr(i, p - i));
    std::size_t gt = s.find('>', p);
    if (gt == std::string_view::npos) {
      i = s.size();
      break;
    }
    if (s[gt - 1] == '/') {
      i = gt + 1;
      continue;
    }
    std::size_t c = ifind(s, close, gt);
    if (c == std::string_view::npos) {
      i = gt + 1;
      continue;
    }
    std::size_t cgt = s.find('>', c);
    i = cgt == std::string_view::npos ? s.size() : cgt + 1;
  }
  if (i < s.size()) out.append(s.substr(i));
  return out;
}

// Removes remaining HTML-like tags, keeping their content.
std::string strip_tags(std::string_view s) {
  std::string out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] == '<') {
      std::size_t j = i + 1;
      if (j < s.size() && s[j] == '/') ++j;
      if (j < s.size() && std::isalpha(static_cast<unsigned char>(s[j]))) {
        std::size_t gt = j;
        while (gt < s.size() && s[gt] != '>' && s[gt] != '<' && s[gt] != '\n') ++gt;
        if (gt < s.size() && s[gt] == '>') {
          i = gt + 1;
          continue;
        }
      }
    }
    out += s[i++];
  }
  return out;
}

bool is_scheme_at(std::string_view s) {
  return iequals_prefix(s, "http://") || iequals_prefix(s, "https://") || iequals_prefix(s, "ftp://") ||
         s.starts_with("//");
}

std::string replace_external_links(std::string_view s) {
  std::string out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] == '[' && (i + 1 < s.size() && s[i + 1] != '[') && (i == 0 || s[i - 1] != '[') &&
        is_scheme_at(s.substr(i + 1))) {
      std::size_t close = s.find(']', i);
      std::size_t nl = s.find('\n', i);
      if (close != std::string_view::npos && (nl == std::string_view::npos || close < nl)) {
        std::string_view inner = s.substr(i + 1, close - i - 1);
        std::size_t sp = inner.find(' ');
        if (sp != std::string_view::npos) out.append(text::trim(inner.substr(sp + 1)));
        i = close + 1;
        continue;
      }
    }
    out += s[i++];
  }
  return out;
}

std::string remove_magic_words(std::string_view s) {
  std::string out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (s.substr(i, 2) == "__") {
      std::size_t j = i + 2;
      while (j < s.size() && std::isupper(static_cast<unsigned char>(s[j]))) ++j;
      if (j > i + 2 && s.substr(j, 2) == "__") {
        i = j + 2;
        continue;
      }
    }
    out += s[i++];
  }
  return out;
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  std::size_t p = 0;
  while ((p = s.find(from, p)) != std::string::npos) {
    s.replace(p, from.size(), to);
    p += to.size();
  }
  return s;
}

std::string tidy_whitespace(std::string_view s) {
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    std::size_t eol = s.find('\n', pos);
    if (eol == std::string_view::npos) eol = s.size();
    lines.push_back(collapse_spaces(s.substr(pos, eol - pos)));
    if (eol == s.size()) break;
    pos = eol + 1;
  }
  std::string out;
  bool pending_blank = false;
  for (const auto& l : lines) {
    if (l.empty()) {
      pending_blank = !out.empty();
      continue;
    }
    if (!out.empty()) out += pending_blank ? "\n\n" : "\n";
    pending_blank = false;
    out += l;
  }
  return out;
}

bool is_media_link(std::string_view body) {
  std::string_view inner = text::trim(body.substr(2));
  if (!inner.empty() && inner.front() == ':') return false;
  for (std::string_view p : {"file:", "image:", "category:", "media:"}) {
    if (iequals_prefix(inner, p)) return true;
  }
  return false;
}

std::string one_pass(std::string_view raw, std::vector<std::string>& protected_refs) {
  auto protect = [&](std::string placeholder) {
    std::string token(1, kProtectOpen);
    token += std::to_string(protected_refs.size());
    token += kProtectClose;
    protected_refs.push_back(std::move(placeholder));
    return token;
  };

  std::string s;
  {
    // Existing placeholders pass through untouched.
    std::size_t pos = 0;
    for (const auto& r : format::find_citation_refs(raw)) {
      s.append(raw.substr(pos, r.span.begin - pos));
      s += protect(std::string(r.span.of(raw)));
      pos = r.span.end;
    }
    s.append(raw.substr(pos));
  }

  s = remove_comments(s);

  // Named definitions first: a later <ref name=x/> may reuse an earlier or
  // later definition.
  auto refs = find_refs(s);
  std::map<std::string, std::string> named;
  for (const auto& r : refs) {
    if (!r.name || r.self_closing) continue;
    auto info = parse_ref_content(r.content);
    if (info.id && !named.count(*r.name)) named[*r.name] = *info.id;
  }
  {
    std::string out;
    std::size_t pos = 0;
    for (const auto& r : refs) {
      out.append(s.substr(pos, r.begin - pos));
      RefInfo info;
      if (!r.self_closing) info = parse_ref_content(r.content);
      if (!info.id && r.name) {
        if (auto it = named.find(*r.name); it != named.end()) info.id = it->second;
      }
      if (info.id) out += protect(format::render_ref(*info.id, info.quote));
      pos = r.end;
    }
    out.append(s.substr(pos));
    s = std::move(out);
  }

  s = remove_tag_blocks(s, "references");
  s = remove_tag_blocks(s, "gallery");
  s = remove_tag_blocks(s, "timeline");
  s = remove_balanced(s, "{{", "}}", [](std::string_view) { return true; });
  s = remove_balanced(s, "{|", "|}", [](std::string_view) { return true; });
  s = remove_balanced(s, "[[", "]]", is_media_link);
  s = replace_external_links(s);
  s = strip_tags(s);
  s = remove_magic_words(s);
  s = replace_all(std::move(s), "&nbsp;", " ");
  s = tidy_whitespace(s);

  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == kProtectOpen) {
      std::size_t e = s.find(kProtectClose, i);
      if (e != std::string::npos) {
        out += protected_refs[std::stoul(s.substr(i + 1, e - i - 1))];
        i = e;
        continue;
      }
    }
    if (s[i] != kProtectClose) out += s[i];
  }
  return out;
}

}  // namespace

std::string normalize_wikitext(std::string_view raw) {
  std::string s;
  s.reserve(raw.size());
  for (char c : raw) {
    if (c != kProtectOpen && c != kProtectClose && c != '\r') s += c;
  }
  // Removing one construct can expose another ("{<b></b>{x}}"), so iterate
  // to a fixed point.
  for (int round = 0; round < 8; ++round) {
    std::vector<std::string> refs;
    std::string next = one_pass(s, refs);
    if (next == s) break;
    s = std::move(next);
  }
  return s;
}

}  // namespace peer::corpus
