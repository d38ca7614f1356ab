#include <CLI11.hpp>

#include <algorithm>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <pthread.h>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "peer/backend.hpp"
#include "peer/corpus.hpp"
#include "peer/diff.hpp"
#include "peer/errors.hpp"
#include "peer/format.hpp"
#include "peer/metrics.hpp"
#include "peer/parallel.hpp"
#include "peer/rng.hpp"
#include "peer/service.hpp"
#include "peer/synth.hpp"

using nlohmann::json;
namespace fs = std::filesystem;
using namespace peer;

namespace {

// ---- io ----

std::vector<json> read_jsonl(const std::string& path) {
  std::ifstream file;
  std::istream* in = &std::cin;
  if (path != "-") {
    file.open(path, std::ios::binary);
    if (!file) throw IoError("cannot open '" + path + "'");
    in = &file;
  }
  std::vector<json> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(*in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw ParseError(path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

template <typename T>
std::vector<T> read_records(const std::string& path) {
  std::vector<T> out;
  std::size_t n = 0;
  for (const auto& j : read_jsonl(path)) {
    ++n;
    try {
      out.push_back(j.get<T>());
    } catch (const json::exception& e) {
      throw ParseError(path + ": record " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

class Output {
 public:
  explicit Output(const std::string& path) : path_(path) {
    if (path == "-") return;
    if (auto dir = fs::path(path).parent_path(); !dir.empty()) fs::create_directories(dir);
    file_.open(path, std::ios::binary | std::ios::trunc);
    if (!file_) throw IoError("cannot write '" + path + "'");
  }
  std::ostream& os() { return path_ == "-" ? std::cout : file_; }
  void line(const json& j) { os() << j.dump() << '\n'; }
  void close() {
    os().flush();
    if (!os()) throw IoError("write failed for '" + path_ + "'");
  }

 private:
  std::string path_;
  std::ofstream file_;
};

void report(const json& stats) { std::cerr << stats.dump() << '\n'; }

struct Tally {
  std::map<std::string, std::size_t> by_code;
  void add(const std::string& code) { ++by_code[code]; }
  json to_json() const { return by_code; }
};

// ---- shared options ----

struct Global {
  std::uint64_t seed = 0;
  std::string backend;
  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
  int timeout_ms = 60000;
};

std::shared_ptr<backend::Backend> open_backend(const std::string& spec, const Global& g) {
  backend::RemoteOptions ro;
  ro.timeout = std::chrono::milliseconds(g.timeout_ms);
  ro.max_in_flight = std::max<std::size_t>(1, g.threads);
  return backend::make_backend(spec.empty() ? g.backend : spec, ro);
}

std::optional<corpus::DocStore> open_store(const std::string& dir) {
  if (dir.empty()) return std::nullopt;
  return corpus::DocStore(dir);
}

// Documents behind doc_ids; ids that do not resolve become empty stand-ins
// so marker indices keep their meaning.
DocumentSet docs_for(const EditPair& p, const std::optional<corpus::DocStore>& store, bool keep_missing) {
  DocumentSet s;
  for (const auto& id : p.doc_ids) {
    auto d = store ? store->get(id) : std::nullopt;
    if (d) {
      s.add(*d, Provenance::kCited);
    } else if (keep_missing) {
      s.add(SourceDocument{id, "", "", ""}, Provenance::kCited);
    }
  }
  return s;
}

std::string json_pointer(std::string field) {
  if (field.starts_with("/")) return field;
  std::replace(field.begin(), field.end(), '.', '/');
  return "/" + field;
}

// ---- commands ----

struct IngestArgs {
  std::string in = "-", format = "revision-jsonl", out;
};

int cmd_ingest(const IngestArgs& a) {
  std::ifstream file;
  std::istream* in = &std::cin;
  if (a.in != "-") {
    file.open(a.in, std::ios::binary);
    if (!file) throw IoError("cannot open '" + a.in + "'");
    in = &file;
  }
  corpus::ParseStats ps;
  auto revs = corpus::parse_revisions(*in, corpus::parse_revision_format(a.format), &ps);
  std::stable_sort(revs.begin(), revs.end(), [](const RawRevision& x, const RawRevision& y) {
    return std::tie(x.page_id, x.timestamp) < std::tie(y.page_id, y.timestamp);
  });
  corpus::ExtractStats es;
  auto edits = corpus::extract_edit_pairs(revs, &es);
  fs::create_directories(a.out);
  Output out((fs::path(a.out) / "editpairs.jsonl").string());
  std::size_t reverted = 0;
  for (auto& e : edits) {
    corpus::attach_revision_meta(e);
    reverted += e.reverted;
    out.line(e.pair);
  }
  out.close();
  json stats = {{"revisions", ps.parsed}, {"skipped_records", ps.skipped}, {"pairs", es.pairs},
                {"unchanged", es.unchanged}, {"orphans", es.orphans}, {"reverted", reverted},
                {"diagnostics", ps.diagnostics}};
  Output sf((fs::path(a.out) / "ingest_stats.json").string());
  sf.os() << stats.dump(2) << '\n';
  sf.close();
  report(stats);
  return 0;
}

struct FilterArgs {
  std::string in = "-", out = "-", eval_pages, docs, verdicts;
  std::size_t max_avg = 0;
  std::size_t max_paragraphs = 2;
  std::size_t max_units = 384;
};

int cmd_filter(const FilterArgs& a, const Global& g) {
  auto pairs = read_records<EditPair>(a.in);
  corpus::FilterConfig cfg;
  cfg.max_paragraphs = a.max_paragraphs;
  cfg.max_paragraph_units = a.max_units;
  if (!a.eval_pages.empty()) {
    std::ifstream f(a.eval_pages);
    if (!f) throw IoError("cannot open '" + a.eval_pages + "'");
    for (std::string l; std::getline(f, l);) {
      auto t = text::trim(l);
      if (!t.empty()) cfg.eval_pages.insert(std::string(t));
    }
  }
  auto store = open_store(a.docs);
  if (store) cfg.doc_resolvable = [&](const std::string& id) { return store->contains(id); };

  std::vector<corpus::FilterVerdict> verdicts(pairs.size());
  std::vector<EditPair> kept;
  std::vector<std::size_t> kept_at;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    verdicts[i] = corpus::filter_edit_pair(pairs[i], corpus::revision_from_meta(pairs[i]), cfg);
    if (verdicts[i].kept) {
      kept.push_back(pairs[i]);
      kept_at.push_back(i);
    }
  }
  if (a.max_avg > 0) {
    Rng rng(derive_seed(g.seed, "filter"));
    std::vector<corpus::FilterVerdict> dv;
    kept = corpus::downsample_by_comment(std::move(kept), a.max_avg, rng, &dv);
    for (std::size_t j = 0; j < dv.size(); ++j) verdicts[kept_at[j]] = dv[j];
  }

  Output out(a.out);
  for (const auto& p : kept) out.line(p);
  out.close();
  Tally t;
  for (const auto& v : verdicts) t.add(v.kept ? "kept" : std::string(corpus::reason_name(*v.reason)));
  if (!a.verdicts.empty()) {
    Output vf(a.verdicts);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      json v = {{"index", i}, {"rev_id", pairs[i].origin.rev_id}, {"kept", verdicts[i].kept}};
      v["reason"] = verdicts[i].reason ? json(corpus::reason_name(*verdicts[i].reason)) : json(nullptr);
      vf.line(v);
    }
    vf.close();
  }
  report({{"pairs", pairs.size()}, {"kept", kept.size()}, {"verdicts", t.to_json()}});
  return 0;
}

struct BuildArgs {
  std::string task = "edit", in = "-", out = "-", docs, corpus;
  std::size_t k = 3;
  bool no_augment = false;
};

int cmd_build(const BuildArgs& a, const Global& g) {
  const auto task = format::parse_task(a.task);
  auto pairs = read_records<EditPair>(a.in);
  auto store = open_store(a.docs);
  corpus::Resolver resolver = store ? store->resolver() : corpus::Resolver([](const std::string&) {
    return std::optional<SourceDocument>();
  });
  const auto lc = a.corpus.empty() ? corpus::LocalCorpus() : corpus::LocalCorpus::load_jsonl(a.corpus);
  const corpus::Bm25Ranker ranker;
  auto opts = a.no_augment ? format::FormatOptions::deterministic() : format::FormatOptions();
  opts.k = a.k;
  const auto base = derive_seed(g.seed, "build-dataset");

  std::vector<std::vector<format::LinearizedExample>> results(pairs.size());
  std::vector<std::optional<std::string>> failures(pairs.size());
  parallel_for(pairs.size(), g.threads, [&](std::size_t i) {
    try {
      const auto& p = pairs[i];
      auto docs = corpus::assemble_document_set(p, resolver, ranker, lc, a.k);
      Rng rng(derive_seed(base, static_cast<std::uint64_t>(i)));
      if (task == format::Task::kDocument) {
        for (std::size_t d = 0; d < docs.size(); ++d) {
          if (docs.provenance[d] != Provenance::kCited) continue;
          results[i].push_back(format::build_example(task, p, docs, p.comment, opts, rng, std::nullopt, d));
        }
      } else {
        results[i].push_back(format::build_example(task, p, docs, p.comment, opts, rng));
      }
    } catch (const Error& e) {
      results[i].clear();
      failures[i] = e.code();
    }
  });

  Output out(a.out);
  std::size_t n = 0;
  Tally skipped;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (failures[i]) skipped.add(*failures[i]);
    for (const auto& ex : results[i]) {
      out.line(ex);
      ++n;
    }
  }
  out.close();
  report({{"pairs", pairs.size()}, {"examples", n}, {"skipped", skipped.to_json()}});
  return 0;
}

json mined_json(const corpus::MinedExample& m) {
  return {{"kind", m.kind == corpus::MinedKind::kCite ? "cite" : "quote"}, {"pair", m.pair}, {"docs", m.docs}};
}

struct MineArgs {
  std::string in = "-", docs, corpus, out_dir;
  std::size_t distractors = 2;
};

int cmd_mine(const MineArgs& a, const Global& g) {
  auto pairs = read_records<EditPair>(a.in);
  corpus::DocStore store(a.docs);
  const auto lc = a.corpus.empty() ? corpus::LocalCorpus() : corpus::LocalCorpus::load_jsonl(a.corpus);
  Rng rng(derive_seed(g.seed, "mine-cite-quote"));
  auto sets = corpus::mine_cite_quote_pairs(pairs, store.resolver(), corpus::Bm25Ranker(), lc, rng, a.distractors);
  fs::create_directories(a.out_dir);
  for (auto [name, list] : {std::pair{"cite.jsonl", &sets.cite}, std::pair{"quote.jsonl", &sets.quote}}) {
    Output out((fs::path(a.out_dir) / name).string());
    for (const auto& m : *list) out.line(mined_json(m));
    out.close();
  }
  report({{"pairs", pairs.size()}, {"cite", sets.cite.size()}, {"quote", sets.quote.size()}, {"dropped", sets.dropped}});
  return 0;
}

struct UndoArgs {
  std::string in = "-", out = "-", docs, backend;
  std::optional<std::size_t> cap;
  std::size_t stall_budget = 3;
  bool one_shot = false;
};

int cmd_synth_undo(const UndoArgs& a, const Global& g) {
  auto items = read_jsonl(a.in);
  auto undo = open_backend(a.backend, g);
  auto store = open_store(a.docs);
  synth::DecomposeOptions dopts;
  dopts.cap = a.cap;
  dopts.stall_budget = a.stall_budget;
  dopts.one_shot = a.one_shot;
  const auto base = derive_seed(g.seed, "synth-undo");

  std::vector<std::vector<EditPair>> results(items.size());
  std::vector<std::optional<std::string>> failures(items.size());
  std::vector<bool> truncated(items.size());
  parallel_for(items.size(), g.threads, [&](std::size_t i) {
    try {
      const auto& j = items[i];
      if (!j.is_object() || !j.contains("text") || !j["text"].is_string()) {
        throw InvalidArgument("record needs a string 'text'");
      }
      EditPair holder;
      holder.doc_ids = j.value("doc_ids", std::vector<std::string>{});
      auto docs = docs_for(holder, store, true);
      const std::string title = j.value("title", "");
      const auto text = format::resolve_citation_refs(j["text"].get<std::string>(), docs);
      auto d = synth::decompose(text, title.empty() ? std::nullopt : std::optional(title), docs, *undo,
                                synth::WordsSampler{}, derive_seed(base, static_cast<std::uint64_t>(i)), dopts);
      truncated[i] = d.truncated;
      auto pairs = synth::forward_pairs(d, title);
      for (auto& p : pairs) {
        p.source = format::to_citation_refs(p.source, docs);
        p.target = format::to_citation_refs(p.target, docs);
        if (j.contains("id")) p.meta["text_id"] = j["id"];
      }
      results[i] = std::move(pairs);
    } catch (const Error& e) {
      failures[i] = e.code();
    }
  });

  Output out(a.out);
  std::size_t n = 0;
  Tally skipped;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (failures[i]) skipped.add(*failures[i]);
    for (const auto& p : results[i]) {
      out.line(p);
      ++n;
    }
  }
  out.close();
  report({{"texts", items.size()}, {"pairs", n},
          {"truncated", std::count(truncated.begin(), truncated.end(), true)}, {"skipped", skipped.to_json()}});
  return 0;
}

struct PlansArgs {
  std::string in = "-", out = "-", docs, explain_backend, edit_backend, likelihood = "sum";
  synth::PlanControlPolicy policy;
};

synth::SynthOptions synth_options(const std::string& likelihood) {
  synth::SynthOptions o;
  if (likelihood == "mean") {
    o.likelihood = synth::Likelihood::kMean;
  } else if (likelihood != "sum") {
    throw InvalidArgument("likelihood must be sum or mean");
  }
  return o;
}

int cmd_synth_plans(const PlansArgs& a, const Global& g) {
  auto pairs = read_records<EditPair>(a.in);
  auto explain = open_backend(a.explain_backend, g);
  auto edit = open_backend(a.edit_backend, g);
  auto store = open_store(a.docs);
  synth::DocResolver resolver = [&](const EditPair& p) { return docs_for(p, store, true); };
  auto out_pairs = synth::rewrite_plans(std::move(pairs), *explain, *edit, a.policy,
                                        derive_seed(g.seed, "synth-plans"), resolver, synth_options(a.likelihood),
                                        g.threads);
  Output out(a.out);
  Tally t;
  for (const auto& p : out_pairs) {
    out.line(p);
    t.add(p.meta.contains("plan_rewrite_error") ? p.meta["plan_rewrite_error"]["code"].get<std::string>()
                                                : "rewritten");
  }
  out.close();
  report({{"pairs", out_pairs.size()}, {"outcomes", t.to_json()}});
  return 0;
}

struct DocsArgs {
  std::string in = "-", out = "-", docs, docs_out, quote_field = "/meta/quote", doc_backend, edit_backend,
              likelihood = "sum";
  std::size_t k = 10;
};

int cmd_synth_docs(const DocsArgs& a, const Global& g) {
  auto pairs = read_records<EditPair>(a.in);
  auto doc_backend = open_backend(a.doc_backend, g);
  auto edit = open_backend(a.edit_backend, g);
  auto store = open_store(a.docs);
  std::optional<corpus::DocStore> sink;
  if (!a.docs_out.empty()) {
    fs::create_directories(a.docs_out);
    sink.emplace(a.docs_out);
  }
  const json::json_pointer ptr(json_pointer(a.quote_field));
  const auto opts = synth_options(a.likelihood);
  const auto base = derive_seed(g.seed, "synth-docs");

  std::vector<std::optional<std::string>> failures(pairs.size());
  std::vector<bool> skipped(pairs.size());
  parallel_for(pairs.size(), g.threads, [&](std::size_t i) {
    auto& p = pairs[i];
    try {
      const json whole = p;
      if (!whole.contains(ptr) || !whole.at(ptr).is_string()) {
        skipped[i] = true;
        return;
      }
      const auto quote = whole.at(ptr).get<std::string>();
      synth::EditContext e;
      if (!p.title.empty()) e.title = p.title;
      e.docs = docs_for(p, store, true);
      e.source = format::resolve_citation_refs(p.source, e.docs);
      e.target = format::resolve_citation_refs(p.target, e.docs);
      std::size_t slot = e.docs.size();
      for (const auto& m : format::decode_citation_markers(e.target).markers) {
        if (m.quote == quote && m.doc_index < e.docs.size()) slot = m.doc_index;
      }
      auto r = synth::generate_documents(e, p.comment, quote, slot, *doc_backend, *edit, a.k,
                                         derive_seed(base, static_cast<std::uint64_t>(i)), opts);
      DocumentSet with = e.docs;
      if (slot == with.size()) {
        with.add(r.doc, Provenance::kCited);
      } else {
        with.docs[slot] = r.doc;
      }
      p.source = format::to_citation_refs(e.source, with);
      p.target = format::to_citation_refs(e.target, with);
      p.doc_ids.clear();
      for (const auto& d : with.docs) p.doc_ids.push_back(d.id);
      p.meta["synthetic_doc"] = {{"id", r.doc.id}, {"index", slot}, {"samples", r.samples},
                                 {"survivors", r.survivors}, {"scored", r.scored}};
      if (sink) sink->put(r.doc);
    } catch (const Error& e) {
      failures[i] = e.code();
      p.meta["synthetic_doc_error"] = {{"code", e.code()}, {"message", e.what()}};
    }
  });

  Output out(a.out);
  Tally t;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    out.line(pairs[i]);
    t.add(skipped[i] ? "no_quote" : failures[i] ? *failures[i] : "generated");
  }
  out.close();
  report({{"pairs", pairs.size()}, {"outcomes", t.to_json()}});
  return 0;
}

struct EvalArgs {
  std::string task, gold, pred = "copy", metrics, out = "-";
  std::size_t gleu_iterations = 500;
  bool per_example = false, table = false, keep_case = false;
};

int cmd_eval(const EvalArgs& a, const Global& g) {
  auto gold = metrics::load_task(a.task, a.gold);
  if (gold.empty()) throw EmptyDataset("no evaluation items in '" + a.gold + "'");
  auto preds = a.pred == "copy" ? metrics::copy_predictions(gold) : metrics::load_pred_jsonl(a.pred);
  auto wanted = a.metrics.empty() ? metrics::default_metrics(a.task) : metrics::parse_metric_set(a.metrics);
  metrics::GleuOptions go;
  go.iterations = a.gleu_iterations;
  go.seed = derive_seed(g.seed, "eval");
  go.lowercase = !a.keep_case;
  auto rep = metrics::evaluate_dataset(gold, preds, wanted, go);
  json j = rep.to_json();
  if (!a.per_example) j.erase("per_example");
  j["task"] = a.task;
  j["pred"] = a.pred;
  Output out(a.out);
  out.os() << (a.table ? rep.table() : j.dump(2)) << '\n';
  out.close();
  return 0;
}

struct DiffArgs {
  std::string source, target, source_file, target_file;
};

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(f), {}};
}

int cmd_diff(const DiffArgs& a) {
  const auto s = a.source_file.empty() ? a.source : slurp(a.source_file);
  const auto t = a.target_file.empty() ? a.target : slurp(a.target_file);
  std::cout << diff::to_json(diff::word_diff(s, t)).dump() << '\n';
  return 0;
}

struct ServeArgs {
  std::string host = "127.0.0.1", data_dir = "peer-sessions", cors = "*", static_dir, backend;
  int port = 8080;
  std::size_t in_flight = 4;
};

int cmd_serve(const ServeArgs& a, const Global& g) {
  // Signals are taken synchronously by this thread; workers inherit the mask.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  service::ServiceOptions so;
  so.data_dir = a.data_dir;
  so.backend_in_flight = a.in_flight;
  so.cors_origin = a.cors;
  if (!a.static_dir.empty()) so.static_dir = a.static_dir;
  so.defaults.seed = g.seed;
  fs::create_directories(so.data_dir);
  service::SessionStore store(open_backend(a.backend, g), so);
  const auto recovered = store.recover();
  service::HttpService http(store);
  const int port = http.bind(a.host, a.port);
  std::printf("listening on %s:%d\n", a.host.c_str(), port);
  std::fflush(stdout);
  report({{"recovered_sessions", recovered}, {"data_dir", a.data_dir}});

  std::thread server([&] { http.listen(); });
  int sig = 0;
  sigwait(&set, &sig);
  http.stop();
  server.join();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"peer-forge: edit-history data pipeline, synthesis, evaluation and session service"};
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "TOML config file (see --dump-config)");
  bool dump_config = false;
  app.add_flag("--dump-config", dump_config, "Print the effective configuration and exit")->configurable(false);

  Global g;
  app.add_option("--seed", g.seed, "Global seed; every module derives its own stream")->envname("PEER_SEED");
  app.add_option("--backend", g.backend, "mock:<script.json>, mock:echo or an http(s) URL")->envname("PEER_BACKEND_URL");
  app.add_option("--threads", g.threads, "Worker threads")->envname("PEER_THREADS")->check(CLI::PositiveNumber);
  app.add_option("--timeout-ms", g.timeout_ms, "Remote backend timeout")->check(CLI::PositiveNumber);

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Revision stream -> editpair-jsonl");
  c_ingest->add_option("--in", ingest.in, "Input file ('-' = stdin)");
  c_ingest->add_option("--format", ingest.format)->check(CLI::IsMember({"xml-dump", "revision-jsonl"}));
  c_ingest->add_option("--out", ingest.out, "Output directory")->required();

  FilterArgs filter;
  auto* c_filter = app.add_subcommand("filter", "Apply edit-pair filters and comment downsampling");
  c_filter->add_option("--in", filter.in);
  c_filter->add_option("--out", filter.out);
  c_filter->add_option("--eval-pages", filter.eval_pages, "Page ids or titles to exclude, one per line");
  c_filter->add_option("--docs", filter.docs, "Document store; unresolvable citations are rejected");
  c_filter->add_option("--verdicts", filter.verdicts, "Write one verdict per input pair");
  c_filter->add_option("--max-avg-comment", filter.max_avg, "Downsample comments seen more often (0 = off)");
  c_filter->add_option("--max-paragraphs", filter.max_paragraphs);
  c_filter->add_option("--max-paragraph-units", filter.max_units);

  BuildArgs build;
  auto* c_build = app.add_subcommand("build-dataset", "editpair-jsonl -> example-jsonl");
  c_build->add_option("--task", build.task)->check(CLI::IsMember({"edit", "undo", "explain", "document"}));
  c_build->add_option("--in", build.in);
  c_build->add_option("--out", build.out);
  c_build->add_option("--docs", build.docs, "Document store directory");
  c_build->add_option("--corpus", build.corpus, "Retrieval corpus (SourceDocument jsonl)");
  c_build->add_option("--k", build.k, "Documents per example");
  c_build->add_flag("--no-augment", build.no_augment, "Disable title/document dropping and minimization");

  MineArgs mine;
  auto* c_mine = app.add_subcommand("mine-cite-quote", "Mine citation and quote insertion examples");
  c_mine->add_option("--in", mine.in);
  c_mine->add_option("--docs", mine.docs)->required();
  c_mine->add_option("--corpus", mine.corpus);
  c_mine->add_option("--distractors", mine.distractors);
  c_mine->add_option("--out-dir", mine.out_dir)->required();

  UndoArgs undo;
  auto* c_undo = app.add_subcommand("synth-undo", "Decompose plain texts into synthetic edit chains");
  c_undo->add_option("--in", undo.in, "jsonl of {id?, title?, text, doc_ids?}");
  c_undo->add_option("--out", undo.out);
  c_undo->add_option("--docs", undo.docs);
  c_undo->add_option("--undo-backend", undo.backend, "Defaults to --backend");
  c_undo->add_option("--cap", undo.cap, "Undo calls per text");
  c_undo->add_option("--stall-budget", undo.stall_budget);
  c_undo->add_flag("--one-shot", undo.one_shot);

  PlansArgs plans;
  auto* c_plans = app.add_subcommand("synth-plans", "Replace comments with generated, likelihood-selected plans");
  c_plans->add_option("--in", plans.in);
  c_plans->add_option("--out", plans.out);
  c_plans->add_option("--docs", plans.docs);
  c_plans->add_option("--explain-backend", plans.explain_backend, "Defaults to --backend");
  c_plans->add_option("--edit-backend", plans.edit_backend, "Defaults to --backend");
  c_plans->add_option("--k", plans.policy.k, "Plan samples per edit");
  c_plans->add_option("--p-instruction", plans.policy.p_instruction);
  c_plans->add_option("--p-no-overlap", plans.policy.p_no_overlap);
  c_plans->add_option("--likelihood", plans.likelihood)->check(CLI::IsMember({"sum", "mean"}));

  DocsArgs docs;
  auto* c_docs = app.add_subcommand("synth-docs", "Generate documents backing quoted citations");
  c_docs->add_option("--in", docs.in);
  c_docs->add_option("--out", docs.out);
  c_docs->add_option("--docs", docs.docs);
  c_docs->add_option("--docs-out", docs.docs_out, "Store generated documents here");
  c_docs->add_option("--quote-field", docs.quote_field, "JSON pointer or dotted path to the quote");
  c_docs->add_option("--doc-backend", docs.doc_backend, "Defaults to --backend");
  c_docs->add_option("--edit-backend", docs.edit_backend, "Defaults to --backend");
  c_docs->add_option("--k", docs.k, "Document samples per edit");
  c_docs->add_option("--likelihood", docs.likelihood)->check(CLI::IsMember({"sum", "mean"}));

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Score predictions against a dataset");
  c_eval->add_option("--task", ev.task)
      ->required()
      ->check(CLI::IsMember({"jfleg", "asset", "iterater", "wnc", "fruit", "wafer-ins", "natural-edits", "gold"}));
  c_eval->add_option("--gold", ev.gold, "Dataset release file or directory")->required();
  c_eval->add_option("--pred", ev.pred, "Prediction jsonl, or 'copy'");
  c_eval->add_option("--metrics", ev.metrics, "Comma-separated; default depends on task");
  c_eval->add_option("--out", ev.out);
  c_eval->add_option("--gleu-iterations", ev.gleu_iterations);
  c_eval->add_flag("--per-example", ev.per_example);
  c_eval->add_flag("--table", ev.table, "Plain-text table instead of JSON");
  c_eval->add_flag("--keep-case", ev.keep_case, "Case-sensitive GLEU tokens");

  DiffArgs df;
  auto* c_diff = app.add_subcommand("diff", "Word diff as DiffSet JSON");
  c_diff->add_option("--source", df.source);
  c_diff->add_option("--target", df.target);
  c_diff->add_option("--source-file", df.source_file)->excludes("--source");
  c_diff->add_option("--target-file", df.target_file)->excludes("--target");

  ServeArgs sv;
  auto* c_serve = app.add_subcommand("serve", "Session service over HTTP");
  c_serve->add_option("--host", sv.host);
  c_serve->add_option("--port", sv.port, "0 = ephemeral")->check(CLI::Range(0, 65535));
  c_serve->add_option("--data-dir", sv.data_dir)->envname("PEER_DATA_DIR");
  c_serve->add_option("--cors-origin", sv.cors);
  c_serve->add_option("--static-dir", sv.static_dir, "Web UI bundle served at /ui");
  c_serve->add_option("--in-flight", sv.in_flight, "Concurrent backend calls")->check(CLI::PositiveNumber);
  c_serve->add_option("--session-backend", sv.backend, "Defaults to --backend");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }
  if (dump_config) {
    // unset strings stay out so required options are not pinned to ""
    std::istringstream all(app.config_to_str(true, false));
    for (std::string line; std::getline(all, line);) {
      if (!line.ends_with("=\"\"")) std::cout << line << '\n';
    }
    return 0;
  }

  try {
    if (c_ingest->parsed()) return cmd_ingest(ingest);
    if (c_filter->parsed()) return cmd_filter(filter, g);
    if (c_build->parsed()) return cmd_build(build, g);
    if (c_mine->parsed()) return cmd_mine(mine, g);
    if (c_undo->parsed()) return cmd_synth_undo(undo, g);
    if (c_plans->parsed()) return cmd_synth_plans(plans, g);
    if (c_docs->parsed()) return cmd_synth_docs(docs, g);
    if (c_eval->parsed()) return cmd_eval(ev, g);
    if (c_diff->parsed()) return cmd_diff(df);
    if (c_serve->parsed()) return cmd_serve(sv, g);
  } catch (const Error& e) {
    std::cerr << json{{"error", {{"code", e.code()}, {"message", e.what()}}}}.dump() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", {{"code", "Internal"}, {"message", e.what()}}}}.dump() << '\n';
    return 1;
  }
  return 2;
}
