#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "peer/backend.hpp"
#include "peer/control.hpp"
#include "peer/corpus.hpp"
#include "peer/diff.hpp"
#include "peer/engine.hpp"
#include "peer/errors.hpp"
#include "peer/format.hpp"
#include "peer/metrics.hpp"
#include "peer/rng.hpp"
#include "peer/synth.hpp"

namespace py = pybind11;
using nlohmann::json;
using namespace peer;

namespace {

// Plain Python values <-> json by way of the json module; payloads are small.
py::object to_py(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }
json from_py(const py::handle& o) {
  return json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

json controls_json(const control::ControlSequence& cs) {
  json j = json::object();
  if (cs.type) j["type"] = control::to_string(*cs.type);
  if (cs.length) j["length"] = control::to_string(*cs.length);
  if (cs.overlap) j["overlap"] = *cs.overlap;
  if (cs.words) j["words"] = *cs.words;
  if (cs.contains) j["contains"] = *cs.contains;
  return j;
}

control::ControlSequence controls_from(const json& j) {
  control::ControlSequence cs;
  if (j.contains("type")) {
    const auto t = j["type"].get<std::string>();
    if (t != "instruction" && t != "other") throw InvalidControl("type must be instruction or other");
    cs.type = t == "instruction" ? control::PlanType::kInstruction : control::PlanType::kOther;
  }
  if (j.contains("length")) cs.length = control::parse_length(j["length"].get<std::string>());
  if (j.contains("overlap")) cs.overlap = j["overlap"].get<bool>();
  if (j.contains("words")) cs.words = j["words"].get<std::int64_t>();
  if (j.contains("contains")) cs.contains = j["contains"].get<std::string>();
  return cs;
}

json markers_json(const std::vector<format::CitationMarker>& ms) {
  json a = json::array();
  for (const auto& m : ms) {
    json o = {{"doc_index", m.doc_index}, {"position", m.position}};
    o["quote"] = m.quote ? json(*m.quote) : json(nullptr);
    a.push_back(o);
  }
  return a;
}

using BackendPtr = std::shared_ptr<backend::Backend>;

class Session {
 public:
  explicit Session(engine::SessionState s) : s_(std::move(s)) {}
  engine::SessionState s_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "PEER collaborative editing toolkit";

  PYBIND11_CONSTINIT static py::gil_safe_call_once_and_store<py::object> exc_store;
  exc_store.call_once_and_store_result([&]() { return py::object(py::exception<Error>(m, "PeerError")); });
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const py::object& cls = exc_store.get_stored();
      py::object inst = cls(py::str(std::string(e.code()) + ": " + e.what()));
      inst.attr("code") = e.code();
      PyErr_SetObject(cls.ptr(), inst.ptr());
    }
  });

  m.def("derive_seed", py::overload_cast<std::uint64_t, std::string_view>(&derive_seed), py::arg("seed"),
        py::arg("stream"));

  // ---- diff ----
  m.def("word_diff", [](const std::string& a, const std::string& b) { return to_py(diff::to_json(diff::word_diff(a, b))); });
  m.def("apply_diff", [](const std::string& src, const py::object& d) {
    return diff::apply(src, diff::diffset_from_json(from_py(d)));
  });
  m.def("em", &diff::em, py::arg("pred"), py::arg("gold"));
  m.def("em_diff", &diff::em_diff, py::arg("source"), py::arg("gold"), py::arg("pred"));

  // ---- markup ----
  m.def("encode_controls", [](const py::object& d) { return control::encode_controls(controls_from(from_py(d))); });
  m.def("decode_controls", [](const std::string& s) { return to_py(controls_json(control::decode_controls(s))); });
  m.def("decode_citation_markers", [](const std::string& s) {
    auto d = format::decode_citation_markers(s);
    return to_py({{"text", d.text}, {"markers", markers_json(d.markers)}, {"malformed", d.malformed}});
  });
  m.def("encode_citation_markers", [](const std::string& clean, const py::object& markers, std::size_t num_docs) {
    std::vector<format::CitationMarker> ms;
    for (const auto& j : from_py(markers)) {
      format::CitationMarker c;
      c.doc_index = j.at("doc_index").get<std::size_t>();
      c.position = j.at("position").get<std::size_t>();
      if (j.contains("quote") && !j["quote"].is_null()) c.quote = j["quote"].get<std::string>();
      ms.push_back(c);
    }
    return format::encode_citation_markers(clean, ms, num_docs);
  });
  m.def("normalize_wikitext", &corpus::normalize_wikitext);
  m.def(
      "build_example",
      [](const std::string& task, const py::object& pair, const py::object& docs, const std::string& plan,
         std::uint64_t seed, bool augment) {
        auto opts = augment ? format::FormatOptions() : format::FormatOptions::deterministic();
        Rng rng(seed);
        auto ex = format::build_example(format::parse_task(task), from_py(pair).get<EditPair>(),
                                        from_py(docs).get<DocumentSet>(), plan, opts, rng);
        return to_py(ex);
      },
      py::arg("task"), py::arg("pair"), py::arg("docs"), py::arg("plan"), py::arg("seed") = 0,
      py::arg("augment") = false);

  // ---- metrics ----
  m.def("sari", [](const std::string& src, const std::vector<std::string>& refs, const std::string& hyp) {
    return metrics::sari(src, refs, hyp);
  });
  m.def(
      "gleu",
      [](const std::vector<std::string>& srcs, const std::vector<std::vector<std::string>>& refs,
         const std::vector<std::string>& hyps, std::size_t iterations, std::uint64_t seed) {
        metrics::GleuOptions o;
        o.iterations = iterations;
        o.seed = seed;
        return metrics::gleu(srcs, refs, hyps, o);
      },
      py::arg("sources"), py::arg("refs"), py::arg("hyps"), py::arg("iterations") = 500, py::arg("seed") = 0);
  m.def("rouge", [](const std::string& hyp, const std::string& ref) {
    auto r = metrics::rouge_all(hyp, ref);
    return std::map<std::string, double>{{"rouge1", r.r1}, {"rouge2", r.r2}, {"rougeL", r.rl}};
  });
  m.def("update_rouge", [](const std::string& src, const std::string& gold, const std::string& hyp) {
    auto r = metrics::update_rouge_all(src, gold, hyp);
    return std::map<std::string, double>{{"rouge1", r.r1}, {"rouge2", r.r2}, {"rougeL", r.rl}};
  });
  m.def("cite_accuracy", [](const std::string& src, const std::string& pred, const std::string& gold) {
    return metrics::cite_accuracy(src, pred, gold).correct;
  });
  m.def(
      "evaluate",
      [](const py::object& gold, const py::object& preds, const std::string& metric_csv) {
        auto g = from_py(gold).get<std::vector<metrics::EvalItem>>();
        std::vector<metrics::Prediction> p;
        for (const auto& j : from_py(preds)) p.push_back({j.at("id").get<std::string>(), j.at("text").get<std::string>()});
        return to_py(metrics::evaluate_dataset(g, p, metrics::parse_metric_set(metric_csv)).to_json());
      },
      py::arg("gold"), py::arg("preds"), py::arg("metrics"));

  // ---- synthesis ----
  m.def(
      "sample_words",
      [](std::size_t n, std::uint64_t seed) {
        synth::WordsSampler ws;
        Rng rng(seed);
        std::vector<std::int64_t> out(n);
        for (auto& v : out) v = ws.sample(rng);
        return out;
      },
      py::arg("n"), py::arg("seed") = 0);

  // ---- backends ----
  py::class_<backend::Backend, BackendPtr>(m, "Backend")
      .def("generate",
           [](const backend::Backend& b, const py::object& req) {
             auto r = from_py(req).get<backend::GenerationRequest>();
             json out;
             {
               py::gil_scoped_release nogil;
               out = b.generate(r);
             }
             return to_py(out);
           })
      .def(
          "score",
          [](const backend::Backend& b, const std::string& input, const std::string& output,
             std::optional<std::string> prefix) { return to_py(b.score({input, output, prefix})); },
          py::arg("input"), py::arg("output"), py::arg("decoder_prefix") = py::none());
  m.def("make_backend", [](const std::string& spec) -> BackendPtr { return std::const_pointer_cast<backend::Backend>(backend::make_backend(spec)); },
        py::arg("spec") = "");
  m.def("mock_backend", [](const py::object& script) -> BackendPtr {
    return std::make_shared<backend::MockBackend>(backend::MockScript::from_json(from_py(script)));
  });

  // ---- sessions ----
  py::class_<Session>(m, "Session")
      .def(py::init([](const std::string& text, const py::object& docs, const std::string& mode,
                       std::optional<std::string> title, const py::object& config) {
             DocumentSet d;
             if (!docs.is_none()) {
               for (const auto& j : from_py(docs)) d.add(j.get<SourceDocument>(), Provenance::kCited);
             }
             engine::SessionConfig cfg;
             if (!config.is_none()) cfg = from_py(config).get<engine::SessionConfig>();
             return Session(engine::new_session(text, std::move(d), engine::parse_mode(mode), title, cfg));
           }),
           py::arg("initial_text") = "", py::arg("docs") = py::none(), py::arg("mode") = "collaborative",
           py::arg("title") = py::none(), py::arg("config") = py::none())
      .def(
          "propose",
          [](Session& s, const BackendPtr& b, std::optional<std::string> plan) {
            engine::step(s.s_, plan, *b);
            return to_py(s.s_.pending);
          },
          py::arg("backend"), py::arg("plan") = py::none())
      .def("choose", [](Session& s, std::size_t i) { engine::choose(s.s_, i); })
      .def("run",
           [](Session& s, const BackendPtr& b, const std::vector<std::optional<std::string>>& schedule) {
             engine::run(s.s_, *b, schedule);
           })
      .def("explain", [](Session& s, const BackendPtr& b) { engine::explain(s.s_, *b); })
      .def_property_readonly("text", [](const Session& s) { return s.s_.text(); })
      .def_property_readonly("iterations", [](const Session& s) { return s.s_.iterations(); })
      .def_property_readonly("halted", [](const Session& s) { return s.s_.halted; })
      .def_property_readonly("halt_reason", [](const Session& s) { return s.s_.halt_reason; })
      .def_property_readonly("pending", [](const Session& s) { return to_py(s.s_.pending); })
      .def("to_dict", [](const Session& s) { return to_py(s.s_); })
      .def_static("from_dict", [](const py::object& o) { return Session(from_py(o).get<engine::SessionState>()); })
      .def("export_jsonl", [](const Session& s) { return engine::export_jsonl(s.s_); })
      .def_static("replay_jsonl", [](const std::string& s) { return Session(engine::replay_jsonl(s)); });

  m.def("autonomous_schedule", &engine::autonomous_schedule);
  m.def("manual_schedule", &engine::manual_schedule);
  m.def("collaborative_schedule", &engine::collaborative_schedule);
}
