#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "mmtod/checkpoint.hpp"
#include "mmtod/cli.hpp"
#include "mmtod/config.hpp"
#include "mmtod/decoder.hpp"
#include "mmtod/error.hpp"
#include "mmtod/metrics.hpp"
#include "mmtod/serializer.hpp"
#include "mmtod/trainer.hpp"

namespace py = pybind11;
using namespace mmtod;

namespace {

// JSON crosses the boundary as Python objects through the json module.
py::object to_python(const nlohmann::ordered_json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

nlohmann::json from_python(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

using PyFrame = std::pair<std::string, std::vector<std::pair<std::string, std::string>>>;

std::vector<BeliefFrame> to_frames(const std::vector<PyFrame>& in) {
  std::vector<BeliefFrame> out;
  for (const auto& [intent, slots] : in) {
    BeliefFrame f{intent, {}};
    for (const auto& [k, v] : slots) f.slots.push_back({k, v});
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<PyFrame> from_frames(const std::vector<BeliefFrame>& in) {
  std::vector<PyFrame> out;
  for (const auto& f : in) {
    PyFrame p{f.intent, {}};
    for (const auto& s : f.slots) p.second.emplace_back(s.key, s.value);
    out.push_back(std::move(p));
  }
  return out;
}

SerializerConfig belief_config(bool split) {
  SerializerConfig c;
  c.split_intent = split;
  return c;
}

py::list corpus_to_python(const Corpus& corpus) {
  py::list out;
  for (const auto& d : corpus) {
    const auto line = dialogue_to_jsonl(d, default_manifest(d.domain));
    out.append(py::module_::import("json").attr("loads")(line));
  }
  return out;
}

const Dialogue& dialogue_at(const Corpus& corpus, const std::string& id) {
  for (const auto& d : corpus)
    if (d.dialogue_id == id) return d;
  throw py::key_error("unknown dialogue id '" + id + "'");
}

}  // namespace

PYBIND11_MODULE(mmtod, m) {
  m.doc() = "Multi-domain task-oriented dialogue model: corpora, serialization, metrics, training and decoding";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);

  m.def("synth_corpus", [](std::uint64_t seed, int n, const std::string& domain, bool action_conditioned) {
        SynthOptions o;
        o.action_conditioned = action_conditioned;
        return corpus_to_python(synth_corpus(seed, n, parse_domain(domain), o));
      },
      py::arg("seed"), py::arg("n"), py::arg("domain"), py::arg("action_conditioned") = false,
      "Deterministic synthetic dialogues as JSON-schema dicts.");
  m.def("write_synth_corpus", [](const std::filesystem::path& path, std::uint64_t seed, int n,
                                 const std::string& domain, bool action_conditioned) {
        SynthOptions o;
        o.action_conditioned = action_conditioned;
        write_corpus(path, synth_corpus(seed, n, parse_domain(domain), o));
      },
      py::arg("path"), py::arg("seed"), py::arg("n"), py::arg("domain"), py::arg("action_conditioned") = false);
  m.def("load_corpus", [](const std::filesystem::path& path) { return corpus_to_python(load_corpus_any(path)); },
        py::arg("path"), "Load and validate a JSONL corpus; raises DataError with line and field.");

  m.def("split_intent", &split_intent, py::arg("intent"));
  m.def("format_belief", [](const std::vector<PyFrame>& frames, bool split) {
        return format_belief(to_frames(frames), belief_config(split));
      },
      py::arg("frames"), py::arg("split_intent") = true);
  m.def("parse_belief", [](const std::string& text, bool split, const std::vector<std::string>& known) {
        return from_frames(parse_belief(text, belief_config(split), known));
      },
      py::arg("text"), py::arg("split_intent") = true, py::arg("known_intents") = std::vector<std::string>{});
  m.def("render_example", [](const std::filesystem::path& corpus, const std::string& dialogue_id, std::size_t turn,
                             const py::dict& serializer) {
        const Corpus c = load_corpus_any(corpus);
        const auto cfg = serializer_config_from_json(from_python(serializer));
        return render_text(dialogue_at(c, dialogue_id), turn, cfg);
      },
      py::arg("corpus"), py::arg("dialogue_id"), py::arg("turn"), py::arg("serializer") = py::dict(),
      "Flattened training text of one turn.");

  m.def("bleu4", [](const std::vector<std::string>& h, const std::vector<std::string>& r) { return bleu4(h, r); },
        py::arg("hypotheses"), py::arg("references"));
  m.def("sentence_bleu4", &sentence_bleu4, py::arg("hypothesis"), py::arg("reference"));
  m.def("retrieval_metrics", [](const std::vector<int>& ranks, int num_candidates) {
        const auto s = retrieval_metrics(ranks, num_candidates);
        py::dict d;
        d["recall@1"] = s.recall_at_1;
        d["recall@5"] = s.recall_at_5;
        d["recall@10"] = s.recall_at_10;
        d["mean_rank"] = s.mean_rank;
        d["mrr"] = s.mrr;
        return d;
      },
      py::arg("ranks"), py::arg("num_candidates") = 100);
  m.def("rank_candidates", [](const std::string& generated, const std::vector<std::string>& candidates) {
        return rank_candidates(generated, candidates);
      },
      py::arg("generated"), py::arg("candidates"));

  m.def("train", [](const py::dict& config, std::optional<std::filesystem::path> furniture,
                    std::optional<std::filesystem::path> fashion, const std::filesystem::path& out_dir) {
        const RunConfig cfg = run_config_from_json(from_python(config));
        const Corpus f = furniture ? load_corpus(*furniture, Domain::Furniture) : Corpus{};
        const Corpus s = fashion ? load_corpus(*fashion, Domain::Fashion) : Corpus{};
        TrainOptions o;
        o.out_dir = out_dir;
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(f, s, cfg.serializer, cfg.model, cfg.train, o);
        }
        py::list log;
        for (const auto& e : r.log) log.append(to_python(e.to_json()));
        return py::make_tuple(r.last_checkpoint, log);
      },
      py::arg("config"), py::arg("furniture") = py::none(), py::arg("fashion") = py::none(), py::arg("out_dir"),
      "Train from a {serializer, model, train} config; returns (last checkpoint path, epoch log).");

  py::class_<TrainedModel>(m, "Model")
      .def_static("load", &load_checkpoint, py::arg("path"))
      .def_property_readonly("vocab_size", [](const TrainedModel& t) { return t.vocab.size(); })
      .def_property_readonly("parameter_count", [](const TrainedModel& t) { return t.params.parameter_count(); })
      .def_property_readonly("domains", [](const TrainedModel& t) {
        std::vector<std::string> out;
        for (Domain d : t.domains) out.emplace_back(domain_name(d));
        return out;
      })
      .def_property_readonly("config", [](const TrainedModel& t) {
        nlohmann::ordered_json j;
        j["serializer"] = to_json(t.serializer);
        j["model"] = to_json(t.model);
        return to_python(j);
      })
      .def("generate", [](const TrainedModel& t, const std::filesystem::path& corpus, const std::string& dialogue_id,
                          std::size_t turn, bool gt_action, std::size_t max_new_tokens) {
             const Corpus c = load_corpus_any(corpus);
             DecodeOptions o;
             o.gt_action = gt_action;
             o.max_new_tokens = max_new_tokens;
             return to_python(prediction_to_json(decode_turn(t, dialogue_at(c, dialogue_id), turn, o)));
           },
           py::arg("corpus"), py::arg("dialogue_id"), py::arg("turn"), py::arg("gt_action") = true,
           py::arg("max_new_tokens") = 128)
      .def("evaluate", [](const TrainedModel& t, const std::filesystem::path& corpus, bool gt_action) {
             const Corpus c = load_corpus_any(corpus);
             DecodeOptions o;
             o.gt_action = gt_action;
             const auto pools = make_candidate_pools(c);
             Evaluation ev;
             {
               py::gil_scoped_release release;
               ev = evaluate(t, c, pools, o);
             }
             return to_python(ev.report.to_json());
           },
           py::arg("corpus"), py::arg("gt_action") = true, "Full metrics report over every turn.");

  m.def("run_cli", [](const std::vector<std::string>& args) {
        std::vector<std::string> full = {"mmtod"};
        full.insert(full.end(), args.begin(), args.end());
        std::vector<const char*> argv;
        for (const auto& a : full) argv.push_back(a.c_str());
        std::ostringstream out, err;
        const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run the command-line tool in-process; returns (exit code, stdout, stderr).");

  m.attr("__version__") = "0.1.0";
}
