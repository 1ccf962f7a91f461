#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "grapener/corpus.hpp"
#include "grapener/decode.hpp"
#include "grapener/demos.hpp"
#include "grapener/eval.hpp"
#include "grapener/fewshot.hpp"
#include "grapener/runner.hpp"
#include "grapener/spanconv.hpp"

namespace py = pybind11;
using namespace grapener;

namespace {

LabeledSentence sentence_from_dict(const py::dict& d) {
  LabeledSentence s;
  s.sentence.id = py::cast<std::string>(d["id"]);
  s.sentence.tokens = py::cast<std::vector<std::string>>(d["tokens"]);
  auto tags = py::cast<std::vector<std::string>>(d["tags"]);
  if (tags.size() != s.sentence.tokens.size())
    throw Error("tokens and tags differ in length for sentence " + s.sentence.id);
  for (const auto& t : tags) s.tags.push_back(IobTag::parse(t));
  return s;
}

py::dict sentence_to_dict(const LabeledSentence& s) {
  std::vector<std::string> tags;
  tags.reserve(s.tags.size());
  for (const auto& t : s.tags) tags.push_back(t.str());
  py::dict d;
  d["id"] = s.id();
  d["tokens"] = s.sentence.tokens;
  d["tags"] = tags;
  return d;
}

std::vector<LabeledSentence> sentences_from_list(const py::list& sentences) {
  std::vector<LabeledSentence> out;
  out.reserve(sentences.size());
  for (const auto& item : sentences)
    out.push_back(sentence_from_dict(py::cast<py::dict>(item)));
  return out;
}

py::object demo_to_py(const Demonstration& d) {
  if (!d.present()) return py::none();
  py::dict out;
  out["kind"] = demo_kind_name(d.kind);
  out["score"] = d.score;
  out["entity_type"] = d.entity_type;
  out["sentence"] = sentence_to_dict(d.sentence);
  return out;
}

py::dict instance_to_py(const MrcInstance& inst) {
  std::vector<std::string> roles;
  roles.reserve(inst.roles.size());
  for (PositionRole r : inst.roles) roles.push_back(role_name(r));
  py::dict d;
  d["id"] = inst.source_id;
  d["entity_type"] = inst.entity_type;
  d["tokens"] = inst.tokens;
  d["roles"] = roles;
  d["y_start"] = std::vector<int>(inst.y_start.begin(), inst.y_start.end());
  d["y_end"] = std::vector<int>(inst.y_end.begin(), inst.y_end.end());
  d["context_offset"] = inst.context_offset;
  d["context_len"] = inst.context_len;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "few-shot NER with in-context demonstrations (native core)";

  py::register_exception<Error>(m, "GrapenerError");

  m.def(
      "parse_conll",
      [](const std::string& text, const std::vector<std::string>& entity_types,
         const std::string& id_prefix) {
        std::set<std::string> types(entity_types.begin(), entity_types.end());
        ParseResult res = parse_conll_string(text, types, id_prefix);
        py::list sentences;
        for (const auto& s : res.sentences) sentences.append(sentence_to_dict(s));
        py::list repairs;
        for (const auto& r : res.repairs) {
          py::dict d;
          d["line"] = r.line;
          d["sentence_id"] = r.sentence_id;
          d["token_index"] = r.token_index;
          d["from"] = r.from;
          d["to"] = r.to;
          repairs.append(d);
        }
        return py::make_tuple(sentences, repairs);
      },
      py::arg("text"), py::arg("entity_types"), py::arg("id_prefix") = "s",
      "Parse IOB2 CoNLL text; returns (sentences, repairs).");

  m.def(
      "to_conll",
      [](const py::list& sentences) { return to_conll(sentences_from_list(sentences)); },
      py::arg("sentences"));

  m.def(
      "iob2_to_spans",
      [](const py::dict& sentence) {
        py::list out;
        for (const auto& s : iob2_to_spans(sentence_from_dict(sentence)))
          out.append(py::make_tuple(s.start, s.end, s.entity_type));
        return out;
      },
      py::arg("sentence"), "Half-open (start, end, type) spans of one sentence.");

  m.def(
      "spans_to_iob2",
      [](const std::vector<std::tuple<size_t, size_t, std::string>>& spans, size_t length) {
        std::vector<EntitySpan> es;
        for (const auto& [s, e, t] : spans) es.push_back(EntitySpan{s, e, t});
        std::vector<std::string> tags;
        for (const auto& t : spans_to_iob2(es, length)) tags.push_back(t.str());
        return tags;
      },
      py::arg("spans"), py::arg("length"));

  m.def(
      "density_score",
      [](const py::dict& sentence, const std::string& entity_type, double u, double v) {
        DensityConfig cfg;
        cfg.u = u;
        cfg.v = v;
        return density_score(sentence_from_dict(sentence), entity_type, cfg);
      },
      py::arg("sentence"), py::arg("entity_type"), py::arg("u") = 3.0, py::arg("v") = 1.0);

  m.def(
      "select_grape",
      [](const py::list& sentences, const std::string& entity_type, double u, double v,
         size_t max_len) {
        DensityConfig cfg;
        cfg.u = u;
        cfg.v = v;
        cfg.max_len = max_len;
        return demo_to_py(select_grape(sentences_from_list(sentences), entity_type, cfg));
      },
      py::arg("sentences"), py::arg("entity_type"), py::arg("u") = 3.0,
      py::arg("v") = 1.0, py::arg("max_len") = 100);

  m.def(
      "select_popular",
      [](const py::list& sentences, const std::string& entity_type, size_t max_len) {
        return demo_to_py(select_popular(sentences_from_list(sentences), entity_type, max_len));
      },
      py::arg("sentences"), py::arg("entity_type"), py::arg("max_len") = 100);

  m.def(
      "draw_sample",
      [](const py::list& pool, const std::string& corpus_name, uint64_t seed,
         size_t k_train, size_t k_dev) {
        SamplePlan plan;
        plan.seed = seed;
        plan.k_train = k_train;
        plan.k_dev = k_dev;
        Sample s = draw_sample(sentences_from_list(pool), corpus_name, plan);
        py::list train, dev;
        for (const auto& x : s.train) train.append(sentence_to_dict(x));
        for (const auto& x : s.dev) dev.append(sentence_to_dict(x));
        return py::make_tuple(train, dev);
      },
      py::arg("pool"), py::arg("corpus_name"), py::arg("seed"), py::arg("k_train") = 25,
      py::arg("k_dev") = 100, "Seeded disjoint train/dev draw from the pool.");

  m.def(
      "assemble_instance",
      [](const py::dict& sentence, const std::string& entity_type, const py::object& demo,
         bool supervise_demo, size_t max_seq_len) {
        LabeledSentence sent = sentence_from_dict(sentence);
        if (demo.is_none())
          return instance_to_py(
              assemble_instance(sent, nullptr, entity_type, supervise_demo, max_seq_len));
        Demonstration d;
        d.kind = DemoKind::Grape;  // any present kind; assembly only reads the sentence
        d.sentence = sentence_from_dict(py::cast<py::dict>(demo));
        d.entity_type = entity_type;
        return instance_to_py(
            assemble_instance(sent, &d, entity_type, supervise_demo, max_seq_len));
      },
      py::arg("sentence"), py::arg("entity_type"), py::arg("demo") = py::none(),
      py::arg("supervise_demo") = true, py::arg("max_seq_len") = 512);

  m.def(
      "nearest_match",
      [](const std::vector<size_t>& starts, const std::vector<size_t>& ends,
         bool end_driven) {
        IndexSets idx;
        idx.starts = starts;
        idx.ends = ends;
        py::list out;
        for (auto [s, e] : nearest_match(idx, end_driven)) out.append(py::make_tuple(s, e));
        return out;
      },
      py::arg("starts"), py::arg("ends"), py::arg("end_driven") = false,
      "Pair start/end indexes into half-open, non-overlapping spans.");

  m.def(
      "score_spans",
      [](const py::dict& gold, const py::dict& pred) {
        // gold/pred: sentence id -> list of (start, end, type).
        GoldSpans g;
        for (const auto& [id_obj, spans_obj] : gold) {
          auto id = py::cast<std::string>(id_obj);
          g[id];
          for (const auto& item :
               py::cast<std::vector<std::tuple<size_t, size_t, std::string>>>(spans_obj)) {
            const auto& [s, e, t] = item;
            g[id][t].push_back(EntitySpan{s, e, t});
          }
        }
        std::map<std::string, std::map<std::string, Prediction>> by_key;
        for (const auto& [id_obj, spans_obj] : pred) {
          auto id = py::cast<std::string>(id_obj);
          for (const auto& item :
               py::cast<std::vector<std::tuple<size_t, size_t, std::string>>>(spans_obj)) {
            const auto& [s, e, t] = item;
            Prediction& p = by_key[id][t];
            p.source_id = id;
            p.entity_type = t;
            p.spans.push_back(EntitySpan{s, e, t});
          }
        }
        std::vector<Prediction> preds;
        for (auto& [id, by_type] : by_key)
          for (auto& [t, p] : by_type) preds.push_back(std::move(p));
        EvalReport rep = score(g, preds);
        py::dict out;
        out["tp"] = rep.micro.tp;
        out["fp"] = rep.micro.fp;
        out["fn"] = rep.micro.fn;
        out["precision"] = rep.micro.precision();
        out["recall"] = rep.micro.recall();
        out["f1"] = rep.micro.f1();
        return out;
      },
      py::arg("gold"), py::arg("pred"),
      "Micro-averaged exact-match entity scores from span dicts.");

  m.def(
      "mean_std",
      [](const std::vector<double>& xs) {
        AggregateStats s = mean_std(xs);
        return py::make_tuple(s.mean, s.stdev);
      },
      py::arg("values"), "Mean and population standard deviation.");

  m.def(
      "format_mean_std_pct",
      [](double mean, double stdev) {
        return format_mean_std_pct(AggregateStats{mean, stdev});
      },
      py::arg("mean"), py::arg("stdev"));

  m.def(
      "run_experiment",
      [](const std::string& config_json, const std::string& out_dir) {
        ExperimentConfig cfg = config_from_json_text(config_json, "<python>");
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        std::ostringstream log;
        int code = cmd_run(cfg, log);
        return py::make_tuple(code, log.str());
      },
      py::arg("config_json"), py::arg("out_dir") = "",
      "Full sample/train/predict/score pipeline; returns (exit_code, log).");
}
