#include "grapener/runner.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include "grapener/eval.hpp"
#include "grapener/fewshot.hpp"
#include "grapener/hash.hpp"
#include "grapener/spanconv.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace grapener {

namespace {

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(text.data(), std::streamsize(text.size()));
  if (!out) throw Error("short write: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// --- config parsing ------------------------------------------------------

[[noreturn]] void bad(const std::string& path, const std::string& what) {
  throw ConfigError("config error at " + (path.empty() ? "/" : path) + ": " + what);
}

void check_keys(const json& j, const std::string& path,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) bad(path, "expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok) bad(path + "/" + it.key(), "unknown key");
  }
}

std::string get_string(const json& j, const std::string& path) {
  if (!j.is_string()) bad(path, "expected a string");
  return j.get<std::string>();
}

double get_number(const json& j, const std::string& path) {
  if (!j.is_number()) bad(path, "expected a number");
  return j.get<double>();
}

size_t get_size(const json& j, const std::string& path) {
  if (!j.is_number_integer() || j.get<int64_t>() < 0)
    bad(path, "expected a non-negative integer");
  return j.get<size_t>();
}

bool get_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) bad(path, "expected a boolean");
  return j.get<bool>();
}

void parse_model_block(const json& j, const std::string& path, ExperimentConfig& cfg) {
  check_keys(j, path,
             {"d_model", "n_layers", "n_heads", "d_ff", "max_seq_len", "dropout",
              "learning_rate", "batch_size", "epochs", "head_init_range",
              "embed_init_std", "batch_sizes"});
  ModelConfig& m = cfg.model;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string p = path + "/" + it.key();
    const json& v = it.value();
    if (it.key() == "d_model") m.d_model = get_size(v, p);
    else if (it.key() == "n_layers") m.n_layers = get_size(v, p);
    else if (it.key() == "n_heads") m.n_heads = get_size(v, p);
    else if (it.key() == "d_ff") m.d_ff = get_size(v, p);
    else if (it.key() == "max_seq_len") m.max_seq_len = get_size(v, p);
    else if (it.key() == "dropout") m.dropout = get_number(v, p);
    else if (it.key() == "learning_rate") m.learning_rate = get_number(v, p);
    else if (it.key() == "batch_size") m.batch_size = get_size(v, p);
    else if (it.key() == "epochs") m.epochs = get_size(v, p);
    else if (it.key() == "head_init_range") m.head_init_range = get_number(v, p);
    else if (it.key() == "embed_init_std") m.embed_init_std = get_number(v, p);
    else if (it.key() == "batch_sizes") {
      if (!v.is_array() || v.empty()) bad(p, "expected a non-empty array");
      for (size_t i = 0; i < v.size(); ++i) {
        size_t b = get_size(v[i], p + "/" + std::to_string(i));
        if (b == 0) bad(p + "/" + std::to_string(i), "batch size must be positive");
        cfg.batch_sizes.push_back(b);
      }
    }
  }
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;
  check_keys(j, "",
             {"datasets", "shots", "dev_size", "seeds", "demos", "model",
              "supervise_demo", "decode", "eval", "out_dir"});
  if (!j.contains("datasets")) bad("/datasets", "required key missing");

  {
    const json& ds = j.at("datasets");
    if (!ds.is_array() || ds.empty()) bad("/datasets", "expected a non-empty array");
    for (size_t i = 0; i < ds.size(); ++i) {
      const std::string p = "/datasets/" + std::to_string(i);
      const json& d = ds[i];
      check_keys(d, p, {"name", "entity_types", "splits"});
      DatasetSpec spec;
      if (!d.contains("name")) bad(p + "/name", "required key missing");
      spec.name = get_string(d.at("name"), p + "/name");
      if (spec.name.empty() || spec.name.find('/') != std::string::npos)
        bad(p + "/name", "dataset name must be a non-empty path component");
      if (!d.contains("entity_types")) bad(p + "/entity_types", "required key missing");
      const json& types = d.at("entity_types");
      if (!types.is_array() || types.empty())
        bad(p + "/entity_types", "expected a non-empty array");
      for (size_t t = 0; t < types.size(); ++t)
        spec.entity_types.push_back(
            get_string(types[t], p + "/entity_types/" + std::to_string(t)));
      if (!d.contains("splits")) bad(p + "/splits", "required key missing");
      const json& splits = d.at("splits");
      check_keys(splits, p + "/splits", {"train", "dev", "test"});
      for (auto it = splits.begin(); it != splits.end(); ++it)
        spec.split_paths[it.key()] =
            get_string(it.value(), p + "/splits/" + it.key());
      if (!spec.split_paths.count("train")) bad(p + "/splits/train", "required key missing");
      cfg.datasets.push_back(std::move(spec));
    }
  }

  if (j.contains("shots")) {
    const json& shots = j.at("shots");
    if (!shots.is_array() || shots.empty()) bad("/shots", "expected a non-empty array");
    cfg.shots.clear();
    for (size_t i = 0; i < shots.size(); ++i) {
      size_t k = get_size(shots[i], "/shots/" + std::to_string(i));
      if (k == 0) bad("/shots/" + std::to_string(i), "shot count must be positive");
      cfg.shots.push_back(k);
    }
  }
  if (j.contains("dev_size")) cfg.dev_size = get_size(j.at("dev_size"), "/dev_size");
  if (j.contains("seeds")) {
    const json& seeds = j.at("seeds");
    if (!seeds.is_array() || seeds.empty()) bad("/seeds", "expected a non-empty array");
    cfg.seeds.clear();
    for (size_t i = 0; i < seeds.size(); ++i)
      cfg.seeds.push_back(get_size(seeds[i], "/seeds/" + std::to_string(i)));
  }
  if (j.contains("demos")) {
    const json& d = j.at("demos");
    check_keys(d, "/demos", {"kinds", "u", "v", "max_len"});
    if (d.contains("kinds")) {
      const json& kinds = d.at("kinds");
      if (!kinds.is_array() || kinds.empty())
        bad("/demos/kinds", "expected a non-empty array");
      cfg.demos.kinds.clear();
      for (size_t i = 0; i < kinds.size(); ++i) {
        std::string name = get_string(kinds[i], "/demos/kinds/" + std::to_string(i));
        try {
          cfg.demos.kinds.push_back(demo_kind_from_name(name));
        } catch (const Error&) {
          bad("/demos/kinds/" + std::to_string(i),
              "expected one of none, grape, popular");
        }
      }
    }
    if (d.contains("u")) cfg.demos.density.u = get_number(d.at("u"), "/demos/u");
    if (d.contains("v")) cfg.demos.density.v = get_number(d.at("v"), "/demos/v");
    if (d.contains("max_len"))
      cfg.demos.density.max_len = get_size(d.at("max_len"), "/demos/max_len");
  }
  if (j.contains("model")) parse_model_block(j.at("model"), "/model", cfg);
  if (j.contains("supervise_demo"))
    cfg.supervise_demo = get_bool(j.at("supervise_demo"), "/supervise_demo");
  if (j.contains("decode")) {
    const json& d = j.at("decode");
    check_keys(d, "/decode", {"end_driven"});
    if (d.contains("end_driven"))
      cfg.decode.end_driven = get_bool(d.at("end_driven"), "/decode/end_driven");
  }
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    check_keys(e, "/eval", {"macro"});
    if (e.contains("macro")) cfg.macro = get_bool(e.at("macro"), "/eval/macro");
  }
  if (j.contains("out_dir")) cfg.out_dir = get_string(j.at("out_dir"), "/out_dir");

  cfg.validate();
  return cfg;
}

// --- run bookkeeping ------------------------------------------------------

std::vector<size_t> effective_batches(const ExperimentConfig& cfg) {
  if (!cfg.batch_sizes.empty()) return cfg.batch_sizes;
  return {cfg.model.batch_size};
}

struct RunKey {
  std::string dataset;
  DemoKind kind;
  size_t shot;
  size_t batch;
  uint64_t seed;
};

// Combination order is the config order throughout, which keeps every
// aggregate file deterministic.
std::vector<RunKey> combinations(const ExperimentConfig& cfg) {
  std::vector<RunKey> keys;
  for (const auto& ds : cfg.datasets)
    for (DemoKind kind : cfg.demos.kinds)
      for (size_t shot : cfg.shots)
        for (size_t batch : effective_batches(cfg))
          for (uint64_t seed : cfg.seeds)
            keys.push_back({ds.name, kind, shot, batch, seed});
  return keys;
}

Corpus load_dataset(const DatasetSpec& spec, std::vector<RepairRecord>* repairs = nullptr) {
  for (const auto& [split, path] : spec.split_paths)
    if (!fs::exists(path))
      throw Error("dataset " + spec.name + " split " + split + ": missing file " + path);
  return load_corpus(spec.name, spec.entity_types, spec.split_paths, repairs);
}

std::vector<LabeledSentence> sampling_pool(const Corpus& corpus) {
  std::vector<LabeledSentence> pool = corpus.split("train");
  if (corpus.splits.count("dev")) {
    const auto& dev = corpus.split("dev");
    pool.insert(pool.end(), dev.begin(), dev.end());
  }
  return pool;
}

std::map<std::string, Demonstration> pick_demos(const std::vector<LabeledSentence>& train,
                                                const DatasetSpec& spec, DemoKind kind,
                                                const DemoSettings& settings) {
  std::map<std::string, Demonstration> demos;
  for (const auto& type : spec.entity_types) {
    Demonstration d;
    if (kind == DemoKind::Grape) d = select_grape(train, type, settings.density);
    else if (kind == DemoKind::Popular)
      d = select_popular(train, type, settings.density.max_len);
    d.entity_type = type;
    demos[type] = std::move(d);
  }
  return demos;
}

std::vector<MrcInstance> assemble_all(const std::vector<LabeledSentence>& sentences,
                                      const DatasetSpec& spec,
                                      const std::map<std::string, Demonstration>& demos,
                                      bool supervise_demo, size_t max_seq_len) {
  std::vector<MrcInstance> out;
  out.reserve(sentences.size() * spec.entity_types.size());
  for (const auto& sent : sentences)
    for (const auto& type : spec.entity_types) {
      const Demonstration& d = demos.at(type);
      out.push_back(assemble_instance(sent, d.present() ? &d : nullptr, type,
                                      supervise_demo, max_seq_len));
    }
  return out;
}

std::string instances_jsonl(const std::vector<MrcInstance>& instances) {
  std::string out;
  for (const auto& inst : instances) {
    out += instance_to_jsonl(inst);
    out += '\n';
  }
  return out;
}

std::string demos_text(const std::map<std::string, Demonstration>& demos) {
  std::string out;
  for (const auto& [type, d] : demos) {
    out += demo_audit_line(d);
    out += '\n';
  }
  return out;
}

std::string eval_report_json(const EvalReport& rep) {
  auto counts = [](const PrfCounts& c) {
    return json{{"tp", c.tp},
                {"fp", c.fp},
                {"fn", c.fn},
                {"precision", c.precision()},
                {"recall", c.recall()},
                {"f1", c.f1()}};
  };
  json per_type = json::object();
  for (const auto& [type, c] : rep.per_type) per_type[type] = counts(c);
  json j{{"per_type", per_type},
         {"micro", counts(rep.micro)},
         {"macro", {{"precision", rep.macro_p}, {"recall", rep.macro_r}, {"f1", rep.macro_f1}}}};
  return j.dump(2) + "\n";
}

// Predicted spans of all types for one sentence as IOB2 tags. Cross-type
// overlaps cannot be expressed in one tag sequence; later spans in
// (start, end, type) order lose. The JSONL span file keeps the full set.
std::vector<IobTag> tags_for_sentence(std::vector<EntitySpan> spans, size_t length) {
  std::sort(spans.begin(), spans.end());
  std::vector<EntitySpan> kept;
  size_t last_end = 0;
  for (const auto& s : spans) {
    if (!kept.empty() && s.start < last_end) continue;
    kept.push_back(s);
    last_end = s.end;
  }
  return spans_to_iob2(kept, length);
}

std::string predictions_conll(const std::vector<LabeledSentence>& test,
                              const std::vector<Prediction>& preds) {
  std::map<std::string, std::vector<EntitySpan>> by_id;
  for (const auto& p : preds)
    by_id[p.source_id].insert(by_id[p.source_id].end(), p.spans.begin(), p.spans.end());
  std::vector<LabeledSentence> out;
  out.reserve(test.size());
  for (const auto& sent : test) {
    LabeledSentence pred_sent;
    pred_sent.sentence = sent.sentence;
    auto it = by_id.find(sent.id());
    pred_sent.tags = tags_for_sentence(it == by_id.end() ? std::vector<EntitySpan>{} : it->second,
                                       sent.size());
    out.push_back(std::move(pred_sent));
  }
  return to_conll(out);
}

json dataset_echo(const DatasetSpec& spec) {
  json splits = json::object();
  for (const auto& [k, v] : spec.split_paths) splits[k] = v;
  return json{{"name", spec.name}, {"entity_types", spec.entity_types}, {"splits", splits}};
}

// One run: sample, pick demonstrations, assemble, train, predict on the
// test split, score, and persist every artifact under dir.
RunRecord execute_run(const ExperimentConfig& cfg, const DatasetSpec& spec,
                      const Corpus& corpus, DemoKind kind, size_t shot, size_t batch,
                      uint64_t seed, const fs::path& dir) {
  RunRecord rec;
  rec.dataset = spec.name;
  rec.kind = kind;
  rec.shot = shot;
  rec.batch_size = batch;
  rec.seed = seed;
  rec.dir = dir.string();

  fs::create_directories(dir);
  std::map<std::string, std::string> files;  // name -> content hash
  auto persist = [&](const std::string& name, const std::string& content) {
    write_text(dir / name, content);
    files[name] = hash_hex(fnv1a64(content));
  };

  try {
    SamplePlan plan;
    plan.seed = seed;
    plan.k_train = shot;
    plan.k_dev = cfg.dev_size;
    plan.pool = "train+dev";
    Sample sample = draw_sample(sampling_pool(corpus), spec.name, plan);
    write_sample(sample, plan, spec.name, (dir / "sample").string());
    for (const char* f : {"sample/train.conll", "sample/dev.conll", "sample/sample.json"})
      files[f] = hash_hex(hash_file((dir / f).string()));

    auto demos = pick_demos(sample.train, spec, kind, cfg.demos);
    persist("demos.txt", demos_text(demos));

    ModelConfig mcfg = cfg.model;
    mcfg.batch_size = batch;
    auto train_insts =
        assemble_all(sample.train, spec, demos, cfg.supervise_demo, mcfg.max_seq_len);
    auto dev_insts =
        assemble_all(sample.dev, spec, demos, cfg.supervise_demo, mcfg.max_seq_len);
    const auto& test = corpus.split("test");
    auto test_insts = assemble_all(test, spec, demos, cfg.supervise_demo, mcfg.max_seq_len);
    persist("instances-train.jsonl", instances_jsonl(train_insts));
    persist("instances-dev.jsonl", instances_jsonl(dev_insts));
    persist("instances-test.jsonl", instances_jsonl(test_insts));

    mcfg.vocab = Vocab::build(train_insts);
    GoldSpans dev_gold = gold_spans(sample.dev, spec.entity_types);
    TrainResult trained =
        train_model(train_insts, dev_insts, dev_gold, mcfg, seed, cfg.supervise_demo);
    persist("train_log.jsonl", train_log_to_jsonl(trained.log));
    save_checkpoint((dir / "checkpoint.bin").string(), trained.params, mcfg);
    files["checkpoint.bin"] = hash_hex(hash_file((dir / "checkpoint.bin").string()));

    std::vector<Prediction> preds;
    preds.reserve(test_insts.size());
    for (const auto& inst : test_insts)
      preds.push_back(predict(inst, trained.params, mcfg, cfg.decode));
    persist("predictions.conll", predictions_conll(test, preds));
    persist("predictions-spans.jsonl", predictions_to_spans_jsonl(preds, test_insts));

    GoldSpans test_gold = gold_spans(test, spec.entity_types);
    EvalReport rep = score(test_gold, preds);
    persist("eval.json", eval_report_json(rep));

    rec.ok = true;
    rec.precision = cfg.macro ? rep.macro_p : rep.micro.precision();
    rec.recall = cfg.macro ? rep.macro_r : rep.micro.recall();
    rec.f1 = cfg.macro ? rep.macro_f1 : rep.micro.f1();

    json manifest{{"dataset", dataset_echo(spec)},
                  {"method", demo_kind_name(kind)},
                  {"shot", shot},
                  {"batch_size", batch},
                  {"seed", seed},
                  {"status", "ok"},
                  {"metric_averaging", cfg.macro ? "macro" : "micro"},
                  {"optimizer", "adam(beta1=0.9, beta2=0.999, eps=1e-8)"},
                  {"best_epoch", trained.best_epoch},
                  {"best_dev_f1", trained.best_dev_f1},
                  {"precision", rec.precision},
                  {"recall", rec.recall},
                  {"f1", rec.f1},
                  {"config", json::parse(config_echo_json(cfg))},
                  {"config_hash", hash_hex(fnv1a64(config_echo_json(cfg)))},
                  {"files", files}};
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  } catch (const std::exception& e) {
    rec.ok = false;
    rec.error = e.what();
    json manifest{{"dataset", dataset_echo(spec)},
                  {"method", demo_kind_name(kind)},
                  {"shot", shot},
                  {"batch_size", batch},
                  {"seed", seed},
                  {"status", "failed"},
                  {"error", rec.error},
                  {"config", json::parse(config_echo_json(cfg))},
                  {"config_hash", hash_hex(fnv1a64(config_echo_json(cfg)))},
                  {"files", files}};
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  }
  return rec;
}

struct SummaryRow {
  std::string dataset;
  DemoKind kind;
  size_t shot;
  size_t batch;
  Summary summary;
};

std::vector<SummaryRow> summarize(const RunSet& runs) {
  // Group in first-appearance order (equal to the config loop order).
  std::vector<SummaryRow> rows;
  std::vector<std::vector<const RunRecord*>> members;
  for (const auto& r : runs.records) {
    if (!r.ok) continue;
    size_t at = rows.size();
    for (size_t i = 0; i < rows.size(); ++i)
      if (rows[i].dataset == r.dataset && rows[i].kind == r.kind &&
          rows[i].shot == r.shot && rows[i].batch == r.batch_size) {
        at = i;
        break;
      }
    if (at == rows.size()) {
      rows.push_back({r.dataset, r.kind, r.shot, r.batch_size, {}});
      members.emplace_back();
    }
    members[at].push_back(&r);
  }
  for (size_t i = 0; i < rows.size(); ++i) {
    std::vector<double> ps, rs, f1s;
    for (const RunRecord* r : members[i]) {
      ps.push_back(r->precision);
      rs.push_back(r->recall);
      f1s.push_back(r->f1);
    }
    rows[i].summary.runs = ps.size();
    rows[i].summary.precision = mean_std(ps);
    rows[i].summary.recall = mean_std(rs);
    rows[i].summary.f1 = mean_std(f1s);
  }
  return rows;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (datasets.empty()) throw ConfigError("no datasets configured");
  std::set<std::string> names;
  for (const auto& d : datasets) {
    if (!names.insert(d.name).second)
      throw ConfigError("duplicate dataset name " + d.name);
    if (d.entity_types.empty())
      throw ConfigError("dataset " + d.name + " lists no entity types");
    if (!d.split_paths.count("train"))
      throw ConfigError("dataset " + d.name + " lacks a train split");
  }
  if (shots.empty()) throw ConfigError("shots list is empty");
  for (size_t k : shots)
    if (k == 0) throw ConfigError("shot counts must be positive");
  if (seeds.empty()) throw ConfigError("seeds list is empty");
  if (demos.kinds.empty()) throw ConfigError("demos.kinds is empty");
  for (size_t b : batch_sizes)
    if (b == 0) throw ConfigError("batch sizes must be positive");
  if (out_dir.empty()) throw ConfigError("out_dir is empty");
  // Everything but the vocabulary is checkable now.
  ModelConfig probe = model;
  probe.vocab = Vocab{};
  probe.validate();
}

ExperimentConfig config_from_json_text(const std::string& text,
                                       const std::string& source_name) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    // nlohmann reports a byte offset; turn it into line:column.
    size_t line = 1, col = 1;
    for (size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError(source_name + ":" + std::to_string(line) + ":" +
                      std::to_string(col) + ": " + e.what());
  }
  return config_from_json(j);
}

ExperimentConfig config_from_file(const std::string& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
  return config_from_json_text(read_text(path), path);
}

std::string config_echo_json(const ExperimentConfig& cfg) {
  json datasets = json::array();
  for (const auto& d : cfg.datasets) datasets.push_back(dataset_echo(d));
  json kinds = json::array();
  for (DemoKind k : cfg.demos.kinds) kinds.push_back(demo_kind_name(k));
  json j{{"datasets", datasets},
         {"shots", cfg.shots},
         {"dev_size", cfg.dev_size},
         {"seeds", cfg.seeds},
         {"demos",
          {{"kinds", kinds},
           {"u", cfg.demos.density.u},
           {"v", cfg.demos.density.v},
           {"max_len", cfg.demos.density.max_len}}},
         {"model",
          {{"d_model", cfg.model.d_model},
           {"n_layers", cfg.model.n_layers},
           {"n_heads", cfg.model.n_heads},
           {"d_ff", cfg.model.d_ff},
           {"max_seq_len", cfg.model.max_seq_len},
           {"dropout", cfg.model.dropout},
           {"learning_rate", cfg.model.learning_rate},
           {"batch_size", cfg.model.batch_size},
           {"epochs", cfg.model.epochs},
           {"head_init_range", cfg.model.head_init_range},
           {"embed_init_std", cfg.model.embed_init_std}}},
         {"batch_sizes", cfg.batch_sizes},
         {"supervise_demo", cfg.supervise_demo},
         {"decode", {{"end_driven", cfg.decode.end_driven}}},
         {"eval", {{"macro", cfg.macro}}}};
  return j.dump();
}

bool RunSet::all_ok() const {
  for (const auto& r : records)
    if (!r.ok) return false;
  return true;
}

std::string run_dir_rel(const ExperimentConfig& cfg, const std::string& dataset,
                        DemoKind kind, size_t shot, size_t batch_size, uint64_t seed) {
  std::string rel = dataset;
  rel += '/';
  rel += demo_kind_name(kind);
  rel += "/shot-" + std::to_string(shot);
  if (!cfg.batch_sizes.empty()) rel += "/bs-" + std::to_string(batch_size);
  rel += "/seed-" + std::to_string(seed);
  return rel;
}

int cmd_prepare(const ExperimentConfig& cfg, std::ostream& out) {
  // Stats row per dataset x split x entity type, plus ALL rows and the
  // combined train+dev pool the sampler draws from.
  std::string csv = "dataset,split,entity_type,sentences,tokens,entities\n";
  size_t total_repairs = 0;
  for (const auto& spec : cfg.datasets) {
    std::vector<RepairRecord> repairs;
    Corpus corpus = load_dataset(spec, &repairs);
    total_repairs += repairs.size();
    for (const auto& rr : repairs)
      out << "repair: " << spec.name << " line " << rr.line << " token "
          << rr.token_index << " " << rr.from << " -> " << rr.to << "\n";

    std::vector<std::pair<std::string, SplitStats>> rows;
    for (const std::string split : {"train", "dev", "test"})
      if (corpus.splits.count(split)) rows.emplace_back(split, corpus_stats(corpus, split));
    rows.emplace_back("train+dev", split_stats(sampling_pool(corpus)));

    for (const auto& [split, stats] : rows) {
      for (const auto& type : spec.entity_types) {
        size_t n = 0;
        auto it = stats.entities_by_type.find(type);
        if (it != stats.entities_by_type.end()) n = it->second;
        csv += spec.name + "," + split + "," + type + "," +
               std::to_string(stats.sentences) + "," + std::to_string(stats.tokens) +
               "," + std::to_string(n) + "\n";
      }
      csv += spec.name + "," + split + ",ALL," + std::to_string(stats.sentences) + "," +
             std::to_string(stats.tokens) + "," + std::to_string(stats.entities_total) +
             "\n";
    }
  }
  write_text(fs::path(cfg.out_dir) / "stats.csv", csv);
  out << "wrote " << (fs::path(cfg.out_dir) / "stats.csv").string() << " ("
      << total_repairs << " repairs)\n";
  return 0;
}

int cmd_sample(const ExperimentConfig& cfg, std::ostream& out) {
  for (const auto& spec : cfg.datasets) {
    Corpus corpus = load_dataset(spec);
    auto pool = sampling_pool(corpus);
    for (size_t shot : cfg.shots)
      for (uint64_t seed : cfg.seeds) {
        SamplePlan plan;
        plan.seed = seed;
        plan.k_train = shot;
        plan.k_dev = cfg.dev_size;
        plan.pool = "train+dev";
        Sample sample = draw_sample(pool, spec.name, plan);
        fs::path dir = fs::path(cfg.out_dir) / spec.name / "samples" /
                       ("shot-" + std::to_string(shot)) /
                       ("seed-" + std::to_string(seed));
        fs::create_directories(dir);
        write_text(dir / "train.conll", to_conll(sample.train));
        write_text(dir / "dev.conll", to_conll(sample.dev));
        write_text(dir / "sample.json",
                   write_sample(sample, plan, spec.name, dir.string()));
        out << "sampled " << dir.string() << "\n";
      }
  }
  return 0;
}

int cmd_demo(const ExperimentConfig& cfg, std::ostream& out) {
  for (const auto& spec : cfg.datasets) {
    Corpus corpus = load_dataset(spec);
    auto pool = sampling_pool(corpus);
    for (DemoKind kind : cfg.demos.kinds) {
      if (kind == DemoKind::None) continue;
      for (size_t shot : cfg.shots)
        for (uint64_t seed : cfg.seeds) {
          SamplePlan plan;
          plan.seed = seed;
          plan.k_train = shot;
          plan.k_dev = cfg.dev_size;
          Sample sample = draw_sample(pool, spec.name, plan);
          auto demos = pick_demos(sample.train, spec, kind, cfg.demos);
          fs::path dir = fs::path(cfg.out_dir) / spec.name / "demos" /
                         demo_kind_name(kind) / ("shot-" + std::to_string(shot));
          fs::create_directories(dir);
          write_text(dir / ("seed-" + std::to_string(seed) + ".txt"), demos_text(demos));
        }
      out << "demo audit: " << spec.name << " " << demo_kind_name(kind) << "\n";
    }
  }
  return 0;
}

int cmd_run(const ExperimentConfig& cfg, std::ostream& out, RunSet* runs_out) {
  RunSet runs;
  std::map<std::string, Corpus> corpora;
  for (const auto& spec : cfg.datasets) corpora.emplace(spec.name, load_dataset(spec));

  for (const RunKey& key : combinations(cfg)) {
    const DatasetSpec* spec = nullptr;
    for (const auto& d : cfg.datasets)
      if (d.name == key.dataset) spec = &d;
    fs::path dir = fs::path(cfg.out_dir) /
                   run_dir_rel(cfg, key.dataset, key.kind, key.shot, key.batch, key.seed);
    RunRecord rec = execute_run(cfg, *spec, corpora.at(key.dataset), key.kind, key.shot,
                                key.batch, key.seed, dir);
    out << (rec.ok ? "ok " : "FAILED ") << dir.string();
    if (rec.ok)
      out << " f1=" << fmt6(rec.f1);
    else
      out << " (" << rec.error << ")";
    out << "\n";
    runs.records.push_back(std::move(rec));
  }

  write_text(fs::path(cfg.out_dir) / "report.csv", report_csv(runs));
  write_text(fs::path(cfg.out_dir) / "summary.csv", summary_csv(runs));
  write_text(fs::path(cfg.out_dir) / "summary.txt", summary_text(runs));
  out << "wrote " << (fs::path(cfg.out_dir) / "summary.csv").string() << "\n";
  if (runs_out) *runs_out = runs;
  return runs.all_ok() ? 0 : 1;
}

int cmd_report(const ExperimentConfig& cfg, std::ostream& out) {
  RunSet runs;
  std::vector<std::string> missing;
  std::vector<std::pair<std::string, std::string>> skipped;  // dir, reason

  for (const RunKey& key : combinations(cfg)) {
    fs::path dir = fs::path(cfg.out_dir) /
                   run_dir_rel(cfg, key.dataset, key.kind, key.shot, key.batch, key.seed);
    fs::path manifest_path = dir / "manifest.json";
    if (!fs::exists(manifest_path)) {
      missing.push_back(manifest_path.string());
      continue;
    }
    RunRecord rec;
    rec.dataset = key.dataset;
    rec.kind = key.kind;
    rec.shot = key.shot;
    rec.batch_size = key.batch;
    rec.seed = key.seed;
    rec.dir = dir.string();
    try {
      json m = json::parse(read_text(manifest_path));
      if (m.at("status").get<std::string>() != "ok") {
        skipped.emplace_back(dir.string(),
                             "run failed: " + m.value("error", std::string("unknown")));
        continue;
      }
      rec.ok = true;
      rec.precision = m.at("precision").get<double>();
      rec.recall = m.at("recall").get<double>();
      rec.f1 = m.at("f1").get<double>();
    } catch (const std::exception& e) {
      skipped.emplace_back(dir.string(), std::string("malformed manifest: ") + e.what());
      continue;
    }
    runs.records.push_back(std::move(rec));
  }

  if (!missing.empty()) {
    out << "missing manifests:\n";
    for (const auto& m : missing) out << "  " << m << "\n";
    return 2;
  }

  write_text(fs::path(cfg.out_dir) / "report.csv", report_csv(runs));
  write_text(fs::path(cfg.out_dir) / "summary.csv", summary_csv(runs));
  write_text(fs::path(cfg.out_dir) / "summary.txt", summary_text(runs));
  out << summary_text(runs);
  if (!skipped.empty()) {
    out << "skipped:\n";
    for (const auto& [dir, reason] : skipped) out << "  " << dir << ": " << reason << "\n";
    return 1;
  }
  return 0;
}

int cmd_verify(const std::string& out_dir, std::ostream& out) {
  if (!fs::exists(out_dir)) {
    out << "no such directory: " << out_dir << "\n";
    return 2;
  }
  size_t manifests = 0, bad_files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(out_dir)) {
    if (!entry.is_regular_file() || entry.path().filename() != "manifest.json") continue;
    ++manifests;
    json m;
    try {
      m = json::parse(read_text(entry.path()));
    } catch (const std::exception& e) {
      out << "malformed manifest " << entry.path().string() << ": " << e.what() << "\n";
      ++bad_files;
      continue;
    }
    if (!m.contains("files")) continue;
    for (const auto& [name, expect] : m.at("files").items()) {
      fs::path f = entry.path().parent_path() / name;
      if (!fs::exists(f)) {
        out << "missing file " << f.string() << "\n";
        ++bad_files;
        continue;
      }
      std::string got = hash_hex(hash_file(f.string()));
      if (got != expect.get<std::string>()) {
        out << "hash mismatch " << f.string() << ": manifest " << expect.get<std::string>()
            << ", file " << got << "\n";
        ++bad_files;
      }
    }
  }
  out << "verified " << manifests << " manifests, " << bad_files << " problems\n";
  if (manifests == 0) {
    out << "no manifests under " << out_dir << "\n";
    return 2;
  }
  return bad_files == 0 ? 0 : 1;
}

std::string report_csv(const RunSet& runs) {
  std::string csv = "dataset,method,shot,batch_size,seed,precision,recall,f1\n";
  for (const auto& r : runs.records) {
    if (!r.ok) continue;
    csv += r.dataset;
    csv += ',';
    csv += demo_kind_name(r.kind);
    csv += ',' + std::to_string(r.shot) + ',' + std::to_string(r.batch_size) + ',' +
           std::to_string(r.seed) + ',' + fmt6(r.precision) + ',' + fmt6(r.recall) +
           ',' + fmt6(r.f1) + '\n';
  }
  return csv;
}

std::string summary_csv(const RunSet& runs) {
  std::string csv =
      "dataset,method,shot,batch_size,runs,precision_mean,precision_std,recall_mean,"
      "recall_std,f1_mean,f1_std,f1_pct\n";
  for (const auto& row : summarize(runs)) {
    csv += row.dataset;
    csv += ',';
    csv += demo_kind_name(row.kind);
    csv += ',' + std::to_string(row.shot) + ',' + std::to_string(row.batch) + ',' +
           std::to_string(row.summary.runs) + ',' + fmt6(row.summary.precision.mean) +
           ',' + fmt6(row.summary.precision.stdev) + ',' + fmt6(row.summary.recall.mean) +
           ',' + fmt6(row.summary.recall.stdev) + ',' + fmt6(row.summary.f1.mean) + ',' +
           fmt6(row.summary.f1.stdev) + ',' + format_mean_std_pct(row.summary.f1) + '\n';
  }
  return csv;
}

std::string summary_text(const RunSet& runs) {
  // Table-shaped text report; +- std is the population deviation over seeds.
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-12s %-8s %6s %6s %6s %14s %14s %14s\n", "dataset",
                "method", "shot", "batch", "runs", "P%", "R%", "F1%");
  out += line;
  for (const auto& row : summarize(runs)) {
    std::snprintf(line, sizeof(line), "%-12s %-8s %6zu %6zu %6zu %14s %14s %14s\n",
                  row.dataset.c_str(), demo_kind_name(row.kind), row.shot, row.batch,
                  row.summary.runs, format_mean_std_pct(row.summary.precision).c_str(),
                  format_mean_std_pct(row.summary.recall).c_str(),
                  format_mean_std_pct(row.summary.f1).c_str());
    out += line;
  }
  out += "std is the population standard deviation over seeds\n";
  return out;
}

}  // namespace grapener
