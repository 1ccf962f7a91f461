// End-to-end acceptance gate. Each numbered check prints one PASS or
// FAIL line (plus INFO lines for non-gating observations) and the
// process exits nonzero if any check fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <json.hpp>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "grapener/decode.hpp"
#include "grapener/demos.hpp"
#include "grapener/eval.hpp"
#include "grapener/fewshot.hpp"
#include "grapener/model.hpp"
#include "grapener/runner.hpp"
#include "grapener/spanconv.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace grapener;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

int failures = 0;

// Runs one check; the body returns an empty string on success and a
// failure description otherwise.
void criterion(int number, const char* title, const std::function<std::string()>& body) {
  auto t0 = std::chrono::steady_clock::now();
  std::string detail;
  try {
    detail = body();
  } catch (const std::exception& e) {
    detail = std::string("exception: ") + e.what();
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (detail.empty()) {
    std::printf("PASS criterion %2d: %s (%.1fs)\n", number, title, secs);
  } else {
    std::printf("FAIL criterion %2d: %s: %s\n", number, title, detail.c_str());
    ++failures;
  }
  std::fflush(stdout);
}

ProbMatrices one_hot_probs(const MrcInstance& inst) {
  ProbMatrices probs;
  probs.p_start = Matrix(inst.size(), 2);
  probs.p_end = Matrix(inst.size(), 2);
  for (size_t i = 0; i < inst.size(); ++i) {
    probs.p_start(i, 1) = inst.y_start[i];
    probs.p_start(i, 0) = 1.0 - probs.p_start(i, 1);
    probs.p_end(i, 1) = inst.y_end[i];
    probs.p_end(i, 0) = 1.0 - probs.p_end(i, 1);
  }
  return probs;
}

std::map<std::string, Demonstration> grape_demos(const std::vector<LabeledSentence>& train,
                                                 const std::vector<std::string>& types) {
  std::map<std::string, Demonstration> demos;
  for (const auto& type : types) {
    Demonstration d = select_grape(train, type, DensityConfig{});
    d.entity_type = type;
    demos[type] = std::move(d);
  }
  return demos;
}

ModelConfig tiny_encoder_config() {
  ModelConfig cfg;
  cfg.d_model = 8;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.d_ff = 16;
  cfg.dropout = 0.0;
  return cfg;
}

json cue_dataset_json() {
  return json{{"name", "cue"},
              {"entity_types", json::array({"Chemical"})},
              {"splits",
               json{{"train", helpers::fixture_path("cue", "train")},
                    {"dev", helpers::fixture_path("cue", "dev")},
                    {"test", helpers::fixture_path("cue", "test")}}}};
}

std::string check_gold_pipeline_identity() {
  for (const auto& spec : helpers::fixture_corpora()) {
    Corpus corpus = helpers::load_fixture(spec);
    for (const auto& [split_name, sentences] : corpus.splits) {
      auto demos = grape_demos(sentences, spec.types);
      std::vector<Prediction> preds;
      for (const auto& sent : sentences)
        for (const auto& type : spec.types) {
          const Demonstration& d = demos.at(type);
          MrcInstance inst =
              assemble_instance(sent, d.present() ? &d : nullptr, type, true, 512);
          preds.push_back(decode_probs(inst, one_hot_probs(inst)));
        }
      EvalReport rep = score(gold_spans(sentences, spec.types), preds);
      if (rep.micro.fp != 0 || rep.micro.fn != 0 || rep.micro.tp == 0 ||
          rep.micro.precision() != 1.0 || rep.micro.recall() != 1.0 ||
          rep.micro.f1() != 1.0)
        return spec.name + "/" + split_name + " scored tp=" +
               std::to_string(rep.micro.tp) + " fp=" + std::to_string(rep.micro.fp) +
               " fn=" + std::to_string(rep.micro.fn);
    }
  }
  return "";
}

std::string check_span_round_trip() {
  for (const auto& spec : helpers::fixture_corpora()) {
    std::vector<RepairRecord> repairs;
    Corpus corpus = helpers::load_fixture(spec, &repairs);
    if (!repairs.empty())
      return spec.name + " needed " + std::to_string(repairs.size()) + " tag repairs";
    std::set<std::string> type_set(spec.types.begin(), spec.types.end());
    for (const auto& [split_name, sentences] : corpus.splits) {
      for (const auto& sent : sentences)
        if (spans_to_iob2(iob2_to_spans(sent), sent.size()) != sent.tags)
          return spec.name + "/" + split_name + " sentence " + sent.id() +
                 " does not round-trip";
      ParseResult back = parse_conll_string(to_conll(sentences), type_set, split_name);
      if (!back.repairs.empty() || back.sentences != sentences)
        return spec.name + "/" + split_name + " does not survive emit and reparse";
    }
  }
  return "";
}

std::string check_selection_oracles() {
  Rng rng(20260814ull);
  DensityConfig dc;
  dc.max_len = 8;  // short cap so the fallback paths are exercised
  size_t grape_cases = 0, grape_agree = 0, popular_cases = 0, popular_agree = 0;

  auto same = [](const Demonstration& got, const oracles::SelectedDemo& want,
                 const std::vector<LabeledSentence>& sents) {
    if (got.present() != want.found) return false;
    if (!want.found) return true;
    return got.sentence.id() == sents[want.index].id() &&
           std::abs(got.score - want.score) < 1e-12;
  };

  for (size_t rep = 0; rep < 500; ++rep) {
    std::vector<LabeledSentence> sents;
    size_t n = 5 + rng.below(6);
    for (size_t i = 0; i < n; ++i)
      sents.push_back(helpers::random_labeled_sentence(
          rng, "r" + std::to_string(rep) + "-" + std::to_string(i), {"X", "Y"}, 12));
    for (const std::string type : {"X", "Y"}) {
      ++grape_cases;
      if (same(select_grape(sents, type, dc), oracles::grape_oracle(sents, type, dc), sents))
        ++grape_agree;
      ++popular_cases;
      if (same(select_popular(sents, type, dc.max_len),
               oracles::popular_oracle(sents, type, dc.max_len), sents))
        ++popular_agree;
    }
  }
  if (grape_cases != 1000 || popular_cases != 1000)
    return "expected 1000 cases per selector";
  if (grape_agree != grape_cases)
    return "density selector agreed in " + std::to_string(grape_agree) + "/1000 cases";
  if (popular_agree != popular_cases)
    return "frequency selector agreed in " + std::to_string(popular_agree) + "/1000 cases";
  return "";
}

std::string check_nearest_match_exhaustive() {
  size_t checked = 0;
  for (unsigned sm = 0; sm < 64; ++sm)
    for (unsigned em = 0; em < 64; ++em) {
      IndexSets idx;
      for (size_t i = 0; i < 6; ++i) {
        if (sm >> i & 1) idx.starts.push_back(i);
        if (em >> i & 1) idx.ends.push_back(i);
      }
      for (bool end_driven : {false, true}) {
        if (nearest_match(idx, end_driven) !=
            oracles::nearest_match_oracle(idx.starts, idx.ends, end_driven))
          return "mismatch at start mask " + std::to_string(sm) + ", end mask " +
                 std::to_string(em) + (end_driven ? " (end driven)" : "");
      }
      ++checked;
    }
  if (checked != 4096) return "expected 4096 subset pairs";
  return "";
}

std::string check_gradients() {
  Rng rng(31);
  std::vector<MrcInstance> instances;
  for (size_t i = 0; i < 10; ++i) {
    bool with_demo = i % 2 == 1;
    auto ctx = helpers::random_labeled_sentence(rng, "g-" + std::to_string(i), {"X"},
                                                with_demo ? 2 : 4);
    if (with_demo) {
      Demonstration demo;
      demo.kind = DemoKind::Grape;
      demo.entity_type = "X";
      demo.sentence = helpers::random_labeled_sentence(rng, "d-" + std::to_string(i), {"X"}, 1);
      instances.push_back(assemble_instance(ctx, &demo, "X", true, 6));
    } else {
      instances.push_back(assemble_instance(ctx, nullptr, "X", true, 6));
    }
  }

  ModelConfig cfg = tiny_encoder_config();
  cfg.max_seq_len = 6;
  cfg.vocab = Vocab::build(instances);
  Parameters params = init_parameters(cfg, 404);
  double worst = 0.0;
  for (const auto& inst : instances)
    worst = std::max(worst, oracles::fd_gradient_max_rel_err(inst, params, cfg, true));
  std::printf("INFO  worst relative gradient error %.3g over %zu instances\n", worst,
              instances.size());
  if (!(worst < 1e-4))
    return "max relative error " + std::to_string(worst) + " is not below 1e-4";
  return "";
}

std::string check_learnability() {
  Corpus corpus = helpers::load_fixture({"cue", {"Chemical"}});
  const auto& pool = corpus.split("train");
  const auto& dev_sents = corpus.split("dev");
  GoldSpans dev_gold = gold_spans(dev_sents, {"Chemical"});

  int successes = 0;
  std::string per_seed;
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    SamplePlan plan;
    plan.seed = seed;
    plan.k_train = 25;
    plan.k_dev = 0;
    Sample sample = draw_sample(pool, "cue", plan);
    auto demos = grape_demos(sample.train, {"Chemical"});
    const Demonstration& d = demos.at("Chemical");

    std::vector<MrcInstance> train_insts, dev_insts;
    for (const auto& s : sample.train)
      train_insts.push_back(
          assemble_instance(s, d.present() ? &d : nullptr, "Chemical", true, 512));
    for (const auto& s : dev_sents)
      dev_insts.push_back(
          assemble_instance(s, d.present() ? &d : nullptr, "Chemical", true, 512));

    ModelConfig cfg;  // stock settings, only the epoch budget is set
    cfg.epochs = 200;
    cfg.vocab = Vocab::build(train_insts);
    TrainResult res = train_model(train_insts, dev_insts, dev_gold, cfg, seed);
    if (res.best_dev_f1 >= 0.90) ++successes;
    per_seed += " seed" + std::to_string(seed) + "=" +
                std::to_string(res.best_dev_f1).substr(0, 5) + "@" +
                std::to_string(res.best_epoch);
  }
  std::printf("INFO  best dev F1 by seed:%s\n", per_seed.c_str());
  if (successes < 4)
    return "dev F1 reached 0.90 for only " + std::to_string(successes) + "/5 seeds";
  return "";
}

std::string check_uniform_loss() {
  const double ln2 = std::log(2.0);
  double worst = 0.0;
  for (const auto& spec : helpers::fixture_corpora()) {
    Corpus corpus = helpers::load_fixture(spec);
    const auto& sentences = corpus.split("train");
    auto demos = grape_demos(sentences, spec.types);

    std::vector<MrcInstance> instances;
    for (const auto& sent : sentences)
      for (const auto& type : spec.types) {
        const Demonstration& d = demos.at(type);
        instances.push_back(
            assemble_instance(sent, d.present() ? &d : nullptr, type, true, 512));
      }

    ModelConfig cfg = tiny_encoder_config();
    cfg.vocab = Vocab::build(instances);
    Parameters params = init_parameters(cfg, 1);
    params.heads = params.like_zero().heads;

    for (const auto& inst : instances) {
      Representations h = encode(inst, params, cfg);
      Matrix ls = start_logits(h, params.heads);
      Matrix le = end_logits(h, ls, params.heads);
      for (bool sup : {true, false}) {
        worst = std::max(worst, std::abs(loss_from_logits(ls, le, inst, sup) - ln2));
        worst = std::max(
            worst,
            std::abs(loss_and_gradients(inst, params, cfg, sup, false, nullptr).loss - ln2));
      }
    }
  }
  std::printf("INFO  worst deviation from ln 2 at zeroed heads: %.3g\n", worst);
  if (!(worst < 1e-9)) return "initial loss deviates from ln 2 by " + std::to_string(worst);
  return "";
}

json protocol_config(const fs::path& out_dir) {
  return json{{"datasets", json::array({cue_dataset_json()})},
              {"shots", json::array({25, 50})},
              {"dev_size", 10},
              {"seeds", json::array({1, 2, 3, 4, 5})},
              {"demos", json{{"kinds", json::array({"grape", "popular"})}}},
              {"model", json{{"d_model", 16},
                             {"n_layers", 1},
                             {"n_heads", 2},
                             {"d_ff", 32},
                             {"dropout", 0.0},
                             {"learning_rate", 1e-3},
                             {"epochs", 2}}},
              {"out_dir", out_dir.string()}};
}

std::string check_five_seed_protocol() {
  auto dir = helpers::scratch_dir("accept-protocol");
  ExperimentConfig cfg = config_from_json_text(protocol_config(dir).dump(), "accept.json");
  std::ostringstream log;
  RunSet runs;
  int code = cmd_run(cfg, log, &runs);
  fs::remove_all(dir);
  if (code != 0) return "cmd_run exited with " + std::to_string(code);

  std::map<std::string, size_t> per_kind;
  for (const auto& r : runs.records) {
    if (!r.ok) return "run " + r.dir + " failed: " + r.error;
    per_kind[r.dataset + "/" + demo_kind_name(r.kind)]++;
  }
  if (per_kind.size() != 2 || per_kind["cue/grape"] != 10 || per_kind["cue/popular"] != 10)
    return "expected exactly 10 runs per demonstration kind";

  AggregateStats planted = mean_std({0.6, 0.8});
  if (std::abs(planted.mean - 0.7) >= 1e-12 || std::abs(planted.stdev - 0.1) >= 1e-12)
    return "mean_std({0.6, 0.8}) != 0.7 +- 0.1";

  EvalReport a, b;
  a.micro = PrfCounts{3, 2, 2};  // F1 0.6
  b.micro = PrfCounts{4, 1, 1};  // F1 0.8
  Summary sum = aggregate({a, b}, false);
  if (sum.runs != 2 || std::abs(sum.f1.mean - 0.7) >= 1e-12 ||
      std::abs(sum.f1.stdev - 0.1) >= 1e-12)
    return "aggregate of planted reports != 0.7 +- 0.1";
  return "";
}

std::string check_determinism() {
  auto dir_a = helpers::scratch_dir("accept-repro-a");
  auto dir_b = helpers::scratch_dir("accept-repro-b");
  json ja = protocol_config(dir_a);
  ja["shots"] = json::array({25});
  ja["seeds"] = json::array({1, 2});
  ja["demos"] = json{{"kinds", json::array({"grape"})}};
  json jb = ja;
  jb["out_dir"] = dir_b.string();

  std::ostringstream log;
  int code_a = cmd_run(config_from_json_text(ja.dump(), "a.json"), log);
  int code_b = cmd_run(config_from_json_text(jb.dump(), "b.json"), log);
  std::string sum_a = helpers::read_file(dir_a / "summary.csv");
  std::string sum_b = helpers::read_file(dir_b / "summary.csv");
  std::string rep_a = helpers::read_file(dir_a / "report.csv");
  std::string rep_b = helpers::read_file(dir_b / "report.csv");
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);

  if (code_a != 0 || code_b != 0) return "a run failed";
  if (sum_a != sum_b) return "summary CSVs differ between executions";
  if (rep_a != rep_b) return "per-run report CSVs differ between executions";
  return "";
}

std::string check_batch_size_sweep() {
  auto dir = helpers::scratch_dir("accept-sweep");
  json j{{"datasets", json::array({cue_dataset_json()})},
         {"shots", json::array({25})},
         {"dev_size", 20},
         {"seeds", json::array({1, 2, 3, 4, 5})},
         {"demos", json{{"kinds", json::array({"grape"})}}},
         {"model", json{{"epochs", 25}, {"batch_sizes", json::array({1, 2, 4, 6, 8})}}},
         {"out_dir", dir.string()}};
  ExperimentConfig cfg = config_from_json_text(j.dump(), "sweep.json");

  std::ostringstream log;
  RunSet runs;
  int code = cmd_run(cfg, log, &runs);
  std::string summary = helpers::read_file(fs::path(dir) / "summary.csv");
  fs::remove_all(dir);
  if (code != 0) return "cmd_run exited with " + std::to_string(code);
  if (runs.records.size() != 25) return "expected 25 runs";
  for (const auto& r : runs.records)
    if (!r.ok) return "run " + r.dir + " failed: " + r.error;

  std::istringstream lines(summary);
  std::string line;
  std::getline(lines, line);  // header
  std::vector<std::string> rows;
  while (std::getline(lines, line)) rows.push_back(line);
  if (rows.size() != 5)
    return "summary has " + std::to_string(rows.size()) + " rows, expected 5";
  for (size_t i = 0; i < 5; ++i) {
    std::string prefix = "cue,grape,25," + std::to_string(std::vector<size_t>{1, 2, 4, 6, 8}[i]);
    if (rows[i].rfind(prefix + ",", 0) != 0)
      return "summary row " + std::to_string(i) + " is not for batch size " + prefix;
  }

  // Informative only: how often the smallest batch size attains the
  // per-seed maximum F1 (ties count in its favor).
  std::map<uint64_t, double> best_by_seed;
  std::map<uint64_t, double> bs1_by_seed;
  for (const auto& r : runs.records) {
    best_by_seed[r.seed] = std::max(best_by_seed.count(r.seed) ? best_by_seed[r.seed] : -1.0,
                                    r.f1);
    if (r.batch_size == 1) bs1_by_seed[r.seed] = r.f1;
  }
  int top = 0;
  for (const auto& [seed, best] : best_by_seed)
    if (bs1_by_seed[seed] >= best) ++top;
  std::printf("INFO  batch size 1 attains the per-seed maximum F1 in %d/5 seeds\n", top);
  return "";
}

}  // namespace

int main() {
  criterion(1, "gold-label pipeline scores exactly 1.0 on every fixture corpus", [] {
    auto t0 = std::chrono::steady_clock::now();
    std::string detail = check_gold_pipeline_identity();
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (detail.empty() && secs >= 60.0)
      detail = "took " + std::to_string(secs) + "s, budget is 60s";
    return detail;
  });
  criterion(2, "IOB2 and span views round-trip with zero repairs on all splits",
            check_span_round_trip);
  criterion(3, "demonstration selectors match exhaustive oracles on 1000 random cases",
            check_selection_oracles);
  criterion(4, "nearest-match decoding equals the enumerated oracle on all 4096 subset pairs",
            check_nearest_match_exhaustive);
  criterion(5, "analytic gradients match central differences within 1e-4", [] {
    auto t0 = std::chrono::steady_clock::now();
    std::string detail = check_gradients();
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (detail.empty() && secs >= 120.0)
      detail = "took " + std::to_string(secs) + "s, budget is 120s";
    return detail;
  });
  criterion(6, "stock model reaches dev F1 >= 0.90 on the cue corpus for 4 of 5 seeds",
            check_learnability);
  criterion(7, "zero-initialized heads start at a loss of ln 2", check_uniform_loss);
  criterion(8, "the five-seed protocol yields 10 runs per kind and exact aggregates",
            check_five_seed_protocol);
  criterion(9, "identical configurations produce byte-identical summary CSVs",
            check_determinism);
  criterion(10, "the batch-size sweep completes with one summary row per size",
            check_batch_size_sweep);

  if (failures == 0) {
    std::printf("all 10 criteria passed\n");
    return 0;
  }
  std::printf("%d criteria failed\n", failures);
  return 1;
}
