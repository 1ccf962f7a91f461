#include <cstdlib>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "grapener/error.hpp"
#include "grapener/runner.hpp"

namespace {

using grapener::ExperimentConfig;

// Options shared by every config-driven subcommand. Flag > GRAPENER_OUT >
// config file > built-in default for the output root; flag > file >
// default for everything else.
struct CommonOpts {
  std::string config;
  std::string out;
  std::vector<uint64_t> seeds;
  std::vector<size_t> shots;
  std::vector<std::string> kinds;
  std::vector<size_t> batch_sizes;
  size_t epochs = 0;
  size_t batch_size = 0;
  size_t dev_size = 0;
  double learning_rate = 0.0;
  std::string supervise_demo;  // on/off

  CLI::Option* o_out = nullptr;
  CLI::Option* o_seeds = nullptr;
  CLI::Option* o_shots = nullptr;
  CLI::Option* o_kinds = nullptr;
  CLI::Option* o_batch_sizes = nullptr;
  CLI::Option* o_epochs = nullptr;
  CLI::Option* o_batch_size = nullptr;
  CLI::Option* o_dev_size = nullptr;
  CLI::Option* o_lr = nullptr;
  CLI::Option* o_supervise = nullptr;
  CLI::Option* o_end_driven = nullptr;
  CLI::Option* o_macro = nullptr;
};

CommonOpts* add_common(CLI::App* sub, std::vector<std::unique_ptr<CommonOpts>>& store) {
  store.push_back(std::make_unique<CommonOpts>());
  CommonOpts& o = *store.back();
  sub->add_option("-c,--config", o.config, "experiment config file (JSON)")
      ->required();
  o.o_out = sub->add_option("-o,--out", o.out, "output root directory");
  o.o_seeds = sub->add_option("--seeds", o.seeds, "seed list override");
  o.o_shots = sub->add_option("--shots", o.shots, "shot (k_train) list override");
  o.o_kinds = sub->add_option("--demo-kinds", o.kinds,
                              "demonstration kinds: none, grape, popular");
  o.o_batch_sizes =
      sub->add_option("--batch-sizes", o.batch_sizes, "batch size sweep override");
  o.o_epochs = sub->add_option("--epochs", o.epochs, "training epochs override");
  o.o_batch_size = sub->add_option("--batch-size", o.batch_size, "batch size override");
  o.o_dev_size = sub->add_option("--dev-size", o.dev_size, "sampled dev set size");
  o.o_lr = sub->add_option("--learning-rate", o.learning_rate, "learning rate override");
  o.o_supervise = sub->add_option("--supervise-demo", o.supervise_demo,
                                  "supervise demonstration positions (on/off)")
                      ->check(CLI::IsMember({"on", "off"}));
  o.o_end_driven = sub->add_flag("--end-driven", "decode with the end-driven sweep");
  o.o_macro = sub->add_flag("--macro", "report macro-averaged scores");
  return &o;
}

ExperimentConfig effective_config(const CommonOpts& o) {
  ExperimentConfig cfg = grapener::config_from_file(o.config);
  if (o.o_out->count())
    cfg.out_dir = o.out;
  else if (const char* env = std::getenv("GRAPENER_OUT"))
    cfg.out_dir = env;
  if (o.o_seeds->count()) cfg.seeds = o.seeds;
  if (o.o_shots->count()) cfg.shots = o.shots;
  if (o.o_kinds->count()) {
    cfg.demos.kinds.clear();
    for (const auto& name : o.kinds)
      cfg.demos.kinds.push_back(grapener::demo_kind_from_name(name));
  }
  if (o.o_batch_sizes->count()) cfg.batch_sizes = o.batch_sizes;
  if (o.o_epochs->count()) cfg.model.epochs = o.epochs;
  if (o.o_batch_size->count()) cfg.model.batch_size = o.batch_size;
  if (o.o_dev_size->count()) cfg.dev_size = o.dev_size;
  if (o.o_lr->count()) cfg.model.learning_rate = o.learning_rate;
  if (o.o_supervise->count()) cfg.supervise_demo = (o.supervise_demo == "on");
  if (o.o_end_driven->count()) cfg.decode.end_driven = true;
  if (o.o_macro->count()) cfg.macro = true;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"few-shot NER with in-context demonstrations: experiment runner"};
  app.require_subcommand(1);
  std::vector<std::unique_ptr<CommonOpts>> opts;

  auto* prepare = app.add_subcommand("prepare", "validate corpora and write statistics");
  auto* po = add_common(prepare, opts);
  auto* sample = app.add_subcommand("sample", "draw and persist the few-shot samples");
  auto* so = add_common(sample, opts);
  auto* demo = app.add_subcommand("demo", "write demonstration selection audits");
  auto* dmo = add_common(demo, opts);
  auto* run = app.add_subcommand("run", "train, predict and score every combination");
  auto* ro = add_common(run, opts);
  auto* report = app.add_subcommand("report", "rebuild reports from finished run dirs");
  auto* rpo = add_common(report, opts);

  auto* verify = app.add_subcommand("verify", "re-hash artifacts against manifests");
  std::string verify_dir;
  auto* verify_opt = verify->add_option("-o,--out", verify_dir, "output root to verify");

  CLI11_PARSE(app, argc, argv);

  try {
    if (prepare->parsed()) return grapener::cmd_prepare(effective_config(*po), std::cout);
    if (sample->parsed()) return grapener::cmd_sample(effective_config(*so), std::cout);
    if (demo->parsed()) return grapener::cmd_demo(effective_config(*dmo), std::cout);
    if (run->parsed()) return grapener::cmd_run(effective_config(*ro), std::cout);
    if (report->parsed()) return grapener::cmd_report(effective_config(*rpo), std::cout);
    if (verify->parsed()) {
      std::string dir = "out";
      if (verify_opt->count())
        dir = verify_dir;
      else if (const char* env = std::getenv("GRAPENER_OUT"))
        dir = env;
      return grapener::cmd_verify(dir, std::cout);
    }
  } catch (const grapener::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
