#ifndef GRAPENER_RUNNER_HPP
#define GRAPENER_RUNNER_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "grapener/decode.hpp"
#include "grapener/demos.hpp"
#include "grapener/model.hpp"

namespace grapener {

struct DatasetSpec {
  std::string name;
  std::vector<std::string> entity_types;
  std::map<std::string, std::string> split_paths;  // train/dev/test -> file
};

struct DemoSettings {
  std::vector<DemoKind> kinds{DemoKind::Grape};
  DensityConfig density;  // u, v and the shared length cap
};

struct ExperimentConfig {
  std::vector<DatasetSpec> datasets;
  std::vector<size_t> shots{25, 50};
  size_t dev_size = 100;
  std::vector<uint64_t> seeds{1, 2, 3, 4, 5};
  DemoSettings demos;
  ModelConfig model;                // vocab is rebuilt per run from its sample
  std::vector<size_t> batch_sizes;  // non-empty enables the sweep layout
  bool supervise_demo = true;
  DecodeOptions decode;
  bool macro = false;  // micro-averaged scores by default
  std::string out_dir = "out";

  void validate() const;  // throws ConfigError
};

// Strict parse: unknown keys, wrong types and failed invariants raise
// ConfigError naming the JSON path (and line/column for syntax errors).
ExperimentConfig config_from_json_text(const std::string& text,
                                       const std::string& source_name);
ExperimentConfig config_from_file(const std::string& path);

// Effective-settings echo written into manifests; out_dir is omitted so
// run directories stay relocatable.
std::string config_echo_json(const ExperimentConfig& cfg);

struct RunRecord {
  std::string dataset;
  DemoKind kind = DemoKind::Grape;
  size_t shot = 0;
  size_t batch_size = 1;
  uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  std::string dir;
};

struct RunSet {
  std::vector<RunRecord> records;

  bool all_ok() const;
};

// Relative run directory for one combination, without the out_dir
// prefix: <dataset>/<method>/shot-<k>[/bs-<b>]/seed-<s>. The batch level
// appears only when the config requests a sweep.
std::string run_dir_rel(const ExperimentConfig& cfg, const std::string& dataset,
                        DemoKind kind, size_t shot, size_t batch_size, uint64_t seed);

// Subcommand bodies; each returns a process exit code (0 ok, 1 partial
// failures, 2 config or I/O errors) and reports to the given stream.
int cmd_prepare(const ExperimentConfig& cfg, std::ostream& out);
int cmd_sample(const ExperimentConfig& cfg, std::ostream& out);
int cmd_demo(const ExperimentConfig& cfg, std::ostream& out);
int cmd_run(const ExperimentConfig& cfg, std::ostream& out, RunSet* runs_out = nullptr);
int cmd_report(const ExperimentConfig& cfg, std::ostream& out);
int cmd_verify(const std::string& out_dir, std::ostream& out);

// Deterministic aggregate files rebuilt by cmd_run and cmd_report.
std::string report_csv(const RunSet& runs);
std::string summary_csv(const RunSet& runs);
std::string summary_text(const RunSet& runs);

}  // namespace grapener

#endif
