#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include <json.hpp>

#include "har/data.hpp"
#include "har/eval.hpp"
#include "har/models.hpp"
#include "har/training.hpp"

namespace har::experiment {

// One experiment = one JSON file: a dataset source (a directory or a
// synthesis block, never both), an ordered preprocessing step list, the
// model and training blocks, an output directory and a global seed.
// Component seeds left unset in the file are derived from the global seed
// through named streams, so one --seed value reshuffles everything.
struct ExperimentConfig {
  std::string dataset_path;                 // empty when synth is used
  std::optional<data::SynthConfig> synth;
  nlohmann::json preprocessing = nlohmann::json::array();
  models::ModelConfig model;
  training::TrainConfig training;
  std::string output_dir;
  std::uint64_t seed = 0;

  void validate() const;
  // Fully resolved: every default and derived seed materialized. Parsing
  // the result reproduces this config exactly.
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::string& path);
};

// Commands behind the CLI subcommands. Each throws har::Error; the C API
// and CLI map ErrorKind onto exit codes. Artifacts land in
// config.output_dir; no command writes into its input dataset directory.

// Generates the configured synthetic dataset into <out>/dataset and
// returns a per-class counts table.
std::string cmd_synth(const ExperimentConfig& config);

// Loads a dataset directory and returns its summary table.
std::string cmd_inspect(const std::string& dataset_dir);

struct PreprocessSummary {
  std::size_t channels = 0;
  std::size_t time = 0;
  std::map<std::string, std::size_t> split_counts;
  std::string dataset_dir;  // where the transformed dataset was written
};

// Applies the preprocessing steps and materializes the result into
// <out>/preprocessed so later runs can point straight at it.
PreprocessSummary cmd_preprocess(const ExperimentConfig& config);

struct TrainOutcome {
  training::TrainHistory history;
  double best_val_loss = 0.0;
  std::string checkpoint_dir;
  std::string history_csv;
  std::string config_snapshot;
};

// preprocess -> train -> artifacts (checkpoint/, history.csv,
// resolved_config.json). On divergence the artifacts are still written,
// then a numeric error is raised so the CLI exits 4.
TrainOutcome cmd_train(const ExperimentConfig& config);

// Evaluates a checkpoint (its best parameters when present) on one split
// of the configured dataset; writes metrics.json and confusion.csv.
// checkpoint_dir defaults to <out>/checkpoint when empty.
eval::EvalReport cmd_eval(const ExperimentConfig& config,
                          const std::string& checkpoint_dir,
                          const std::string& split);

// Benchmarks the configured model; writes <out>/bench.json when an output
// directory is set.
eval::BenchmarkStats cmd_bench(const ExperimentConfig& config,
                               std::size_t repetitions,
                               eval::Precision precision);

// Side-by-side table of two exported metrics files; deltas are B minus A.
std::string cmd_compare(const std::string& metrics_a,
                        const std::string& metrics_b);

}  // namespace har::experiment
