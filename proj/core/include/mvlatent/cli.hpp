#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mvlatent/datasets.hpp"
#include "mvlatent/model_factory.hpp"
#include "mvlatent/training.hpp"

namespace mvlatent::cli {

// Fully-resolved run configuration. Parsing is strict: unknown keys are
// rejected and every default is materialized into the persisted copy.
struct DataConfig {
  std::string kind = "synthetic";  // "synthetic" | "dir"
  SynthConfig synth;
  std::string path;  // dataset directory for kind == "dir"
};

struct EvalConfig {
  std::vector<std::string> features = {"z_from_x"};
  std::vector<double> classifier_grid = {0.01, 0.1, 1.0, 10.0};
  bool include_raw_baseline = false;
  bool include_cca_baseline = false;
  bool export_features = false;
  std::size_t threads = 0;  // 0 = auto (capped by MVLATENT_THREADS)
  std::size_t grid_samples = 8;
  std::size_t traversal_size = 8;
};

struct RunConfig {
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;
  std::vector<double> sweep_mu = {1.0, 0.8, 0.5, 0.2};
  std::filesystem::path out_dir = "runs/run";

  void validate() const;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string serialize_run_config(const RunConfig& cfg);

TwoViewDataset load_data(const DataConfig& cfg);

// Subcommand bodies. Each returns after writing its outputs; errors
// propagate as the library exception types, which the binary maps to exit
// codes (2 config, 3 numerical, 4 I/O).
void cmd_gen_data(const RunConfig& cfg, const std::filesystem::path& out_dir);

struct TrainOutcome {
  std::filesystem::path run_dir;
  double first_total = 0.0;
  double last_total = 0.0;
};

TrainOutcome cmd_train(const RunConfig& cfg,
                       const std::filesystem::path& resume_checkpoint = {});

// JSON report text; also written to <out>/report.json.
std::string cmd_eval(const RunConfig& cfg, const std::filesystem::path& checkpoint);

void cmd_reconstruct(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                     const std::filesystem::path& out_pgm);
void cmd_traverse(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                  const std::filesystem::path& out_pgm);

// One row per mu: trains with a shared seed, evaluates tune and test error,
// writes <out>/sweep.csv and returns its text.
std::string cmd_sweep_mu(const RunConfig& cfg, const std::vector<double>& mu_list);

}  // namespace mvlatent::cli
