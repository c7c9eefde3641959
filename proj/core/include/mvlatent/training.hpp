#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "mvlatent/datasets_fwd.hpp"
#include "mvlatent/objectives.hpp"

namespace mvlatent {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 0.0;  // 0 disables gradient clipping
};

// First/second moment estimates per parameter, in the bundle's canonical
// parameter order.
class AdamState {
 public:
  AdamState() = default;
  AdamState(const std::vector<const Tensor*>& params, AdamConfig cfg);

  void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads);

  std::uint64_t t() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }
  void restore(std::vector<Tensor> m, std::vector<Tensor> v, std::uint64_t t);

 private:
  AdamConfig cfg_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::uint64_t t_ = 0;
};

void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
               AdamState& state);

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 100;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  std::size_t mc_samples = 1;
  double mu = 1.0;
  double dropout_rate = 0.0;
  double w_x = 1.0;
  double w_y = 1.0;
  double margin = 0.5;
  double clip_norm = 0.0;
  std::size_t eval_every = 0;  // checkpoint every k epochs; 0 = final only

  ObjectiveConfig objective_config() const;
};

struct MetricsRow {
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;  // global step index
  ElboTerms terms;
  double wall_ms = 0.0;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsRow& row);

// Trainer progress carried across checkpoints; epoch streams are derived
// statelessly from (seed, epoch), so resuming at an epoch boundary replays
// the uninterrupted run exactly.
struct TrainerState {
  std::uint64_t seed = 0;
  std::uint64_t next_epoch = 0;
  std::uint64_t global_step = 0;
  std::optional<AdamState> adam;
};

struct TrainResult {
  std::vector<MetricsRow> rows;
  TrainerState state;
};

// Runs epochs x ceil(N/batch) steps over the train split with a seeded
// per-epoch shuffle. Writes metrics.csv and checkpoint/ under run_dir when
// given. Aborts with NumericError (naming the step and term breakdown) on
// a non-finite loss.
TrainResult train(ModelBundle& bundle, const TwoViewDataset& data,
                  const TrainConfig& config,
                  const std::filesystem::path& run_dir = {},
                  const TrainerState* resume = nullptr);

inline constexpr int kCheckpointFormatVersion = 1;

void save_checkpoint(const std::filesystem::path& dir, const ModelBundle& bundle,
                     const TrainerState& state);

struct LoadedCheckpoint {
  ModelBundle bundle;
  TrainerState state;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

// Seeded Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> shuffled_indices(std::size_t n, Rng rng);

}  // namespace mvlatent
