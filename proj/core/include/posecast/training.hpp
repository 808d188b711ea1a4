#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "posecast/decoder.hpp"
#include "posecast/model.hpp"
#include "posecast/types.hpp"

// Joint loss with visibility masking and per-visible-joint normalization,
// curriculum over growing horizons, and the optimization loop. Training is
// RNG-free after initialization, so runs -- and checkpoint resumes -- are
// bit-reproducible.

namespace posecast {

struct LossBreakdown {
  double mse_offset = 0.0;      // raw masked sum over the covered horizon
  double mse_location = 0.0;
  double bce_visibility = 0.0;  // never masked, never divided by eta
  double eta = 0.0;             // visible ground-truth joint entries
  double total = 0.0;           // (mse_offset + mse_location)/eta + bce
};

struct LossVars {
  ad::Var total;
  LossBreakdown numbers;
};

// Loss over the first `horizon` future frames of the rollout. Ground-truth-
// invisible joints contribute no coordinate gradient at all.
LossVars compute_loss(ad::Tape& tape, const RolloutVars& rollout, const SceneSample& sample,
                      std::size_t horizon);

// Numeric-only convenience over a finished forecast (BCE from probabilities).
LossBreakdown loss(const ForecastResult& forecast, const SceneSample& truth,
                   std::size_t horizon);

// [omega, 2*omega, ...] clipped so the last stage is exactly tau_f.
std::vector<std::size_t> curriculum_stages(std::size_t tau_f, std::size_t omega);

struct TrainConfig {
  std::size_t epochs_per_stage = 10;
  std::size_t batch_size = 1;
  std::uint64_t seed = 1;
  double learning_rate = 5e-5;
  double lr_decay = 0.95;
  std::size_t omega = 2;
  double val_fraction = 0.1;       // deterministic tail split
  std::size_t max_global_epochs = 0;  // 0 runs the full schedule; otherwise stop
                                      // after this many epochs (checkpointable)
};

struct TrainLogRow {
  std::size_t epoch = 0;  // global, 1-based
  std::size_t stage = 0;  // 1-based
  std::size_t horizon = 0;
  LossBreakdown mean_loss;          // mean over training samples
  std::optional<double> val_vim;    // at the stage horizon's final frame
};

struct TrainHooks {
  std::function<void(std::size_t stage, std::size_t horizon, const ModelParams&)>
      on_stage_start;
  std::function<void(std::size_t stage, std::size_t horizon, const ModelParams&)>
      on_stage_end;
  std::function<void(const TrainLogRow&)> on_epoch;
};

struct TrainingNanError : std::runtime_error {
  explicit TrainingNanError(std::size_t sample, const std::string& id)
      : std::runtime_error("loss became non-finite on sample " + std::to_string(sample) +
                           " (person ids start at '" + id + "')"),
        sample_index(sample) {}
  std::size_t sample_index;
};

struct TrainState {
  ModelParams params;
  ad::AdamState adam;
  std::size_t next_stage = 0;      // 0-based index into the stage list
  std::size_t epochs_in_stage = 0; // completed epochs within that stage
  std::size_t steps = 0;           // optimizer steps taken
};

struct TrainResult {
  ModelParams params;
  ad::AdamState adam;
  std::vector<TrainLogRow> log;
  std::size_t steps = 0;
  std::vector<std::size_t> stages;
  std::size_t next_stage = 0;       // 0-based; == stages.size() when finished
  std::size_t epochs_in_stage = 0;
  bool finished = true;

  TrainState state() const {
    return TrainState{params, adam, next_stage, epochs_in_stage, steps};
  }
};

TrainResult train(const std::vector<SceneSample>& dataset, const ModelConfig& model_config,
                  const TrainConfig& train_config, const TrainHooks& hooks = {},
                  const std::optional<TrainState>& resume = std::nullopt);

// epoch,stage,horizon,mse_offset,mse_location,bce,eta,total,val_vim
void write_train_log_csv(std::ostream& out, const std::vector<TrainLogRow>& log);

// Checkpoint: model config, progress, Adam state, then every array
// (hexfloat, roundtrip-exact).
struct Checkpoint {
  ModelConfig config;
  TrainState state;
};

void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(std::istream& in);
void write_checkpoint_file(const std::string& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint_file(const std::string& path);

}  // namespace posecast
