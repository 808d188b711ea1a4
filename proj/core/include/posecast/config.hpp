#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "posecast/dataio.hpp"
#include "posecast/metrics.hpp"
#include "posecast/model.hpp"
#include "posecast/training.hpp"

// Flat key-value configuration document shared by every command. Defaults are
// the reference hyperparameters; presets override them for the shipped
// scenarios. Unknown keys are rejected by name.

namespace posecast {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Config {
  // dims
  std::size_t k = 13;
  std::size_t d = 2;
  std::size_t hidden = 256;
  std::size_t node_dim = 64;
  std::size_t heads = 3;
  std::string gat_merge = "concat";
  bool pose_graph_dense = true;

  // horizons
  std::size_t tau_o = 15;
  std::size_t tau_f = 15;
  double frame_interval_ms = 200.0 / 3.0;
  std::vector<double> ms_grid = {100, 240, 500, 640, 900};
  std::string units = "cm";

  // interaction and ablation switches
  std::size_t mp_iterations = 3;
  bool use_context = true;
  bool use_h2o = true;
  bool use_h2h = true;
  bool use_message_passing = true;
  bool use_future_social = true;
  bool teacher_forcing = false;  // debugging only

  // object / context embedding dims
  std::size_t object_visual_len = 1024;
  std::size_t object_classes = 10;
  std::size_t object_mlp_hidden = 1024;
  std::size_t context_len = 512;
  std::size_t context_mlp_hidden = 512;

  // training
  double learning_rate = 5e-5;
  double lr_decay = 0.95;
  std::size_t omega = 2;
  std::size_t epochs_per_stage = 10;
  std::size_t batch_size = 1;
  std::uint64_t seed = 1;
  double val_fraction = 0.1;
  std::size_t max_epochs = 0;

  // metrics
  double beta = 200.0;
  double visibility_threshold = 0.5;

  // generator
  std::size_t gen_samples = 50;
  std::size_t gen_persons = 2;
  std::size_t gen_objects = 0;
  std::string gen_motion = "constant-velocity";
  std::string gen_occlusion = "none";
  std::size_t gen_occl_joint = 0;
  std::size_t gen_occl_from = 0;
  std::size_t gen_occl_to = 0;
  double gen_exit_bound = 64.0;
  double gen_speed_scale = 1.0;
  bool gen_context = false;
  std::size_t gen_follower_lag = 0;

  ModelConfig model() const;
  GeneratorConfig generator() const;
  TrainConfig trainer() const;
  ReportConfig reporter() const;
};

// Throws ConfigError on malformed JSON, unknown keys, wrong value types, or
// invalid combinations.
Config config_from_json_text(const std::string& text, const std::string& source);
Config load_config_file(const std::string& path);

// "--set key=value" style override; the value is parsed as JSON when
// possible, else taken as a bare string.
void apply_override(Config& config, const std::string& key, const std::string& value);

std::string config_to_json(const Config& config);

// Built-in presets (also shipped under configs/).
std::vector<std::string> preset_names();
Config load_preset(const std::string& name);
const std::string& preset_text(const std::string& name);

}  // namespace posecast
