#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "posecast/decoder.hpp"
#include "posecast/types.hpp"

// The sequence file format (the artifact's canonical interchange), the
// synthetic scene generator, and the oracle baseline predictors.
//
// Format sketch (line oriented, "%.17g" numbers so doubles roundtrip
// exactly):
//
//   posecast-seq 1
//   k 3
//   d 2
//   tau_o 8
//   tau_f 8
//   frame_interval_ms 100
//   units px
//   vis_prob 0
//   end_header
//   sample 0
//   persons 2
//   objects 1
//   context 0
//   person p0
//   o <F numbers>            (tau_o observed frames, flattened pose layout)
//   f <F numbers>            (tau_f future frames; +K raw probabilities
//                             appended when vis_prob is 1)
//   ...
//   object <class> <cx> <cy> <w> <h> <visual...>
//   ctx <numbers>            (only when context > 0)
//   end_sample

namespace posecast {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SequenceHeader {
  int version = 1;
  std::size_t k = 0;
  std::size_t d = 0;
  std::size_t tau_o = 0;
  std::size_t tau_f = 0;
  double frame_interval_ms = 0.0;
  std::string units = "px";
  bool vis_prob = false;  // future lines carry raw visibility probabilities
};

// probs[person][frame][joint], populated only when the header says vis_prob.
using SampleVisProbs = std::vector<std::vector<std::vector<double>>>;

struct Dataset {
  SequenceHeader header;
  std::vector<SceneSample> samples;
  std::vector<SampleVisProbs> probs;  // parallel to samples when vis_prob
};

void write_dataset(std::ostream& out, const Dataset& dataset);
Dataset parse_dataset(std::istream& in, const std::string& source_name);
void write_dataset_file(const std::string& path, const Dataset& dataset);
Dataset parse_dataset_file(const std::string& path);

enum class MotionModel { constant_velocity, sinusoidal_limb, follower };
enum class OcclusionModel { none, window, exit };

// Constant-velocity coordinates are dyadic rationals (multiples of 1/8), so
// closed-form locations, stored offsets, and the constant-velocity baseline
// reconstruction are floating-point exact. follower mode: person 0 walks a
// curved path, person 1 repeats it lagged by follower_lag frames (default
// tau_f), persons 2+ move at constant velocity.
struct GeneratorConfig {
  std::size_t n_samples = 1;
  std::size_t n_persons = 2;
  std::size_t k = 3;
  std::size_t d = 2;
  std::size_t tau_o = 8;
  std::size_t tau_f = 8;
  double frame_interval_ms = 100.0;
  std::string units = "px";
  MotionModel motion = MotionModel::constant_velocity;
  double speed_scale = 1.0;  // 0 freezes every constant-velocity person

  OcclusionModel occlusion = OcclusionModel::none;
  std::size_t occl_joint = 0;  // window mode: this joint of every person
  std::size_t occl_from = 0;   // inclusive global frame index
  std::size_t occl_to = 0;     // inclusive
  double exit_bound = 64.0;    // exit mode: |coordinate| beyond this disappears

  std::size_t n_objects = 0;
  std::size_t object_visual_len = 5;
  std::size_t object_classes = 4;
  bool with_context = false;
  std::size_t context_len = 4;

  std::size_t follower_lag = 0;  // 0 means tau_f
  std::uint64_t seed = 1;
};

Dataset generate(const GeneratorConfig& config);

// Repeats the last observed pose: zero offsets, frozen locations, copied
// visibility.
ForecastResult baseline_zero_velocity(const SceneSample& sample);

// Extrapolates the last observed offset linearly; requires tau_o >= 2.
ForecastResult baseline_constant_velocity(const SceneSample& sample);

// Predictions reuse the sequence schema: observed blocks copied from the
// source, futures from the forecast with visibility thresholded and the raw
// probabilities kept in the side channel.
Dataset forecast_to_dataset(const Dataset& source,
                            const std::vector<ForecastResult>& forecasts,
                            double vis_threshold = 0.5);

}  // namespace posecast
