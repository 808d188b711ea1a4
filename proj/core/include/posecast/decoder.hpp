#pragma once

#include <string>
#include <vector>

#include "posecast/autodiff.hpp"
#include "posecast/interaction.hpp"
#include "posecast/model.hpp"
#include "posecast/types.hpp"

// Recursive future-pose generation. The decoder hidden state starts from the
// fused interaction features, psi reads the skip connection [hidden | input
// pose], offsets accumulate into absolute locations, and between steps the
// hidden states are refined by the shared H2H graph.

namespace posecast {

struct FramePrediction {
  std::vector<double> offsets;     // k*d
  std::vector<double> locations;   // k*d accumulated
  std::vector<double> visibility;  // k probabilities in (0,1)
};

struct PersonForecast {
  std::string person_id;
  std::vector<FramePrediction> frames;
};

struct ForecastResult {
  std::size_t k = 0;
  std::size_t d = 0;
  std::vector<PersonForecast> persons;

  std::size_t horizon() const {
    return persons.empty() ? 0 : persons.front().frames.size();
  }
};

struct DecodeStep {
  ad::Var offsets;     // persons x k*d
  ad::Var vis_logits;  // persons x k
  ad::LstmState state;
};

// One recurrent step plus the psi head over [hidden | input pose].
DecodeStep decode_step(ad::Tape& tape, ad::Var prev_pose_flat, ad::Var hidden, ad::Var cell,
                       const ModelVars& vars, const ModelConfig& config);

// Dense H2H over the persons' decoder hidden states (shared parameters).
ad::Var future_social_refine(ad::Tape& tape, ad::Var hidden_states, const ModelVars& vars);

// Differentiable rollout; every Var is per future frame.
struct RolloutVars {
  std::vector<ad::Var> offsets;     // persons x k*d
  std::vector<ad::Var> locations;   // persons x k*d
  std::vector<ad::Var> vis_logits;  // persons x k
  std::vector<ad::Var> vis_probs;   // persons x k
};

RolloutVars rollout_vars(ad::Tape& tape, const SceneSample& sample, const ModelVars& vars,
                         const ModelConfig& config, std::size_t horizon);

// Validates the sample, runs encode -> message passing -> decode loop on a
// private tape, and extracts plain numbers. Deterministic.
ForecastResult rollout(const SceneSample& sample, const ModelParams& params,
                       const ModelConfig& config, std::size_t horizon);

// Head-averaged future H2H attention per decode step, for inspection.
std::vector<ad::Matrix> trace_future_social(const SceneSample& sample,
                                            const ModelParams& params,
                                            const ModelConfig& config, std::size_t horizon);

}  // namespace posecast
