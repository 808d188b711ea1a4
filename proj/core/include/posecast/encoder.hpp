#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "posecast/autodiff.hpp"
#include "posecast/gat.hpp"
#include "posecast/model.hpp"
#include "posecast/types.hpp"

// History encoding: per-frame pose attention graph over the K joints, mean
// pooled and fed through the recurrent encoder to one feature row per person.
// Object and context vectors embed through small MLPs into the same width.

namespace posecast {

// Skeleton connectivity for the sparse pose-graph mode. K=13 and K=14 carry
// the anatomical conventions documented below; any other K falls back to a
// chain. Self loops are always present.
std::vector<std::pair<std::size_t, std::size_t>> skeleton_edges(std::size_t k);
EdgeMask pose_graph_mask(std::size_t k, bool dense);

struct EncodedPerson {
  ad::Var history;             // 1 x hidden
  ad::LstmState final_state;
};

struct EncodedHistory {
  ad::Var features;                        // persons x hidden, context already fused
  std::vector<EncodedPerson> per_person;
};

ad::Var encode_pose_graph(ad::Tape& tape, const Pose& pose, const ModelVars& vars,
                          const ModelConfig& config);

EncodedPerson encode_history(ad::Tape& tape, const PersonTrack& track,
                             const ModelVars& vars, const ModelConfig& config);

// Empty when there are no objects; downstream H2O degrades to self-attention.
std::optional<ad::Var> embed_objects(ad::Tape& tape, const std::vector<ObjectFeature>& objects,
                                     const ModelVars& vars, const ModelConfig& config);

// Absent or disabled context embeds to the zero vector.
ad::Var embed_context(ad::Tape& tape, const std::optional<std::vector<double>>& context,
                      const ModelVars& vars, const ModelConfig& config);

// Runs encode_history for every person, fuses context additively.
EncodedHistory encode_scene(ad::Tape& tape, const SceneSample& sample,
                            const ModelVars& vars, const ModelConfig& config);

}  // namespace posecast
