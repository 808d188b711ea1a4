#pragma once

#include <optional>
#include <vector>

#include "posecast/autodiff.hpp"
#include "posecast/gat.hpp"
#include "posecast/model.hpp"

// Human-object and human-human attention plus the iterative message passing
// that fuses them. Object node values are never updated.

namespace posecast {

struct InteractionOptions {
  bool use_h2o = true;
  bool use_h2h = true;
  bool use_message_passing = true;
  std::size_t iterations = 3;

  static InteractionOptions from(const ModelConfig& c) {
    return {c.use_h2o, c.use_h2h, c.use_message_passing, c.mp_iterations};
  }
};

// One H2O pass: persons attend to every object and themselves over the
// bipartite mask; object rows pass through. Returns the updated person rows.
ad::Var h2o_step(ad::Tape& tape, ad::Var person_feats,
                 const std::optional<ad::Var>& object_feats, const ModelVars& vars);

// One dense H2H pass over the persons.
ad::Var h2h_step(ad::Tape& tape, ad::Var person_feats, const ModelVars& vars);

// f_0 = encoded features; each step n computes m = H2H(H2O(f_n)) and averages
// f_{n+1} = (f_n + m)/2. With message passing disabled the enabled graphs run
// once without the averaging update.
ad::Var message_passing(ad::Tape& tape, ad::Var encoded,
                        const std::optional<ad::Var>& object_feats, const ModelVars& vars,
                        const InteractionOptions& options);

// Inspection path: head-averaged attention matrices per iteration, computed
// from plain values.
struct InteractionTrace {
  struct Iteration {
    ad::Matrix h2o_attention;  // (P+O) x (P+O); object rows all zero
    ad::Matrix h2h_attention;  // P x P
  };
  std::vector<Iteration> iterations;
};

InteractionTrace trace_message_passing(const ad::Matrix& encoded,
                                       const std::optional<ad::Matrix>& object_feats,
                                       const ModelParams& params,
                                       const InteractionOptions& options);

}  // namespace posecast
