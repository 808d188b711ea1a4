#include "posecast/interaction.hpp"

#include <stdexcept>

namespace posecast {

using ad::Matrix;
using ad::Tape;
using ad::Var;

Var h2o_step(Tape& tape, Var person_feats, const std::optional<Var>& object_feats,
             const ModelVars& vars) {
  const std::size_t persons = person_feats.rows();
  const std::size_t objects = object_feats ? object_feats->rows() : 0;
  Var nodes = person_feats;
  if (objects > 0) {
    std::vector<Var> rows = {person_feats, *object_feats};
    nodes = tape.concat_rows(rows);
  }
  Var updated = gat_layer(tape, nodes, EdgeMask::bipartite(persons, objects), vars.h2o);
  return objects > 0 ? tape.slice_rows(updated, 0, persons) : updated;
}

Var h2h_step(Tape& tape, Var person_feats, const ModelVars& vars) {
  if (person_feats.rows() == 0) throw std::invalid_argument("h2h_step: no persons");
  return gat_layer(tape, person_feats, EdgeMask::dense(person_feats.rows()), vars.h2h);
}

Var message_passing(Tape& tape, Var encoded, const std::optional<Var>& object_feats,
                    const ModelVars& vars, const InteractionOptions& options) {
  auto pass = [&](Var f) {
    Var m = f;
    if (options.use_h2o) m = h2o_step(tape, m, object_feats, vars);
    if (options.use_h2h) m = h2h_step(tape, m, vars);
    return m;
  };
  if (!options.use_message_passing)
    return (options.use_h2o || options.use_h2h) ? pass(encoded) : encoded;
  Var f = encoded;
  for (std::size_t n = 0; n < options.iterations; ++n)
    f = tape.scale(tape.add(f, pass(f)), 0.5);
  return f;
}

InteractionTrace trace_message_passing(const Matrix& encoded,
                                       const std::optional<Matrix>& object_feats,
                                       const ModelParams& params,
                                       const InteractionOptions& options) {
  const std::size_t persons = encoded.rows();
  const std::size_t objects = object_feats ? object_feats->rows() : 0;
  InteractionTrace trace;

  Tape tape;
  Var f = tape.constant(encoded);
  std::optional<Var> obj;
  if (object_feats) obj = tape.constant(*object_feats);
  ModelVars vars = lift_params(tape, params, false);

  const std::size_t steps = options.use_message_passing ? options.iterations : 1;
  for (std::size_t n = 0; n < steps; ++n) {
    InteractionTrace::Iteration iter;
    // attention over the node state entering this iteration
    Matrix stacked(persons + objects, encoded.cols());
    for (std::size_t i = 0; i < persons; ++i)
      for (std::size_t c = 0; c < encoded.cols(); ++c) stacked(i, c) = f.value()(i, c);
    for (std::size_t o = 0; o < objects; ++o)
      for (std::size_t c = 0; c < encoded.cols(); ++c)
        stacked(persons + o, c) = (*object_feats)(o, c);
    Var m = f;
    if (options.use_h2o) {
      iter.h2o_attention =
          attention_weights(stacked, EdgeMask::bipartite(persons, objects), params.h2o);
      m = h2o_step(tape, m, obj, vars);
    }
    if (options.use_h2h) {
      iter.h2h_attention = attention_weights(m.value(), EdgeMask::dense(persons), params.h2h);
      m = h2h_step(tape, m, vars);
    }
    f = options.use_message_passing ? tape.scale(tape.add(f, m), 0.5) : m;
    trace.iterations.push_back(std::move(iter));
  }
  return trace;
}

}  // namespace posecast
