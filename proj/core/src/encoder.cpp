#include "posecast/encoder.hpp"

#include <stdexcept>

namespace posecast {

using ad::Matrix;
using ad::Tape;
using ad::Var;

std::vector<std::pair<std::size_t, std::size_t>> skeleton_edges(std::size_t k) {
  using E = std::pair<std::size_t, std::size_t>;
  if (k == 13) {
    // 0 neck, 1/2 shoulders, 3/4 elbows, 5/6 wrists, 7/8 hips, 9/10 knees,
    // 11/12 ankles (right before left)
    return {E{0, 1}, E{0, 2}, E{1, 3}, E{2, 4},  E{3, 5},  E{4, 6}, E{0, 7},
            E{0, 8}, E{7, 8}, E{7, 9}, E{8, 10}, E{9, 11}, E{10, 12}};
  }
  if (k == 14) {
    // 0 head, 1 neck, then the 13-joint layout shifted by one
    return {E{0, 1}, E{1, 2}, E{1, 3}, E{2, 4},  E{3, 5},  E{4, 6},  E{5, 7},
            E{1, 8}, E{1, 9}, E{8, 9}, E{8, 10}, E{9, 11}, E{10, 12}, E{11, 13}};
  }
  std::vector<E> chain;
  for (std::size_t j = 0; j + 1 < k; ++j) chain.emplace_back(j, j + 1);
  return chain;
}

EdgeMask pose_graph_mask(std::size_t k, bool dense) {
  return dense ? EdgeMask::dense(k) : EdgeMask::from_edges(k, skeleton_edges(k), true);
}

namespace {

Var mlp_forward(Tape& tape, Var x, const MlpT<Var>& mlp) {
  Var h = x;
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    h = tape.affine(h, mlp.layers[i].weight, mlp.layers[i].bias);
    if (i + 1 < mlp.layers.size()) h = tape.tanh(h);
  }
  return h;
}

}  // namespace

Var encode_pose_graph(Tape& tape, const Pose& pose, const ModelVars& vars,
                      const ModelConfig& config) {
  const std::size_t k = pose.joint_count();
  if (k == 0) throw std::invalid_argument("encode_pose_graph: pose has no joints");
  Matrix states(k, 2 * config.d + 1);
  for (std::size_t j = 0; j < k; ++j) {
    const JointState& js = pose.joints[j];
    if (js.offset.size() != config.d)
      throw std::invalid_argument("encode_pose_graph: joint dimension mismatch");
    for (std::size_t c = 0; c < config.d; ++c) {
      states(j, c) = js.offset[c];
      states(j, config.d + c) = js.location[c];
    }
    states(j, 2 * config.d) = js.visibility;
  }
  Var embedded =
      tape.affine(tape.constant(states), vars.joint_embed.weight, vars.joint_embed.bias);
  return gat_layer(tape, embedded, pose_graph_mask(k, config.pose_graph_dense),
                   vars.pose_gat);
}

EncodedPerson encode_history(Tape& tape, const PersonTrack& track, const ModelVars& vars,
                             const ModelConfig& config) {
  if (track.observed.empty())
    throw std::invalid_argument("encode_history: person " + track.person_id +
                                " has no observed frames");
  ad::LstmVars lstm{vars.encoder_lstm.w_input, vars.encoder_lstm.w_hidden,
                    vars.encoder_lstm.bias};
  Var h = tape.constant(Matrix(1, config.hidden));
  Var c = tape.constant(Matrix(1, config.hidden));
  for (const Pose& pose : track.observed) {
    Var nodes = encode_pose_graph(tape, pose, vars, config);
    Var pooled = tape.mean_rows(nodes);
    ad::LstmState state = tape.lstm_cell(pooled, h, c, lstm);
    h = state.hidden;
    c = state.cell;
  }
  return EncodedPerson{h, ad::LstmState{h, c}};
}

std::optional<Var> embed_objects(Tape& tape, const std::vector<ObjectFeature>& objects,
                                 const ModelVars& vars, const ModelConfig& config) {
  if (objects.empty()) return std::nullopt;
  Matrix input(objects.size(), config.object_input());
  for (std::size_t o = 0; o < objects.size(); ++o) {
    const ObjectFeature& obj = objects[o];
    if (obj.visual.size() != config.object_visual_len)
      throw std::invalid_argument(
          "embed_objects: visual length " + std::to_string(obj.visual.size()) +
          " does not match configured " + std::to_string(config.object_visual_len));
    if (obj.class_id < 0 || static_cast<std::size_t>(obj.class_id) >= config.object_classes)
      throw std::invalid_argument("embed_objects: class id " +
                                  std::to_string(obj.class_id) + " outside configured " +
                                  std::to_string(config.object_classes) + " classes");
    std::size_t c = 0;
    for (double v : obj.visual) input(o, c++) = v;
    input(o, c++) = obj.bbox_center[0];
    input(o, c++) = obj.bbox_center[1];
    input(o, c++) = obj.bbox_size[0];
    input(o, c++) = obj.bbox_size[1];
    input(o, c + static_cast<std::size_t>(obj.class_id)) = 1.0;
  }
  return mlp_forward(tape, tape.constant(input), vars.object_mlp);
}

Var embed_context(Tape& tape, const std::optional<std::vector<double>>& context,
                  const ModelVars& vars, const ModelConfig& config) {
  if (!context.has_value() || !config.use_context)
    return tape.constant(Matrix(1, config.hidden));
  if (context->size() != config.context_len)
    throw std::invalid_argument("embed_context: length " + std::to_string(context->size()) +
                                " does not match configured " +
                                std::to_string(config.context_len));
  Matrix input(1, config.context_len);
  for (std::size_t i = 0; i < context->size(); ++i) input(0, i) = (*context)[i];
  Var h = tape.constant(input);
  // two affine+tanh stages
  for (const auto& layer : vars.context_mlp.layers)
    h = tape.tanh(tape.affine(h, layer.weight, layer.bias));
  return h;
}

EncodedHistory encode_scene(Tape& tape, const SceneSample& sample, const ModelVars& vars,
                            const ModelConfig& config) {
  if (sample.persons.empty()) throw std::invalid_argument("encode_scene: no persons");
  EncodedHistory out;
  Var context = embed_context(tape, sample.context, vars, config);
  std::vector<Var> rows;
  for (const PersonTrack& track : sample.persons) {
    EncodedPerson person = encode_history(tape, track, vars, config);
    rows.push_back(tape.add(person.history, context));
    out.per_person.push_back(std::move(person));
  }
  out.features = rows.size() == 1 ? rows[0] : tape.concat_rows(rows);
  return out;
}

}  // namespace posecast
