#include "posecast/decoder.hpp"

#include <stdexcept>

#include "posecast/encoder.hpp"

namespace posecast {

using ad::Matrix;
using ad::Tape;
using ad::Var;

DecodeStep decode_step(Tape& tape, Var prev_pose_flat, Var hidden, Var cell,
                       const ModelVars& vars, const ModelConfig& config) {
  if (prev_pose_flat.cols() != config.flat_pose())
    throw std::invalid_argument("decode_step: input pose width " +
                                std::to_string(prev_pose_flat.cols()) + ", expected " +
                                std::to_string(config.flat_pose()));
  ad::LstmVars lstm{vars.decoder_lstm.w_input, vars.decoder_lstm.w_hidden,
                    vars.decoder_lstm.bias};
  ad::LstmState state = tape.lstm_cell(prev_pose_flat, hidden, cell, lstm);
  // skip connection: psi sees the step's hidden output and its input pose
  std::vector<Var> skip = {state.hidden, prev_pose_flat};
  Var head = tape.affine(tape.concat_cols(skip), vars.psi.weight, vars.psi.bias);
  const std::size_t kd = config.k * config.d;
  return DecodeStep{tape.slice_cols(head, 0, kd),
                    tape.slice_cols(head, kd, kd + config.k), state};
}

Var future_social_refine(Tape& tape, Var hidden_states, const ModelVars& vars) {
  if (hidden_states.rows() == 0)
    throw std::invalid_argument("future_social_refine: no persons");
  return gat_layer(tape, hidden_states, EdgeMask::dense(hidden_states.rows()), vars.h2h);
}

namespace {

// Column order that turns [offsets | locations | visibility] into the
// per-joint flattened layout (offset d, location d, visibility 1).
std::vector<std::size_t> interleave_index(std::size_t k, std::size_t d) {
  std::vector<std::size_t> index;
  index.reserve(flat_size(k, d));
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t c = 0; c < d; ++c) index.push_back(j * d + c);
    for (std::size_t c = 0; c < d; ++c) index.push_back(k * d + j * d + c);
    index.push_back(2 * k * d + j);
  }
  return index;
}

Matrix last_observed_flat(const SceneSample& sample) {
  const std::size_t f = flat_size(sample_joints(sample), sample_dim(sample));
  Matrix rows(sample.persons.size(), f);
  for (std::size_t p = 0; p < sample.persons.size(); ++p) {
    std::vector<double> flat = flatten_pose(sample.persons[p].observed.back());
    for (std::size_t c = 0; c < f; ++c) rows(p, c) = flat[c];
  }
  return rows;
}

Matrix last_observed_locations(const SceneSample& sample) {
  const std::size_t k = sample_joints(sample);
  const std::size_t d = sample_dim(sample);
  Matrix rows(sample.persons.size(), k * d);
  for (std::size_t p = 0; p < sample.persons.size(); ++p) {
    const Pose& pose = sample.persons[p].observed.back();
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t c = 0; c < d; ++c) rows(p, j * d + c) = pose.joints[j].location[c];
  }
  return rows;
}

}  // namespace

RolloutVars rollout_vars(Tape& tape, const SceneSample& sample, const ModelVars& vars,
                         const ModelConfig& config, std::size_t horizon) {
  if (sample_joints(sample) != config.k || sample_dim(sample) != config.d)
    throw std::invalid_argument("rollout: sample K/d does not match model config");
  EncodedHistory encoded = encode_scene(tape, sample, vars, config);
  std::optional<Var> objects = embed_objects(tape, sample.objects, vars, config);
  Var fused = message_passing(tape, encoded.features, objects, vars,
                              InteractionOptions::from(config));

  RolloutVars out;
  if (horizon == 0) return out;

  const std::size_t persons = sample.persons.size();
  Var hidden = fused;  // h_dec,0 = f_N
  Var cell = tape.constant(Matrix(persons, config.hidden));
  Var input = tape.constant(last_observed_flat(sample));
  Var locations = tape.constant(last_observed_locations(sample));
  const std::vector<std::size_t> index = interleave_index(config.k, config.d);

  for (std::size_t t = 0; t < horizon; ++t) {
    DecodeStep step = decode_step(tape, input, hidden, cell, vars, config);
    locations = tape.add(locations, step.offsets);
    Var probs = tape.sigmoid(step.vis_logits);
    out.offsets.push_back(step.offsets);
    out.locations.push_back(locations);
    out.vis_logits.push_back(step.vis_logits);
    out.vis_probs.push_back(probs);

    cell = step.state.cell;
    hidden = config.use_future_social ? future_social_refine(tape, step.state.hidden, vars)
                                      : step.state.hidden;
    if (config.teacher_forcing && sample.persons.front().future &&
        sample.persons.front().future->size() > t) {
      Matrix truth(persons, config.flat_pose());
      for (std::size_t p = 0; p < persons; ++p) {
        std::vector<double> flat = flatten_pose((*sample.persons[p].future)[t]);
        for (std::size_t c = 0; c < flat.size(); ++c) truth(p, c) = flat[c];
      }
      input = tape.constant(truth);
    } else {
      std::vector<Var> blocks = {step.offsets, locations, probs};
      input = tape.gather_cols(tape.concat_cols(blocks), index);
    }
  }
  return out;
}

ForecastResult rollout(const SceneSample& sample, const ModelParams& params,
                       const ModelConfig& config, std::size_t horizon) {
  ValidationResult valid = validate_sample(sample);
  if (!valid.ok())
    throw std::invalid_argument("rollout: invalid sample: " +
                                valid.violations.front().message);
  Tape tape;
  ModelVars vars = lift_params(tape, params, false);
  RolloutVars rv = rollout_vars(tape, sample, vars, config, horizon);

  ForecastResult result;
  result.k = config.k;
  result.d = config.d;
  result.persons.resize(sample.persons.size());
  for (std::size_t p = 0; p < sample.persons.size(); ++p)
    result.persons[p].person_id = sample.persons[p].person_id;
  for (std::size_t t = 0; t < horizon; ++t) {
    const Matrix& off = rv.offsets[t].value();
    const Matrix& loc = rv.locations[t].value();
    const Matrix& vis = rv.vis_probs[t].value();
    for (std::size_t p = 0; p < sample.persons.size(); ++p) {
      FramePrediction frame;
      frame.offsets.assign(off.data() + p * off.cols(), off.data() + (p + 1) * off.cols());
      frame.locations.assign(loc.data() + p * loc.cols(), loc.data() + (p + 1) * loc.cols());
      frame.visibility.assign(vis.data() + p * vis.cols(), vis.data() + (p + 1) * vis.cols());
      result.persons[p].frames.push_back(std::move(frame));
    }
  }
  return result;
}

std::vector<Matrix> trace_future_social(const SceneSample& sample, const ModelParams& params,
                                        const ModelConfig& config, std::size_t horizon) {
  Tape tape;
  ModelVars vars = lift_params(tape, params, false);
  EncodedHistory encoded = encode_scene(tape, sample, vars, config);
  std::optional<Var> objects = embed_objects(tape, sample.objects, vars, config);
  Var fused = message_passing(tape, encoded.features, objects, vars,
                              InteractionOptions::from(config));

  std::vector<Matrix> per_step;
  const std::size_t persons = sample.persons.size();
  Var hidden = fused;
  Var cell = tape.constant(Matrix(persons, config.hidden));
  Var input = tape.constant(last_observed_flat(sample));
  Var locations = tape.constant(last_observed_locations(sample));
  const std::vector<std::size_t> index = interleave_index(config.k, config.d);
  for (std::size_t t = 0; t < horizon; ++t) {
    DecodeStep step = decode_step(tape, input, hidden, cell, vars, config);
    locations = tape.add(locations, step.offsets);
    Var probs = tape.sigmoid(step.vis_logits);
    per_step.push_back(
        attention_weights(step.state.hidden.value(), EdgeMask::dense(persons), params.h2h));
    cell = step.state.cell;
    hidden = config.use_future_social ? future_social_refine(tape, step.state.hidden, vars)
                                      : step.state.hidden;
    std::vector<Var> blocks = {step.offsets, locations, probs};
    input = tape.gather_cols(tape.concat_cols(blocks), index);
  }
  return per_step;
}

}  // namespace posecast
