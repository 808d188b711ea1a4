#include "posecast/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "posecast/metrics.hpp"

namespace posecast {

using ad::Matrix;
using ad::Tape;
using ad::Var;

namespace {

struct FrameTargets {
  Matrix offsets;    // persons x k*d
  Matrix locations;  // persons x k*d
  Matrix visibility; // persons x k, binary
  ad::BoolMatrix coord_mask;  // persons x k*d, true where the joint is visible
  std::size_t visible_joints = 0;
};

FrameTargets frame_targets(const SceneSample& sample, std::size_t frame, std::size_t k,
                           std::size_t d) {
  const std::size_t persons = sample.persons.size();
  FrameTargets t{Matrix(persons, k * d), Matrix(persons, k * d), Matrix(persons, k),
                 ad::BoolMatrix(persons, k * d), 0};
  for (std::size_t p = 0; p < persons; ++p) {
    const Pose& pose = (*sample.persons[p].future)[frame];
    for (std::size_t j = 0; j < k; ++j) {
      const JointState& js = pose.joints[j];
      const bool visible = js.visibility == 1.0;
      t.visibility(p, j) = visible ? 1.0 : 0.0;
      if (visible) ++t.visible_joints;
      for (std::size_t i = 0; i < d; ++i) {
        t.offsets(p, j * d + i) = js.offset[i];
        t.locations(p, j * d + i) = js.location[i];
        t.coord_mask(p, j * d + i) = visible;
      }
    }
  }
  return t;
}

}  // namespace

LossVars compute_loss(Tape& tape, const RolloutVars& rollout, const SceneSample& sample,
                      std::size_t horizon) {
  if (horizon > rollout.offsets.size())
    throw std::invalid_argument("compute_loss: horizon exceeds the rollout");
  if (sample.persons.empty() || !sample.persons.front().future ||
      sample.persons.front().future->size() < horizon)
    throw std::invalid_argument("compute_loss: sample lacks " + std::to_string(horizon) +
                                " future frames");
  const std::size_t k = sample_joints(sample);
  const std::size_t d = sample_dim(sample);

  Var mse_off = tape.constant(Matrix::scalar(0.0));
  Var mse_loc = tape.constant(Matrix::scalar(0.0));
  Var bce = tape.constant(Matrix::scalar(0.0));
  std::size_t eta = 0;
  for (std::size_t f = 0; f < horizon; ++f) {
    FrameTargets targets = frame_targets(sample, f, k, d);
    eta += targets.visible_joints;
    mse_off = tape.add(mse_off,
                       tape.mse_masked(rollout.offsets[f], targets.offsets,
                                       targets.coord_mask));
    mse_loc = tape.add(mse_loc,
                       tape.mse_masked(rollout.locations[f], targets.locations,
                                       targets.coord_mask));
    bce = tape.add(bce, tape.bce_logits(rollout.vis_logits[f], targets.visibility));
  }

  LossVars out;
  out.numbers.mse_offset = mse_off.value()(0, 0);
  out.numbers.mse_location = mse_loc.value()(0, 0);
  out.numbers.bce_visibility = bce.value()(0, 0);
  out.numbers.eta = static_cast<double>(eta);
  if (eta > 0) {
    Var mse = tape.scale(tape.add(mse_off, mse_loc), 1.0 / static_cast<double>(eta));
    out.total = tape.add(mse, bce);
  } else {
    out.total = bce;  // nothing visible: only the visibility loss remains
  }
  out.numbers.total = out.total.value()(0, 0);
  return out;
}

LossBreakdown loss(const ForecastResult& forecast, const SceneSample& truth,
                   std::size_t horizon) {
  if (forecast.horizon() < horizon)
    throw std::invalid_argument("loss: forecast horizon too short");
  const std::size_t k = sample_joints(truth);
  const std::size_t d = sample_dim(truth);
  LossBreakdown out;
  std::size_t eta = 0;
  for (std::size_t f = 0; f < horizon; ++f) {
    FrameTargets targets = frame_targets(truth, f, k, d);
    eta += targets.visible_joints;
    for (std::size_t p = 0; p < truth.persons.size(); ++p) {
      const FramePrediction& frame = forecast.persons[p].frames[f];
      for (std::size_t i = 0; i < k * d; ++i) {
        if (!targets.coord_mask(p, i)) continue;
        double doff = frame.offsets[i] - targets.offsets(p, i);
        double dloc = frame.locations[i] - targets.locations(p, i);
        out.mse_offset += doff * doff;
        out.mse_location += dloc * dloc;
      }
      for (std::size_t j = 0; j < k; ++j) {
        double prob = frame.visibility[j];
        double t = targets.visibility(p, j);
        out.bce_visibility += -(t * std::log(prob) + (1.0 - t) * std::log(1.0 - prob));
      }
    }
  }
  out.eta = static_cast<double>(eta);
  out.total = (eta > 0 ? (out.mse_offset + out.mse_location) / out.eta : 0.0) +
              out.bce_visibility;
  return out;
}

std::vector<std::size_t> curriculum_stages(std::size_t tau_f, std::size_t omega) {
  if (omega < 1) throw std::invalid_argument("curriculum_stages: omega must be >= 1");
  if (omega > tau_f) throw std::invalid_argument("curriculum_stages: omega exceeds tau_f");
  std::vector<std::size_t> stages;
  for (std::size_t h = omega; h < tau_f; h += omega) stages.push_back(h);
  stages.push_back(tau_f);
  return stages;
}

namespace {

std::optional<double> validation_vim(const std::vector<SceneSample>& val,
                                     const ModelParams& params, const ModelConfig& config,
                                     std::size_t horizon) {
  if (val.empty()) return std::nullopt;
  double sum = 0.0;
  std::size_t count = 0;
  for (const SceneSample& sample : val) {
    ForecastResult forecast = rollout(sample, params, config, horizon);
    EvalScene pred = eval_view(forecast, sample.frame_interval_ms, 0.5);
    EvalScene truth = truncate_frames(eval_view_truth(sample), horizon);
    if (auto v = vim(pred, truth, horizon - 1)) {
      sum += *v;
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return sum / static_cast<double>(count);
}

}  // namespace

TrainResult train(const std::vector<SceneSample>& dataset, const ModelConfig& model_config,
                  const TrainConfig& train_config, const TrainHooks& hooks,
                  const std::optional<TrainState>& resume) {
  TrainResult result;
  result.params = resume ? resume->params : init_params(model_config, train_config.seed);
  std::vector<Matrix*> params = param_ptrs(result.params);
  result.adam = resume ? resume->adam
                       : ad::AdamState::init(
                             std::vector<const Matrix*>(params.begin(), params.end()),
                             train_config.learning_rate, train_config.lr_decay);
  result.steps = resume ? resume->steps : 0;

  if (dataset.empty()) return result;
  if (!dataset.front().persons.front().future)
    throw std::invalid_argument("train: dataset has no future ground truth");
  const std::size_t tau_f = dataset.front().persons.front().future->size();
  result.stages = curriculum_stages(tau_f, train_config.omega);

  const std::size_t n_val = std::min(
      dataset.size() - 1,
      static_cast<std::size_t>(train_config.val_fraction * static_cast<double>(dataset.size())));
  std::vector<SceneSample> train_set(dataset.begin(), dataset.end() - n_val);
  std::vector<SceneSample> val_set(dataset.end() - n_val, dataset.end());

  const std::size_t batch =
      train_config.batch_size == 0 ? 1 : train_config.batch_size;
  std::vector<Matrix> grad_accum;
  for (Matrix* p : params) grad_accum.emplace_back(p->rows(), p->cols());

  std::size_t global_epoch =
      resume ? resume->next_stage * train_config.epochs_per_stage + resume->epochs_in_stage
             : 0;
  result.next_stage = result.stages.size();
  result.epochs_in_stage = 0;
  for (std::size_t s = resume ? resume->next_stage : 0; s < result.stages.size(); ++s) {
    const std::size_t horizon = result.stages[s];
    if (hooks.on_stage_start) hooks.on_stage_start(s + 1, horizon, result.params);
    std::size_t first_epoch = (resume && s == resume->next_stage) ? resume->epochs_in_stage : 0;
    for (std::size_t epoch = first_epoch; epoch < train_config.epochs_per_stage; ++epoch) {
      LossBreakdown epoch_loss;
      std::size_t in_batch = 0;
      for (Matrix& g : grad_accum)
        std::fill(g.data(), g.data() + g.size(), 0.0);

      for (std::size_t idx = 0; idx < train_set.size(); ++idx) {
        const SceneSample& sample = train_set[idx];
        Tape tape;
        ModelVars vars = lift_params(tape, result.params, true);
        RolloutVars rv = rollout_vars(tape, sample, vars, model_config, horizon);
        LossVars lv = compute_loss(tape, rv, sample, horizon);
        if (!std::isfinite(lv.numbers.total))
          throw TrainingNanError(idx, sample.persons.front().person_id);
        epoch_loss.mse_offset += lv.numbers.mse_offset;
        epoch_loss.mse_location += lv.numbers.mse_location;
        epoch_loss.bce_visibility += lv.numbers.bce_visibility;
        epoch_loss.eta += lv.numbers.eta;
        epoch_loss.total += lv.numbers.total;
        tape.backward(lv.total);

        std::size_t slot = 0;
        visit_params(vars, [&](const std::string&, Var& v) {
          const Matrix& g = v.grad();
          Matrix& acc = grad_accum[slot++];
          for (std::size_t i = 0; i < g.size(); ++i) acc.at(i) += g.at(i);
        });
        ++in_batch;

        if (in_batch == batch || idx + 1 == train_set.size()) {
          const double inv = 1.0 / static_cast<double>(in_batch);
          for (Matrix& g : grad_accum)
            for (std::size_t i = 0; i < g.size(); ++i) g.at(i) *= inv;
          std::vector<const Matrix*> grads;
          for (const Matrix& g : grad_accum) grads.push_back(&g);
          ad::adam_step(params, grads, result.adam);
          result.steps += 1;
          for (Matrix& g : grad_accum)
            std::fill(g.data(), g.data() + g.size(), 0.0);
          in_batch = 0;
        }
      }

      const double inv_n = 1.0 / static_cast<double>(train_set.size());
      epoch_loss.mse_offset *= inv_n;
      epoch_loss.mse_location *= inv_n;
      epoch_loss.bce_visibility *= inv_n;
      epoch_loss.eta *= inv_n;
      epoch_loss.total *= inv_n;

      ++global_epoch;
      TrainLogRow row{global_epoch, s + 1, horizon, epoch_loss,
                      validation_vim(val_set, result.params, model_config, horizon)};
      result.log.push_back(row);
      if (hooks.on_epoch) hooks.on_epoch(row);
      result.adam.decay_learning_rate();

      if (train_config.max_global_epochs > 0 &&
          global_epoch >= train_config.max_global_epochs &&
          !(s + 1 == result.stages.size() && epoch + 1 == train_config.epochs_per_stage)) {
        result.finished = false;
        result.next_stage = s;
        result.epochs_in_stage = epoch + 1;
        if (result.epochs_in_stage == train_config.epochs_per_stage) {
          if (hooks.on_stage_end) hooks.on_stage_end(s + 1, horizon, result.params);
          result.next_stage = s + 1;
          result.epochs_in_stage = 0;
        }
        return result;
      }
    }
    if (hooks.on_stage_end) hooks.on_stage_end(s + 1, horizon, result.params);
  }
  return result;
}

void write_train_log_csv(std::ostream& out, const std::vector<TrainLogRow>& log) {
  out << "epoch,stage,horizon,mse_offset,mse_location,bce,eta,total,val_vim\n";
  for (const TrainLogRow& row : log) {
    out << row.epoch << "," << row.stage << "," << row.horizon << ","
        << row.mean_loss.mse_offset << "," << row.mean_loss.mse_location << ","
        << row.mean_loss.bce_visibility << "," << row.mean_loss.eta << ","
        << row.mean_loss.total << ",";
    if (row.val_vim) out << *row.val_vim;
    out << "\n";
  }
}

namespace {

void put_hex(std::ostream& out, double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%a", v);
  out << buf;
}

constexpr const char* kMergeNames[] = {"concat", "average"};

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint) {
  const ModelConfig& c = checkpoint.config;
  out << "posecast-checkpoint 1\n";
  out << "model k " << c.k << " d " << c.d << " hidden " << c.hidden << " node_dim "
      << c.node_dim << " heads " << c.heads << " merge "
      << kMergeNames[static_cast<int>(c.merge)] << " pose_dense " << c.pose_graph_dense
      << " mp_iterations " << c.mp_iterations << " use_h2o " << c.use_h2o << " use_h2h "
      << c.use_h2h << " use_mp " << c.use_message_passing << " use_future "
      << c.use_future_social << " use_context " << c.use_context << " visual_len "
      << c.object_visual_len << " classes " << c.object_classes << " obj_hidden "
      << c.object_mlp_hidden << " ctx_len " << c.context_len << " ctx_hidden "
      << c.context_mlp_hidden << "\n";
  const TrainState& s = checkpoint.state;
  out << "progress stage " << s.next_stage << " epoch " << s.epochs_in_stage << " steps "
      << s.steps << "\n";
  out << "adam step_count " << s.adam.step_count << " lr ";
  put_hex(out, s.adam.learning_rate);
  out << " decay ";
  put_hex(out, s.adam.decay);
  out << " beta1 ";
  put_hex(out, s.adam.beta1);
  out << " beta2 ";
  put_hex(out, s.adam.beta2);
  out << " epsilon ";
  put_hex(out, s.adam.epsilon);
  out << "\n";

  auto& params = const_cast<ModelParams&>(s.params);
  write_arrays(out, params);
  std::size_t slot = 0;
  visit_params(params, [&](const std::string& name, Matrix&) {
    write_named_array(out, "adam.m." + name, s.adam.first_moment[slot]);
    write_named_array(out, "adam.v." + name, s.adam.second_moment[slot]);
    ++slot;
  });
  out << "end\n";
}

Checkpoint read_checkpoint(std::istream& in) {
  auto expect = [&](const std::string& what) {
    std::string tok;
    if (!(in >> tok) || tok != what)
      throw std::runtime_error("checkpoint: expected '" + what + "', found '" + tok + "'");
  };
  auto read_u = [&](const std::string& key) {
    expect(key);
    std::size_t v;
    if (!(in >> v)) throw std::runtime_error("checkpoint: bad value for " + key);
    return v;
  };
  auto read_d = [&](const std::string& key) {
    expect(key);
    std::string tok;
    if (!(in >> tok)) throw std::runtime_error("checkpoint: bad value for " + key);
    return std::strtod(tok.c_str(), nullptr);
  };

  expect("posecast-checkpoint");
  std::size_t version;
  if (!(in >> version) || version != 1)
    throw std::runtime_error("checkpoint: unsupported version");

  Checkpoint out;
  ModelConfig& c = out.config;
  expect("model");
  c.k = read_u("k");
  c.d = read_u("d");
  c.hidden = read_u("hidden");
  c.node_dim = read_u("node_dim");
  c.heads = read_u("heads");
  expect("merge");
  std::string merge;
  in >> merge;
  if (merge == "concat") c.merge = GatMerge::concat;
  else if (merge == "average") c.merge = GatMerge::average;
  else throw std::runtime_error("checkpoint: unknown merge '" + merge + "'");
  c.pose_graph_dense = read_u("pose_dense") != 0;
  c.mp_iterations = read_u("mp_iterations");
  c.use_h2o = read_u("use_h2o") != 0;
  c.use_h2h = read_u("use_h2h") != 0;
  c.use_message_passing = read_u("use_mp") != 0;
  c.use_future_social = read_u("use_future") != 0;
  c.use_context = read_u("use_context") != 0;
  c.object_visual_len = read_u("visual_len");
  c.object_classes = read_u("classes");
  c.object_mlp_hidden = read_u("obj_hidden");
  c.context_len = read_u("ctx_len");
  c.context_mlp_hidden = read_u("ctx_hidden");

  expect("progress");
  out.state.next_stage = read_u("stage");
  out.state.epochs_in_stage = read_u("epoch");
  out.state.steps = read_u("steps");

  expect("adam");
  out.state.adam.step_count = static_cast<long>(read_u("step_count"));
  out.state.adam.learning_rate = read_d("lr");
  out.state.adam.decay = read_d("decay");
  out.state.adam.beta1 = read_d("beta1");
  out.state.adam.beta2 = read_d("beta2");
  out.state.adam.epsilon = read_d("epsilon");

  out.state.params = init_params(c, 0);  // shapes only; values overwritten below
  read_arrays(in, out.state.params);
  visit_params(out.state.params, [&](const std::string& name, Matrix& m) {
    Matrix first(m.rows(), m.cols()), second(m.rows(), m.cols());
    read_named_array(in, "adam.m." + name, first);
    read_named_array(in, "adam.v." + name, second);
    out.state.adam.first_moment.push_back(std::move(first));
    out.state.adam.second_moment.push_back(std::move(second));
  });
  expect("end");
  return out;
}

void write_checkpoint_file(const std::string& path, const Checkpoint& checkpoint) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_checkpoint(out, checkpoint);
  if (!out.good()) throw std::runtime_error("write failed for " + path);
}

Checkpoint read_checkpoint_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_checkpoint(in);
}

}  // namespace posecast
