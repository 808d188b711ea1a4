#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "posecast/decoder.hpp"
#include "posecast/encoder.hpp"
#include "support.hpp"

using namespace posecast;
using ad::Matrix;
using ad::Tape;
using ad::Var;
using testsupport::make_sample;
using testsupport::max_abs_diff;
using testsupport::random_matrix;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.k = 3;
  c.d = 2;
  c.hidden = 6;
  c.node_dim = 4;
  c.heads = 3;
  c.mp_iterations = 2;
  c.object_visual_len = 5;
  c.object_classes = 4;
  c.object_mlp_hidden = 7;
  c.context_len = 4;
  c.context_mlp_hidden = 5;
  return c;
}

ModelParams zero_decoder(const ModelConfig& c, std::uint64_t seed) {
  ModelParams params = init_params(c, seed);
  params.decoder_lstm.w_input = Matrix(c.flat_pose(), 4 * c.hidden);
  params.decoder_lstm.w_hidden = Matrix(c.hidden, 4 * c.hidden);
  params.decoder_lstm.bias = Matrix(1, 4 * c.hidden);
  params.psi.weight = Matrix(c.hidden + c.flat_pose(), c.psi_out());
  params.psi.bias = Matrix(1, c.psi_out());
  return params;
}

}  // namespace

TEST_CASE("zero psi and decoder weights give a zero-velocity predictor") {
  ModelConfig config = tiny_config();
  ModelParams params = zero_decoder(config, 7);
  ad::Rng rng(3);
  SceneSample s = make_sample(rng, 2, 3, 2, 4, 4);
  ForecastResult result = rollout(s, params, config, 4);
  REQUIRE(result.persons.size() == 2);
  for (std::size_t p = 0; p < 2; ++p) {
    const Pose& last = s.persons[p].observed.back();
    for (const FramePrediction& frame : result.persons[p].frames) {
      for (double off : frame.offsets) CHECK(off == 0.0);
      for (std::size_t j = 0; j < 3; ++j) {
        CHECK(frame.locations[j * 2 + 0] == last.joints[j].location[0]);
        CHECK(frame.locations[j * 2 + 1] == last.joints[j].location[1]);
        CHECK(frame.visibility[j] == 0.5);
      }
    }
  }
}

TEST_CASE("decode_step output shapes") {
  ModelConfig config = tiny_config();
  ModelParams params = init_params(config, 11);
  Tape tape;
  ModelVars vars = lift_params(tape, params, false);
  ad::Rng rng(5);
  Var x = tape.constant(random_matrix(rng, 2, config.flat_pose()));
  Var h = tape.constant(random_matrix(rng, 2, config.hidden));
  Var c = tape.constant(random_matrix(rng, 2, config.hidden));
  DecodeStep step = decode_step(tape, x, h, c, vars, config);
  CHECK(step.offsets.rows() == 2);
  CHECK(step.offsets.cols() == config.k * config.d);
  CHECK(step.vis_logits.cols() == config.k);
  CHECK(step.state.hidden.cols() == config.hidden);
}

TEST_CASE("decode_step matches a hand-composed lstm+affine oracle") {
  ModelConfig config = tiny_config();
  ModelParams params = init_params(config, 13);
  ad::Rng rng(7);
  Matrix x = random_matrix(rng, 1, config.flat_pose());
  Matrix h = random_matrix(rng, 1, config.hidden);
  Matrix c = random_matrix(rng, 1, config.hidden);

  Tape tape;
  ModelVars vars = lift_params(tape, params, false);
  DecodeStep step =
      decode_step(tape, tape.constant(x), tape.constant(h), tape.constant(c), vars, config);

  Tape manual;
  ModelVars mvars = lift_params(manual, params, false);
  ad::LstmVars lstm{mvars.decoder_lstm.w_input, mvars.decoder_lstm.w_hidden,
                    mvars.decoder_lstm.bias};
  auto state = manual.lstm_cell(manual.constant(x), manual.constant(h), manual.constant(c),
                                lstm);
  std::vector<Var> cat = {state.hidden, manual.constant(x)};
  Var head = manual.affine(manual.concat_cols(cat), mvars.psi.weight, mvars.psi.bias);
  const std::size_t kd = config.k * config.d;
  CHECK(max_abs_diff(step.offsets.value(), manual.slice_cols(head, 0, kd).value()) < 1e-10);
  CHECK(max_abs_diff(step.vis_logits.value(),
                     manual.slice_cols(head, kd, kd + config.k).value()) < 1e-10);
  CHECK(max_abs_diff(step.state.cell.value(), state.cell.value()) < 1e-10);
}

TEST_CASE("future_social_refine base cases") {
  ModelConfig config = tiny_config();
  ModelParams params = init_params(config, 17);
  ad::Rng rng(11);

  SUBCASE("single person is a self-projection of its hidden state") {
    Matrix h = random_matrix(rng, 1, config.hidden);
    Tape tape;
    Var out = future_social_refine(tape, tape.constant(h), lift_params(tape, params, false));
    auto oracle = testsupport::gat_oracle(h, EdgeMask::dense(1), params.h2h);
    CHECK(max_abs_diff(out.value(), oracle.output) < 1e-12);
  }

  SUBCASE("permutation equivariance over persons") {
    Matrix h = random_matrix(rng, 3, config.hidden);
    Matrix ph(3, config.hidden);
    std::vector<std::size_t> perm = {2, 0, 1};
    for (std::size_t p = 0; p < 3; ++p)
      for (std::size_t c = 0; c < config.hidden; ++c) ph(p, c) = h(perm[p], c);
    Tape t1, t2;
    Matrix a =
        future_social_refine(t1, t1.constant(h), lift_params(t1, params, false)).value();
    Matrix b =
        future_social_refine(t2, t2.constant(ph), lift_params(t2, params, false)).value();
    for (std::size_t p = 0; p < 3; ++p)
      for (std::size_t c = 0; c < config.hidden; ++c)
        CHECK(std::abs(b(p, c) - a(perm[p], c)) < 1e-12);
  }
}

TEST_CASE("disabling future social refinement changes the forecast") {
  ModelConfig with = tiny_config();
  ModelConfig without = with;
  without.use_future_social = false;
  ModelParams params = init_params(with, 19);
  ad::Rng rng(13);
  SceneSample s = make_sample(rng, 2, 3, 2, 4, 4);
  ForecastResult a = rollout(s, params, with, 4);
  ForecastResult b = rollout(s, params, without, 4);
  double diff = 0.0;
  for (std::size_t p = 0; p < 2; ++p)
    for (std::size_t f = 1; f < 4; ++f)  // first step precedes any refinement
      for (std::size_t i = 0; i < a.persons[p].frames[f].locations.size(); ++i)
        diff = std::max(diff, std::abs(a.persons[p].frames[f].locations[i] -
                                       b.persons[p].frames[f].locations[i]));
  CHECK(diff > 1e-10);
}

TEST_CASE("rollout horizon 0, shapes, and determinism") {
  ModelConfig config = tiny_config();
  ModelParams params = init_params(config, 23);
  ad::Rng rng(17);
  SceneSample s = make_sample(rng, 2, 3, 2, 4, 8);

  ForecastResult empty = rollout(s, params, config, 0);
  CHECK(empty.horizon() == 0);

  ForecastResult full = rollout(s, params, config, 8);
  CHECK(full.horizon() == 8);
  for (const auto& person : full.persons) {
    CHECK(person.frames.size() == 8);
    for (const auto& frame : person.frames) {
      CHECK(frame.offsets.size() == 6);
      CHECK(frame.locations.size() == 6);
      CHECK(frame.visibility.size() == 3);
      for (double v : frame.visibility) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
      }
    }
  }

  ForecastResult again = rollout(s, params, config, 8);
  for (std::size_t p = 0; p < 2; ++p)
    for (std::size_t f = 0; f < 8; ++f) {
      CHECK(full.persons[p].frames[f].offsets == again.persons[p].frames[f].offsets);
      CHECK(full.persons[p].frames[f].locations == again.persons[p].frames[f].locations);
      CHECK(full.persons[p].frames[f].visibility == again.persons[p].frames[f].visibility);
    }
}

TEST_CASE("locations telescope exactly from offsets") {
  ModelConfig config = tiny_config();
  ModelParams params = init_params(config, 29);
  ad::Rng rng(19);
  SceneSample s = make_sample(rng, 2, 3, 2, 4, 6);
  ForecastResult result = rollout(s, params, config, 6);
  for (std::size_t p = 0; p < 2; ++p) {
    const Pose& last = s.persons[p].observed.back();
    std::vector<double> acc(6);
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t c = 0; c < 2; ++c) acc[j * 2 + c] = last.joints[j].location[c];
    for (const FramePrediction& frame : result.persons[p].frames) {
      for (std::size_t i = 0; i < 6; ++i) {
        acc[i] = acc[i] + frame.offsets[i];
        CHECK(acc[i] == frame.locations[i]);  // bitwise: same accumulation expression
      }
    }
  }
}

TEST_CASE("rollout rejects invalid samples") {
  ModelConfig config = tiny_config();
  ModelParams params = init_params(config, 31);
  ad::Rng rng(23);
  SceneSample s = make_sample(rng, 2, 3, 2, 4, 4);
  s.persons[1].observed[0].joints.pop_back();
  CHECK_THROWS_AS(rollout(s, params, config, 4), std::invalid_argument);
}

TEST_CASE("with all social pathways off, persons forecast independently") {
  ModelConfig config = tiny_config();
  config.use_h2h = false;
  config.use_h2o = false;
  config.use_message_passing = false;
  config.use_future_social = false;
  ModelParams params = init_params(config, 37);
  ad::Rng rng(29);
  SceneSample s = make_sample(rng, 2, 3, 2, 4, 4);
  ForecastResult before = rollout(s, params, config, 4);

  // rewrite the other person's history entirely
  SceneSample modified = s;
  for (auto& pose : modified.persons[1].observed)
    for (auto& js : pose.joints)
      for (std::size_t c = 0; c < 2; ++c) {
        js.offset[c] += 3.0;
        js.location[c] -= 7.0;
      }
  ForecastResult after = rollout(modified, params, config, 4);
  for (std::size_t f = 0; f < 4; ++f) {
    CHECK(before.persons[0].frames[f].offsets == after.persons[0].frames[f].offsets);
    CHECK(before.persons[0].frames[f].locations == after.persons[0].frames[f].locations);
    CHECK(before.persons[0].frames[f].visibility == after.persons[0].frames[f].visibility);
  }
}

TEST_CASE("end-to-end rollout gradient passes grad_check on a toy scene") {
  ModelConfig config = tiny_config();
  ModelParams params = init_params(config, 41);
  ad::Rng rng(31);
  SceneSample s = make_sample(rng, 2, 3, 2, 4, 4);
  ObjectFeature obj;
  obj.visual.assign(config.object_visual_len, 0.3);
  obj.bbox_center = {0.4, 0.6};
  obj.bbox_size = {0.2, 0.1};
  obj.class_id = 1;
  s.objects.push_back(obj);

  std::vector<Matrix> inputs = {params.psi.weight, params.decoder_lstm.w_input,
                                params.h2h.weight[0], params.encoder_lstm.w_input,
                                params.object_mlp.layers[1].weight};
  ad::TapeProgram prog = [&](Tape& t, std::span<const Var> v) {
    ModelVars vars = lift_params(t, params, false);
    vars.psi.weight = v[0];
    vars.decoder_lstm.w_input = v[1];
    vars.h2h.weight[0] = v[2];
    vars.encoder_lstm.w_input = v[3];
    vars.object_mlp.layers[1].weight = v[4];
    RolloutVars rv = rollout_vars(t, s, vars, config, 4);
    Var probe = t.constant(Matrix::scalar(0.0));
    for (std::size_t f = 0; f < 4; ++f) {
      probe = t.add(probe, t.sum(t.tanh(rv.locations[f])));
      probe = t.add(probe, t.sum(t.mul(rv.vis_probs[f], rv.vis_probs[f])));
      probe = t.add(probe, t.sum(t.tanh(rv.offsets[f])));
    }
    return probe;
  };
  CHECK(ad::grad_check(prog, inputs).max_rel_error < 1e-4);
}

TEST_CASE("teacher forcing feeds ground truth back instead of predictions") {
  ModelConfig config = tiny_config();
  ModelConfig forced = config;
  forced.teacher_forcing = true;
  ModelParams params = init_params(config, 47);
  ad::Rng rng(41);
  SceneSample s = make_sample(rng, 2, 3, 2, 4, 4);

  ForecastResult self_fed = rollout(s, params, config, 4);
  ForecastResult teacher = rollout(s, params, forced, 4);
  // the first step shares the same input; later steps must diverge
  CHECK(self_fed.persons[0].frames[0].offsets == teacher.persons[0].frames[0].offsets);
  double diff = 0.0;
  for (std::size_t f = 1; f < 4; ++f)
    for (std::size_t i = 0; i < 6; ++i)
      diff = std::max(diff, std::abs(self_fed.persons[0].frames[f].offsets[i] -
                                     teacher.persons[0].frames[f].offsets[i]));
  CHECK(diff > 1e-12);
}

TEST_CASE("trace_future_social emits one row-stochastic matrix per step") {
  ModelConfig config = tiny_config();
  ModelParams params = init_params(config, 43);
  ad::Rng rng(37);
  SceneSample s = make_sample(rng, 3, 3, 2, 4, 4);
  auto steps = trace_future_social(s, params, config, 4);
  REQUIRE(steps.size() == 4);
  for (const Matrix& att : steps) {
    REQUIRE(att.rows() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < 3; ++j) sum += att(i, j);
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}
