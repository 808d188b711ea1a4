#include "posecast/gradcheck.hpp"

#include "posecast/decoder.hpp"
#include "posecast/encoder.hpp"
#include "posecast/interaction.hpp"
#include "posecast/training.hpp"

namespace posecast {

using ad::Matrix;
using ad::Rng;
using ad::Tape;
using ad::TapeProgram;
using ad::Var;

namespace {

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo = -1.0,
                     double hi = 1.0) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.at(i) = rng.uniform(lo, hi);
  return m;
}

ModelConfig toy_config() {
  ModelConfig c;
  c.k = 3;
  c.d = 2;
  c.hidden = 8;
  c.node_dim = 6;
  c.heads = 3;
  c.mp_iterations = 2;
  c.object_visual_len = 5;
  c.object_classes = 4;
  c.object_mlp_hidden = 7;
  c.context_len = 4;
  c.context_mlp_hidden = 5;
  return c;
}

SceneSample toy_sample(Rng& rng, const ModelConfig& c, std::size_t persons,
                       std::size_t tau_o, std::size_t tau_f, bool with_object) {
  SceneSample s;
  s.frame_interval_ms = 100.0;
  for (std::size_t p = 0; p < persons; ++p) {
    PersonTrack track;
    track.person_id = "p" + std::to_string(p);
    auto pose = [&]() {
      Pose out;
      out.joints.resize(c.k);
      for (auto& js : out.joints) {
        for (std::size_t i = 0; i < c.d; ++i) {
          js.offset.push_back(rng.uniform(-1, 1));
          js.location.push_back(rng.uniform(-4, 4));
        }
        js.visibility = 1.0;
      }
      return out;
    };
    for (std::size_t f = 0; f < tau_o; ++f) track.observed.push_back(pose());
    if (tau_f > 0) {
      track.future = std::vector<Pose>{};
      for (std::size_t f = 0; f < tau_f; ++f) {
        Pose future = pose();
        if (rng.uniform() < 0.2) {  // some invisibility to exercise the mask
          auto& js = future.joints[rng.uniform_int(0, static_cast<long>(c.k) - 1)];
          js.visibility = 0.0;
          std::fill(js.offset.begin(), js.offset.end(), 0.0);
          std::fill(js.location.begin(), js.location.end(), 0.0);
        }
        track.future->push_back(std::move(future));
      }
    }
    s.persons.push_back(std::move(track));
  }
  if (with_object) {
    ObjectFeature obj;
    obj.visual.assign(c.object_visual_len, 0.0);
    for (auto& v : obj.visual) v = rng.uniform(-1, 1);
    obj.bbox_center = {rng.uniform(0, 1), rng.uniform(0, 1)};
    obj.bbox_size = {0.25, 0.125};
    obj.class_id = 1;
    s.objects.push_back(std::move(obj));
  }
  return s;
}

}  // namespace

GradCheckSuite run_gradcheck_suite(double tolerance, bool inject_bug) {
  GradCheckSuite suite;
  auto run = [&](const std::string& name, const TapeProgram& prog,
                 std::span<const Matrix> inputs) {
    ad::GradCheckReport report = ad::grad_check(prog, inputs);
    GradCheckEntry entry{name, report.max_rel_error, report.max_rel_error < tolerance};
    suite.worst = std::max(suite.worst, entry.max_rel_error);
    suite.all_pass = suite.all_pass && entry.pass;
    suite.entries.push_back(std::move(entry));
  };

  Rng rng(20240401);
  ModelConfig config = toy_config();
  ModelParams params = init_params(config, 4242);

  {
    std::vector<Matrix> in = {random_matrix(rng, 3, 4), random_matrix(rng, 4, 2),
                              random_matrix(rng, 1, 2)};
    run("affine", [](Tape& t, std::span<const Var> v) {
      return t.sum(t.affine(v[0], v[1], v[2]));
    }, in);
  }
  {
    std::vector<Matrix> in = {random_matrix(rng, 3, 4), random_matrix(rng, 4, 3)};
    run("matmul", [](Tape& t, std::span<const Var> v) {
      return t.sum(t.tanh(t.matmul(v[0], v[1])));
    }, in);
  }
  {
    Matrix x = random_matrix(rng, 2, 6, -2.0, 2.0);
    std::span<const Matrix> in(&x, 1);
    run("tanh", [](Tape& t, std::span<const Var> v) { return t.sum(t.tanh(v[0])); }, in);
    run("sigmoid", [](Tape& t, std::span<const Var> v) { return t.sum(t.sigmoid(v[0])); },
        in);
    run("leaky_relu", [](Tape& t, std::span<const Var> v) {
      return t.sum(t.mul(t.leaky_relu(v[0], 0.2), v[0]));
    }, in);
  }
  {
    Matrix logits = random_matrix(rng, 1, 6, -3.0, 3.0);
    Matrix probe = random_matrix(rng, 1, 6);
    std::vector<bool> mask = {true, false, true, true, false, true};
    std::span<const Matrix> in(&logits, 1);
    run("masked_softmax", [&, probe](Tape& t, std::span<const Var> v) {
      return t.sum(t.mul(t.masked_softmax(v[0], mask), t.constant(probe)));
    }, in);
  }
  {
    const std::size_t hid = 4, dims = 3;
    std::vector<Matrix> in = {random_matrix(rng, 1, dims), random_matrix(rng, 1, hid),
                              random_matrix(rng, 1, hid),
                              random_matrix(rng, dims, 4 * hid, -0.5, 0.5),
                              random_matrix(rng, hid, 4 * hid, -0.5, 0.5),
                              random_matrix(rng, 1, 4 * hid, -0.5, 0.5)};
    run("lstm_cell", [](Tape& t, std::span<const Var> v) {
      auto st = t.lstm_cell(v[0], v[1], v[2], ad::LstmVars{v[3], v[4], v[5]});
      return t.add(t.sum(st.hidden), t.sum(st.cell));
    }, in);
  }
  {
    Matrix pred = random_matrix(rng, 3, 4);
    Matrix target = random_matrix(rng, 3, 4);
    ad::BoolMatrix mask(3, 4);
    for (std::size_t i = 0; i < mask.size(); ++i) mask.at(i) = rng.uniform() < 0.6;
    std::span<const Matrix> in(&pred, 1);
    run("mse_masked", [target, mask](Tape& t, std::span<const Var> v) {
      return t.mse_masked(v[0], target, mask);
    }, in);
  }
  {
    Matrix logits = random_matrix(rng, 2, 5, -3.0, 3.0);
    Matrix targets(2, 5);
    for (std::size_t i = 0; i < targets.size(); ++i)
      targets.at(i) = rng.uniform() < 0.5 ? 0.0 : 1.0;
    std::span<const Matrix> in(&logits, 1);
    if (inject_bug) {
      // broken adjoint: the value is right but the gradient path is detached
      // for half the entries
      run("bce_logits", [targets](Tape& t, std::span<const Var> v) {
        Var left = t.slice_cols(v[0], 0, 2);
        Var right = t.constant(t.slice_cols(v[0], 2, 5).value());
        Matrix tl(2, 2), tr(2, 3);
        for (std::size_t r = 0; r < 2; ++r) {
          for (std::size_t c = 0; c < 2; ++c) tl(r, c) = targets(r, c);
          for (std::size_t c = 0; c < 3; ++c) tr(r, c) = targets(r, 2 + c);
        }
        return t.add(t.bce_logits(left, tl), t.bce_logits(right, tr));
      }, in);
    } else {
      run("bce_logits", [targets](Tape& t, std::span<const Var> v) {
        return t.bce_logits(v[0], targets);
      }, in);
    }
  }
  {
    GatParams gat = make_gat_params(4, 6, 3, GatMerge::concat, rng);
    EdgeMask mask = EdgeMask::dense(4);
    mask.set(1, 3, false);
    std::vector<Matrix> in;
    in.push_back(random_matrix(rng, 4, 4));
    for (const auto& w : gat.weight) in.push_back(w);
    for (const auto& a : gat.attention) in.push_back(a);
    run("gat_layer", [&, mask](Tape& t, std::span<const Var> v) {
      GatVars vars;
      vars.merge = GatMerge::concat;
      vars.weight = {v[1], v[2], v[3]};
      vars.attention = {v[4], v[5], v[6]};
      return t.sum(t.tanh(gat_layer(t, v[0], mask, vars)));
    }, in);
  }

  // module-level compositions: wiggle a representative slice of the weights
  SceneSample sample = toy_sample(rng, config, 2, 4, 4, true);
  auto module_run = [&](const std::string& name, auto&& body) {
    std::vector<Matrix> in = {params.joint_embed.weight, params.encoder_lstm.w_input,
                              params.h2o.weight[0], params.h2h.weight[0],
                              params.object_mlp.layers[0].weight,
                              params.context_mlp.layers[0].weight,
                              params.decoder_lstm.w_input, params.psi.weight};
    run(name, [&, body](Tape& t, std::span<const Var> v) {
      ModelVars vars = lift_params(t, params, false);
      vars.joint_embed.weight = v[0];
      vars.encoder_lstm.w_input = v[1];
      vars.h2o.weight[0] = v[2];
      vars.h2h.weight[0] = v[3];
      vars.object_mlp.layers[0].weight = v[4];
      vars.context_mlp.layers[0].weight = v[5];
      vars.decoder_lstm.w_input = v[6];
      vars.psi.weight = v[7];
      return body(t, vars);
    }, in);
  };

  module_run("encode_pose_graph", [&](Tape& t, const ModelVars& vars) {
    return t.sum(t.tanh(encode_pose_graph(t, sample.persons[0].observed[0], vars, config)));
  });
  module_run("encode_history", [&](Tape& t, const ModelVars& vars) {
    return t.sum(encode_history(t, sample.persons[0], vars, config).history);
  });
  module_run("embed_objects", [&](Tape& t, const ModelVars& vars) {
    return t.sum(t.tanh(*embed_objects(t, sample.objects, vars, config)));
  });
  {
    std::vector<double> ctx(config.context_len, 0.3);
    module_run("embed_context", [&, ctx](Tape& t, const ModelVars& vars) {
      return t.sum(embed_context(t, ctx, vars, config));
    });
  }
  {
    Matrix z = random_matrix(rng, 2, config.hidden);
    Matrix obj = random_matrix(rng, 2, config.hidden);
    module_run("h2o_step", [&, z, obj](Tape& t, const ModelVars& vars) {
      return t.sum(t.tanh(h2o_step(t, t.constant(z), t.constant(obj), vars)));
    });
    module_run("h2h_step", [&, z](Tape& t, const ModelVars& vars) {
      return t.sum(t.tanh(h2h_step(t, t.constant(z), vars)));
    });
    module_run("message_passing", [&, z, obj](Tape& t, const ModelVars& vars) {
      InteractionOptions options;
      options.iterations = 3;
      return t.sum(t.tanh(
          message_passing(t, t.constant(z), t.constant(obj), vars, options)));
    });
    module_run("future_social_refine", [&, z](Tape& t, const ModelVars& vars) {
      return t.sum(t.tanh(future_social_refine(t, t.constant(z), vars)));
    });
  }
  {
    Matrix x = random_matrix(rng, 2, config.flat_pose());
    Matrix h = random_matrix(rng, 2, config.hidden);
    Matrix c0 = random_matrix(rng, 2, config.hidden);
    module_run("decode_step", [&, x, h, c0](Tape& t, const ModelVars& vars) {
      DecodeStep step =
          decode_step(t, t.constant(x), t.constant(h), t.constant(c0), vars, config);
      return t.add(t.sum(t.tanh(step.offsets)), t.sum(t.sigmoid(step.vis_logits)));
    });
  }

  // the full composition: every parameter array of the model is an input
  {
    std::vector<Matrix> in;
    visit_params(params, [&](const std::string&, Matrix& m) { in.push_back(m); });
    run("rollout_loss_composition", [&](Tape& t, std::span<const Var> v) {
      ModelVars vars = assemble_vars(params, v);
      RolloutVars rv = rollout_vars(t, sample, vars, config, 4);
      return compute_loss(t, rv, sample, 4).total;
    }, in);
  }

  return suite;
}

}  // namespace posecast
