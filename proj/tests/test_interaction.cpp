#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "posecast/interaction.hpp"
#include "support.hpp"

using namespace posecast;
using ad::Matrix;
using ad::Tape;
using ad::Var;
using testsupport::gat_oracle;
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
  c.object_visual_len = 5;
  c.object_classes = 4;
  c.object_mlp_hidden = 7;
  c.context_len = 4;
  c.context_mlp_hidden = 5;
  return c;
}

}  // namespace

TEST_CASE("h2o_step with zero objects is a self-attention projection") {
  ModelConfig config = tiny_config();
  ModelParams params = init_params(config, 7);
  ad::Rng rng(3);
  Matrix feats = random_matrix(rng, 3, config.hidden);
  Tape tape;
  Var out = h2o_step(tape, tape.constant(feats), std::nullopt,
                     lift_params(tape, params, false));
  auto oracle = gat_oracle(feats, EdgeMask::bipartite(3, 0), params.h2o);
  CHECK(max_abs_diff(out.value(), oracle.output) < 1e-10);
}

TEST_CASE("h2o_step with zero person features is driven by the objects") {
  ModelConfig config = tiny_config();
  ModelParams params = init_params(config, 11);
  ad::Rng rng(5);
  Matrix persons(2, config.hidden);  // all zero
  Matrix objects = random_matrix(rng, 3, config.hidden);
  Tape tape;
  Var out = h2o_step(tape, tape.constant(persons), tape.constant(objects),
                     lift_params(tape, params, false));

  Matrix stacked(5, config.hidden);
  for (std::size_t o = 0; o < 3; ++o)
    for (std::size_t c = 0; c < config.hidden; ++c) stacked(2 + o, c) = objects(o, c);
  auto oracle = gat_oracle(stacked, EdgeMask::bipartite(2, 3), params.h2o);
  for (std::size_t p = 0; p < 2; ++p)
    for (std::size_t c = 0; c < config.hidden; ++c)
      CHECK(out.value()(p, c) == doctest::Approx(oracle.output(p, c)).epsilon(1e-10));
}

TEST_CASE("permuting object order leaves person outputs unchanged") {
  ModelConfig config = tiny_config();
  ModelParams params = init_params(config, 13);
  ad::Rng rng(7);
  Matrix persons = random_matrix(rng, 3, config.hidden);
  Matrix objects = random_matrix(rng, 4, config.hidden);
  Matrix shuffled(4, config.hidden);
  std::vector<std::size_t> perm = {2, 0, 3, 1};
  for (std::size_t o = 0; o < 4; ++o)
    for (std::size_t c = 0; c < config.hidden; ++c) shuffled(o, c) = objects(perm[o], c);

  Tape t1, t2;
  Matrix a = h2o_step(t1, t1.constant(persons), t1.constant(objects),
                      lift_params(t1, params, false))
                 .value();
  Matrix b = h2o_step(t2, t2.constant(persons), t2.constant(shuffled),
                      lift_params(t2, params, false))
                 .value();
  CHECK(max_abs_diff(a, b) < 1e-12);
}

TEST_CASE("h2h_step base cases and oracle") {
  ModelConfig config = tiny_config();
  ModelParams params = init_params(config, 17);
  ad::Rng rng(11);

  SUBCASE("single person self-projection") {
    Matrix feats = random_matrix(rng, 1, config.hidden);
    Tape tape;
    Var out = h2h_step(tape, tape.constant(feats), lift_params(tape, params, false));
    auto oracle = gat_oracle(feats, EdgeMask::dense(1), params.h2h);
    CHECK(max_abs_diff(out.value(), oracle.output) < 1e-12);
  }

  SUBCASE("two identical persons give identical outputs") {
    Matrix feats(2, config.hidden);
    for (std::size_t c = 0; c < config.hidden; ++c)
      feats(0, c) = feats(1, c) = rng.uniform(-1, 1);
    Tape tape;
    Var out = h2h_step(tape, tape.constant(feats), lift_params(tape, params, false));
    for (std::size_t c = 0; c < config.hidden; ++c)
      CHECK(out.value()(0, c) == doctest::Approx(out.value()(1, c)).epsilon(1e-14));
  }

  SUBCASE("four random persons match the per-edge oracle") {
    Matrix feats = random_matrix(rng, 4, config.hidden);
    Tape tape;
    Var out = h2h_step(tape, tape.constant(feats), lift_params(tape, params, false));
    auto oracle = gat_oracle(feats, EdgeMask::dense(4), params.h2h);
    CHECK(max_abs_diff(out.value(), oracle.output) < 1e-10);
  }
}

TEST_CASE("message passing N=0 returns the encoded features exactly") {
  ModelConfig config = tiny_config();
  ModelParams params = init_params(config, 19);
  ad::Rng rng(13);
  Matrix z = random_matrix(rng, 3, config.hidden);
  InteractionOptions options;
  options.iterations = 0;
  Tape tape;
  Var f = message_passing(tape, tape.constant(z), std::nullopt,
                          lift_params(tape, params, false), options);
  CHECK(testsupport::bit_equal(f.value(), z));
}

TEST_CASE("message passing N=1 equals the composed step average") {
  ModelConfig config = tiny_config();
  ModelParams params = init_params(config, 23);
  ad::Rng rng(17);
  Matrix z = random_matrix(rng, 3, config.hidden);
  Matrix objects = random_matrix(rng, 2, config.hidden);
  InteractionOptions options;
  options.iterations = 1;

  Tape tape;
  ModelVars vars = lift_params(tape, params, false);
  Var f = message_passing(tape, tape.constant(z), tape.constant(objects), vars, options);

  Tape manual;
  ModelVars mvars = lift_params(manual, params, false);
  Var zi = manual.constant(z);
  Var m = h2h_step(manual, h2o_step(manual, zi, manual.constant(objects), mvars), mvars);
  Var expect = manual.scale(manual.add(zi, m), 0.5);
  CHECK(max_abs_diff(f.value(), expect.value()) < 1e-12);
}

TEST_CASE("object features are bit-identical through N=3 message passing") {
  ModelConfig config = tiny_config();
  ModelParams params = init_params(config, 29);
  ad::Rng rng(19);
  Matrix z = random_matrix(rng, 2, config.hidden);
  Matrix objects = random_matrix(rng, 3, config.hidden);
  Matrix keep = objects;
  Tape tape;
  Var obj = tape.constant(objects);
  InteractionOptions options;
  options.iterations = 3;
  Var f = message_passing(tape, tape.constant(z), obj, lift_params(tape, params, false),
                          options);
  (void)f;
  CHECK(testsupport::bit_equal(obj.value(), keep));
}

TEST_CASE("person permutation equivariance and object invariance of f_N") {
  ModelConfig config = tiny_config();
  ModelParams params = init_params(config, 31);
  ad::Rng rng(23);
  Matrix z = random_matrix(rng, 4, config.hidden);
  Matrix objects = random_matrix(rng, 2, config.hidden);
  InteractionOptions options;
  options.iterations = 3;

  auto run = [&](const Matrix& people, const Matrix& obj) {
    Tape tape;
    return message_passing(tape, tape.constant(people), tape.constant(obj),
                           lift_params(tape, params, false), options)
        .value();
  };
  Matrix base = run(z, objects);

  std::vector<std::size_t> perm = {2, 0, 3, 1};
  Matrix pz(4, config.hidden);
  for (std::size_t p = 0; p < 4; ++p)
    for (std::size_t c = 0; c < config.hidden; ++c) pz(p, c) = z(perm[p], c);
  Matrix permuted = run(pz, objects);
  for (std::size_t p = 0; p < 4; ++p)
    for (std::size_t c = 0; c < config.hidden; ++c)
      CHECK(std::abs(permuted(p, c) - base(perm[p], c)) < 1e-12);

  Matrix obj_shuffled(2, config.hidden);
  for (std::size_t c = 0; c < config.hidden; ++c) {
    obj_shuffled(0, c) = objects(1, c);
    obj_shuffled(1, c) = objects(0, c);
  }
  CHECK(max_abs_diff(run(z, obj_shuffled), base) < 1e-12);
}

TEST_CASE("gradients through the N=3 loop pass grad_check") {
  ModelConfig config = tiny_config();
  ModelParams params = init_params(config, 37);
  ad::Rng rng(29);
  Matrix z = random_matrix(rng, 2, config.hidden);
  Matrix objects = random_matrix(rng, 2, config.hidden);
  InteractionOptions options;
  options.iterations = 3;

  std::vector<Matrix> inputs = {z, params.h2o.weight[0], params.h2h.weight[0],
                                params.h2o.attention[1], params.h2h.attention[2]};
  ad::TapeProgram prog = [&](Tape& t, std::span<const Var> v) {
    ModelVars vars = lift_params(t, params, false);
    vars.h2o.weight[0] = v[1];
    vars.h2h.weight[0] = v[2];
    vars.h2o.attention[1] = v[3];
    vars.h2h.attention[2] = v[4];
    return t.sum(t.tanh(message_passing(t, v[0], t.constant(objects), vars, options)));
  };
  CHECK(ad::grad_check(prog, inputs).max_rel_error < 1e-4);
}

TEST_CASE("monotone reach over a 3-person chain") {
  // dense H2H masked to the path 0-1-2 for this test
  ModelConfig config = tiny_config();
  ModelParams params = init_params(config, 41);
  ad::Rng rng(31);
  Matrix z = random_matrix(rng, 3, config.hidden);
  Matrix z_mod = z;
  for (std::size_t c = 0; c < config.hidden; ++c) z_mod(2, c) = rng.uniform(-1, 1);

  EdgeMask path = EdgeMask::from_edges(3, {{0, 1}, {1, 2}}, true);
  auto run = [&](const Matrix& people, std::size_t iterations) {
    Tape tape;
    GatVars h2h = lift(tape, params.h2h, false);
    Var f = tape.constant(people);
    for (std::size_t n = 0; n < iterations; ++n)
      f = tape.scale(tape.add(f, gat_layer(tape, f, path, h2h)), 0.5);
    return f.value();
  };

  // one step: person 0 sees only persons 0 and 1
  Matrix one_a = run(z, 1);
  Matrix one_b = run(z_mod, 1);
  for (std::size_t c = 0; c < config.hidden; ++c) CHECK(one_a(0, c) == one_b(0, c));

  // two steps: person 2's change reaches person 0 through person 1
  Matrix two_a = run(z, 2);
  Matrix two_b = run(z_mod, 2);
  CHECK(max_abs_diff(two_a, two_b) > 1e-9);
  bool row0_changed = false;
  for (std::size_t c = 0; c < config.hidden; ++c)
    row0_changed = row0_changed || two_a(0, c) != two_b(0, c);
  CHECK(row0_changed);
}

TEST_CASE("trace_message_passing exposes per-iteration attention") {
  ModelConfig config = tiny_config();
  ModelParams params = init_params(config, 43);
  ad::Rng rng(37);
  Matrix z = random_matrix(rng, 3, config.hidden);
  Matrix objects = random_matrix(rng, 2, config.hidden);
  InteractionOptions options;
  options.iterations = 2;
  InteractionTrace trace = trace_message_passing(z, objects, params, options);
  REQUIRE(trace.iterations.size() == 2);
  for (const auto& iter : trace.iterations) {
    CHECK(iter.h2o_attention.rows() == 5);
    CHECK(iter.h2h_attention.rows() == 3);
    for (std::size_t i = 0; i < 3; ++i) {  // person rows sum to 1
      double s = 0.0;
      for (std::size_t j = 0; j < 5; ++j) s += iter.h2o_attention(i, j);
      CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }
    for (std::size_t o = 3; o < 5; ++o)  // object rows all zero
      for (std::size_t j = 0; j < 5; ++j) CHECK(iter.h2o_attention(o, j) == 0.0);
  }
}
