#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "posecast/gat.hpp"
#include "support.hpp"

using namespace posecast;
using ad::Matrix;
using ad::Tape;
using ad::Var;
using testsupport::max_abs_diff;
using testsupport::random_matrix;

using testsupport::gat_oracle;

namespace {

Matrix run_gat(const Matrix& feats, const EdgeMask& mask, const GatParams& params) {
  Tape tape;
  return gat_layer(tape, tape.constant(feats), mask, lift(tape, params, false)).value();
}

}  // namespace

TEST_CASE("head widths split near-evenly under concat") {
  CHECK(gat_head_widths(256, 3, GatMerge::concat) ==
        std::vector<std::size_t>{86, 85, 85});
  CHECK(gat_head_widths(6, 3, GatMerge::concat) == std::vector<std::size_t>{2, 2, 2});
  CHECK(gat_head_widths(8, 3, GatMerge::average) == std::vector<std::size_t>{8, 8, 8});
}

TEST_CASE("single node dense graph self-attends with weight 1") {
  ad::Rng rng(5);
  GatParams params = make_gat_params(4, 6, 3, GatMerge::concat, rng);
  Matrix feats = random_matrix(rng, 1, 4);
  Matrix out = run_gat(feats, EdgeMask::dense(1), params);

  // expected: concatenated per-head projections of the single node
  std::size_t base = 0;
  for (std::size_t h = 0; h < 3; ++h) {
    Matrix proj = testsupport::matmul_oracle(feats, params.weight[h]);
    for (std::size_t c = 0; c < proj.cols(); ++c)
      CHECK(out(0, base + c) == doctest::Approx(proj(0, c)).epsilon(1e-14));
    base += proj.cols();
  }
  Matrix att = attention_weights(feats, EdgeMask::dense(1), params);
  CHECK(att(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("two identical nodes attend half-and-half") {
  ad::Rng rng(7);
  GatParams params = make_gat_params(3, 6, 3, GatMerge::concat, rng);
  Matrix feats(2, 3);
  for (std::size_t c = 0; c < 3; ++c) feats(0, c) = feats(1, c) = rng.uniform(-1, 1);
  Matrix out = run_gat(feats, EdgeMask::dense(2), params);
  for (std::size_t c = 0; c < out.cols(); ++c)
    CHECK(out(0, c) == doctest::Approx(out(1, c)).epsilon(1e-14));
  Matrix att = attention_weights(feats, EdgeMask::dense(2), params);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      CHECK(att(i, j) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("random 5-node graph matches per-edge oracle") {
  ad::Rng rng(11);
  for (GatMerge merge : {GatMerge::concat, GatMerge::average}) {
    GatParams params = make_gat_params(5, 6, 3, merge, rng);
    Matrix feats = random_matrix(rng, 5, 5);
    EdgeMask mask = EdgeMask::dense(5);
    mask.set(0, 3, false);
    mask.set(2, 1, false);
    mask.set(4, 0, false);
    Matrix out = run_gat(feats, mask, params);
    testsupport::GatOracleResult oracle = gat_oracle(feats, mask, params);
    CHECK(max_abs_diff(out, oracle.output) < 1e-10);
    Matrix att = attention_weights(feats, mask, params);
    CHECK(max_abs_diff(att, oracle.attention) < 1e-10);
  }
}

TEST_CASE("attention rows of updated nodes sum to 1") {
  ad::Rng rng(13);
  GatParams params = make_gat_params(4, 4, 3, GatMerge::concat, rng);
  Matrix feats = random_matrix(rng, 6, 4);
  EdgeMask mask = EdgeMask::bipartite(4, 2);
  Matrix att = attention_weights(feats, mask, params);
  for (std::size_t i = 0; i < 4; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 6; ++j) s += att(i, j);
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
  for (std::size_t i = 4; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j) CHECK(att(i, j) == 0.0);
}

TEST_CASE("bipartite mask passes object rows through unchanged") {
  ad::Rng rng(17);
  GatParams params = make_gat_params(6, 6, 3, GatMerge::concat, rng);
  Matrix feats = random_matrix(rng, 5, 6);
  Matrix out = run_gat(feats, EdgeMask::bipartite(3, 2), params);
  for (std::size_t i = 3; i < 5; ++i)
    for (std::size_t c = 0; c < 6; ++c) CHECK(out(i, c) == feats(i, c));
}

TEST_CASE("permutation equivariance") {
  ad::Rng rng(19);
  GatParams params = make_gat_params(4, 6, 3, GatMerge::concat, rng);
  Matrix feats = random_matrix(rng, 5, 4);
  EdgeMask mask = EdgeMask::dense(5);
  mask.set(1, 4, false);
  mask.set(3, 0, false);
  Matrix out = run_gat(feats, mask, params);

  std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
  Matrix pfeats(5, 4);
  EdgeMask pmask(5);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t c = 0; c < 4; ++c) pfeats(i, c) = feats(perm[i], c);
    for (std::size_t j = 0; j < 5; ++j) pmask.set(i, j, mask.at(perm[i], perm[j]));
  }
  Matrix pout = run_gat(pfeats, pmask, params);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t c = 0; c < 6; ++c)
      CHECK(std::abs(pout(i, c) - out(perm[i], c)) < 1e-12);
}

TEST_CASE("output rows ignore masked-out node features exactly") {
  ad::Rng rng(23);
  GatParams params = make_gat_params(4, 4, 2, GatMerge::concat, rng);
  Matrix feats = random_matrix(rng, 4, 4);
  EdgeMask mask = EdgeMask::dense(4);
  for (std::size_t j = 0; j < 4; ++j) mask.set(0, j, j != 3);  // row 0 never sees node 3
  Matrix before = run_gat(feats, mask, params);
  for (std::size_t c = 0; c < 4; ++c) feats(3, c) = 0.0;
  Matrix after = run_gat(feats, mask, params);
  for (std::size_t c = 0; c < 4; ++c) CHECK(before(0, c) == after(0, c));
}

TEST_CASE("gradients through gat_layer pass grad_check") {
  ad::Rng rng(29);
  GatParams params = make_gat_params(3, 4, 2, GatMerge::concat, rng);
  EdgeMask mask = EdgeMask::dense(4);
  mask.set(1, 2, false);
  std::vector<Matrix> inputs;
  inputs.push_back(random_matrix(rng, 4, 3));
  for (const auto& w : params.weight) inputs.push_back(w);
  for (const auto& a : params.attention) inputs.push_back(a);
  ad::TapeProgram prog = [&](Tape& t, std::span<const Var> v) {
    GatVars vars;
    vars.merge = GatMerge::concat;
    vars.weight = {v[1], v[2]};
    vars.attention = {v[3], v[4]};
    return t.sum(t.tanh(gat_layer(t, v[0], mask, vars)));
  };
  CHECK(ad::grad_check(prog, inputs).max_rel_error < 1e-4);
}
