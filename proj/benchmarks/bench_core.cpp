#include <benchmark/benchmark.h>

#include "posecast/dataio.hpp"
#include "posecast/gat.hpp"
#include "posecast/metrics.hpp"
#include "posecast/training.hpp"

using namespace posecast;
using ad::Matrix;
using ad::Rng;
using ad::Tape;

namespace {

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.at(i) = rng.uniform(-1.0, 1.0);
  return m;
}

ModelConfig bench_model_config(std::size_t hidden) {
  ModelConfig c;
  c.k = 13;
  c.d = 2;
  c.hidden = hidden;
  c.node_dim = 16;
  c.heads = 3;
  c.object_visual_len = 8;
  c.object_classes = 4;
  c.object_mlp_hidden = 16;
  c.context_len = 8;
  c.context_mlp_hidden = 8;
  return c;
}

SceneSample bench_sample(std::size_t persons) {
  GeneratorConfig gen;
  gen.n_samples = 1;
  gen.n_persons = persons;
  gen.k = 13;
  gen.tau_o = 8;
  gen.tau_f = 8;
  gen.n_objects = 1;
  gen.object_visual_len = 8;
  gen.seed = 3;
  return generate(gen).samples[0];
}

}  // namespace

static void BM_GatLayerForward(benchmark::State& state) {
  const std::size_t n = state.range(0);
  Rng rng(7);
  GatParams params = make_gat_params(64, 64, 3, GatMerge::concat, rng);
  Matrix feats = random_matrix(rng, n, 64);
  EdgeMask mask = EdgeMask::dense(n);
  for (auto _ : state) {
    Tape tape;
    auto out = gat_layer(tape, tape.constant(feats), mask, lift(tape, params, false));
    benchmark::DoNotOptimize(out.value().data());
  }
  state.SetComplexityN(n);
}
BENCHMARK(BM_GatLayerForward)->RangeMultiplier(2)->Range(4, 64)->Complexity();

static void BM_LstmUnroll(benchmark::State& state) {
  const std::size_t steps = state.range(0);
  Rng rng(11);
  const std::size_t hidden = 64;
  ad::LstmParams params{random_matrix(rng, 16, 4 * hidden),
                        random_matrix(rng, hidden, 4 * hidden),
                        random_matrix(rng, 1, 4 * hidden)};
  Matrix x = random_matrix(rng, 1, 16);
  for (auto _ : state) {
    Tape tape;
    ad::LstmVars vars{tape.constant(params.w_input), tape.constant(params.w_hidden),
                      tape.constant(params.bias)};
    ad::Var h = tape.constant(Matrix(1, hidden));
    ad::Var c = tape.constant(Matrix(1, hidden));
    for (std::size_t t = 0; t < steps; ++t) {
      auto s = tape.lstm_cell(tape.constant(x), h, c, vars);
      h = s.hidden;
      c = s.cell;
    }
    benchmark::DoNotOptimize(h.value().data());
  }
}
BENCHMARK(BM_LstmUnroll)->Arg(8)->Arg(16)->Arg(32);

static void BM_RolloutForward(benchmark::State& state) {
  const std::size_t persons = state.range(0);
  ModelConfig config = bench_model_config(64);
  ModelParams params = init_params(config, 5);
  SceneSample sample = bench_sample(persons);
  for (auto _ : state) {
    ForecastResult result = rollout(sample, params, config, 8);
    benchmark::DoNotOptimize(result.persons.data());
  }
}
BENCHMARK(BM_RolloutForward)->Arg(1)->Arg(2)->Arg(4)->Arg(8);

static void BM_TrainStep(benchmark::State& state) {
  ModelConfig config = bench_model_config(state.range(0));
  ModelParams params = init_params(config, 5);
  SceneSample sample = bench_sample(2);
  for (auto _ : state) {
    Tape tape;
    ModelVars vars = lift_params(tape, params, true);
    RolloutVars rv = rollout_vars(tape, sample, vars, config, 8);
    LossVars lv = compute_loss(tape, rv, sample, 8);
    tape.backward(lv.total);
    benchmark::DoNotOptimize(lv.numbers.total);
  }
}
BENCHMARK(BM_TrainStep)->Arg(32)->Arg(64)->Arg(128);

static void BM_VamFrame(benchmark::State& state) {
  const std::size_t persons = state.range(0);
  GeneratorConfig gen;
  gen.n_samples = 1;
  gen.n_persons = persons;
  gen.k = 13;
  gen.tau_o = 4;
  gen.tau_f = 8;
  gen.occlusion = OcclusionModel::window;
  gen.occl_joint = 2;
  gen.occl_from = 6;
  gen.occl_to = 10;
  gen.seed = 13;
  SceneSample sample = generate(gen).samples[0];
  EvalScene truth = eval_view_truth(sample);
  EvalScene pred = eval_view(baseline_zero_velocity(sample), 100.0, 0.5);
  for (auto _ : state) {
    double v = vam(pred, truth, 200.0, 7);
    benchmark::DoNotOptimize(v);
  }
}
BENCHMARK(BM_VamFrame)->Arg(2)->Arg(8)->Arg(32);

BENCHMARK_MAIN();
