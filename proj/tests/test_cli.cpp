#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "posecast/config.hpp"
#include "posecast/training.hpp"

// End-to-end coverage of the installed command surface; each test drives the
// real binary through a scratch directory.

namespace fs = std::filesystem;

namespace {

const std::string kCli = POSECAST_CLI_PATH;

struct RunResult {
  int exit_code;
  std::string output;  // stdout + stderr
};

RunResult run(const std::string& args) {
  static int counter = 0;
  fs::path log = fs::path("cli_scratch") / ("run" + std::to_string(counter++) + ".log");
  std::string command = kCli + " " + args + " > " + log.string() + " 2>&1";
  int status = std::system(command.c_str());
  std::ifstream in(log);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return RunResult{WEXITSTATUS(status), buffer.str()};
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

struct Scratch {
  Scratch() {
    fs::remove_all("cli_scratch");
    fs::create_directories("cli_scratch");
  }
  fs::path operator/(const std::string& name) const { return fs::path("cli_scratch") / name; }
};

const std::string kTinyBench =
    "--preset accept-bench --set gen_samples=4 --set epochs_per_stage=1 --set tau_o=4 "
    "--set tau_f=4 --set gen_persons=2";

}  // namespace

TEST_CASE("gen is deterministic and validates config keys") {
  Scratch dir;
  auto a = dir / "a.seq";
  auto b = dir / "b.seq";
  CHECK(run("gen " + kTinyBench + " --out " + a.string()).exit_code == 0);
  CHECK(run("gen " + kTinyBench + " --out " + b.string()).exit_code == 0);
  CHECK(slurp(a) == slurp(b));

  RunResult bad = run("gen --set no_such_key=1 --out " + (dir / "x.seq").string());
  CHECK(bad.exit_code == 1);
  CHECK(bad.output.find("no_such_key") != std::string::npos);
}

TEST_CASE("train, predict, eval, inspect pipeline") {
  Scratch dir;
  auto data = dir / "data.seq";
  auto ckpt = dir / "model.ckpt";
  auto pred = dir / "pred.seq";
  auto csv = dir / "metrics.csv";
  auto att = dir / "attention.csv";

  REQUIRE(run("gen " + kTinyBench + " --out " + data.string()).exit_code == 0);
  REQUIRE(run("train " + kTinyBench + " --data " + data.string() + " --ckpt-out " +
              ckpt.string())
              .exit_code == 0);
  CHECK(fs::exists(dir / "model.ckpt.log.csv"));

  SUBCASE("predictions parse under the shared schema and are deterministic") {
    REQUIRE(run("predict --ckpt " + ckpt.string() + " --data " + data.string() + " --out " +
                pred.string())
                .exit_code == 0);
    posecast::Dataset parsed = posecast::parse_dataset_file(pred.string());
    CHECK(parsed.header.vis_prob);
    CHECK(parsed.samples.size() == 4);
    auto again = dir / "pred2.seq";
    REQUIRE(run("predict --ckpt " + ckpt.string() + " --data " + data.string() + " --out " +
                again.string())
                .exit_code == 0);
    CHECK(slurp(pred) == slurp(again));
  }

  SUBCASE("eval writes the CSV and matches in-process scoring") {
    REQUIRE(run("predict --ckpt " + ckpt.string() + " --data " + data.string() + " --out " +
                pred.string())
                .exit_code == 0);
    RunResult eval = run("eval --preset accept-bench --pred " + pred.string() +
                         " --truth " + data.string() + " --out " + csv.string());
    REQUIRE(eval.exit_code == 0);
    CHECK(eval.output.find("horizon_ms=") != std::string::npos);

    posecast::Config config = posecast::load_preset("accept-bench");
    posecast::MetricReport expected =
        posecast::report(posecast::parse_dataset_file(pred.string()),
                         posecast::parse_dataset_file(data.string()), config.reporter());
    std::ostringstream os;
    expected.write_csv(os);
    CHECK(slurp(csv) == os.str());
  }

  SUBCASE("baseline prediction files score identically to in-process scoring") {
    posecast::Dataset truth = posecast::parse_dataset_file(data.string());
    std::vector<posecast::ForecastResult> baselines;
    for (const posecast::SceneSample& sample : truth.samples)
      baselines.push_back(posecast::baseline_zero_velocity(sample));
    posecast::Dataset baseline_pred = posecast::forecast_to_dataset(truth, baselines, 0.5);
    auto baseline_path = dir / "baseline.seq";
    posecast::write_dataset_file(baseline_path.string(), baseline_pred);

    auto baseline_csv = dir / "baseline.csv";
    REQUIRE(run("eval --preset accept-bench --pred " + baseline_path.string() +
                " --truth " + data.string() + " --out " + baseline_csv.string())
                .exit_code == 0);
    posecast::Config config = posecast::load_preset("accept-bench");
    posecast::MetricReport expected =
        posecast::report(baseline_pred, truth, config.reporter());
    std::ostringstream os;
    expected.write_csv(os);
    CHECK(slurp(baseline_csv) == os.str());
  }

  SUBCASE("eval rejects misaligned files with exit code 2") {
    auto other = dir / "other.seq";
    REQUIRE(run("gen " + kTinyBench + " --set gen_persons=3 --out " + other.string())
                .exit_code == 0);
    RunResult misaligned = run("eval --pred " + other.string() + " --truth " + data.string());
    CHECK(misaligned.exit_code == 2);
    CHECK(misaligned.output.find("persons") != std::string::npos);
  }

  SUBCASE("inspect emits row-stochastic person rows and zero object rows") {
    REQUIRE(run("inspect --ckpt " + ckpt.string() + " --data " + data.string() + " --out " +
                att.string())
                .exit_code == 0);
    std::ifstream in(att);
    std::string line;
    std::size_t persons = 2, objects = 1, blocks = 0;
    while (std::getline(in, line)) {
      REQUIRE(line.rfind("# sample", 0) == 0);
      std::istringstream hs(line);
      std::string hash, word, graph;
      std::size_t sample, step, rows, cols;
      hs >> hash >> word >> sample >> graph >> step >> word >> rows >> word >> cols;
      ++blocks;
      for (std::size_t r = 0; r < rows; ++r) {
        REQUIRE(std::getline(in, line));
        std::istringstream ls(line);
        std::string cell;
        double sum = 0.0;
        std::size_t n = 0;
        while (std::getline(ls, cell, ',')) {
          sum += std::stod(cell);
          ++n;
        }
        REQUIRE(n == cols);
        if (graph == "h2o") {
          REQUIRE(rows == persons + objects);
          if (r < persons) CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
          else CHECK(sum == 0.0);  // object rows are frozen
        } else {
          REQUIRE(rows == persons);
          CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        }
      }
    }
    // 3 message-passing iterations x 2 graphs + 4 future steps, per sample
    CHECK(blocks == 4 * (3 * 2 + 4));
  }
}

TEST_CASE("a zero-weight checkpoint predicts zero velocity") {
  Scratch dir;
  auto data = dir / "data.seq";
  REQUIRE(run("gen " + kTinyBench + " --out " + data.string()).exit_code == 0);

  posecast::Config config = posecast::load_preset("accept-bench");
  posecast::apply_override(config, "tau_o", "4");
  posecast::apply_override(config, "tau_f", "4");
  posecast::ModelConfig model_config = config.model();
  posecast::TrainState state;
  state.params = posecast::init_params(model_config, 1);
  state.params.decoder_lstm.w_input =
      posecast::ad::Matrix(model_config.flat_pose(), 4 * model_config.hidden);
  state.params.decoder_lstm.w_hidden =
      posecast::ad::Matrix(model_config.hidden, 4 * model_config.hidden);
  state.params.decoder_lstm.bias = posecast::ad::Matrix(1, 4 * model_config.hidden);
  state.params.psi.weight = posecast::ad::Matrix(
      model_config.hidden + model_config.flat_pose(), model_config.psi_out());
  state.params.psi.bias = posecast::ad::Matrix(1, model_config.psi_out());
  auto ptrs = posecast::param_ptrs(state.params);
  state.adam = posecast::ad::AdamState::init(
      std::vector<const posecast::ad::Matrix*>(ptrs.begin(), ptrs.end()), 1e-3, 1.0);
  auto ckpt = dir / "zero.ckpt";
  posecast::write_checkpoint_file(ckpt.string(), {model_config, state});

  auto pred = dir / "pred.seq";
  REQUIRE(run("predict --ckpt " + ckpt.string() + " --data " + data.string() + " --out " +
              pred.string())
              .exit_code == 0);
  posecast::Dataset truth = posecast::parse_dataset_file(data.string());
  posecast::Dataset parsed = posecast::parse_dataset_file(pred.string());
  for (std::size_t s = 0; s < parsed.samples.size(); ++s)
    for (std::size_t p = 0; p < parsed.samples[s].persons.size(); ++p) {
      const posecast::Pose& last = truth.samples[s].persons[p].observed.back();
      for (const posecast::Pose& pose : *parsed.samples[s].persons[p].future)
        for (std::size_t j = 0; j < pose.joint_count(); ++j) {
          CHECK(pose.joints[j].offset == std::vector<double>{0.0, 0.0});
          CHECK(pose.joints[j].location == last.joints[j].location);
        }
    }
}

TEST_CASE("checkpoint resume reproduces the uninterrupted run bit-exactly") {
  Scratch dir;
  auto data = dir / "data.seq";
  std::string tiny =
      "--preset accept-bench --set gen_samples=4 --set epochs_per_stage=2 --set tau_o=4 "
      "--set tau_f=4 --set gen_persons=2";
  REQUIRE(run("gen " + tiny + " --out " + data.string()).exit_code == 0);

  auto full = dir / "full.ckpt";
  REQUIRE(run("train " + tiny + " --data " + data.string() + " --ckpt-out " + full.string())
              .exit_code == 0);

  auto half = dir / "half.ckpt";
  REQUIRE(run("train " + tiny + " --set max_epochs=2 --data " + data.string() +
              " --ckpt-out " + half.string())
              .exit_code == 0);
  auto resumed = dir / "resumed.ckpt";
  REQUIRE(run("train " + tiny + " --data " + data.string() + " --resume " + half.string() +
              " --ckpt-out " + resumed.string())
              .exit_code == 0);
  CHECK(slurp(full) == slurp(resumed));
}

TEST_CASE("train aborts with exit code 3 on a non-finite loss") {
  Scratch dir;
  auto data = dir / "data.seq";
  REQUIRE(run("gen " + kTinyBench + " --out " + data.string()).exit_code == 0);

  // poison a checkpoint and resume from it
  posecast::Config config = posecast::load_preset("accept-bench");
  posecast::apply_override(config, "tau_o", "4");
  posecast::apply_override(config, "tau_f", "4");
  posecast::TrainState state;
  state.params = posecast::init_params(config.model(), 1);
  state.params.psi.weight(0, 0) = std::numeric_limits<double>::quiet_NaN();
  auto ptrs = posecast::param_ptrs(state.params);
  state.adam = posecast::ad::AdamState::init(
      std::vector<const posecast::ad::Matrix*>(ptrs.begin(), ptrs.end()), 1e-3, 1.0);
  auto poisoned = dir / "poisoned.ckpt";
  posecast::write_checkpoint_file(poisoned.string(), {config.model(), state});

  RunResult result = run("train " + kTinyBench + " --data " + data.string() + " --resume " +
                         poisoned.string() + " --ckpt-out " + (dir / "out.ckpt").string());
  CHECK(result.exit_code == 3);
  CHECK(result.output.find("sample 0") != std::string::npos);
}

TEST_CASE("gradcheck reports every operation and honors the negative control") {
  Scratch dir;
  RunResult ok = run("gradcheck");
  CHECK(ok.exit_code == 0);
  for (const char* op :
       {"affine", "matmul", "tanh", "sigmoid", "leaky_relu", "masked_softmax", "lstm_cell",
        "mse_masked", "bce_logits", "gat_layer", "encode_pose_graph", "encode_history",
        "embed_objects", "embed_context", "h2o_step", "h2h_step", "message_passing",
        "future_social_refine", "decode_step", "rollout_loss_composition"})
    CHECK(ok.output.find(op) != std::string::npos);

  RunResult broken = run("gradcheck --inject-bug");
  CHECK(broken.exit_code == 3);
  CHECK(broken.output.find("FAIL") != std::string::npos);
}
