// posecast: joint trajectory and pose forecasting over synthetic benchmark
// scenes. Subcommands: gen, train, predict, eval, gradcheck, inspect.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "posecast/config.hpp"
#include "posecast/encoder.hpp"
#include "posecast/gradcheck.hpp"
#include "posecast/interaction.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

int log_level() {
  const char* env = std::getenv("POSECAST_LOG");
  if (!env) return 1;
  std::string v(env);
  if (v == "quiet") return 0;
  if (v == "debug") return 2;
  return 1;
}

void info(const std::string& message) {
  if (log_level() >= 1) std::cerr << message << "\n";
}

void debug(const std::string& message) {
  if (log_level() >= 2) std::cerr << message << "\n";
}

struct ConfigCli {
  std::string config_path;
  std::string preset;
  std::vector<std::string> overrides;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "config JSON file");
    app->add_option("--preset", preset,
                    "built-in preset (3dpw-like, posetrack-like, toy-overfit, accept-bench)");
    app->add_option("--set", overrides, "override a config key, e.g. --set seed=7")
        ->take_all();
  }

  posecast::Config resolve() const {
    posecast::Config config;
    if (!preset.empty() && !config_path.empty())
      throw posecast::ConfigError("--preset and --config are mutually exclusive");
    if (!preset.empty()) config = posecast::load_preset(preset);
    if (!config_path.empty()) config = posecast::load_config_file(config_path);
    for (const std::string& kv : overrides) {
      auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw posecast::ConfigError("--set expects key=value, got '" + kv + "'");
      posecast::apply_override(config, kv.substr(0, eq), kv.substr(eq + 1));
    }
    return config;
  }
};

void check_data_matches_config(const posecast::SequenceHeader& header,
                               const posecast::Config& config) {
  if (header.k != config.k || header.d != config.d)
    throw posecast::ParseError("data has K=" + std::to_string(header.k) + ", d=" +
                               std::to_string(header.d) + " but the config expects K=" +
                               std::to_string(config.k) + ", d=" + std::to_string(config.d));
}

int cmd_gen(const ConfigCli& cli, const std::string& out_path, bool dump_config) {
  posecast::Config config = cli.resolve();
  if (dump_config) {
    std::cout << posecast::config_to_json(config);
    return kExitOk;
  }
  posecast::Dataset dataset = posecast::generate(config.generator());
  posecast::write_dataset_file(out_path, dataset);
  info("wrote " + std::to_string(dataset.samples.size()) + " samples to " + out_path);
  return kExitOk;
}

int cmd_train(const ConfigCli& cli, const std::string& data_path,
              const std::string& ckpt_out, const std::string& resume_path,
              std::string log_csv) {
  posecast::Config config = cli.resolve();
  posecast::Dataset dataset = posecast::parse_dataset_file(data_path);
  check_data_matches_config(dataset.header, config);
  if (dataset.header.tau_f == 0)
    throw posecast::ParseError(data_path + ": training data has no future frames");

  std::optional<posecast::TrainState> resume;
  posecast::ModelConfig model_config = config.model();
  if (!resume_path.empty()) {
    posecast::Checkpoint checkpoint = posecast::read_checkpoint_file(resume_path);
    model_config = checkpoint.config;
    resume = std::move(checkpoint.state);
    info("resuming from " + resume_path + " at stage " +
         std::to_string(resume->next_stage) + ", epoch " +
         std::to_string(resume->epochs_in_stage));
  }

  posecast::TrainHooks hooks;
  hooks.on_epoch = [](const posecast::TrainLogRow& row) {
    std::ostringstream os;
    os << "epoch " << row.epoch << " stage " << row.stage << " horizon " << row.horizon
       << " loss " << row.mean_loss.total;
    if (row.val_vim) os << " val_vim " << *row.val_vim;
    debug(os.str());
  };
  posecast::TrainResult result =
      posecast::train(dataset.samples, model_config, config.trainer(), hooks, resume);

  posecast::Checkpoint checkpoint{model_config, result.state()};
  posecast::write_checkpoint_file(ckpt_out, checkpoint);
  if (log_csv.empty()) log_csv = ckpt_out + ".log.csv";
  std::ofstream log(log_csv);
  if (!log) throw std::runtime_error("cannot open " + log_csv + " for writing");
  posecast::write_train_log_csv(log, result.log);
  info("trained " + std::to_string(result.steps) + " steps; checkpoint " + ckpt_out +
       ", log " + log_csv + (result.finished ? "" : " (epoch budget reached)"));
  return kExitOk;
}

int cmd_predict(const std::string& ckpt_path, const std::string& data_path,
                const std::string& out_path, double vis_threshold) {
  posecast::Checkpoint checkpoint = posecast::read_checkpoint_file(ckpt_path);
  posecast::Dataset dataset = posecast::parse_dataset_file(data_path);
  if (dataset.header.k != checkpoint.config.k || dataset.header.d != checkpoint.config.d)
    throw posecast::ParseError(data_path + ": data K/d does not match the checkpoint");
  const std::size_t horizon = dataset.header.tau_f;
  if (horizon == 0)
    throw posecast::ParseError(data_path +
                               ": header tau_f is 0, nothing to predict against");
  std::vector<posecast::ForecastResult> forecasts;
  for (const posecast::SceneSample& sample : dataset.samples)
    forecasts.push_back(
        posecast::rollout(sample, checkpoint.state.params, checkpoint.config, horizon));
  posecast::Dataset out = posecast::forecast_to_dataset(dataset, forecasts, vis_threshold);
  posecast::write_dataset_file(out_path, out);
  info("wrote predictions for " + std::to_string(forecasts.size()) + " samples to " +
       out_path);
  return kExitOk;
}

int cmd_eval(const ConfigCli& cli, const std::string& pred_path,
             const std::string& truth_path, const std::string& out_csv) {
  posecast::Config config = cli.resolve();
  posecast::Dataset pred = posecast::parse_dataset_file(pred_path);
  posecast::Dataset truth = posecast::parse_dataset_file(truth_path);
  posecast::MetricReport metric_report =
      posecast::report(pred, truth, config.reporter());
  if (!out_csv.empty()) {
    std::ofstream out(out_csv);
    if (!out) throw std::runtime_error("cannot open " + out_csv + " for writing");
    metric_report.write_csv(out);
  }
  for (const posecast::MetricRow& row : metric_report.rows) {
    if (row.horizons_ms.empty() && !config.ms_grid.empty()) continue;
    std::ostringstream os;
    if (!row.horizons_ms.empty()) {
      os << "horizon_ms=";
      for (std::size_t i = 0; i < row.horizons_ms.size(); ++i)
        os << (i ? ";" : "") << row.horizons_ms[i];
      os << " ";
    }
    os << "frame=" << row.frame << " vim=";
    if (row.vim) os << *row.vim;
    else os << "absent";
    os << " vam=" << row.vam << " iou=" << row.iou << " f1=" << row.f1;
    std::cout << os.str() << "\n";
  }
  return kExitOk;
}

int cmd_gradcheck(double tolerance, bool inject_bug) {
  posecast::GradCheckSuite suite = posecast::run_gradcheck_suite(tolerance, inject_bug);
  for (const posecast::GradCheckEntry& entry : suite.entries) {
    std::printf("%-28s max_rel=%.3e %s\n", entry.name.c_str(), entry.max_rel_error,
                entry.pass ? "PASS" : "FAIL");
  }
  std::printf("gradcheck %s (worst %.3e, tolerance %.1e)\n",
              suite.all_pass ? "PASS" : "FAIL", suite.worst, tolerance);
  return suite.all_pass ? kExitOk : kExitNumerical;
}

int cmd_inspect(const std::string& ckpt_path, const std::string& data_path,
                const std::string& out_csv) {
  posecast::Checkpoint checkpoint = posecast::read_checkpoint_file(ckpt_path);
  posecast::Dataset dataset = posecast::parse_dataset_file(data_path);
  if (dataset.header.k != checkpoint.config.k || dataset.header.d != checkpoint.config.d)
    throw posecast::ParseError(data_path + ": data K/d does not match the checkpoint");

  std::ofstream out(out_csv);
  if (!out) throw std::runtime_error("cannot open " + out_csv + " for writing");
  auto dump = [&](const posecast::ad::Matrix& m, std::size_t sample, const char* graph,
                  std::size_t step) {
    out << "# sample " << sample << " " << graph << " " << step << " rows " << m.rows()
        << " cols " << m.cols() << "\n";
    for (std::size_t r = 0; r < m.rows(); ++r) {
      for (std::size_t c = 0; c < m.cols(); ++c) out << (c ? "," : "") << m(r, c);
      out << "\n";
    }
  };

  for (std::size_t s = 0; s < dataset.samples.size(); ++s) {
    const posecast::SceneSample& sample = dataset.samples[s];
    posecast::ad::Tape tape;
    posecast::ModelVars vars = posecast::lift_params(tape, checkpoint.state.params, false);
    posecast::EncodedHistory encoded =
        posecast::encode_scene(tape, sample, vars, checkpoint.config);
    std::optional<posecast::ad::Var> objects =
        posecast::embed_objects(tape, sample.objects, vars, checkpoint.config);
    std::optional<posecast::ad::Matrix> object_values;
    if (objects) object_values = objects->value();

    posecast::InteractionTrace trace = posecast::trace_message_passing(
        encoded.features.value(), object_values, checkpoint.state.params,
        posecast::InteractionOptions::from(checkpoint.config));
    for (std::size_t n = 0; n < trace.iterations.size(); ++n) {
      if (trace.iterations[n].h2o_attention.rows() > 0)
        dump(trace.iterations[n].h2o_attention, s, "h2o", n + 1);
      if (trace.iterations[n].h2h_attention.rows() > 0)
        dump(trace.iterations[n].h2h_attention, s, "h2h", n + 1);
    }
    std::vector<posecast::ad::Matrix> future = posecast::trace_future_social(
        sample, checkpoint.state.params, checkpoint.config, dataset.header.tau_f);
    for (std::size_t t = 0; t < future.size(); ++t)
      dump(future[t], s, "future_h2h", t + 1);
  }
  info("wrote attention matrices to " + out_csv);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"joint trajectory and pose forecasting toolkit"};
  app.require_subcommand(1);

  ConfigCli gen_cli, train_cli, eval_cli;
  std::string gen_out = "dataset.seq";
  bool gen_dump = false;
  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  gen_cli.attach(gen);
  gen->add_option("--out", gen_out, "output sequence file");
  gen->add_flag("--dump-config", gen_dump, "print the resolved config and exit");

  std::string train_data, train_ckpt = "model.ckpt", train_resume, train_log;
  CLI::App* train = app.add_subcommand("train", "train a model on a sequence file");
  train_cli.attach(train);
  train->add_option("--data", train_data, "training sequence file")->required();
  train->add_option("--ckpt-out", train_ckpt, "checkpoint output path");
  train->add_option("--resume", train_resume, "resume from this checkpoint");
  train->add_option("--log-csv", train_log, "metrics log path (default <ckpt>.log.csv)");

  std::string pred_ckpt, pred_data, pred_out = "predictions.seq";
  double pred_threshold = 0.5;
  CLI::App* predict = app.add_subcommand("predict", "roll out forecasts for a dataset");
  predict->add_option("--ckpt", pred_ckpt, "checkpoint path")->required();
  predict->add_option("--data", pred_data, "input sequence file")->required();
  predict->add_option("--out", pred_out, "predictions output path");
  predict->add_option("--vis-threshold", pred_threshold,
                      "visibility probability threshold");

  std::string eval_pred, eval_truth, eval_csv;
  CLI::App* eval = app.add_subcommand("eval", "score predictions against ground truth");
  eval_cli.attach(eval);
  eval->add_option("--pred", eval_pred, "predictions sequence file")->required();
  eval->add_option("--truth", eval_truth, "ground-truth sequence file")->required();
  eval->add_option("--out", eval_csv, "per-frame metric CSV output path");

  double tolerance = 1e-4;
  bool inject_bug = false;
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "verify every adjoint");
  gradcheck->add_option("--tolerance", tolerance, "max relative error allowed");
  gradcheck->add_flag("--inject-bug", inject_bug,
                      "deliberately break one adjoint (negative control)");

  std::string inspect_ckpt, inspect_data, inspect_out = "attention.csv";
  CLI::App* inspect = app.add_subcommand("inspect", "export attention matrices as CSV");
  inspect->add_option("--ckpt", inspect_ckpt, "checkpoint path")->required();
  inspect->add_option("--data", inspect_data, "input sequence file")->required();
  inspect->add_option("--out", inspect_out, "attention CSV output path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen(gen_cli, gen_out, gen_dump);
    if (train->parsed())
      return cmd_train(train_cli, train_data, train_ckpt, train_resume, train_log);
    if (predict->parsed()) return cmd_predict(pred_ckpt, pred_data, pred_out, pred_threshold);
    if (eval->parsed()) return cmd_eval(eval_cli, eval_pred, eval_truth, eval_csv);
    if (gradcheck->parsed()) return cmd_gradcheck(tolerance, inject_bug);
    if (inspect->parsed()) return cmd_inspect(inspect_ckpt, inspect_data, inspect_out);
  } catch (const posecast::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const posecast::ParseError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const posecast::TrainingNanError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
