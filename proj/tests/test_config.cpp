#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "posecast/config.hpp"

using namespace posecast;

TEST_CASE("defaults carry the reference hyperparameters") {
  Config c;
  CHECK(c.learning_rate == 5e-5);
  CHECK(c.lr_decay == 0.95);
  CHECK(c.omega == 2);
  CHECK(c.beta == 200.0);
  CHECK(c.visibility_threshold == 0.5);
  CHECK(c.heads == 3);
  CHECK(c.hidden == 256);
  CHECK(c.mp_iterations == 3);
  CHECK(c.pose_graph_dense);
  CHECK(c.gat_merge == "concat");
  CHECK(c.object_mlp_hidden == 1024);
  CHECK(c.context_mlp_hidden == 512);
}

TEST_CASE("unknown keys are rejected by name") {
  CHECK_THROWS_WITH_AS(config_from_json_text(R"({"velocity": 3})", "test"),
                       doctest::Contains("velocity"), ConfigError);
  Config c;
  CHECK_THROWS_WITH_AS(apply_override(c, "wobble", "1"), doctest::Contains("wobble"),
                       ConfigError);
}

TEST_CASE("type mismatches are rejected") {
  CHECK_THROWS_AS(config_from_json_text(R"({"k": "thirteen"})", "test"), ConfigError);
  CHECK_THROWS_AS(config_from_json_text(R"({"use_h2h": 1})", "test"), ConfigError);
  CHECK_THROWS_AS(config_from_json_text(R"({"ms_grid": 100})", "test"), ConfigError);
  CHECK_THROWS_AS(config_from_json_text(R"({"k": -3})", "test"), ConfigError);
}

TEST_CASE("invalid combinations are rejected") {
  CHECK_THROWS_AS(config_from_json_text(R"({"d": 4})", "test"), ConfigError);
  CHECK_THROWS_AS(config_from_json_text(R"({"omega": 0})", "test"), ConfigError);
  CHECK_THROWS_AS(config_from_json_text(R"({"tau_f": 4, "omega": 9})", "test"),
                  ConfigError);
  CHECK_THROWS_AS(config_from_json_text(R"({"gat_merge": "max"})", "test"), ConfigError);
  CHECK_THROWS_AS(config_from_json_text(R"({"gen_motion": "teleport"})", "test"),
                  ConfigError);
  CHECK_THROWS_AS(config_from_json_text(R"({"k": 3, "gen_occlusion": "window",
                                            "gen_occl_joint": 7})", "test"),
                  ConfigError);
}

TEST_CASE("overrides win over file values") {
  Config c = config_from_json_text(R"({"seed": 5, "hidden": 64})", "test");
  CHECK(c.seed == 5);
  apply_override(c, "seed", "9");
  apply_override(c, "gen_motion", "follower");
  apply_override(c, "ms_grid", "[10, 20]");
  CHECK(c.seed == 9);
  CHECK(c.gen_motion == "follower");
  CHECK(c.ms_grid == std::vector<double>{10, 20});
  CHECK(c.hidden == 64);
}

TEST_CASE("config json roundtrip is stable") {
  Config c;
  c.seed = 123;
  c.gen_motion = "follower";
  c.ms_grid = {80, 160};
  std::string text = config_to_json(c);
  Config back = config_from_json_text(text, "roundtrip");
  CHECK(config_to_json(back) == text);
  CHECK(back.seed == 123);
}

TEST_CASE("presets load and match their scenarios") {
  auto names = preset_names();
  REQUIRE(names.size() == 4);
  for (const std::string& name : names) CHECK_NOTHROW(load_preset(name));

  Config toy = load_preset("toy-overfit");
  CHECK(toy.gen_samples == 1);
  CHECK(toy.gen_persons == 2);
  CHECK(toy.k == 13);
  CHECK(toy.d == 2);
  CHECK(toy.tau_o == 8);
  CHECK(toy.tau_f == 8);
  // 4 curriculum stages x 500 epochs x 1 sample = 2000 optimizer steps
  CHECK(toy.omega == 2);
  CHECK(toy.epochs_per_stage == 500);

  Config bench = load_preset("accept-bench");
  CHECK(bench.gen_samples == 200);
  CHECK(bench.gen_motion == "follower");

  Config dpw = load_preset("3dpw-like");
  CHECK(dpw.d == 3);
  CHECK(dpw.k == 13);
  CHECK(dpw.units == "cm");
  CHECK(dpw.ms_grid == std::vector<double>{100, 240, 500, 640, 900});

  Config pt = load_preset("posetrack-like");
  CHECK(pt.d == 2);
  CHECK(pt.k == 14);
  CHECK(pt.units == "px");
  CHECK(pt.ms_grid == std::vector<double>{80, 160, 320, 400, 560});

  CHECK_THROWS_AS(load_preset("unknown"), ConfigError);
}

TEST_CASE("derived configs mirror the flat document") {
  Config c = load_preset("accept-bench");
  ModelConfig m = c.model();
  CHECK(m.k == 3);
  CHECK(m.hidden == 32);
  CHECK(m.mp_iterations == 3);
  GeneratorConfig g = c.generator();
  CHECK(g.motion == MotionModel::follower);
  CHECK(g.n_samples == 200);
  CHECK(g.seed == c.seed);
  TrainConfig t = c.trainer();
  CHECK(t.learning_rate == c.learning_rate);
  CHECK(t.omega == 2);
  ReportConfig r = c.reporter();
  CHECK(r.beta == 200.0);
}
