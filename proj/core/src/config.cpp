#include "posecast/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <json.hpp>

#include "posecast/presets_gen.hpp"

namespace posecast {

using nlohmann::json;

namespace {

// central key table: every field registers one handler pair (set, get)
struct FieldTable {
  std::map<std::string, std::function<void(Config&, const json&)>> setters;
  std::vector<std::pair<std::string, std::function<json(const Config&)>>> getters;
};

template <class T>
T checked(const json& value, const std::string& key);

template <>
std::size_t checked<std::size_t>(const json& value, const std::string& key) {
  // covers seed as well; std::uint64_t and std::size_t coincide on this target
  if (!value.is_number_unsigned() && !(value.is_number_integer() && value.get<long>() >= 0))
    throw ConfigError("config key '" + key + "' needs a non-negative integer");
  return value.get<std::size_t>();
}

template <>
double checked<double>(const json& value, const std::string& key) {
  if (!value.is_number()) throw ConfigError("config key '" + key + "' needs a number");
  return value.get<double>();
}

template <>
bool checked<bool>(const json& value, const std::string& key) {
  if (!value.is_boolean()) throw ConfigError("config key '" + key + "' needs a boolean");
  return value.get<bool>();
}

template <>
std::string checked<std::string>(const json& value, const std::string& key) {
  if (!value.is_string()) throw ConfigError("config key '" + key + "' needs a string");
  return value.get<std::string>();
}

template <>
std::vector<double> checked<std::vector<double>>(const json& value, const std::string& key) {
  if (!value.is_array()) throw ConfigError("config key '" + key + "' needs an array");
  std::vector<double> out;
  for (const auto& item : value) {
    if (!item.is_number())
      throw ConfigError("config key '" + key + "' needs numeric entries");
    out.push_back(item.get<double>());
  }
  return out;
}

const FieldTable& field_table() {
  static const FieldTable table = [] {
    FieldTable t;
    auto field = [&t](const std::string& key, auto member) {
      using T = std::decay_t<decltype(std::declval<Config>().*member)>;
      t.setters[key] = [key, member](Config& c, const json& v) {
        c.*member = checked<T>(v, key);
      };
      t.getters.emplace_back(key, [member](const Config& c) { return json(c.*member); });
    };
    field("k", &Config::k);
    field("d", &Config::d);
    field("hidden", &Config::hidden);
    field("node_dim", &Config::node_dim);
    field("heads", &Config::heads);
    field("gat_merge", &Config::gat_merge);
    field("pose_graph_dense", &Config::pose_graph_dense);
    field("tau_o", &Config::tau_o);
    field("tau_f", &Config::tau_f);
    field("frame_interval_ms", &Config::frame_interval_ms);
    field("ms_grid", &Config::ms_grid);
    field("units", &Config::units);
    field("mp_iterations", &Config::mp_iterations);
    field("use_context", &Config::use_context);
    field("use_h2o", &Config::use_h2o);
    field("use_h2h", &Config::use_h2h);
    field("use_message_passing", &Config::use_message_passing);
    field("use_future_social", &Config::use_future_social);
    field("teacher_forcing", &Config::teacher_forcing);
    field("object_visual_len", &Config::object_visual_len);
    field("object_classes", &Config::object_classes);
    field("object_mlp_hidden", &Config::object_mlp_hidden);
    field("context_len", &Config::context_len);
    field("context_mlp_hidden", &Config::context_mlp_hidden);
    field("learning_rate", &Config::learning_rate);
    field("lr_decay", &Config::lr_decay);
    field("omega", &Config::omega);
    field("epochs_per_stage", &Config::epochs_per_stage);
    field("batch_size", &Config::batch_size);
    field("seed", &Config::seed);
    field("val_fraction", &Config::val_fraction);
    field("max_epochs", &Config::max_epochs);
    field("beta", &Config::beta);
    field("visibility_threshold", &Config::visibility_threshold);
    field("gen_samples", &Config::gen_samples);
    field("gen_persons", &Config::gen_persons);
    field("gen_objects", &Config::gen_objects);
    field("gen_motion", &Config::gen_motion);
    field("gen_occlusion", &Config::gen_occlusion);
    field("gen_occl_joint", &Config::gen_occl_joint);
    field("gen_occl_from", &Config::gen_occl_from);
    field("gen_occl_to", &Config::gen_occl_to);
    field("gen_exit_bound", &Config::gen_exit_bound);
    field("gen_speed_scale", &Config::gen_speed_scale);
    field("gen_context", &Config::gen_context);
    field("gen_follower_lag", &Config::gen_follower_lag);
    return t;
  }();
  return table;
}

void validate(const Config& c) {
  if (c.d != 2 && c.d != 3) throw ConfigError("d must be 2 or 3");
  if (c.k == 0) throw ConfigError("k must be >= 1");
  if (c.heads == 0) throw ConfigError("heads must be >= 1");
  if (c.gat_merge != "concat" && c.gat_merge != "average")
    throw ConfigError("gat_merge must be 'concat' or 'average'");
  if (c.omega < 1) throw ConfigError("omega must be >= 1");
  if (c.tau_f > 0 && c.omega > c.tau_f) throw ConfigError("omega exceeds tau_f");
  if (c.frame_interval_ms <= 0) throw ConfigError("frame_interval_ms must be positive");
  if (c.beta <= 0) throw ConfigError("beta must be positive");
  if (c.visibility_threshold < 0 || c.visibility_threshold > 1)
    throw ConfigError("visibility_threshold must be in [0,1]");
  if (c.val_fraction < 0 || c.val_fraction >= 1)
    throw ConfigError("val_fraction must be in [0,1)");
  if (c.gen_motion != "constant-velocity" && c.gen_motion != "sinusoidal-limb" &&
      c.gen_motion != "follower")
    throw ConfigError("gen_motion must be constant-velocity, sinusoidal-limb, or follower");
  if (c.gen_occlusion != "none" && c.gen_occlusion != "window" && c.gen_occlusion != "exit")
    throw ConfigError("gen_occlusion must be none, window, or exit");
  if (c.gen_occlusion == "window" && c.gen_occl_joint >= c.k)
    throw ConfigError("gen_occl_joint out of range for k");
}

}  // namespace

Config config_from_json_text(const std::string& text, const std::string& source) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(source + ": " + e.what());
  }
  if (!doc.is_object()) throw ConfigError(source + ": config must be a JSON object");
  Config config;
  const FieldTable& table = field_table();
  for (const auto& [key, value] : doc.items()) {
    auto it = table.setters.find(key);
    if (it == table.setters.end())
      throw ConfigError(source + ": unknown config key '" + key + "'");
    it->second(config, value);
  }
  validate(config);
  return config;
}

Config load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return config_from_json_text(buffer.str(), path);
}

void apply_override(Config& config, const std::string& key, const std::string& value) {
  const FieldTable& table = field_table();
  auto it = table.setters.find(key);
  if (it == table.setters.end()) throw ConfigError("unknown config key '" + key + "'");
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::parse_error&) {
    parsed = value;  // bare string such as follower
  }
  it->second(config, parsed);
  validate(config);
}

std::string config_to_json(const Config& config) {
  json doc = json::object();
  for (const auto& [key, getter] : field_table().getters) doc[key] = getter(config);
  return doc.dump(2) + "\n";
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& [name, text] : presets::kPresets) names.push_back(name);
  return names;
}

const std::string& preset_text(const std::string& name) {
  for (const auto& [preset, text] : presets::kPresets)
    if (preset == name) return text;
  std::string known;
  for (const auto& [preset, text] : presets::kPresets) known += " " + preset;
  throw ConfigError("unknown preset '" + name + "'; available:" + known);
}

Config load_preset(const std::string& name) {
  return config_from_json_text(preset_text(name), "preset " + name);
}

ModelConfig Config::model() const {
  ModelConfig m;
  m.k = k;
  m.d = d;
  m.hidden = hidden;
  m.node_dim = node_dim;
  m.heads = heads;
  m.merge = gat_merge == "average" ? GatMerge::average : GatMerge::concat;
  m.pose_graph_dense = pose_graph_dense;
  m.mp_iterations = mp_iterations;
  m.use_h2o = use_h2o;
  m.use_h2h = use_h2h;
  m.use_message_passing = use_message_passing;
  m.use_future_social = use_future_social;
  m.use_context = use_context;
  m.teacher_forcing = teacher_forcing;
  m.object_visual_len = object_visual_len;
  m.object_classes = object_classes;
  m.object_mlp_hidden = object_mlp_hidden;
  m.context_len = context_len;
  m.context_mlp_hidden = context_mlp_hidden;
  return m;
}

GeneratorConfig Config::generator() const {
  GeneratorConfig g;
  g.n_samples = gen_samples;
  g.n_persons = gen_persons;
  g.k = k;
  g.d = d;
  g.tau_o = tau_o;
  g.tau_f = tau_f;
  g.frame_interval_ms = frame_interval_ms;
  g.units = units;
  g.motion = gen_motion == "follower"
                 ? MotionModel::follower
                 : (gen_motion == "sinusoidal-limb" ? MotionModel::sinusoidal_limb
                                                    : MotionModel::constant_velocity);
  g.speed_scale = gen_speed_scale;
  g.occlusion = gen_occlusion == "window"
                    ? OcclusionModel::window
                    : (gen_occlusion == "exit" ? OcclusionModel::exit : OcclusionModel::none);
  g.occl_joint = gen_occl_joint;
  g.occl_from = gen_occl_from;
  g.occl_to = gen_occl_to;
  g.exit_bound = gen_exit_bound;
  g.n_objects = gen_objects;
  g.object_visual_len = object_visual_len;
  g.object_classes = object_classes;
  g.with_context = gen_context;
  g.context_len = context_len;
  g.follower_lag = gen_follower_lag;
  g.seed = seed;
  return g;
}

TrainConfig Config::trainer() const {
  TrainConfig t;
  t.epochs_per_stage = epochs_per_stage;
  t.batch_size = batch_size;
  t.seed = seed;
  t.learning_rate = learning_rate;
  t.lr_decay = lr_decay;
  t.omega = omega;
  t.val_fraction = val_fraction;
  t.max_global_epochs = max_epochs;
  return t;
}

ReportConfig Config::reporter() const {
  ReportConfig r;
  r.beta = beta;
  r.vis_threshold = visibility_threshold;
  r.ms_grid = ms_grid;
  return r;
}

}  // namespace posecast
