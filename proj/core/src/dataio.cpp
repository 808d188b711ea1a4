#include "posecast/dataio.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "posecast/autodiff.hpp"

namespace posecast {

using ad::Rng;

namespace {

void put_number(std::ostream& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out << buf;
}

void put_numbers(std::ostream& out, const std::vector<double>& values) {
  for (double v : values) {
    out << ' ';
    put_number(out, v);
  }
}

}  // namespace

void write_dataset(std::ostream& out, const Dataset& dataset) {
  const SequenceHeader& h = dataset.header;
  out << "posecast-seq " << h.version << "\n";
  out << "k " << h.k << "\n";
  out << "d " << h.d << "\n";
  out << "tau_o " << h.tau_o << "\n";
  out << "tau_f " << h.tau_f << "\n";
  out << "frame_interval_ms ";
  put_number(out, h.frame_interval_ms);
  out << "\n";
  out << "units " << h.units << "\n";
  out << "vis_prob " << (h.vis_prob ? 1 : 0) << "\n";
  out << "end_header\n";

  for (std::size_t s = 0; s < dataset.samples.size(); ++s) {
    const SceneSample& sample = dataset.samples[s];
    out << "sample " << s << "\n";
    out << "persons " << sample.persons.size() << "\n";
    out << "objects " << sample.objects.size() << "\n";
    out << "context " << (sample.context ? sample.context->size() : 0) << "\n";
    for (std::size_t p = 0; p < sample.persons.size(); ++p) {
      const PersonTrack& person = sample.persons[p];
      out << "person " << person.person_id << "\n";
      for (const Pose& pose : person.observed) {
        out << "o";
        put_numbers(out, flatten_pose(pose));
        out << "\n";
      }
      if (person.future) {
        for (std::size_t f = 0; f < person.future->size(); ++f) {
          out << "f";
          put_numbers(out, flatten_pose((*person.future)[f]));
          if (h.vis_prob) put_numbers(out, dataset.probs[s][p][f]);
          out << "\n";
        }
      }
    }
    for (const ObjectFeature& obj : sample.objects) {
      out << "object " << obj.class_id;
      put_numbers(out, {obj.bbox_center[0], obj.bbox_center[1], obj.bbox_size[0],
                        obj.bbox_size[1]});
      put_numbers(out, obj.visual);
      out << "\n";
    }
    if (sample.context) {
      out << "ctx";
      put_numbers(out, *sample.context);
      out << "\n";
    }
    out << "end_sample\n";
  }
}

namespace {

class LineReader {
 public:
  LineReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  bool next(std::string& line) {
    while (std::getline(in_, line)) {
      ++line_no_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& message) const {
    throw ParseError(source_ + ":" + std::to_string(line_no_) + ": " + message);
  }
  long line_no() const { return line_no_; }

 private:
  std::istream& in_;
  std::string source_;
  long line_no_ = 0;
};

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> tokens;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) tokens.push_back(tok);
  return tokens;
}

double parse_number(LineReader& reader, const std::string& token) {
  char* end = nullptr;
  double v = std::strtod(token.c_str(), &end);
  if (end == token.c_str() || *end != '\0') reader.fail("bad number '" + token + "'");
  return v;
}

std::size_t parse_count(LineReader& reader, const std::string& token) {
  char* end = nullptr;
  long v = std::strtol(token.c_str(), &end, 10);
  if (end == token.c_str() || *end != '\0' || v < 0)
    reader.fail("bad count '" + token + "'");
  return static_cast<std::size_t>(v);
}

SequenceHeader parse_header(LineReader& reader) {
  SequenceHeader h;
  std::string line;
  if (!reader.next(line)) reader.fail("empty file");
  auto magic = split(line);
  if (magic.size() != 2 || magic[0] != "posecast-seq")
    reader.fail("not a posecast-seq file");
  h.version = static_cast<int>(parse_count(reader, magic[1]));
  if (h.version != 1) reader.fail("unsupported version " + magic[1]);

  bool saw_k = false, saw_d = false, saw_tau_o = false, saw_tau_f = false,
       saw_interval = false;
  while (reader.next(line)) {
    auto tok = split(line);
    if (tok[0] == "end_header") {
      if (!saw_k || !saw_d || !saw_tau_o || !saw_tau_f || !saw_interval)
        reader.fail("header is missing a required field");
      return h;
    }
    if (tok.size() != 2) reader.fail("header line needs exactly one value");
    if (tok[0] == "k") {
      h.k = parse_count(reader, tok[1]);
      saw_k = true;
    } else if (tok[0] == "d") {
      h.d = parse_count(reader, tok[1]);
      saw_d = true;
    } else if (tok[0] == "tau_o") {
      h.tau_o = parse_count(reader, tok[1]);
      saw_tau_o = true;
    } else if (tok[0] == "tau_f") {
      h.tau_f = parse_count(reader, tok[1]);
      saw_tau_f = true;
    } else if (tok[0] == "frame_interval_ms") {
      h.frame_interval_ms = parse_number(reader, tok[1]);
      saw_interval = true;
    } else if (tok[0] == "units") {
      h.units = tok[1];
    } else if (tok[0] == "vis_prob") {
      h.vis_prob = parse_count(reader, tok[1]) != 0;
    } else {
      reader.fail("unknown header field '" + tok[0] + "'");
    }
  }
  reader.fail("missing end_header");
}

}  // namespace

Dataset parse_dataset(std::istream& in, const std::string& source_name) {
  LineReader reader(in, source_name);
  Dataset dataset;
  dataset.header = parse_header(reader);
  const SequenceHeader& h = dataset.header;
  const std::size_t flat = flat_size(h.k, h.d);

  std::string line;
  while (reader.next(line)) {
    auto tok = split(line);
    if (tok[0] != "sample") reader.fail("expected 'sample', found '" + tok[0] + "'");
    SceneSample sample;
    sample.frame_interval_ms = h.frame_interval_ms;
    SampleVisProbs sample_probs;

    if (!reader.next(line)) reader.fail("truncated sample");
    auto persons_tok = split(line);
    if (persons_tok.size() != 2 || persons_tok[0] != "persons")
      reader.fail("expected 'persons <n>'");
    const std::size_t n_persons = parse_count(reader, persons_tok[1]);

    if (!reader.next(line)) reader.fail("truncated sample");
    auto objects_tok = split(line);
    if (objects_tok.size() != 2 || objects_tok[0] != "objects")
      reader.fail("expected 'objects <n>'");
    const std::size_t n_objects = parse_count(reader, objects_tok[1]);

    if (!reader.next(line)) reader.fail("truncated sample");
    auto context_tok = split(line);
    if (context_tok.size() != 2 || context_tok[0] != "context")
      reader.fail("expected 'context <len>'");
    const std::size_t context_len = parse_count(reader, context_tok[1]);

    for (std::size_t p = 0; p < n_persons; ++p) {
      if (!reader.next(line)) reader.fail("truncated person block");
      auto person_tok = split(line);
      if (person_tok.size() != 2 || person_tok[0] != "person")
        reader.fail("expected 'person <id>'");
      PersonTrack track;
      track.person_id = person_tok[1];

      auto read_frame = [&](const char* tag, bool with_probs,
                            std::vector<double>* probs_out) {
        if (!reader.next(line)) reader.fail("truncated frame block");
        auto frame_tok = split(line);
        if (frame_tok.empty() || frame_tok[0] != tag)
          reader.fail(std::string("expected '") + tag + "' frame line for person " +
                      track.person_id);
        const std::size_t expect = flat + (with_probs ? h.k : 0);
        if (frame_tok.size() - 1 != expect)
          reader.fail("frame has " + std::to_string(frame_tok.size() - 1) +
                      " values, expected " + std::to_string(expect) + " (K=" +
                      std::to_string(h.k) + ", d=" + std::to_string(h.d) + ")");
        std::vector<double> values;
        values.reserve(flat);
        for (std::size_t i = 1; i <= flat; ++i)
          values.push_back(parse_number(reader, frame_tok[i]));
        if (with_probs)
          for (std::size_t i = flat + 1; i < frame_tok.size(); ++i)
            probs_out->push_back(parse_number(reader, frame_tok[i]));
        return unflatten_pose(values, h.k, h.d);
      };

      for (std::size_t f = 0; f < h.tau_o; ++f)
        track.observed.push_back(read_frame("o", false, nullptr));
      std::vector<std::vector<double>> person_probs;
      if (h.tau_f > 0) {
        track.future = std::vector<Pose>{};
        for (std::size_t f = 0; f < h.tau_f; ++f) {
          std::vector<double> frame_probs;
          track.future->push_back(read_frame("f", h.vis_prob, &frame_probs));
          if (h.vis_prob) person_probs.push_back(std::move(frame_probs));
        }
      }
      if (h.vis_prob) sample_probs.push_back(std::move(person_probs));
      sample.persons.push_back(std::move(track));
    }

    for (std::size_t o = 0; o < n_objects; ++o) {
      if (!reader.next(line)) reader.fail("truncated object block");
      auto obj_tok = split(line);
      if (obj_tok.size() < 6 || obj_tok[0] != "object")
        reader.fail("expected 'object <class> <cx> <cy> <w> <h> <visual...>'");
      ObjectFeature obj;
      obj.class_id = static_cast<int>(parse_count(reader, obj_tok[1]));
      obj.bbox_center = {parse_number(reader, obj_tok[2]), parse_number(reader, obj_tok[3])};
      obj.bbox_size = {parse_number(reader, obj_tok[4]), parse_number(reader, obj_tok[5])};
      for (std::size_t i = 6; i < obj_tok.size(); ++i)
        obj.visual.push_back(parse_number(reader, obj_tok[i]));
      sample.objects.push_back(std::move(obj));
    }

    if (context_len > 0) {
      if (!reader.next(line)) reader.fail("truncated context block");
      auto ctx_tok = split(line);
      if (ctx_tok.empty() || ctx_tok[0] != "ctx") reader.fail("expected 'ctx <numbers>'");
      if (ctx_tok.size() - 1 != context_len)
        reader.fail("context has " + std::to_string(ctx_tok.size() - 1) +
                    " values, declared " + std::to_string(context_len));
      sample.context = std::vector<double>{};
      for (std::size_t i = 1; i < ctx_tok.size(); ++i)
        sample.context->push_back(parse_number(reader, ctx_tok[i]));
    }

    if (!reader.next(line) || line != "end_sample") reader.fail("missing end_sample");

    ValidationResult valid = validate_sample(sample);
    if (!valid.ok()) {
      const Violation& v = valid.violations.front();
      reader.fail("sample " + std::to_string(dataset.samples.size()) + " invalid (rule " +
                  v.rule + ", person " + std::to_string(v.person) + ", frame " +
                  std::to_string(v.frame) + ", joint " + std::to_string(v.joint) + "): " +
                  v.message);
    }
    dataset.samples.push_back(std::move(sample));
    dataset.probs.push_back(std::move(sample_probs));
  }
  if (!h.vis_prob) dataset.probs.assign(dataset.samples.size(), {});
  return dataset;
}

void write_dataset_file(const std::string& path, const Dataset& dataset) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_dataset(out, dataset);
  if (!out.good()) throw std::runtime_error("write failed for " + path);
}

Dataset parse_dataset_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  return parse_dataset(in, path);
}

// ---------------------------------------------------------------------------
// generator

namespace {

// multiples of 1/8 stay exact through sums and small integer multiples
double dyadic(Rng& rng, long lo_eighths, long hi_eighths) {
  return static_cast<double>(rng.uniform_int(lo_eighths, hi_eighths)) * 0.125;
}

struct PersonPlan {
  // closed-form location of joint j at global frame t, and its offset
  std::vector<std::vector<double>> locations;  // frame -> k*d
  std::vector<std::vector<double>> offsets;    // frame -> k*d
};

PersonPlan plan_constant_velocity(Rng& rng, const GeneratorConfig& c) {
  const std::size_t total = c.tau_o + c.tau_f;
  std::vector<double> p0(c.d), v(c.d);
  for (std::size_t i = 0; i < c.d; ++i) {
    p0[i] = dyadic(rng, -480, 480);
    v[i] = dyadic(rng, -12, 12) * c.speed_scale;
  }
  std::vector<std::vector<double>> radii(c.k, std::vector<double>(c.d));
  for (auto& r : radii)
    for (std::size_t i = 0; i < c.d; ++i) r[i] = dyadic(rng, -24, 24);

  PersonPlan plan;
  plan.locations.resize(total);
  plan.offsets.resize(total);
  for (std::size_t t = 0; t < total; ++t) {
    plan.locations[t].resize(c.k * c.d);
    plan.offsets[t].resize(c.k * c.d);
    for (std::size_t j = 0; j < c.k; ++j)
      for (std::size_t i = 0; i < c.d; ++i) {
        plan.locations[t][j * c.d + i] =
            p0[i] + static_cast<double>(t) * v[i] + radii[j][i];
        plan.offsets[t][j * c.d + i] = v[i];
      }
  }
  return plan;
}

PersonPlan plan_sinusoidal(Rng& rng, const GeneratorConfig& c) {
  const std::size_t total = c.tau_o + c.tau_f;
  std::vector<double> p0(c.d), v(c.d);
  for (std::size_t i = 0; i < c.d; ++i) {
    p0[i] = dyadic(rng, -480, 480);
    v[i] = dyadic(rng, -12, 12) * c.speed_scale;
  }
  std::vector<std::vector<double>> radii(c.k, std::vector<double>(c.d));
  std::vector<double> amp(c.k), freq(c.k), phase(c.k);
  for (std::size_t j = 0; j < c.k; ++j) {
    for (std::size_t i = 0; i < c.d; ++i) radii[j][i] = dyadic(rng, -24, 24);
    amp[j] = rng.uniform(0.5, 2.0);
    freq[j] = rng.uniform(0.3, 0.8);
    phase[j] = rng.uniform(0.0, 6.28318);
  }

  auto joint_loc = [&](std::size_t j, long t, std::size_t i) {
    double base = p0[i] + static_cast<double>(t) * v[i] + radii[j][i];
    // limb wobble on the first axis pair
    double wobble = amp[j] * std::sin(freq[j] * static_cast<double>(t) + phase[j]);
    return i == 0 ? base + wobble : base;
  };

  PersonPlan plan;
  plan.locations.resize(total);
  plan.offsets.resize(total);
  for (std::size_t t = 0; t < total; ++t) {
    plan.locations[t].resize(c.k * c.d);
    plan.offsets[t].resize(c.k * c.d);
    for (std::size_t j = 0; j < c.k; ++j)
      for (std::size_t i = 0; i < c.d; ++i) {
        double here = joint_loc(j, static_cast<long>(t), i);
        double prev = joint_loc(j, static_cast<long>(t) - 1, i);
        plan.locations[t][j * c.d + i] = here;
        plan.offsets[t][j * c.d + i] = here - prev;
      }
  }
  return plan;
}

// curved leader path sampled from lag frames before the window start
std::vector<std::vector<double>> leader_centers(Rng& rng, const GeneratorConfig& c,
                                                std::size_t lag) {
  const std::size_t total = c.tau_o + c.tau_f;
  const double speed = rng.uniform(0.75, 1.5);
  const double turn = (rng.uniform() < 0.5 ? 1.0 : -1.0) * rng.uniform(0.12, 0.3);
  double heading = rng.uniform(0.0, 6.28318);
  std::vector<double> pos(c.d);
  for (std::size_t i = 0; i < c.d; ++i) pos[i] = rng.uniform(-32.0, 32.0);

  std::vector<std::vector<double>> centers(total + lag + 1);
  centers[0] = pos;
  for (std::size_t step = 1; step < centers.size(); ++step) {
    pos[0] += speed * std::cos(heading);
    if (c.d > 1) pos[1] += speed * std::sin(heading);
    if (c.d > 2) pos[2] += 0.25 * std::sin(0.2 * static_cast<double>(step));
    heading += turn;
    centers[step] = pos;
  }
  return centers;  // index lag+1+t is global frame t of the leader
}

PersonPlan plan_from_centers(Rng& rng, const GeneratorConfig& c,
                             const std::vector<std::vector<double>>& centers,
                             std::size_t first_index) {
  const std::size_t total = c.tau_o + c.tau_f;
  std::vector<std::vector<double>> radii(c.k, std::vector<double>(c.d));
  for (auto& r : radii)
    for (std::size_t i = 0; i < c.d; ++i) r[i] = dyadic(rng, -24, 24);

  PersonPlan plan;
  plan.locations.resize(total);
  plan.offsets.resize(total);
  for (std::size_t t = 0; t < total; ++t) {
    plan.locations[t].resize(c.k * c.d);
    plan.offsets[t].resize(c.k * c.d);
    const auto& here = centers[first_index + t];
    const auto& prev = centers[first_index + t - 1];
    for (std::size_t j = 0; j < c.k; ++j)
      for (std::size_t i = 0; i < c.d; ++i) {
        plan.locations[t][j * c.d + i] = here[i] + radii[j][i];
        plan.offsets[t][j * c.d + i] = here[i] - prev[i];
      }
  }
  return plan;
}

Pose pose_from_plan(const PersonPlan& plan, std::size_t frame, std::size_t k,
                    std::size_t d) {
  Pose pose;
  pose.joints.resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    pose.joints[j].offset.assign(plan.offsets[frame].begin() + j * d,
                                 plan.offsets[frame].begin() + (j + 1) * d);
    pose.joints[j].location.assign(plan.locations[frame].begin() + j * d,
                                   plan.locations[frame].begin() + (j + 1) * d);
    pose.joints[j].visibility = 1.0;
  }
  return pose;
}

void hide_joint(Pose& pose, std::size_t j) {
  std::fill(pose.joints[j].offset.begin(), pose.joints[j].offset.end(), 0.0);
  std::fill(pose.joints[j].location.begin(), pose.joints[j].location.end(), 0.0);
  pose.joints[j].visibility = 0.0;
}

std::vector<double> class_visual_template(int class_id, std::size_t len) {
  Rng rng(7919u * static_cast<std::uint64_t>(class_id) + 13u);
  std::vector<double> v(len);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

constexpr double kSceneExtent = 96.0;  // normalization span for object geometry

}  // namespace

Dataset generate(const GeneratorConfig& c) {
  if (c.n_persons == 0 || c.k == 0 || c.tau_o == 0)
    throw std::invalid_argument("generate: n_persons, k, and tau_o must be positive");
  if (c.d != 2 && c.d != 3) throw std::invalid_argument("generate: d must be 2 or 3");
  if (c.occlusion == OcclusionModel::window && c.occl_joint >= c.k)
    throw std::invalid_argument("generate: occl_joint out of range");

  Dataset dataset;
  dataset.header = SequenceHeader{1,        c.k,   c.d,     c.tau_o,
                                  c.tau_f,  c.frame_interval_ms, c.units, false};
  Rng rng(c.seed);
  const std::size_t total = c.tau_o + c.tau_f;
  const std::size_t lag = c.follower_lag == 0 ? c.tau_f : c.follower_lag;

  for (std::size_t s = 0; s < c.n_samples; ++s) {
    SceneSample sample;
    sample.frame_interval_ms = c.frame_interval_ms;

    std::vector<PersonPlan> plans;
    std::vector<std::vector<double>> leader;
    for (std::size_t p = 0; p < c.n_persons; ++p) {
      switch (c.motion) {
        case MotionModel::constant_velocity:
          plans.push_back(plan_constant_velocity(rng, c));
          break;
        case MotionModel::sinusoidal_limb:
          plans.push_back(plan_sinusoidal(rng, c));
          break;
        case MotionModel::follower:
          if (p == 0) {
            leader = leader_centers(rng, c, lag);
            plans.push_back(plan_from_centers(rng, c, leader, lag + 1));
          } else if (p == 1) {
            // lagged copy of the leader's path: frame t sits where the leader
            // was lag frames earlier
            plans.push_back(plan_from_centers(rng, c, leader, 1));
          } else {
            plans.push_back(plan_constant_velocity(rng, c));
          }
          break;
      }
    }

    for (std::size_t p = 0; p < c.n_persons; ++p) {
      PersonTrack track;
      track.person_id = "p" + std::to_string(p);
      std::vector<Pose> frames;
      for (std::size_t t = 0; t < total; ++t)
        frames.push_back(pose_from_plan(plans[p], t, c.k, c.d));

      if (c.occlusion == OcclusionModel::window) {
        std::size_t from = c.occl_from;
        // keep at least one visible observed frame when K == 1
        if (c.k == 1 && from == 0) from = 1;
        for (std::size_t t = from; t <= c.occl_to && t < total; ++t)
          hide_joint(frames[t], c.occl_joint);
      } else if (c.occlusion == OcclusionModel::exit) {
        std::size_t exit_frame = total;
        for (std::size_t t = 0; t < total; ++t) {
          for (std::size_t i = 0; i < c.d; ++i)
            if (std::abs(plans[p].locations[t][i]) > c.exit_bound) {
              exit_frame = t;
              break;
            }
          if (exit_frame != total) break;
        }
        if (exit_frame == 0) exit_frame = 1;  // partial past history must exist
        for (std::size_t t = exit_frame; t < total; ++t)
          for (std::size_t j = 0; j < c.k; ++j) hide_joint(frames[t], j);
      }

      track.observed.assign(frames.begin(), frames.begin() + c.tau_o);
      if (c.tau_f > 0)
        track.future = std::vector<Pose>(frames.begin() + c.tau_o, frames.end());
      sample.persons.push_back(std::move(track));
    }

    for (std::size_t o = 0; o < c.n_objects; ++o) {
      ObjectFeature obj;
      obj.class_id = static_cast<int>(o % c.object_classes);
      obj.visual = class_visual_template(obj.class_id, c.object_visual_len);
      std::array<double, 2> pos{};
      if (c.motion == MotionModel::follower && o == 0 && !leader.empty()) {
        // goal marker at the leader's final position
        const auto& goal = leader.back();
        pos = {goal[0], c.d > 1 ? goal[1] : 0.0};
      } else {
        pos = {rng.uniform(-kSceneExtent, kSceneExtent),
               rng.uniform(-kSceneExtent, kSceneExtent)};
      }
      auto clamp01 = [](double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); };
      obj.bbox_center = {clamp01((pos[0] + kSceneExtent) / (2.0 * kSceneExtent)),
                         clamp01((pos[1] + kSceneExtent) / (2.0 * kSceneExtent))};
      obj.bbox_size = {0.0625 * (1.0 + static_cast<double>(obj.class_id % 3)),
                       0.0625 * (1.0 + static_cast<double>((obj.class_id + 1) % 3))};
      sample.objects.push_back(std::move(obj));
    }

    if (c.with_context) {
      sample.context = std::vector<double>(c.context_len);
      for (double& v : *sample.context) v = rng.uniform(-1.0, 1.0);
    }

    dataset.samples.push_back(std::move(sample));
  }
  dataset.probs.assign(dataset.samples.size(), {});
  return dataset;
}

ForecastResult baseline_zero_velocity(const SceneSample& sample) {
  const std::size_t k = sample_joints(sample);
  const std::size_t d = sample_dim(sample);
  const std::size_t tau_f =
      sample.persons.front().future ? sample.persons.front().future->size() : 0;
  ForecastResult result;
  result.k = k;
  result.d = d;
  for (const PersonTrack& person : sample.persons) {
    PersonForecast forecast;
    forecast.person_id = person.person_id;
    const Pose& last = person.observed.back();
    FramePrediction frame;
    frame.offsets.assign(k * d, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
      for (std::size_t i = 0; i < d; ++i)
        frame.locations.push_back(last.joints[j].location[i]);
      frame.visibility.push_back(last.joints[j].visibility);
    }
    forecast.frames.assign(tau_f, frame);
    result.persons.push_back(std::move(forecast));
  }
  return result;
}

ForecastResult baseline_constant_velocity(const SceneSample& sample) {
  if (sample.persons.empty() || sample.persons.front().observed.size() < 2)
    throw std::invalid_argument("baseline_constant_velocity: needs tau_o >= 2");
  const std::size_t k = sample_joints(sample);
  const std::size_t d = sample_dim(sample);
  const std::size_t tau_f =
      sample.persons.front().future ? sample.persons.front().future->size() : 0;
  ForecastResult result;
  result.k = k;
  result.d = d;
  for (const PersonTrack& person : sample.persons) {
    PersonForecast forecast;
    forecast.person_id = person.person_id;
    const Pose& last = person.observed.back();
    std::vector<double> loc(k * d), vel(k * d);
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t i = 0; i < d; ++i) {
        loc[j * d + i] = last.joints[j].location[i];
        vel[j * d + i] = last.joints[j].offset[i];
      }
    for (std::size_t t = 0; t < tau_f; ++t) {
      FramePrediction frame;
      frame.offsets = vel;
      for (std::size_t i = 0; i < k * d; ++i) loc[i] += vel[i];
      frame.locations = loc;
      for (std::size_t j = 0; j < k; ++j)
        frame.visibility.push_back(last.joints[j].visibility);
      forecast.frames.push_back(std::move(frame));
    }
    result.persons.push_back(std::move(forecast));
  }
  return result;
}

Dataset forecast_to_dataset(const Dataset& source,
                            const std::vector<ForecastResult>& forecasts,
                            double vis_threshold) {
  if (source.samples.size() != forecasts.size())
    throw std::invalid_argument("forecast_to_dataset: sample/forecast count mismatch");
  Dataset out;
  out.header = source.header;
  out.header.vis_prob = true;
  for (std::size_t s = 0; s < source.samples.size(); ++s) {
    const SceneSample& src = source.samples[s];
    const ForecastResult& forecast = forecasts[s];
    if (forecast.persons.size() != src.persons.size())
      throw std::invalid_argument("forecast_to_dataset: person count mismatch in sample " +
                                  std::to_string(s));
    out.header.tau_f = forecast.horizon();
    SceneSample sample;
    sample.frame_interval_ms = src.frame_interval_ms;
    sample.objects = src.objects;
    sample.context = src.context;
    SampleVisProbs probs;
    for (std::size_t p = 0; p < src.persons.size(); ++p) {
      PersonTrack track;
      track.person_id = src.persons[p].person_id;
      track.observed = src.persons[p].observed;
      track.future = std::vector<Pose>{};
      std::vector<std::vector<double>> person_probs;
      for (const FramePrediction& frame : forecast.persons[p].frames) {
        Pose pose;
        pose.joints.resize(forecast.k);
        std::vector<double> frame_probs;
        for (std::size_t j = 0; j < forecast.k; ++j) {
          pose.joints[j].offset.assign(frame.offsets.begin() + j * forecast.d,
                                       frame.offsets.begin() + (j + 1) * forecast.d);
          pose.joints[j].location.assign(frame.locations.begin() + j * forecast.d,
                                         frame.locations.begin() + (j + 1) * forecast.d);
          pose.joints[j].visibility = frame.visibility[j] >= vis_threshold ? 1.0 : 0.0;
          frame_probs.push_back(frame.visibility[j]);
        }
        track.future->push_back(std::move(pose));
        person_probs.push_back(std::move(frame_probs));
      }
      sample.persons.push_back(std::move(track));
      probs.push_back(std::move(person_probs));
    }
    out.samples.push_back(std::move(sample));
    out.probs.push_back(std::move(probs));
  }
  return out;
}

}  // namespace posecast
