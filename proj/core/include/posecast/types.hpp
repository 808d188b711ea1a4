#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

// Domain types for joint trajectory-and-pose forecasting. A joint's state is
// the triple (offset, absolute location, visibility); a pose is K such
// triples; tracks carry observed history and optional future ground truth.
// All types are immutable value data once built.

namespace posecast {

struct JointState {
  std::vector<double> offset;    // length d, coordinate units per frame
  std::vector<double> location;  // length d, coordinate units
  double visibility = 1.0;       // exactly 0/1 in data files, [0,1] in predictions
};

struct Pose {
  std::vector<JointState> joints;  // K entries, constant within a dataset

  std::size_t joint_count() const { return joints.size(); }
};

struct PersonTrack {
  std::string person_id;
  std::vector<Pose> observed;               // tau_o frames, non-empty
  std::optional<std::vector<Pose>> future;  // tau_f frames when present
};

struct ObjectFeature {
  std::vector<double> visual;            // configurable length, default 1024
  std::array<double, 2> bbox_center{};   // normalized to scene extent
  std::array<double, 2> bbox_size{};     // components in [0,1]
  int class_id = 0;
};

struct SceneSample {
  std::vector<PersonTrack> persons;
  std::vector<ObjectFeature> objects;
  std::optional<std::vector<double>> context;  // precomputed scene feature
  double frame_interval_ms = 0.0;
};

// Boolean visibility indexed (person, frame, joint).
class VisibilityMask {
 public:
  VisibilityMask() = default;
  VisibilityMask(std::size_t persons, std::size_t frames, std::size_t joints)
      : persons_(persons), frames_(frames), joints_(joints),
        bits_(persons * frames * joints, false) {}

  std::vector<bool>::reference operator()(std::size_t p, std::size_t f, std::size_t j) {
    return bits_[(p * frames_ + f) * joints_ + j];
  }
  bool operator()(std::size_t p, std::size_t f, std::size_t j) const {
    return bits_[(p * frames_ + f) * joints_ + j];
  }

  std::size_t persons() const { return persons_; }
  std::size_t frames() const { return frames_; }
  std::size_t joints() const { return joints_; }

 private:
  std::size_t persons_ = 0, frames_ = 0, joints_ = 0;
  std::vector<bool> bits_;
};

// One invariant violation, with -1 on axes that do not apply.
struct Violation {
  std::string rule;
  long person = -1;
  long frame = -1;
  long joint = -1;
  std::string message;
};

struct ValidationResult {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

// Flattened feature layout, fixed globally: per joint in skeleton order,
// offset (d), location (d), visibility (1). F = K*(2d+1).
std::size_t flat_size(std::size_t k, std::size_t d);
std::vector<double> flatten_pose(const Pose& pose);
Pose unflatten_pose(const std::vector<double>& flat, std::size_t k, std::size_t d);

// Dimensionality helpers; throw on malformed poses.
std::size_t pose_dim(const Pose& pose);       // d
std::size_t sample_joints(const SceneSample& s);  // K
std::size_t sample_dim(const SceneSample& s);     // d

// Returns every invariant violation with coordinates; ok iff none.
ValidationResult validate_sample(const SceneSample& sample);

// Ground-truth future visibility of every person, indexed (person, frame, joint).
VisibilityMask future_visibility(const SceneSample& sample);

}  // namespace posecast
