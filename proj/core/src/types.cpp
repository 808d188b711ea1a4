#include "posecast/types.hpp"

#include <cmath>
#include <stdexcept>

namespace posecast {

std::size_t flat_size(std::size_t k, std::size_t d) { return k * (2 * d + 1); }

std::size_t pose_dim(const Pose& pose) {
  if (pose.joints.empty()) throw std::invalid_argument("pose_dim: pose has no joints");
  return pose.joints.front().offset.size();
}

std::vector<double> flatten_pose(const Pose& pose) {
  std::vector<double> flat;
  const std::size_t d = pose_dim(pose);
  flat.reserve(flat_size(pose.joint_count(), d));
  for (const JointState& js : pose.joints) {
    if (js.offset.size() != d || js.location.size() != d)
      throw std::invalid_argument("flatten_pose: inconsistent joint dimension");
    flat.insert(flat.end(), js.offset.begin(), js.offset.end());
    flat.insert(flat.end(), js.location.begin(), js.location.end());
    flat.push_back(js.visibility);
  }
  return flat;
}

Pose unflatten_pose(const std::vector<double>& flat, std::size_t k, std::size_t d) {
  if (flat.size() != flat_size(k, d))
    throw std::invalid_argument("unflatten_pose: length " + std::to_string(flat.size()) +
                                " does not match K=" + std::to_string(k) +
                                " d=" + std::to_string(d));
  Pose pose;
  pose.joints.resize(k);
  std::size_t i = 0;
  for (JointState& js : pose.joints) {
    js.offset.assign(flat.begin() + i, flat.begin() + i + d);
    i += d;
    js.location.assign(flat.begin() + i, flat.begin() + i + d);
    i += d;
    js.visibility = flat[i++];
  }
  return pose;
}

std::size_t sample_joints(const SceneSample& s) {
  if (s.persons.empty() || s.persons.front().observed.empty())
    throw std::invalid_argument("sample_joints: no observed poses");
  return s.persons.front().observed.front().joint_count();
}

std::size_t sample_dim(const SceneSample& s) {
  if (s.persons.empty() || s.persons.front().observed.empty())
    throw std::invalid_argument("sample_dim: no observed poses");
  return pose_dim(s.persons.front().observed.front());
}

namespace {

void check_pose(const Pose& pose, std::size_t k, std::size_t d, long person, long frame,
                bool binary_visibility, std::vector<Violation>& out) {
  if (pose.joint_count() != k) {
    out.push_back({"joint-count", person, frame, -1,
                   "pose has " + std::to_string(pose.joint_count()) + " joints, expected " +
                       std::to_string(k)});
    return;
  }
  for (std::size_t j = 0; j < pose.joints.size(); ++j) {
    const JointState& js = pose.joints[j];
    if (js.offset.size() != d || js.location.size() != d) {
      out.push_back({"joint-dim", person, frame, static_cast<long>(j),
                     "offset/location length differs from d=" + std::to_string(d)});
      continue;
    }
    for (double v : js.offset)
      if (!std::isfinite(v)) {
        out.push_back({"finite", person, frame, static_cast<long>(j), "non-finite offset"});
        break;
      }
    for (double v : js.location)
      if (!std::isfinite(v)) {
        out.push_back({"finite", person, frame, static_cast<long>(j), "non-finite location"});
        break;
      }
    if (binary_visibility) {
      if (js.visibility != 0.0 && js.visibility != 1.0)
        out.push_back({"binary-visibility", person, frame, static_cast<long>(j),
                       "visibility " + std::to_string(js.visibility) + " is not 0 or 1"});
    } else if (js.visibility < 0.0 || js.visibility > 1.0) {
      out.push_back({"visibility-range", person, frame, static_cast<long>(j),
                     "visibility outside [0,1]"});
    }
  }
}

}  // namespace

ValidationResult validate_sample(const SceneSample& sample) {
  ValidationResult result;
  auto& out = result.violations;

  if (sample.frame_interval_ms <= 0.0)
    out.push_back({"frame-interval", -1, -1, -1, "frame_interval_ms must be positive"});
  if (sample.persons.empty()) {
    out.push_back({"persons", -1, -1, -1, "sample has no persons"});
    return result;
  }

  // Reference dims come from the first person's first observed pose.
  const PersonTrack& first = sample.persons.front();
  if (first.observed.empty()) {
    out.push_back({"observation", 0, -1, -1, "person has no observed frames"});
    return result;
  }
  const std::size_t k = first.observed.front().joint_count();
  const std::size_t d = first.observed.front().joints.empty()
                            ? 0
                            : first.observed.front().joints.front().offset.size();
  if (d != 2 && d != 3)
    out.push_back({"dimension", 0, 0, -1, "d must be 2 or 3, got " + std::to_string(d)});
  const std::size_t tau_o = first.observed.size();
  const bool has_future = first.future.has_value();
  const std::size_t tau_f = has_future ? first.future->size() : 0;

  for (std::size_t p = 0; p < sample.persons.size(); ++p) {
    const PersonTrack& person = sample.persons[p];
    const long lp = static_cast<long>(p);
    if (person.observed.empty()) {
      out.push_back({"observation", lp, -1, -1, "person has no observed frames"});
      continue;
    }
    if (person.observed.size() != tau_o)
      out.push_back({"tau-o", lp, -1, -1,
                     "observed length " + std::to_string(person.observed.size()) +
                         " differs from " + std::to_string(tau_o)});
    if (person.future.has_value() != has_future ||
        (has_future && person.future->size() != tau_f))
      out.push_back({"tau-f", lp, -1, -1, "future horizon differs between persons"});

    bool any_visible = false;
    for (std::size_t f = 0; f < person.observed.size(); ++f) {
      check_pose(person.observed[f], k, d, lp, static_cast<long>(f), true, out);
      for (const JointState& js : person.observed[f].joints)
        any_visible = any_visible || js.visibility == 1.0;
    }
    if (!any_visible)
      out.push_back({"observed-visibility", lp, -1, -1,
                     "person is invisible in every observed frame; at least partial past "
                     "history is required"});
    if (person.future)
      for (std::size_t f = 0; f < person.future->size(); ++f)
        check_pose((*person.future)[f], k, d, lp,
                   static_cast<long>(tau_o + f), true, out);
  }

  for (std::size_t o = 0; o < sample.objects.size(); ++o) {
    const ObjectFeature& obj = sample.objects[o];
    if (obj.bbox_size[0] < 0.0 || obj.bbox_size[0] > 1.0 || obj.bbox_size[1] < 0.0 ||
        obj.bbox_size[1] > 1.0)
      out.push_back({"bbox-size", -1, -1, -1,
                     "object " + std::to_string(o) + " bbox_size outside [0,1]"});
    if (obj.class_id < 0)
      out.push_back({"class-id", -1, -1, -1,
                     "object " + std::to_string(o) + " has negative class id"});
  }

  return result;
}

VisibilityMask future_visibility(const SceneSample& sample) {
  if (sample.persons.empty() || !sample.persons.front().future)
    return VisibilityMask(sample.persons.size(), 0, 0);
  const std::size_t tau_f = sample.persons.front().future->size();
  const std::size_t k = sample_joints(sample);
  VisibilityMask mask(sample.persons.size(), tau_f, k);
  for (std::size_t p = 0; p < sample.persons.size(); ++p) {
    const auto& future = *sample.persons[p].future;
    for (std::size_t f = 0; f < future.size(); ++f)
      for (std::size_t j = 0; j < future[f].joints.size(); ++j)
        mask(p, f, j) = future[f].joints[j].visibility == 1.0;
  }
  return mask;
}

}  // namespace posecast
