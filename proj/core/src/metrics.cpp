#include "posecast/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace posecast {

double vam_pair(const JointSet& g, const JointSet& q, double beta) {
  if (beta <= 0.0) throw std::invalid_argument("vam_pair: beta must be positive");
  double dist = 0.0;
  if (g.location && q.location) {
    if (g.location->size() != q.location->size())
      throw std::invalid_argument("vam_pair: dimension mismatch");
    double sq = 0.0;
    for (std::size_t i = 0; i < g.location->size(); ++i) {
      double diff = (*g.location)[i] - (*q.location)[i];
      sq += diff * diff;
    }
    dist = std::min(beta, std::sqrt(sq));
  }
  double card = static_cast<double>(g.cardinality()) - static_cast<double>(q.cardinality());
  return std::sqrt(dist * dist + beta * beta * card * card);
}

EvalScene eval_view_truth(const SceneSample& sample) {
  EvalScene scene;
  scene.k = sample_joints(sample);
  scene.d = sample_dim(sample);
  scene.frame_interval_ms = sample.frame_interval_ms;
  scene.frames = sample.persons.front().future ? sample.persons.front().future->size() : 0;
  for (const PersonTrack& person : sample.persons) {
    EvalTrack track;
    track.person_id = person.person_id;
    if (person.future) {
      for (const Pose& pose : *person.future) {
        std::vector<double> loc;
        std::vector<bool> vis;
        for (const JointState& js : pose.joints) {
          loc.insert(loc.end(), js.location.begin(), js.location.end());
          vis.push_back(js.visibility == 1.0);
        }
        track.locations.push_back(std::move(loc));
        track.visible.push_back(std::move(vis));
      }
    }
    scene.tracks.push_back(std::move(track));
  }
  return scene;
}

EvalScene eval_view_prediction(const SceneSample& sample) { return eval_view_truth(sample); }

EvalScene eval_view(const ForecastResult& forecast, double frame_interval_ms,
                    double vis_threshold) {
  EvalScene scene;
  scene.k = forecast.k;
  scene.d = forecast.d;
  scene.frames = forecast.horizon();
  scene.frame_interval_ms = frame_interval_ms;
  for (const PersonForecast& person : forecast.persons) {
    EvalTrack track;
    track.person_id = person.person_id;
    for (const FramePrediction& frame : person.frames) {
      track.locations.push_back(frame.locations);
      std::vector<bool> vis;
      for (double v : frame.visibility) vis.push_back(v >= vis_threshold);
      track.visible.push_back(std::move(vis));
    }
    scene.tracks.push_back(std::move(track));
  }
  return scene;
}

namespace {

void check_aligned(const EvalScene& pred, const EvalScene& truth) {
  if (pred.tracks.size() != truth.tracks.size())
    throw std::invalid_argument("metrics: prediction has " +
                                std::to_string(pred.tracks.size()) + " persons, truth " +
                                std::to_string(truth.tracks.size()));
  if (pred.k != truth.k || pred.d != truth.d)
    throw std::invalid_argument("metrics: K/d mismatch between prediction and truth");
  if (pred.frames != truth.frames)
    throw std::invalid_argument("metrics: horizon mismatch, prediction " +
                                std::to_string(pred.frames) + " vs truth " +
                                std::to_string(truth.frames));
  for (std::size_t p = 0; p < pred.tracks.size(); ++p)
    if (pred.tracks[p].person_id != truth.tracks[p].person_id)
      throw std::invalid_argument("metrics: person " + std::to_string(p) +
                                  " is '" + pred.tracks[p].person_id + "' in prediction but '" +
                                  truth.tracks[p].person_id + "' in truth");
}

double joint_distance(const std::vector<double>& a, const std::vector<double>& b,
                      std::size_t joint, std::size_t d) {
  double sq = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    double diff = a[joint * d + i] - b[joint * d + i];
    sq += diff * diff;
  }
  return std::sqrt(sq);
}

}  // namespace

std::optional<double> vim(const EvalScene& pred, const EvalScene& truth, std::size_t frame) {
  check_aligned(pred, truth);
  if (frame >= truth.frames) throw std::invalid_argument("vim: frame out of range");
  double person_sum = 0.0;
  std::size_t person_count = 0;
  for (std::size_t p = 0; p < truth.tracks.size(); ++p) {
    const EvalTrack& t = truth.tracks[p];
    double joint_sum = 0.0;
    std::size_t joints = 0;
    for (std::size_t j = 0; j < truth.k; ++j) {
      if (!t.visible[frame][j]) continue;  // invisible joints are discarded
      joint_sum += joint_distance(pred.tracks[p].locations[frame], t.locations[frame], j,
                                  truth.d);
      ++joints;
    }
    if (joints > 0) {
      person_sum += joint_sum / static_cast<double>(joints);
      ++person_count;
    }
  }
  if (person_count == 0) return std::nullopt;
  return person_sum / static_cast<double>(person_count);
}

std::optional<double> vim(const ForecastResult& pred, const SceneSample& truth,
                          std::size_t frame, double vis_threshold) {
  return vim(eval_view(pred, truth.frame_interval_ms, vis_threshold),
             eval_view_truth(truth), frame);
}

double vam(const EvalScene& pred, const EvalScene& truth, double beta, std::size_t frame) {
  check_aligned(pred, truth);
  if (frame >= truth.frames) throw std::invalid_argument("vam: frame out of range");
  double sum = 0.0;
  std::size_t alpha = 0;
  for (std::size_t p = 0; p < truth.tracks.size(); ++p) {
    for (std::size_t j = 0; j < truth.k; ++j) {
      JointSet g, q;
      if (truth.tracks[p].visible[frame][j]) {
        g.location = std::vector<double>(
            truth.tracks[p].locations[frame].begin() + j * truth.d,
            truth.tracks[p].locations[frame].begin() + (j + 1) * truth.d);
      }
      if (pred.tracks[p].visible[frame][j]) {
        q.location = std::vector<double>(
            pred.tracks[p].locations[frame].begin() + j * truth.d,
            pred.tracks[p].locations[frame].begin() + (j + 1) * truth.d);
      }
      sum += vam_pair(g, q, beta);
      alpha += std::max(g.cardinality(), q.cardinality());
    }
  }
  if (alpha == 0) return 0.0;
  return sum / static_cast<double>(alpha);
}

double vam(const ForecastResult& pred, const SceneSample& truth, double beta,
           std::size_t frame, double vis_threshold) {
  return vam(eval_view(pred, truth.frame_interval_ms, vis_threshold),
             eval_view_truth(truth), beta, frame);
}

namespace {

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

VisibilityScore score_vectors(const std::vector<Confusion>& per_joint) {
  VisibilityScore score;
  if (per_joint.empty()) return score;  // vacuous: perfect agreement
  double iou_sum = 0.0, f1_sum = 0.0;
  for (const Confusion& c : per_joint) {
    if (c.tp + c.fp + c.fn == 0) {
      iou_sum += 1.0;  // no positives anywhere: perfect agreement convention
      f1_sum += 1.0;
    } else {
      iou_sum += static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp + c.fn);
      f1_sum +=
          static_cast<double>(2 * c.tp) / static_cast<double>(2 * c.tp + c.fp + c.fn);
    }
  }
  score.scored_joints = per_joint.size();
  score.iou = iou_sum / static_cast<double>(per_joint.size());
  score.f1 = f1_sum / static_cast<double>(per_joint.size());
  return score;
}

}  // namespace

VisibilityScore visibility_scores(const EvalScene& pred, const EvalScene& truth,
                                  bool filtered) {
  check_aligned(pred, truth);
  std::vector<Confusion> per_joint;
  for (std::size_t p = 0; p < truth.tracks.size(); ++p) {
    for (std::size_t j = 0; j < truth.k; ++j) {
      bool any_invisible = false;
      Confusion c;
      for (std::size_t f = 0; f < truth.frames; ++f) {
        bool t = truth.tracks[p].visible[f][j];
        bool q = pred.tracks[p].visible[f][j];
        any_invisible = any_invisible || !t;
        if (t && q) ++c.tp;
        else if (!t && q) ++c.fp;
        else if (t && !q) ++c.fn;
        else ++c.tn;
      }
      if (filtered && !any_invisible) continue;
      per_joint.push_back(c);
    }
  }
  return score_vectors(per_joint);
}

VisibilityScore visibility_scores_frame(const EvalScene& pred, const EvalScene& truth,
                                        std::size_t frame) {
  check_aligned(pred, truth);
  std::vector<Confusion> per_joint;
  for (std::size_t p = 0; p < truth.tracks.size(); ++p) {
    for (std::size_t j = 0; j < truth.k; ++j) {
      Confusion c;
      bool t = truth.tracks[p].visible[frame][j];
      bool q = pred.tracks[p].visible[frame][j];
      if (t && q) ++c.tp;
      else if (!t && q) ++c.fp;
      else if (t && !q) ++c.fn;
      else ++c.tn;
      per_joint.push_back(c);
    }
  }
  return score_vectors(per_joint);
}

EvalScene truncate_frames(EvalScene scene, std::size_t frames) {
  if (frames > scene.frames)
    throw std::invalid_argument("truncate_frames: cannot extend a scene");
  scene.frames = frames;
  for (EvalTrack& track : scene.tracks) {
    track.locations.resize(frames);
    track.visible.resize(frames);
  }
  return scene;
}

std::size_t horizon_frame(double horizon_ms, double frame_interval_ms, std::size_t frames) {
  if (frame_interval_ms <= 0.0 || frames == 0)
    throw std::invalid_argument("horizon_frame: needs a positive interval and frames");
  long frame = std::lround(horizon_ms / frame_interval_ms);
  frame = std::max(1l, std::min(frame, static_cast<long>(frames)));
  return static_cast<std::size_t>(frame);
}

MetricReport report(const std::vector<EvalScene>& pred, const std::vector<EvalScene>& truth,
                    const ReportConfig& config) {
  if (pred.size() != truth.size())
    throw std::invalid_argument("report: prediction has " + std::to_string(pred.size()) +
                                " samples, truth " + std::to_string(truth.size()));
  if (truth.empty()) return {};
  const std::size_t frames = truth.front().frames;
  for (std::size_t s = 0; s < truth.size(); ++s) {
    if (truth[s].frames != frames)
      throw std::invalid_argument("report: sample " + std::to_string(s) +
                                  " has a different horizon");
    check_aligned(pred[s], truth[s]);
  }

  MetricReport out;
  if (frames == 0) return out;  // nothing to score, nothing to map
  for (std::size_t f = 0; f < frames; ++f) {
    MetricRow row;
    row.frame = f + 1;
    double vim_sum = 0.0, vam_sum = 0.0, iou_sum = 0.0, f1_sum = 0.0;
    std::size_t vim_count = 0;
    for (std::size_t s = 0; s < truth.size(); ++s) {
      if (auto v = vim(pred[s], truth[s], f)) {
        vim_sum += *v;
        ++vim_count;
      }
      vam_sum += vam(pred[s], truth[s], config.beta, f);
      VisibilityScore vis = visibility_scores_frame(pred[s], truth[s], f);
      iou_sum += vis.iou;
      f1_sum += vis.f1;
      for (const EvalTrack& track : truth[s].tracks) {
        std::size_t visible = 0;
        for (std::size_t j = 0; j < truth[s].k; ++j)
          if (track.visible[f][j]) ++visible;
        if (visible > 0) {
          row.n_persons += 1;
          row.n_joints += visible;
        }
      }
    }
    if (vim_count > 0) row.vim = vim_sum / static_cast<double>(vim_count);
    row.vam = vam_sum / static_cast<double>(truth.size());
    row.iou = iou_sum / static_cast<double>(truth.size());
    row.f1 = f1_sum / static_cast<double>(truth.size());
    out.rows.push_back(std::move(row));
  }

  for (double horizon : config.ms_grid) {
    std::size_t frame = horizon_frame(horizon, truth.front().frame_interval_ms, frames);
    out.rows[frame - 1].horizons_ms.push_back(horizon);
  }
  return out;
}

MetricReport report(const Dataset& pred, const Dataset& truth, const ReportConfig& config) {
  if (pred.samples.size() != truth.samples.size())
    throw std::invalid_argument("report: prediction file has " +
                                std::to_string(pred.samples.size()) + " samples, truth " +
                                std::to_string(truth.samples.size()));
  std::vector<EvalScene> pred_scenes, truth_scenes;
  for (std::size_t s = 0; s < truth.samples.size(); ++s) {
    pred_scenes.push_back(eval_view_prediction(pred.samples[s]));
    truth_scenes.push_back(eval_view_truth(truth.samples[s]));
  }
  return report(pred_scenes, truth_scenes, config);
}

void MetricReport::write_csv(std::ostream& out) const {
  out << "horizon_ms,frame,vim,vam,iou,f1,n_persons,n_joints\n";
  for (const MetricRow& row : rows) {
    for (std::size_t i = 0; i < row.horizons_ms.size(); ++i)
      out << (i ? ";" : "") << row.horizons_ms[i];
    out << "," << row.frame << ",";
    if (row.vim) out << *row.vim;
    out << "," << row.vam << "," << row.iou << "," << row.f1 << "," << row.n_persons << ","
        << row.n_joints << "\n";
  }
}

}  // namespace posecast
