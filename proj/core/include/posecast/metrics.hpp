#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "posecast/dataio.hpp"
#include "posecast/decoder.hpp"
#include "posecast/types.hpp"

// Visibility-aware benchmark metrics. VIM discards ground-truth-invisible
// joints; VAM scores every joint as a singleton-set distance with cutoff beta
// and a cardinality penalty; visibility itself is scored as binary IoU/F1.

namespace posecast {

// Singleton-set encoding of a possibly-invisible joint: empty or one point.
struct JointSet {
  std::optional<std::vector<double>> location;
  std::size_t cardinality() const { return location ? 1 : 0; }
};

// d_o(G,Q) = sqrt(min(beta, ||g-q||)^2 + beta^2 |c_g - c_q|^2); the distance
// term is 0 when either set is empty.
double vam_pair(const JointSet& g, const JointSet& q, double beta);

// Neutral evaluation view shared by forecasts, parsed prediction files, and
// ground truth.
struct EvalTrack {
  std::string person_id;
  std::vector<std::vector<double>> locations;  // future frame -> k*d
  std::vector<std::vector<bool>> visible;      // future frame -> k
};

struct EvalScene {
  std::size_t k = 0;
  std::size_t d = 0;
  std::size_t frames = 0;
  double frame_interval_ms = 0.0;
  std::vector<EvalTrack> tracks;
};

EvalScene eval_view_truth(const SceneSample& sample);
EvalScene eval_view_prediction(const SceneSample& sample);  // stored bits as-is
EvalScene eval_view(const ForecastResult& forecast, double frame_interval_ms,
                    double vis_threshold);

// Mean distance over ground-truth-visible joints, averaged per person and
// then over persons with at least one visible joint; absent when no joint is
// evaluable at that frame.
std::optional<double> vim(const EvalScene& pred, const EvalScene& truth,
                          std::size_t frame);
std::optional<double> vim(const ForecastResult& pred, const SceneSample& truth,
                          std::size_t frame, double vis_threshold = 0.5);

// Normalized singleton-set distance over all persons and joints; 0 when
// nothing is visible on either side (vacuous frame).
double vam(const EvalScene& pred, const EvalScene& truth, double beta, std::size_t frame);
double vam(const ForecastResult& pred, const SceneSample& truth, double beta,
           std::size_t frame, double vis_threshold = 0.5);

struct VisibilityScore {
  double iou = 1.0;
  double f1 = 1.0;
  std::size_t scored_joints = 0;  // (person, joint) vectors that entered the mean
};

// Per-(person, joint) binary vectors over the future frames, scored then
// averaged. Degenerate vectors with no positives on either side count as
// perfect agreement. filtered keeps only joints with at least one future
// ground-truth invisibility.
VisibilityScore visibility_scores(const EvalScene& pred, const EvalScene& truth,
                                  bool filtered);
// Same scoring restricted to a single frame (used by the per-frame report).
VisibilityScore visibility_scores_frame(const EvalScene& pred, const EvalScene& truth,
                                        std::size_t frame);

struct ReportConfig {
  double beta = 200.0;
  double vis_threshold = 0.5;
  std::vector<double> ms_grid;  // optional millisecond horizons
};

struct MetricRow {
  std::vector<double> horizons_ms;  // configured horizons mapped to this frame
  std::size_t frame = 0;            // 1-based future frame index
  std::optional<double> vim;        // absent when no joint was evaluable
  double vam = 0.0;
  double iou = 1.0;
  double f1 = 1.0;
  std::size_t n_persons = 0;  // persons with >= 1 visible ground-truth joint
  std::size_t n_joints = 0;   // visible ground-truth joints evaluated
};

struct MetricReport {
  std::vector<MetricRow> rows;
  // columns: horizon_ms,frame,vim,vam,iou,f1,n_persons,n_joints
  void write_csv(std::ostream& out) const;
};

// Per-frame metrics averaged across samples. Prediction and truth must
// describe identical persons and frames; the first mismatch is a hard error.
MetricReport report(const std::vector<EvalScene>& pred, const std::vector<EvalScene>& truth,
                    const ReportConfig& config);
MetricReport report(const Dataset& pred, const Dataset& truth, const ReportConfig& config);

// Nearest frame (1-based) for a millisecond horizon.
std::size_t horizon_frame(double horizon_ms, double frame_interval_ms, std::size_t frames);

// View restricted to the first `frames` future frames (curriculum-stage
// validation compares short rollouts against longer ground truth).
EvalScene truncate_frames(EvalScene scene, std::size_t frames);

}  // namespace posecast
