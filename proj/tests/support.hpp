#pragma once

#include <cmath>
#include <vector>

#include "posecast/autodiff.hpp"
#include "posecast/gat.hpp"
#include "posecast/types.hpp"

// Shared helpers for the unit suites. Oracles used by more than one suite
// live here; single-use oracles stay next to their tests.

namespace testsupport {

using posecast::ad::Matrix;
using posecast::ad::Rng;

inline Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo = -1.0,
                            double hi = 1.0) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.at(i) = rng.uniform(lo, hi);
  return m;
}

// Independent triple-loop matrix product.
inline Matrix matmul_oracle(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a.at(i) - b.at(i)));
  return worst;
}

inline bool bit_equal(const Matrix& a, const Matrix& b) { return a == b; }

// Independent per-edge graph-attention oracle: explicit score/softmax/
// weighted-sum loops, nothing shared with the tape path.
struct GatOracleResult {
  Matrix output;
  Matrix attention;  // head-averaged
};

inline GatOracleResult gat_oracle(const Matrix& feats, const posecast::EdgeMask& mask,
                                  const posecast::GatParams& params) {
  using posecast::GatMerge;
  const std::size_t n = feats.rows();
  std::size_t out_dim = 0;
  if (params.merge == GatMerge::concat)
    for (const auto& w : params.weight) out_dim += w.cols();
  else
    out_dim = params.weight[0].cols();

  GatOracleResult oracle{Matrix(n, out_dim), Matrix(n, n)};
  std::size_t col_base = 0;
  for (std::size_t h = 0; h < params.heads(); ++h) {
    const Matrix& w = params.weight[h];
    const Matrix& a = params.attention[h];
    const std::size_t width = w.cols();
    Matrix proj = matmul_oracle(feats, w);
    for (std::size_t i = 0; i < n; ++i) {
      if (!mask.row_any(i)) {
        for (std::size_t c = 0; c < feats.cols(); ++c) oracle.output(i, c) = feats(i, c);
        continue;
      }
      std::vector<double> scores(n, 0.0);
      double denom = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (!mask.at(i, j)) continue;
        double s = 0.0;
        for (std::size_t c = 0; c < width; ++c) s += a(c, 0) * proj(i, c);
        for (std::size_t c = 0; c < width; ++c) s += a(width + c, 0) * proj(j, c);
        if (s < 0.0) s *= posecast::kGatLeakySlope;
        scores[j] = std::exp(s);
        denom += scores[j];
      }
      for (std::size_t j = 0; j < n; ++j) {
        if (!mask.at(i, j)) continue;
        double alpha = scores[j] / denom;
        oracle.attention(i, j) += alpha / static_cast<double>(params.heads());
        for (std::size_t c = 0; c < width; ++c) {
          double contrib = alpha * proj(j, c);
          if (params.merge == GatMerge::concat)
            oracle.output(i, col_base + c) += contrib;
          else
            oracle.output(i, c) += contrib / static_cast<double>(params.heads());
        }
      }
    }
    if (params.merge == GatMerge::concat) col_base += width;
  }
  return oracle;
}

// All-visible random sample for module tests.
inline posecast::SceneSample make_sample(Rng& rng, std::size_t persons, std::size_t k,
                                         std::size_t d, std::size_t tau_o,
                                         std::size_t tau_f) {
  posecast::SceneSample s;
  s.frame_interval_ms = 100.0;
  for (std::size_t p = 0; p < persons; ++p) {
    posecast::PersonTrack track;
    track.person_id = "p" + std::to_string(p);
    auto random_pose = [&]() {
      posecast::Pose pose;
      pose.joints.resize(k);
      for (auto& js : pose.joints) {
        for (std::size_t c = 0; c < d; ++c) {
          js.offset.push_back(rng.uniform(-1, 1));
          js.location.push_back(rng.uniform(-5, 5));
        }
        js.visibility = 1.0;
      }
      return pose;
    };
    for (std::size_t f = 0; f < tau_o; ++f) track.observed.push_back(random_pose());
    if (tau_f > 0) {
      track.future = std::vector<posecast::Pose>{};
      for (std::size_t f = 0; f < tau_f; ++f) track.future->push_back(random_pose());
    }
    s.persons.push_back(std::move(track));
  }
  return s;
}

}  // namespace testsupport
