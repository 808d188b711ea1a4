#include "posecast/gat.hpp"

#include <cmath>
#include <stdexcept>

namespace posecast {

using ad::Matrix;
using ad::Tape;
using ad::Var;

std::vector<std::size_t> gat_head_widths(std::size_t out_dim, std::size_t heads,
                                         GatMerge merge) {
  if (heads == 0) throw std::invalid_argument("gat_head_widths: heads must be >= 1");
  if (merge == GatMerge::average) return std::vector<std::size_t>(heads, out_dim);
  std::vector<std::size_t> widths(heads, out_dim / heads);
  for (std::size_t h = 0; h < out_dim % heads; ++h) widths[h] += 1;
  if (widths.back() == 0)
    throw std::invalid_argument("gat_head_widths: more heads than output dims");
  return widths;
}

GatParams make_gat_params(std::size_t in_dim, std::size_t out_dim, std::size_t heads,
                          GatMerge merge, ad::Rng& rng) {
  GatParams p;
  p.merge = merge;
  for (std::size_t width : gat_head_widths(out_dim, heads, merge)) {
    double ws = 1.0 / std::sqrt(static_cast<double>(in_dim));
    Matrix w(in_dim, width);
    for (std::size_t i = 0; i < w.size(); ++i) w.at(i) = rng.uniform(-ws, ws);
    double as = 1.0 / std::sqrt(static_cast<double>(2 * width));
    Matrix a(2 * width, 1);
    for (std::size_t i = 0; i < a.size(); ++i) a.at(i) = rng.uniform(-as, as);
    p.weight.push_back(std::move(w));
    p.attention.push_back(std::move(a));
  }
  return p;
}

GatVars lift(Tape& tape, const GatParams& params, bool requires_grad) {
  GatVars vars;
  vars.merge = params.merge;
  for (const Matrix& w : params.weight) vars.weight.push_back(tape.leaf(w, requires_grad));
  for (const Matrix& a : params.attention)
    vars.attention.push_back(tape.leaf(a, requires_grad));
  return vars;
}

EdgeMask EdgeMask::dense(std::size_t n) {
  EdgeMask m(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m.bits_(i, j) = true;
  return m;
}

EdgeMask EdgeMask::bipartite(std::size_t persons, std::size_t objects) {
  EdgeMask m(persons + objects);
  for (std::size_t i = 0; i < persons; ++i) {
    m.bits_(i, i) = true;
    for (std::size_t o = 0; o < objects; ++o) m.bits_(i, persons + o) = true;
  }
  return m;
}

EdgeMask EdgeMask::from_edges(std::size_t n,
                              const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                              bool self_loops) {
  EdgeMask m(n);
  for (auto [a, b] : edges) {
    if (a >= n || b >= n) throw std::invalid_argument("EdgeMask: edge endpoint out of range");
    m.bits_(a, b) = true;
    m.bits_(b, a) = true;
  }
  if (self_loops)
    for (std::size_t i = 0; i < n; ++i) m.bits_(i, i) = true;
  return m;
}

bool EdgeMask::row_any(std::size_t i) const {
  for (std::size_t j = 0; j < bits_.cols(); ++j)
    if (bits_(i, j)) return true;
  return false;
}

Var gat_layer(Tape& tape, Var node_feats, const EdgeMask& mask, const GatVars& params) {
  const std::size_t n = node_feats.rows();
  if (mask.size() != n)
    throw std::invalid_argument("gat_layer: mask size " + std::to_string(mask.size()) +
                                " vs " + std::to_string(n) + " nodes");
  if (params.heads() == 0) throw std::invalid_argument("gat_layer: no heads");

  std::vector<Var> head_outputs;
  std::size_t out_dim = 0;
  for (std::size_t h = 0; h < params.heads(); ++h) {
    const Var w = params.weight[h];
    const Var a = params.attention[h];
    const std::size_t width = w.cols();
    if (w.rows() != node_feats.cols())
      throw std::invalid_argument("gat_layer: head " + std::to_string(h) + " expects " +
                                  std::to_string(w.rows()) + " input dims, got " +
                                  std::to_string(node_feats.cols()));
    if (a.rows() != 2 * width || a.cols() != 1)
      throw std::invalid_argument("gat_layer: attention vector shape mismatch");
    Var projected = tape.matmul(node_feats, w);  // n x width
    Var score_self = tape.matmul(projected, tape.slice_rows(a, 0, width));
    Var score_peer = tape.matmul(projected, tape.slice_rows(a, width, 2 * width));
    Var scores = tape.leaky_relu(tape.cross_add(score_self, score_peer), kGatLeakySlope);
    Var weights = tape.masked_softmax_rows(scores, mask.bits());
    head_outputs.push_back(tape.matmul(weights, projected));
    out_dim += width;
  }

  Var merged;
  if (params.merge == GatMerge::concat) {
    merged = tape.concat_cols(head_outputs);
  } else {
    merged = head_outputs[0];
    for (std::size_t h = 1; h < head_outputs.size(); ++h)
      merged = tape.add(merged, head_outputs[h]);
    merged = tape.scale(merged, 1.0 / static_cast<double>(head_outputs.size()));
    out_dim = head_outputs[0].cols();
  }

  // pass-through for rows with no permitted neighbours
  std::vector<double> updated(n, 1.0), kept(n, 0.0);
  bool any_passthrough = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask.row_any(i)) {
      updated[i] = 0.0;
      kept[i] = 1.0;
      any_passthrough = true;
    }
  }
  if (!any_passthrough) return merged;
  if (out_dim != node_feats.cols())
    throw std::invalid_argument(
        "gat_layer: pass-through rows need in_dim == out_dim, got " +
        std::to_string(node_feats.cols()) + " vs " + std::to_string(out_dim));
  return tape.add(tape.scale_rows(merged, updated), tape.scale_rows(node_feats, kept));
}

Matrix attention_weights(const Matrix& node_feats, const EdgeMask& mask,
                         const GatParams& params) {
  const std::size_t n = node_feats.rows();
  if (mask.size() != n) throw std::invalid_argument("attention_weights: mask size mismatch");
  Tape tape;
  Var feats = tape.constant(node_feats);
  Matrix averaged(n, n);
  for (std::size_t h = 0; h < params.heads(); ++h) {
    const std::size_t width = params.weight[h].cols();
    Var w = tape.constant(params.weight[h]);
    Var a = tape.constant(params.attention[h]);
    Var projected = tape.matmul(feats, w);
    Var score_self = tape.matmul(projected, tape.slice_rows(a, 0, width));
    Var score_peer = tape.matmul(projected, tape.slice_rows(a, width, 2 * width));
    Var scores = tape.leaky_relu(tape.cross_add(score_self, score_peer), kGatLeakySlope);
    Var weights = tape.masked_softmax_rows(scores, mask.bits());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) averaged(i, j) += weights.value()(i, j);
  }
  const double inv = 1.0 / static_cast<double>(params.heads());
  for (std::size_t i = 0; i < averaged.size(); ++i) averaged.at(i) *= inv;
  return averaged;
}

}  // namespace posecast
