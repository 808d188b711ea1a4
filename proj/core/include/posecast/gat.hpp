#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "posecast/autodiff.hpp"

// Single-layer multi-head graph attention, shared by the input pose graph,
// H2O, H2H, and the decoder's future social refinement. Connectivity comes in
// as an EdgeMask; rows whose mask is empty (object nodes) pass through
// unchanged.

namespace posecast {

inline constexpr double kGatLeakySlope = 0.2;

enum class GatMerge { concat, average };

// Heads are merged by concatenation by default. out_dim need not divide by
// heads: widths are split near-evenly with the remainder going to the first
// heads. average merge gives every head the full out_dim and averages.
std::vector<std::size_t> gat_head_widths(std::size_t out_dim, std::size_t heads,
                                         GatMerge merge);

template <class T>
struct GatParamsT {
  GatMerge merge = GatMerge::concat;
  std::vector<T> weight;     // per head: in_dim x head_width projection
  std::vector<T> attention;  // per head: 2*head_width x 1 scoring vector
  std::size_t heads() const { return weight.size(); }
};
using GatParams = GatParamsT<ad::Matrix>;
using GatVars = GatParamsT<ad::Var>;

GatParams make_gat_params(std::size_t in_dim, std::size_t out_dim, std::size_t heads,
                          GatMerge merge, ad::Rng& rng);
GatVars lift(ad::Tape& tape, const GatParams& params, bool requires_grad = true);

// Row i lists the nodes that node i attends to. Updated rows always include a
// self-loop so an isolated node degrades to a self-projection.
class EdgeMask {
 public:
  EdgeMask() = default;
  explicit EdgeMask(std::size_t n) : bits_(n, n) {}

  static EdgeMask dense(std::size_t n);
  // Person rows attend to every object and themselves; object rows are empty
  // (objects are never updated).
  static EdgeMask bipartite(std::size_t persons, std::size_t objects);
  static EdgeMask from_edges(std::size_t n,
                             const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                             bool self_loops = true);

  std::size_t size() const { return bits_.rows(); }
  bool at(std::size_t i, std::size_t j) const { return bits_(i, j); }
  void set(std::size_t i, std::size_t j, bool v) { bits_(i, j) = v; }
  bool row_any(std::size_t i) const;
  const ad::BoolMatrix& bits() const { return bits_; }

 private:
  ad::BoolMatrix bits_;
};

// One attention pass over the graph: project per head, score permitted edges
// with leaky_relu of the concatenated endpoint projections, softmax per row,
// weighted-sum the neighbour projections, merge heads. Pass-through rows
// require in_dim == out_dim.
ad::Var gat_layer(ad::Tape& tape, ad::Var node_feats, const EdgeMask& mask,
                  const GatVars& params);

// Head-averaged attention matrix for inspection; recomputes the same forward
// pass on a scratch tape. Updated rows sum to 1 over permitted columns,
// masked entries and pass-through rows are 0.
ad::Matrix attention_weights(const ad::Matrix& node_feats, const EdgeMask& mask,
                             const GatParams& params);

}  // namespace posecast
