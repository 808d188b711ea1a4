#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "posecast/autodiff.hpp"
#include "posecast/gat.hpp"

// Model configuration and the full learnable parameter set, flattened for
// optimization through visit_params. The decoder's future social graph shares
// the H2H parameters, so it has no entry of its own.

namespace posecast {

struct ModelConfig {
  std::size_t k = 13;
  std::size_t d = 2;
  std::size_t hidden = 256;    // recurrent width; person features live here
  std::size_t node_dim = 64;   // pose-graph node width
  std::size_t heads = 3;
  GatMerge merge = GatMerge::concat;
  bool pose_graph_dense = true;

  std::size_t mp_iterations = 3;
  bool use_h2o = true;
  bool use_h2h = true;
  bool use_message_passing = true;
  bool use_future_social = true;
  bool use_context = true;
  bool teacher_forcing = false;  // debugging aid: feed ground truth back in

  std::size_t object_visual_len = 1024;
  std::size_t object_classes = 10;
  std::size_t object_mlp_hidden = 1024;
  std::size_t context_len = 512;
  std::size_t context_mlp_hidden = 512;

  std::size_t flat_pose() const { return k * (2 * d + 1); }
  std::size_t object_input() const { return object_visual_len + 4 + object_classes; }
  std::size_t psi_out() const { return k * d + k; }  // offsets then visibility logits
};

template <class T>
struct AffineT {
  T weight;
  T bias;
};
using AffineParams = AffineT<ad::Matrix>;
using AffineVars = AffineT<ad::Var>;

template <class T>
struct MlpT {
  std::vector<AffineT<T>> layers;  // tanh between layers, linear last
};

template <class T>
struct ParamsT {
  AffineT<T> joint_embed;            // (2d+1) -> node_dim
  GatParamsT<T> pose_gat;            // node_dim -> node_dim
  ad::LstmParamsT<T> encoder_lstm;   // node_dim -> hidden
  MlpT<T> object_mlp;                // object_input -> hidden
  MlpT<T> context_mlp;               // context_len -> hidden
  GatParamsT<T> h2o;                 // hidden -> hidden
  GatParamsT<T> h2h;                 // hidden -> hidden, shared with future refinement
  ad::LstmParamsT<T> decoder_lstm;   // flat_pose -> hidden
  AffineT<T> psi;                    // (hidden + flat_pose) -> k*d + k
};
using ModelParams = ParamsT<ad::Matrix>;
using ModelVars = ParamsT<ad::Var>;

// Stable enumeration of every array; the order defines optimizer slots and
// the checkpoint layout.
template <class T, class Fn>
void visit_params(ParamsT<T>& params, Fn&& fn) {
  auto gat = [&](const std::string& prefix, GatParamsT<T>& g) {
    for (std::size_t h = 0; h < g.weight.size(); ++h) {
      fn(prefix + ".head" + std::to_string(h) + ".weight", g.weight[h]);
      fn(prefix + ".head" + std::to_string(h) + ".attention", g.attention[h]);
    }
  };
  auto lstm = [&](const std::string& prefix, ad::LstmParamsT<T>& l) {
    fn(prefix + ".w_input", l.w_input);
    fn(prefix + ".w_hidden", l.w_hidden);
    fn(prefix + ".bias", l.bias);
  };
  auto mlp = [&](const std::string& prefix, MlpT<T>& m) {
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
      fn(prefix + ".layer" + std::to_string(i) + ".weight", m.layers[i].weight);
      fn(prefix + ".layer" + std::to_string(i) + ".bias", m.layers[i].bias);
    }
  };
  fn("joint_embed.weight", params.joint_embed.weight);
  fn("joint_embed.bias", params.joint_embed.bias);
  gat("pose_gat", params.pose_gat);
  lstm("encoder_lstm", params.encoder_lstm);
  mlp("object_mlp", params.object_mlp);
  mlp("context_mlp", params.context_mlp);
  gat("h2o", params.h2o);
  gat("h2h", params.h2h);
  lstm("decoder_lstm", params.decoder_lstm);
  fn("psi.weight", params.psi.weight);
  fn("psi.bias", params.psi.bias);
}

// Fan-in scaled uniform initialization; recurrent biases zero except the
// forget gate at +1. Reproducible from the seed.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

ModelVars lift_params(ad::Tape& tape, const ModelParams& params, bool requires_grad = true);

// Builds a ModelVars whose slots are taken from `slots` in visitor order;
// `reference` supplies the structure (head/layer counts, merge rules).
ModelVars assemble_vars(const ModelParams& reference, std::span<const ad::Var> slots);

std::vector<ad::Matrix*> param_ptrs(ModelParams& params);
std::vector<std::string> param_names(const ModelParams& params);
std::size_t param_count(const ModelParams& params);  // total scalar count

// FNV-1a over the raw bytes of every array in visitor order.
std::uint64_t params_hash(const ModelParams& params);

// Named-array records, hexfloat values, roundtrip-exact.
void write_named_array(std::ostream& out, const std::string& name, const ad::Matrix& m);
void read_named_array(std::istream& in, const std::string& expected_name, ad::Matrix& m);
void write_arrays(std::ostream& out, ModelParams& params);
void read_arrays(std::istream& in, ModelParams& params);

}  // namespace posecast
