#include "posecast/model.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace posecast {

using ad::Matrix;
using ad::Rng;

namespace {

Matrix fan_in_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  double scale = 1.0 / std::sqrt(static_cast<double>(rows));
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.at(i) = rng.uniform(-scale, scale);
  return m;
}

AffineParams make_affine(std::size_t in, std::size_t out, Rng& rng) {
  return {fan_in_uniform(in, out, rng), Matrix(1, out)};
}

ad::LstmParams make_lstm(std::size_t in, std::size_t hidden, Rng& rng) {
  ad::LstmParams p{fan_in_uniform(in, 4 * hidden, rng),
                   fan_in_uniform(hidden, 4 * hidden, rng), Matrix(1, 4 * hidden)};
  for (std::size_t i = hidden; i < 2 * hidden; ++i) p.bias(0, i) = 1.0;  // forget gate
  return p;
}

MlpT<Matrix> make_mlp(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
  MlpT<Matrix> mlp;
  mlp.layers.push_back(make_affine(in, hidden, rng));
  mlp.layers.push_back(make_affine(hidden, out, rng));
  return mlp;
}

}  // namespace

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  ModelParams p;
  p.joint_embed = make_affine(2 * config.d + 1, config.node_dim, rng);
  p.pose_gat =
      make_gat_params(config.node_dim, config.node_dim, config.heads, config.merge, rng);
  p.encoder_lstm = make_lstm(config.node_dim, config.hidden, rng);
  p.object_mlp =
      make_mlp(config.object_input(), config.object_mlp_hidden, config.hidden, rng);
  p.context_mlp =
      make_mlp(config.context_len, config.context_mlp_hidden, config.hidden, rng);
  p.h2o = make_gat_params(config.hidden, config.hidden, config.heads, config.merge, rng);
  p.h2h = make_gat_params(config.hidden, config.hidden, config.heads, config.merge, rng);
  p.decoder_lstm = make_lstm(config.flat_pose(), config.hidden, rng);
  p.psi = make_affine(config.hidden + config.flat_pose(), config.psi_out(), rng);
  return p;
}

ModelVars assemble_vars(const ModelParams& reference, std::span<const ad::Var> slots) {
  ModelVars vars;
  vars.pose_gat.merge = reference.pose_gat.merge;
  vars.h2o.merge = reference.h2o.merge;
  vars.h2h.merge = reference.h2h.merge;
  vars.pose_gat.weight.resize(reference.pose_gat.weight.size());
  vars.pose_gat.attention.resize(reference.pose_gat.attention.size());
  vars.h2o.weight.resize(reference.h2o.weight.size());
  vars.h2o.attention.resize(reference.h2o.attention.size());
  vars.h2h.weight.resize(reference.h2h.weight.size());
  vars.h2h.attention.resize(reference.h2h.attention.size());
  vars.object_mlp.layers.resize(reference.object_mlp.layers.size());
  vars.context_mlp.layers.resize(reference.context_mlp.layers.size());

  std::size_t i = 0;
  visit_params(vars, [&](const std::string& name, ad::Var& slot) {
    if (i >= slots.size())
      throw std::logic_error("assemble_vars: not enough slots at " + name);
    slot = slots[i++];
  });
  if (i != slots.size()) throw std::logic_error("assemble_vars: unused slots");
  return vars;
}

ModelVars lift_params(ad::Tape& tape, const ModelParams& params, bool requires_grad) {
  std::vector<ad::Var> lifted;
  visit_params(const_cast<ModelParams&>(params), [&](const std::string&, Matrix& m) {
    lifted.push_back(tape.leaf(m, requires_grad));
  });
  return assemble_vars(params, lifted);
}

std::vector<Matrix*> param_ptrs(ModelParams& params) {
  std::vector<Matrix*> out;
  visit_params(params, [&](const std::string&, Matrix& m) { out.push_back(&m); });
  return out;
}

std::vector<std::string> param_names(const ModelParams& params) {
  std::vector<std::string> names;
  visit_params(const_cast<ModelParams&>(params),
               [&](const std::string& name, Matrix&) { names.push_back(name); });
  return names;
}

std::size_t param_count(const ModelParams& params) {
  std::size_t n = 0;
  visit_params(const_cast<ModelParams&>(params),
               [&](const std::string&, Matrix& m) { n += m.size(); });
  return n;
}

std::uint64_t params_hash(const ModelParams& params) {
  std::uint64_t h = 14695981039346656037ull;
  auto mix = [&](const void* data, std::size_t bytes) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  visit_params(const_cast<ModelParams&>(params), [&](const std::string& name, Matrix& m) {
    mix(name.data(), name.size());
    mix(m.data(), m.size() * sizeof(double));
  });
  return h;
}

void write_named_array(std::ostream& out, const std::string& name, const Matrix& m) {
  out << "array " << name << " " << m.rows() << " " << m.cols() << "\n";
  char buf[48];
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%a", m(r, c));
      out << (c ? " " : "") << buf;
    }
    out << "\n";
  }
}

void read_named_array(std::istream& in, const std::string& expected_name, Matrix& m) {
  std::string tag, got_name;
  std::size_t rows = 0, cols = 0;
  if (!(in >> tag >> got_name >> rows >> cols) || tag != "array")
    throw std::runtime_error("read_named_array: malformed record, expected array " +
                             expected_name);
  if (got_name != expected_name)
    throw std::runtime_error("read_named_array: expected array " + expected_name +
                             ", found " + got_name);
  if (rows != m.rows() || cols != m.cols())
    throw std::runtime_error("read_named_array: shape mismatch for " + expected_name);
  for (std::size_t i = 0; i < m.size(); ++i) {
    std::string token;
    if (!(in >> token))
      throw std::runtime_error("read_named_array: truncated values in " + expected_name);
    m.at(i) = std::strtod(token.c_str(), nullptr);
  }
}

void write_arrays(std::ostream& out, ModelParams& params) {
  visit_params(params,
               [&](const std::string& name, Matrix& m) { write_named_array(out, name, m); });
}

void read_arrays(std::istream& in, ModelParams& params) {
  visit_params(params,
               [&](const std::string& name, Matrix& m) { read_named_array(in, name, m); });
}

}  // namespace posecast
