#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

// Minimal dense reverse-mode autodiff. Values are double-precision matrices
// (vectors are 1xN), gradients accumulate additively, and a Tape replays
// adjoints in exact reverse creation order. Sized for desk-scale models;
// everything favors determinism and checkability over speed.

namespace posecast::ad {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix row_vector(std::vector<double> values);
  static Matrix scalar(double v);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& at(std::size_t flat) { return data_[flat]; }
  double at(std::size_t flat) const { return data_[flat]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  std::string shape_str() const;

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Boolean mask with matrix shape, used by masked softmax and masked MSE.
class BoolMatrix {
 public:
  BoolMatrix() = default;
  BoolMatrix(std::size_t rows, std::size_t cols, bool fill = false)
      : rows_(rows), cols_(cols), bits_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return bits_.size(); }

  std::vector<bool>::reference operator()(std::size_t r, std::size_t c) {
    return bits_[r * cols_ + c];
  }
  bool operator()(std::size_t r, std::size_t c) const { return bits_[r * cols_ + c]; }
  bool at(std::size_t flat) const { return bits_[flat]; }
  std::vector<bool>::reference at(std::size_t flat) { return bits_[flat]; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<bool> bits_;
};

class Tape;

// Lightweight handle to a tape node. Copyable; the tape owns the storage.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  const Matrix& grad() const;
  bool requires_grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <class T>
struct LstmParamsT {
  T w_input;   // input_dim x 4H, gate order (input, forget, candidate, output)
  T w_hidden;  // H x 4H
  T bias;      // 1 x 4H
};
using LstmParams = LstmParamsT<Matrix>;
using LstmVars = LstmParamsT<Var>;

struct LstmState {
  Var hidden;
  Var cell;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Matrix value, bool requires_grad = true);
  Var constant(Matrix value) { return leaf(std::move(value), false); }

  // elementwise / scalar
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double factor);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var leaky_relu(Var a, double slope);

  // linear algebra
  Var matmul(Var a, Var b);
  Var affine(Var x, Var w, Var bias);  // rowwise x*w + bias, bias is 1 x out

  // structure
  Var concat_cols(std::span<const Var> parts);
  Var concat_rows(std::span<const Var> parts);
  Var slice_cols(Var a, std::size_t lo, std::size_t hi);
  Var slice_rows(Var a, std::size_t lo, std::size_t hi);
  Var gather_cols(Var a, std::vector<std::size_t> index);
  Var mean_rows(Var a);  // n x m -> 1 x m
  Var sum(Var a);        // -> 1 x 1
  Var cross_add(Var col, Var row);  // col n x 1, row m x 1 -> n x m of col_i + row_j
  Var scale_rows(Var a, std::vector<double> weights);

  // attention / losses
  Var masked_softmax(Var logits, const std::vector<bool>& mask);  // 1 x n, >=1 bit set
  Var masked_softmax_rows(Var logits, const BoolMatrix& mask);    // all-false rows -> zero rows
  Var mse_masked(Var pred, const Matrix& target, const BoolMatrix& mask);
  Var bce_logits(Var logits, const Matrix& targets);

  LstmState lstm_cell(Var x, Var h_prev, Var c_prev, const LstmVars& params);

  void backward(Var root);
  void zero_grad();
  std::size_t size() const { return nodes_.size(); }

 private:
  friend class Var;
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::function<void(Tape&)> backprop;  // empty for leaves
  };

  Var emplace(Matrix value, bool requires_grad, std::function<void(Tape&)> backprop);
  Matrix& grad_of(Var v) { return nodes_[v.id_].grad; }
  const Matrix& value_of(Var v) const { return nodes_[v.id_].value; }
  bool needs(Var v) const { return nodes_[v.id_].requires_grad; }

  std::vector<Node> nodes_;
};

// Adam with bias correction. Moments are kept in parameter order; the caller
// owns the mapping from names to slots.
struct AdamState {
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  long step_count = 0;
  double learning_rate = 5e-5;
  double decay = 0.95;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState init(std::span<const Matrix* const> params, double learning_rate,
                        double decay);
  void decay_learning_rate() { learning_rate *= decay; }
};

void adam_step(std::span<Matrix* const> params, std::span<const Matrix* const> grads,
               AdamState& state);

// Central-difference verification of a scalar-valued tape program.
struct GradCheckReport {
  struct PerInput {
    double max_rel_error = 0.0;
    std::size_t worst_entry = 0;
    double analytic = 0.0;
    double numeric = 0.0;
  };
  std::vector<PerInput> per_input;
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;

  bool pass(double tolerance) const { return max_rel_error < tolerance; }
};

using TapeProgram = std::function<Var(Tape&, std::span<const Var>)>;

GradCheckReport grad_check(const TapeProgram& f, std::span<const Matrix> inputs,
                           double step = 1e-5);

// Deterministic uniform draws; identical on every platform for a given seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next_u64();
  double uniform();                        // [0, 1)
  double uniform(double lo, double hi);    // [lo, hi)
  long uniform_int(long lo, long hi);      // inclusive bounds

 private:
  std::uint64_t state_;
};

}  // namespace posecast::ad
