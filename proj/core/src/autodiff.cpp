#include "posecast/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace posecast::ad {

Matrix Matrix::row_vector(std::vector<double> values) {
  Matrix m;
  m.rows_ = 1;
  m.cols_ = values.size();
  m.data_ = std::move(values);
  return m;
}

Matrix Matrix::scalar(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return m;
}

std::string Matrix::shape_str() const {
  std::ostringstream os;
  os << rows_ << "x" << cols_;
  return os.str();
}

namespace {

[[noreturn]] void shape_error(const char* op, const Matrix& a, const Matrix& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() +
                              " vs " + b.shape_str());
}

}  // namespace

const Matrix& Var::value() const { return tape_->nodes_[id_].value; }
const Matrix& Var::grad() const { return tape_->nodes_[id_].grad; }
bool Var::requires_grad() const { return tape_->nodes_[id_].requires_grad; }

Var Tape::emplace(Matrix value, bool requires_grad, std::function<void(Tape&)> backprop) {
  Node node;
  node.grad = Matrix(value.rows(), value.cols());
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  node.backprop = std::move(backprop);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Matrix value, bool requires_grad) {
  return emplace(std::move(value), requires_grad, nullptr);
}

Var Tape::add(Var a, Var b) {
  if (!a.value().same_shape(b.value())) shape_error("add", a.value(), b.value());
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.at(i) += b.value().at(i);
  Var o = emplace(std::move(out), needs(a) || needs(b), nullptr);
  if (o.requires_grad()) {
    std::size_t ia = a.id_, ib = b.id_, io = o.id_;
    nodes_[io].backprop = [ia, ib, io](Tape& t) {
      const Matrix& g = t.nodes_[io].grad;
      if (t.nodes_[ia].requires_grad)
        for (std::size_t i = 0; i < g.size(); ++i) t.nodes_[ia].grad.at(i) += g.at(i);
      if (t.nodes_[ib].requires_grad)
        for (std::size_t i = 0; i < g.size(); ++i) t.nodes_[ib].grad.at(i) += g.at(i);
    };
  }
  return o;
}

Var Tape::sub(Var a, Var b) {
  if (!a.value().same_shape(b.value())) shape_error("sub", a.value(), b.value());
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.at(i) -= b.value().at(i);
  Var o = emplace(std::move(out), needs(a) || needs(b), nullptr);
  if (o.requires_grad()) {
    std::size_t ia = a.id_, ib = b.id_, io = o.id_;
    nodes_[io].backprop = [ia, ib, io](Tape& t) {
      const Matrix& g = t.nodes_[io].grad;
      if (t.nodes_[ia].requires_grad)
        for (std::size_t i = 0; i < g.size(); ++i) t.nodes_[ia].grad.at(i) += g.at(i);
      if (t.nodes_[ib].requires_grad)
        for (std::size_t i = 0; i < g.size(); ++i) t.nodes_[ib].grad.at(i) -= g.at(i);
    };
  }
  return o;
}

Var Tape::mul(Var a, Var b) {
  if (!a.value().same_shape(b.value())) shape_error("mul", a.value(), b.value());
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.at(i) *= b.value().at(i);
  Var o = emplace(std::move(out), needs(a) || needs(b), nullptr);
  if (o.requires_grad()) {
    std::size_t ia = a.id_, ib = b.id_, io = o.id_;
    nodes_[io].backprop = [ia, ib, io](Tape& t) {
      const Matrix& g = t.nodes_[io].grad;
      const Matrix& va = t.nodes_[ia].value;
      const Matrix& vb = t.nodes_[ib].value;
      if (t.nodes_[ia].requires_grad)
        for (std::size_t i = 0; i < g.size(); ++i)
          t.nodes_[ia].grad.at(i) += g.at(i) * vb.at(i);
      if (t.nodes_[ib].requires_grad)
        for (std::size_t i = 0; i < g.size(); ++i)
          t.nodes_[ib].grad.at(i) += g.at(i) * va.at(i);
    };
  }
  return o;
}

Var Tape::scale(Var a, double factor) {
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.at(i) *= factor;
  Var o = emplace(std::move(out), needs(a), nullptr);
  if (o.requires_grad()) {
    std::size_t ia = a.id_, io = o.id_;
    nodes_[io].backprop = [ia, io, factor](Tape& t) {
      const Matrix& g = t.nodes_[io].grad;
      for (std::size_t i = 0; i < g.size(); ++i)
        t.nodes_[ia].grad.at(i) += g.at(i) * factor;
    };
  }
  return o;
}

Var Tape::tanh(Var a) {
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.at(i) = std::tanh(out.at(i));
  Var o = emplace(std::move(out), needs(a), nullptr);
  if (o.requires_grad()) {
    std::size_t ia = a.id_, io = o.id_;
    nodes_[io].backprop = [ia, io](Tape& t) {
      const Matrix& g = t.nodes_[io].grad;
      const Matrix& y = t.nodes_[io].value;
      for (std::size_t i = 0; i < g.size(); ++i)
        t.nodes_[ia].grad.at(i) += g.at(i) * (1.0 - y.at(i) * y.at(i));
    };
  }
  return o;
}

Var Tape::sigmoid(Var a) {
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    double x = out.at(i);
    // evaluate on the negative branch only, avoids overflow in exp
    out.at(i) = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                         : std::exp(x) / (1.0 + std::exp(x));
  }
  Var o = emplace(std::move(out), needs(a), nullptr);
  if (o.requires_grad()) {
    std::size_t ia = a.id_, io = o.id_;
    nodes_[io].backprop = [ia, io](Tape& t) {
      const Matrix& g = t.nodes_[io].grad;
      const Matrix& y = t.nodes_[io].value;
      for (std::size_t i = 0; i < g.size(); ++i)
        t.nodes_[ia].grad.at(i) += g.at(i) * y.at(i) * (1.0 - y.at(i));
    };
  }
  return o;
}

Var Tape::leaky_relu(Var a, double slope) {
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i)
    if (out.at(i) < 0.0) out.at(i) *= slope;
  Var o = emplace(std::move(out), needs(a), nullptr);
  if (o.requires_grad()) {
    std::size_t ia = a.id_, io = o.id_;
    nodes_[io].backprop = [ia, io, slope](Tape& t) {
      const Matrix& g = t.nodes_[io].grad;
      const Matrix& x = t.nodes_[ia].value;
      for (std::size_t i = 0; i < g.size(); ++i)
        t.nodes_[ia].grad.at(i) += g.at(i) * (x.at(i) < 0.0 ? slope : 1.0);
    };
  }
  return o;
}

Var Tape::matmul(Var a, Var b) {
  const Matrix& va = a.value();
  const Matrix& vb = b.value();
  if (va.cols() != vb.rows()) shape_error("matmul", va, vb);
  Matrix out(va.rows(), vb.cols());
  for (std::size_t i = 0; i < va.rows(); ++i)
    for (std::size_t k = 0; k < va.cols(); ++k) {
      double aik = va(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < vb.cols(); ++j) out(i, j) += aik * vb(k, j);
    }
  Var o = emplace(std::move(out), needs(a) || needs(b), nullptr);
  if (o.requires_grad()) {
    std::size_t ia = a.id_, ib = b.id_, io = o.id_;
    nodes_[io].backprop = [ia, ib, io](Tape& t) {
      const Matrix& g = t.nodes_[io].grad;
      const Matrix& va = t.nodes_[ia].value;
      const Matrix& vb = t.nodes_[ib].value;
      if (t.nodes_[ia].requires_grad) {  // dA = G * B^T
        Matrix& ga = t.nodes_[ia].grad;
        for (std::size_t i = 0; i < va.rows(); ++i)
          for (std::size_t k = 0; k < va.cols(); ++k) {
            double s = 0.0;
            for (std::size_t j = 0; j < vb.cols(); ++j) s += g(i, j) * vb(k, j);
            ga(i, k) += s;
          }
      }
      if (t.nodes_[ib].requires_grad) {  // dB = A^T * G
        Matrix& gb = t.nodes_[ib].grad;
        for (std::size_t k = 0; k < vb.rows(); ++k)
          for (std::size_t j = 0; j < vb.cols(); ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < va.rows(); ++i) s += va(i, k) * g(i, j);
            gb(k, j) += s;
          }
      }
    };
  }
  return o;
}

Var Tape::affine(Var x, Var w, Var bias) {
  const Matrix& vx = x.value();
  const Matrix& vw = w.value();
  const Matrix& vb = bias.value();
  if (vx.cols() != vw.rows()) shape_error("affine", vx, vw);
  if (vb.rows() != 1 || vb.cols() != vw.cols()) shape_error("affine bias", vb, vw);
  Matrix out(vx.rows(), vw.cols());
  for (std::size_t i = 0; i < vx.rows(); ++i) {
    for (std::size_t j = 0; j < vw.cols(); ++j) out(i, j) = vb(0, j);
    for (std::size_t k = 0; k < vx.cols(); ++k) {
      double xik = vx(i, k);
      if (xik == 0.0) continue;
      for (std::size_t j = 0; j < vw.cols(); ++j) out(i, j) += xik * vw(k, j);
    }
  }
  Var o = emplace(std::move(out), needs(x) || needs(w) || needs(bias), nullptr);
  if (o.requires_grad()) {
    std::size_t ix = x.id_, iw = w.id_, ib = bias.id_, io = o.id_;
    nodes_[io].backprop = [ix, iw, ib, io](Tape& t) {
      const Matrix& g = t.nodes_[io].grad;
      const Matrix& vx = t.nodes_[ix].value;
      const Matrix& vw = t.nodes_[iw].value;
      if (t.nodes_[ix].requires_grad) {
        Matrix& gx = t.nodes_[ix].grad;
        for (std::size_t i = 0; i < vx.rows(); ++i)
          for (std::size_t k = 0; k < vx.cols(); ++k) {
            double s = 0.0;
            for (std::size_t j = 0; j < vw.cols(); ++j) s += g(i, j) * vw(k, j);
            gx(i, k) += s;
          }
      }
      if (t.nodes_[iw].requires_grad) {
        Matrix& gw = t.nodes_[iw].grad;
        for (std::size_t k = 0; k < vw.rows(); ++k)
          for (std::size_t j = 0; j < vw.cols(); ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < vx.rows(); ++i) s += vx(i, k) * g(i, j);
            gw(k, j) += s;
          }
      }
      if (t.nodes_[ib].requires_grad) {
        Matrix& gb = t.nodes_[ib].grad;
        for (std::size_t j = 0; j < g.cols(); ++j) {
          double s = 0.0;
          for (std::size_t i = 0; i < g.rows(); ++i) s += g(i, j);
          gb(0, j) += s;
        }
      }
    };
  }
  return o;
}

Var Tape::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  bool any_grad = false;
  for (const Var& p : parts) {
    if (p.rows() != rows)
      throw std::invalid_argument("concat_cols: row mismatch " + p.value().shape_str());
    cols += p.cols();
    any_grad = any_grad || needs(p);
  }
  Matrix out(rows, cols);
  std::size_t off = 0;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> offs;
  for (const Var& p : parts) {
    const Matrix& v = p.value();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < v.cols(); ++j) out(i, off + j) = v(i, j);
    ids.push_back(p.id_);
    offs.push_back(off);
    off += v.cols();
  }
  Var o = emplace(std::move(out), any_grad, nullptr);
  if (o.requires_grad()) {
    std::size_t io = o.id_;
    nodes_[io].backprop = [ids, offs, io](Tape& t) {
      const Matrix& g = t.nodes_[io].grad;
      for (std::size_t p = 0; p < ids.size(); ++p) {
        if (!t.nodes_[ids[p]].requires_grad) continue;
        Matrix& gp = t.nodes_[ids[p]].grad;
        for (std::size_t i = 0; i < gp.rows(); ++i)
          for (std::size_t j = 0; j < gp.cols(); ++j) gp(i, j) += g(i, offs[p] + j);
      }
    };
  }
  return o;
}

Var Tape::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  bool any_grad = false;
  for (const Var& p : parts) {
    if (p.cols() != cols)
      throw std::invalid_argument("concat_rows: col mismatch " + p.value().shape_str());
    rows += p.rows();
    any_grad = any_grad || needs(p);
  }
  Matrix out(rows, cols);
  std::size_t off = 0;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> offs;
  for (const Var& p : parts) {
    const Matrix& v = p.value();
    for (std::size_t i = 0; i < v.rows(); ++i)
      for (std::size_t j = 0; j < cols; ++j) out(off + i, j) = v(i, j);
    ids.push_back(p.id_);
    offs.push_back(off);
    off += v.rows();
  }
  Var o = emplace(std::move(out), any_grad, nullptr);
  if (o.requires_grad()) {
    std::size_t io = o.id_;
    nodes_[io].backprop = [ids, offs, io](Tape& t) {
      const Matrix& g = t.nodes_[io].grad;
      for (std::size_t p = 0; p < ids.size(); ++p) {
        if (!t.nodes_[ids[p]].requires_grad) continue;
        Matrix& gp = t.nodes_[ids[p]].grad;
        for (std::size_t i = 0; i < gp.rows(); ++i)
          for (std::size_t j = 0; j < gp.cols(); ++j) gp(i, j) += g(offs[p] + i, j);
      }
    };
  }
  return o;
}

Var Tape::slice_cols(Var a, std::size_t lo, std::size_t hi) {
  const Matrix& v = a.value();
  if (lo > hi || hi > v.cols())
    throw std::invalid_argument("slice_cols: bad range on " + v.shape_str());
  Matrix out(v.rows(), hi - lo);
  for (std::size_t i = 0; i < v.rows(); ++i)
    for (std::size_t j = lo; j < hi; ++j) out(i, j - lo) = v(i, j);
  Var o = emplace(std::move(out), needs(a), nullptr);
  if (o.requires_grad()) {
    std::size_t ia = a.id_, io = o.id_;
    nodes_[io].backprop = [ia, io, lo](Tape& t) {
      const Matrix& g = t.nodes_[io].grad;
      Matrix& ga = t.nodes_[ia].grad;
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) ga(i, lo + j) += g(i, j);
    };
  }
  return o;
}

Var Tape::slice_rows(Var a, std::size_t lo, std::size_t hi) {
  const Matrix& v = a.value();
  if (lo > hi || hi > v.rows())
    throw std::invalid_argument("slice_rows: bad range on " + v.shape_str());
  Matrix out(hi - lo, v.cols());
  for (std::size_t i = lo; i < hi; ++i)
    for (std::size_t j = 0; j < v.cols(); ++j) out(i - lo, j) = v(i, j);
  Var o = emplace(std::move(out), needs(a), nullptr);
  if (o.requires_grad()) {
    std::size_t ia = a.id_, io = o.id_;
    nodes_[io].backprop = [ia, io, lo](Tape& t) {
      const Matrix& g = t.nodes_[io].grad;
      Matrix& ga = t.nodes_[ia].grad;
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) ga(lo + i, j) += g(i, j);
    };
  }
  return o;
}

Var Tape::gather_cols(Var a, std::vector<std::size_t> index) {
  const Matrix& v = a.value();
  for (std::size_t j : index)
    if (j >= v.cols()) throw std::invalid_argument("gather_cols: index out of range");
  Matrix out(v.rows(), index.size());
  for (std::size_t i = 0; i < v.rows(); ++i)
    for (std::size_t j = 0; j < index.size(); ++j) out(i, j) = v(i, index[j]);
  Var o = emplace(std::move(out), needs(a), nullptr);
  if (o.requires_grad()) {
    std::size_t ia = a.id_, io = o.id_;
    nodes_[io].backprop = [ia, io, index = std::move(index)](Tape& t) {
      const Matrix& g = t.nodes_[io].grad;
      Matrix& ga = t.nodes_[ia].grad;
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < index.size(); ++j) ga(i, index[j]) += g(i, j);
    };
  }
  return o;
}

Var Tape::mean_rows(Var a) {
  const Matrix& v = a.value();
  if (v.rows() == 0) throw std::invalid_argument("mean_rows: empty input");
  Matrix out(1, v.cols());
  for (std::size_t j = 0; j < v.cols(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < v.rows(); ++i) s += v(i, j);
    out(0, j) = s / static_cast<double>(v.rows());
  }
  Var o = emplace(std::move(out), needs(a), nullptr);
  if (o.requires_grad()) {
    std::size_t ia = a.id_, io = o.id_;
    double inv = 1.0 / static_cast<double>(v.rows());
    nodes_[io].backprop = [ia, io, inv](Tape& t) {
      const Matrix& g = t.nodes_[io].grad;
      Matrix& ga = t.nodes_[ia].grad;
      for (std::size_t i = 0; i < ga.rows(); ++i)
        for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) += g(0, j) * inv;
    };
  }
  return o;
}

Var Tape::sum(Var a) {
  const Matrix& v = a.value();
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += v.at(i);
  Var o = emplace(Matrix::scalar(s), needs(a), nullptr);
  if (o.requires_grad()) {
    std::size_t ia = a.id_, io = o.id_;
    nodes_[io].backprop = [ia, io](Tape& t) {
      double g = t.nodes_[io].grad(0, 0);
      Matrix& ga = t.nodes_[ia].grad;
      for (std::size_t i = 0; i < ga.size(); ++i) ga.at(i) += g;
    };
  }
  return o;
}

Var Tape::cross_add(Var col, Var row) {
  const Matrix& vc = col.value();
  const Matrix& vr = row.value();
  if (vc.cols() != 1 || vr.cols() != 1)
    shape_error("cross_add expects column vectors", vc, vr);
  Matrix out(vc.rows(), vr.rows());
  for (std::size_t i = 0; i < vc.rows(); ++i)
    for (std::size_t j = 0; j < vr.rows(); ++j) out(i, j) = vc(i, 0) + vr(j, 0);
  Var o = emplace(std::move(out), needs(col) || needs(row), nullptr);
  if (o.requires_grad()) {
    std::size_t ic = col.id_, ir = row.id_, io = o.id_;
    nodes_[io].backprop = [ic, ir, io](Tape& t) {
      const Matrix& g = t.nodes_[io].grad;
      if (t.nodes_[ic].requires_grad) {
        Matrix& gc = t.nodes_[ic].grad;
        for (std::size_t i = 0; i < g.rows(); ++i) {
          double s = 0.0;
          for (std::size_t j = 0; j < g.cols(); ++j) s += g(i, j);
          gc(i, 0) += s;
        }
      }
      if (t.nodes_[ir].requires_grad) {
        Matrix& gr = t.nodes_[ir].grad;
        for (std::size_t j = 0; j < g.cols(); ++j) {
          double s = 0.0;
          for (std::size_t i = 0; i < g.rows(); ++i) s += g(i, j);
          gr(j, 0) += s;
        }
      }
    };
  }
  return o;
}

Var Tape::scale_rows(Var a, std::vector<double> weights) {
  const Matrix& v = a.value();
  if (weights.size() != v.rows())
    throw std::invalid_argument("scale_rows: weight count " + std::to_string(weights.size()) +
                                " vs rows " + std::to_string(v.rows()));
  Matrix out = v;
  for (std::size_t i = 0; i < v.rows(); ++i)
    for (std::size_t j = 0; j < v.cols(); ++j) out(i, j) *= weights[i];
  Var o = emplace(std::move(out), needs(a), nullptr);
  if (o.requires_grad()) {
    std::size_t ia = a.id_, io = o.id_;
    nodes_[io].backprop = [ia, io, weights = std::move(weights)](Tape& t) {
      const Matrix& g = t.nodes_[io].grad;
      Matrix& ga = t.nodes_[ia].grad;
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) ga(i, j) += g(i, j) * weights[i];
    };
  }
  return o;
}

namespace {

// Stabilized softmax over the kept entries of one row; masked-out outputs are 0.
void softmax_row(const Matrix& logits, std::size_t row, const BoolMatrix& mask,
                 Matrix& out) {
  double maxv = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < logits.cols(); ++j)
    if (mask(row, j)) maxv = std::max(maxv, logits(row, j));
  double denom = 0.0;
  for (std::size_t j = 0; j < logits.cols(); ++j)
    if (mask(row, j)) denom += std::exp(logits(row, j) - maxv);
  for (std::size_t j = 0; j < logits.cols(); ++j)
    out(row, j) = mask(row, j) ? std::exp(logits(row, j) - maxv) / denom : 0.0;
}

}  // namespace

Var Tape::masked_softmax_rows(Var logits, const BoolMatrix& mask) {
  const Matrix& v = logits.value();
  if (mask.rows() != v.rows() || mask.cols() != v.cols())
    throw std::invalid_argument("masked_softmax_rows: mask shape mismatch");
  Matrix out(v.rows(), v.cols());
  for (std::size_t i = 0; i < v.rows(); ++i) {
    bool any = false;
    for (std::size_t j = 0; j < v.cols(); ++j) any = any || mask(i, j);
    if (any) softmax_row(v, i, mask, out);
    // all-false rows stay zero
  }
  Var o = emplace(std::move(out), needs(logits), nullptr);
  if (o.requires_grad()) {
    std::size_t ia = logits.id_, io = o.id_;
    nodes_[io].backprop = [ia, io, mask](Tape& t) {
      const Matrix& g = t.nodes_[io].grad;
      const Matrix& y = t.nodes_[io].value;
      Matrix& ga = t.nodes_[ia].grad;
      for (std::size_t i = 0; i < y.rows(); ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < y.cols(); ++j)
          if (mask(i, j)) dot += g(i, j) * y(i, j);
        for (std::size_t j = 0; j < y.cols(); ++j)
          if (mask(i, j)) ga(i, j) += y(i, j) * (g(i, j) - dot);
      }
    };
  }
  return o;
}

Var Tape::masked_softmax(Var logits, const std::vector<bool>& mask) {
  const Matrix& v = logits.value();
  if (v.rows() != 1)
    throw std::invalid_argument("masked_softmax: expected 1xN, got " + v.shape_str());
  if (mask.size() != v.cols())
    throw std::invalid_argument("masked_softmax: mask length mismatch");
  bool any = false;
  for (bool b : mask) any = any || b;
  if (!any) throw std::invalid_argument("masked_softmax: all mask bits false");
  BoolMatrix m(1, v.cols());
  for (std::size_t j = 0; j < mask.size(); ++j) m(0, j) = mask[j];
  return masked_softmax_rows(logits, m);
}

Var Tape::mse_masked(Var pred, const Matrix& target, const BoolMatrix& mask) {
  const Matrix& v = pred.value();
  if (!v.same_shape(target)) shape_error("mse_masked", v, target);
  if (mask.rows() != v.rows() || mask.cols() != v.cols())
    throw std::invalid_argument("mse_masked: mask shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!mask.at(i)) continue;
    double d = v.at(i) - target.at(i);
    s += d * d;
  }
  Var o = emplace(Matrix::scalar(s), needs(pred), nullptr);
  if (o.requires_grad()) {
    std::size_t ia = pred.id_, io = o.id_;
    nodes_[io].backprop = [ia, io, target, mask](Tape& t) {
      double g = t.nodes_[io].grad(0, 0);
      const Matrix& v = t.nodes_[ia].value;
      Matrix& ga = t.nodes_[ia].grad;
      for (std::size_t i = 0; i < v.size(); ++i)
        if (mask.at(i)) ga.at(i) += g * 2.0 * (v.at(i) - target.at(i));
    };
  }
  return o;
}

Var Tape::bce_logits(Var logits, const Matrix& targets) {
  const Matrix& v = logits.value();
  if (!v.same_shape(targets)) shape_error("bce_logits", v, targets);
  for (std::size_t i = 0; i < targets.size(); ++i)
    if (targets.at(i) != 0.0 && targets.at(i) != 1.0)
      throw std::invalid_argument("bce_logits: target not in {0,1}: " +
                                  std::to_string(targets.at(i)));
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    double x = v.at(i), t = targets.at(i);
    // max(x,0) - x*t + log(1 + exp(-|x|))
    s += std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::abs(x)));
  }
  Var o = emplace(Matrix::scalar(s), needs(logits), nullptr);
  if (o.requires_grad()) {
    std::size_t ia = logits.id_, io = o.id_;
    nodes_[io].backprop = [ia, io, targets](Tape& t) {
      double g = t.nodes_[io].grad(0, 0);
      const Matrix& v = t.nodes_[ia].value;
      Matrix& ga = t.nodes_[ia].grad;
      for (std::size_t i = 0; i < v.size(); ++i) {
        double x = v.at(i);
        double sig = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                              : std::exp(x) / (1.0 + std::exp(x));
        ga.at(i) += g * (sig - targets.at(i));
      }
    };
  }
  return o;
}

LstmState Tape::lstm_cell(Var x, Var h_prev, Var c_prev, const LstmVars& params) {
  const std::size_t hidden = h_prev.cols();
  if (params.w_input.value().cols() != 4 * hidden ||
      params.w_hidden.value().cols() != 4 * hidden)
    throw std::invalid_argument("lstm_cell: weight width must be 4*hidden");
  if (x.rows() != h_prev.rows() || h_prev.rows() != c_prev.rows() ||
      c_prev.cols() != hidden)
    throw std::invalid_argument("lstm_cell: state shape mismatch");
  Var gates = add(affine(x, params.w_input, params.bias),
                  matmul(h_prev, params.w_hidden));
  Var gi = sigmoid(slice_cols(gates, 0, hidden));
  Var gf = sigmoid(slice_cols(gates, hidden, 2 * hidden));
  Var gc = tanh(slice_cols(gates, 2 * hidden, 3 * hidden));
  Var go = sigmoid(slice_cols(gates, 3 * hidden, 4 * hidden));
  Var c = add(mul(gf, c_prev), mul(gi, gc));
  Var h = mul(go, tanh(c));
  return {h, c};
}

void Tape::backward(Var root) {
  if (root.tape_ != this) throw std::invalid_argument("backward: var from another tape");
  const Matrix& v = value_of(root);
  if (v.rows() != 1 || v.cols() != 1)
    throw std::invalid_argument("backward: root must be scalar, got " + v.shape_str());
  grad_of(root)(0, 0) += 1.0;
  for (std::size_t i = root.id_ + 1; i-- > 0;) {
    if (nodes_[i].backprop) nodes_[i].backprop(*this);
  }
}

void Tape::zero_grad() {
  for (Node& n : nodes_)
    std::fill(n.grad.data(), n.grad.data() + n.grad.size(), 0.0);
}

AdamState AdamState::init(std::span<const Matrix* const> params, double learning_rate,
                          double decay) {
  AdamState s;
  s.learning_rate = learning_rate;
  s.decay = decay;
  for (const Matrix* p : params) {
    s.first_moment.emplace_back(p->rows(), p->cols());
    s.second_moment.emplace_back(p->rows(), p->cols());
  }
  return s;
}

void adam_step(std::span<Matrix* const> params, std::span<const Matrix* const> grads,
               AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size())
    throw std::invalid_argument("adam_step: parameter/gradient/state count mismatch");
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Matrix& theta = *params[p];
    const Matrix& g = *grads[p];
    if (!theta.same_shape(g)) shape_error("adam_step", theta, g);
    Matrix& m = state.first_moment[p];
    Matrix& v = state.second_moment[p];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m.at(i) = state.beta1 * m.at(i) + (1.0 - state.beta1) * g.at(i);
      v.at(i) = state.beta2 * v.at(i) + (1.0 - state.beta2) * g.at(i) * g.at(i);
      double mhat = m.at(i) / bc1;
      double vhat = v.at(i) / bc2;
      theta.at(i) -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

GradCheckReport grad_check(const TapeProgram& f, std::span<const Matrix> inputs,
                           double step) {
  // analytic gradients
  std::vector<Matrix> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (const Matrix& m : inputs) vars.push_back(tape.leaf(m, true));
    Var out = f(tape, vars);
    tape.backward(out);
    for (const Var& v : vars) analytic.push_back(v.grad());
  }

  auto eval = [&](std::span<const Matrix> xs) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(xs.size());
    for (const Matrix& m : xs) vars.push_back(tape.leaf(m, false));
    return f(tape, vars).value()(0, 0);
  };

  GradCheckReport report;
  report.per_input.resize(inputs.size());
  std::vector<Matrix> work(inputs.begin(), inputs.end());
  for (std::size_t p = 0; p < inputs.size(); ++p) {
    GradCheckReport::PerInput& pi = report.per_input[p];
    for (std::size_t i = 0; i < inputs[p].size(); ++i) {
      double keep = work[p].at(i);
      work[p].at(i) = keep + step;
      double fp = eval(work);
      work[p].at(i) = keep - step;
      double fm = eval(work);
      work[p].at(i) = keep;
      double numeric = (fp - fm) / (2.0 * step);
      double a = analytic[p].at(i);
      double rel = std::abs(a - numeric) /
                   std::max({1.0, std::abs(a), std::abs(numeric)});
      if (rel > pi.max_rel_error) {
        pi.max_rel_error = rel;
        pi.worst_entry = i;
        pi.analytic = a;
        pi.numeric = numeric;
      }
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_input = p;
      }
    }
  }
  return report;
}

std::uint64_t Rng::next_u64() {
  // splitmix64
  state_ += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

long Rng::uniform_int(long lo, long hi) {
  return lo + static_cast<long>(next_u64() % static_cast<std::uint64_t>(hi - lo + 1));
}

}  // namespace posecast::ad
