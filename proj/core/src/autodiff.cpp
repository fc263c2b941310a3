#include "tactile/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tactile/error.hpp"

namespace tactile {

// ---------------------------------------------------------------------------
// ParameterStore / GradientSet

ParamId ParameterStore::add(std::string name, Matrix init) {
  if (contains(name)) throw Error(ErrorCode::kInvalidArgument, "parameter '" + name + "' registered twice");
  names_.push_back(std::move(name));
  values_.push_back(std::move(init));
  return values_.size() - 1;
}

ParamId ParameterStore::find(const std::string& name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw Error(ErrorCode::kInvalidArgument, "no parameter named '" + name + "'");
  return static_cast<ParamId>(it - names_.begin());
}

bool ParameterStore::contains(const std::string& name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
  return n;
}

GradientSet::GradientSet(const ParameterStore& store) {
  grads_.reserve(store.size());
  for (ParamId i = 0; i < store.size(); ++i)
    grads_.push_back(Matrix::Zero(store.value(i).rows(), store.value(i).cols()));
}

void GradientSet::zero() {
  for (auto& g : grads_) g.setZero();
}

void GradientSet::add(const GradientSet& other, double scale) {
  if (other.grads_.size() != grads_.size())
    throw Error(ErrorCode::kShapeMismatch, "gradient sets differ in size");
  for (std::size_t i = 0; i < grads_.size(); ++i) grads_[i] += scale * other.grads_[i];
}

void GradientSet::scale(double s) {
  for (auto& g : grads_) g *= s;
}

// ---------------------------------------------------------------------------
// Tape plumbing

Tape::Tape(const ParameterStore& store) : store_(&store) { nodes_.reserve(256); }

Var Tape::push(Matrix value, bool requires_grad, std::function<void(Tape&, std::size_t)> back) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

void Tape::check(Var v) const {
  if (v.index >= nodes_.size()) throw Error(ErrorCode::kInvalidArgument, "variable does not belong to this tape");
}

Matrix& Tape::grad_of(std::size_t i) {
  Node& n = nodes_[i];
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::accumulate(std::size_t i, const Matrix& g) {
  if (!nodes_[i].requires_grad) return;
  grad_of(i) += g;
}

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error(ErrorCode::kShapeMismatch, std::string(op) + ": operand shapes differ");
}

}  // namespace

// ---------------------------------------------------------------------------
// Leaves

Var Tape::constant(Matrix value) { return push(std::move(value), false, {}); }

Var Tape::param(ParamId id) {
  if (id >= store_->size()) throw Error(ErrorCode::kInvalidArgument, "unknown parameter id");
  Var v = push(store_->value(id), true, {});
  nodes_[v.index].param = id;
  return v;
}

// ---------------------------------------------------------------------------
// Linear algebra

Var Tape::matmul(Var a, Var b) {
  check(a), check(b);
  const Matrix& A = value(a);
  const Matrix& B = value(b);
  if (A.cols() != B.rows()) throw Error(ErrorCode::kShapeMismatch, "matmul: inner dimensions differ");
  const bool rg = node(a).requires_grad || node(b).requires_grad;
  const std::size_t ia = a.index, ib = b.index;
  return push(A * B, rg, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    if (t.nodes_[ia].requires_grad) t.grad_of(ia).noalias() += g * t.nodes_[ib].value.transpose();
    if (t.nodes_[ib].requires_grad) t.grad_of(ib).noalias() += t.nodes_[ia].value.transpose() * g;
  });
}

Var Tape::matmul_nt(Var a, Var b) {
  check(a), check(b);
  const Matrix& A = value(a);
  const Matrix& B = value(b);
  if (A.cols() != B.cols()) throw Error(ErrorCode::kShapeMismatch, "matmul_nt: inner dimensions differ");
  const bool rg = node(a).requires_grad || node(b).requires_grad;
  const std::size_t ia = a.index, ib = b.index;
  return push(A * B.transpose(), rg, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    if (t.nodes_[ia].requires_grad) t.grad_of(ia).noalias() += g * t.nodes_[ib].value;
    if (t.nodes_[ib].requires_grad) t.grad_of(ib).noalias() += g.transpose() * t.nodes_[ia].value;
  });
}

Var Tape::add(Var a, Var b) {
  check(a), check(b);
  require_same_shape(value(a), value(b), "add");
  const bool rg = node(a).requires_grad || node(b).requires_grad;
  const std::size_t ia = a.index, ib = b.index;
  return push(value(a) + value(b), rg, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

Var Tape::add_row(Var a, Var row) {
  check(a), check(row);
  const Matrix& A = value(a);
  const Matrix& R = value(row);
  if (R.rows() != 1 || R.cols() != A.cols())
    throw Error(ErrorCode::kShapeMismatch, "add_row: row must be 1 x cols(a)");
  Matrix out = A;
  out.rowwise() += R.row(0);
  const bool rg = node(a).requires_grad || node(row).requires_grad;
  const std::size_t ia = a.index, ir = row.index;
  return push(std::move(out), rg, [ia, ir](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    t.accumulate(ia, g);
    if (t.nodes_[ir].requires_grad) t.grad_of(ir) += g.colwise().sum();
  });
}

Var Tape::scale(Var a, double s) {
  check(a);
  const std::size_t ia = a.index;
  return push(value(a) * s, node(a).requires_grad, [ia, s](Tape& t, std::size_t self) {
    t.grad_of(ia) += s * t.nodes_[self].grad;
  });
}

// ---------------------------------------------------------------------------
// Pointwise / row-wise

Var Tape::gelu(Var a) {
  check(a);
  const Matrix& X = value(a);
  Matrix cdf = X.unaryExpr([](double x) { return 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2)); });
  Matrix out = X.cwiseProduct(cdf);
  const std::size_t ia = a.index;
  return push(std::move(out), node(a).requires_grad,
              [ia, cdf = std::move(cdf)](Tape& t, std::size_t self) {
                const Matrix& x = t.nodes_[ia].value;
                const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
                Matrix pdf = x.unaryExpr([inv_sqrt_2pi](double v) { return inv_sqrt_2pi * std::exp(-0.5 * v * v); });
                Matrix d = cdf + x.cwiseProduct(pdf);
                t.grad_of(ia) += t.nodes_[self].grad.cwiseProduct(d);
              });
}

Var Tape::softmax_rows(Var a) {
  check(a);
  Matrix Y = value(a);
  for (Eigen::Index r = 0; r < Y.rows(); ++r) {
    const double m = Y.row(r).maxCoeff();
    Y.row(r) = (Y.row(r).array() - m).exp().matrix();
    Y.row(r) /= Y.row(r).sum();
  }
  const std::size_t ia = a.index;
  return push(std::move(Y), node(a).requires_grad, [ia](Tape& t, std::size_t self) {
    const Matrix& y = t.nodes_[self].value;
    const Matrix& g = t.nodes_[self].grad;
    const Eigen::VectorXd dots = g.cwiseProduct(y).rowwise().sum();
    Matrix d = g;
    d.colwise() -= dots;
    t.grad_of(ia) += y.cwiseProduct(d);
  });
}

Var Tape::layer_norm(Var x, Var gamma, Var beta, double eps) {
  check(x), check(gamma), check(beta);
  const Matrix& X = value(x);
  const Eigen::Index n = X.cols();
  if (value(gamma).rows() != 1 || value(gamma).cols() != n || value(beta).rows() != 1 || value(beta).cols() != n)
    throw Error(ErrorCode::kShapeMismatch, "layer_norm: gamma/beta must be 1 x cols(x)");
  Matrix xhat(X.rows(), n);
  Eigen::VectorXd rstd(X.rows());
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    const double mu = X.row(r).mean();
    const double var = (X.row(r).array() - mu).square().mean();
    rstd(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (X.row(r).array() - mu) * rstd(r);
  }
  Matrix out = xhat.array().rowwise() * value(gamma).row(0).array();
  out.rowwise() += value(beta).row(0);
  const bool rg = node(x).requires_grad || node(gamma).requires_grad || node(beta).requires_grad;
  const std::size_t ix = x.index, ig = gamma.index, ib = beta.index;
  return push(std::move(out), rg,
              [ix, ig, ib, xhat = std::move(xhat), rstd = std::move(rstd)](Tape& t, std::size_t self) {
                const Matrix& g = t.nodes_[self].grad;
                if (t.nodes_[ig].requires_grad) t.grad_of(ig) += g.cwiseProduct(xhat).colwise().sum();
                if (t.nodes_[ib].requires_grad) t.grad_of(ib) += g.colwise().sum();
                if (!t.nodes_[ix].requires_grad) return;
                Matrix gx = g.array().rowwise() * t.nodes_[ig].value.row(0).array();
                const Eigen::VectorXd mean_g = gx.rowwise().mean();
                const Eigen::VectorXd mean_gx = gx.cwiseProduct(xhat).rowwise().mean();
                Matrix& dst = t.grad_of(ix);
                for (Eigen::Index r = 0; r < gx.rows(); ++r)
                  dst.row(r) += rstd(r) * ((gx.row(r).array() - mean_g(r)) - xhat.row(r).array() * mean_gx(r)).matrix();
              });
}

Var Tape::dropout(Var a, double p, std::mt19937_64& rng) {
  check(a);
  if (p <= 0.0) return a;
  if (p >= 1.0) throw Error(ErrorCode::kInvalidArgument, "dropout rate must be < 1");
  const Matrix& X = value(a);
  Matrix mask(X.rows(), X.cols());
  std::bernoulli_distribution keep(1.0 - p);
  const double s = 1.0 / (1.0 - p);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? s : 0.0;
  Matrix out = X.cwiseProduct(mask);
  const std::size_t ia = a.index;
  return push(std::move(out), node(a).requires_grad, [ia, mask = std::move(mask)](Tape& t, std::size_t self) {
    t.grad_of(ia) += t.nodes_[self].grad.cwiseProduct(mask);
  });
}

// ---------------------------------------------------------------------------
// Structure

Var Tape::slice_cols(Var a, std::size_t begin, std::size_t count) {
  check(a);
  const Matrix& A = value(a);
  if (begin + count > static_cast<std::size_t>(A.cols()))
    throw Error(ErrorCode::kShapeMismatch, "slice_cols: range exceeds columns");
  const auto b = static_cast<Eigen::Index>(begin), c = static_cast<Eigen::Index>(count);
  const std::size_t ia = a.index;
  return push(A.middleCols(b, c), node(a).requires_grad, [ia, b, c](Tape& t, std::size_t self) {
    t.grad_of(ia).middleCols(b, c) += t.nodes_[self].grad;
  });
}

Var Tape::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw Error(ErrorCode::kInvalidArgument, "concat_cols: nothing to concatenate");
  Eigen::Index rows = -1, cols = 0;
  bool rg = false;
  for (Var p : parts) {
    check(p);
    if (rows >= 0 && value(p).rows() != rows) throw Error(ErrorCode::kShapeMismatch, "concat_cols: row counts differ");
    rows = value(p).rows();
    cols += value(p).cols();
    rg = rg || node(p).requires_grad;
  }
  Matrix out(rows, cols);
  std::vector<std::size_t> idx;
  Eigen::Index at = 0;
  for (Var p : parts) {
    out.middleCols(at, value(p).cols()) = value(p);
    at += value(p).cols();
    idx.push_back(p.index);
  }
  return push(std::move(out), rg, [idx = std::move(idx)](Tape& t, std::size_t self) {
    Eigen::Index at = 0;
    for (std::size_t i : idx) {
      const Eigen::Index c = t.nodes_[i].value.cols();
      if (t.nodes_[i].requires_grad) t.grad_of(i) += t.nodes_[self].grad.middleCols(at, c);
      at += c;
    }
  });
}

Var Tape::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw Error(ErrorCode::kInvalidArgument, "concat_rows: nothing to concatenate");
  Eigen::Index rows = 0, cols = -1;
  bool rg = false;
  for (Var p : parts) {
    check(p);
    if (cols >= 0 && value(p).cols() != cols) throw Error(ErrorCode::kShapeMismatch, "concat_rows: column counts differ");
    cols = value(p).cols();
    rows += value(p).rows();
    rg = rg || node(p).requires_grad;
  }
  Matrix out(rows, cols);
  std::vector<std::size_t> idx;
  Eigen::Index at = 0;
  for (Var p : parts) {
    out.middleRows(at, value(p).rows()) = value(p);
    at += value(p).rows();
    idx.push_back(p.index);
  }
  return push(std::move(out), rg, [idx = std::move(idx)](Tape& t, std::size_t self) {
    Eigen::Index at = 0;
    for (std::size_t i : idx) {
      const Eigen::Index r = t.nodes_[i].value.rows();
      if (t.nodes_[i].requires_grad) t.grad_of(i) += t.nodes_[self].grad.middleRows(at, r);
      at += r;
    }
  });
}

Var Tape::gather_rows(Var a, std::span<const std::size_t> rows) {
  check(a);
  const Matrix& A = value(a);
  Matrix out(static_cast<Eigen::Index>(rows.size()), A.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= static_cast<std::size_t>(A.rows()))
      throw Error(ErrorCode::kShapeMismatch, "gather_rows: row index out of range");
    out.row(static_cast<Eigen::Index>(i)) = A.row(static_cast<Eigen::Index>(rows[i]));
  }
  const std::size_t ia = a.index;
  std::vector<std::size_t> r(rows.begin(), rows.end());
  return push(std::move(out), node(a).requires_grad, [ia, r = std::move(r)](Tape& t, std::size_t self) {
    Matrix& dst = t.grad_of(ia);
    const Matrix& g = t.nodes_[self].grad;
    for (std::size_t i = 0; i < r.size(); ++i)
      dst.row(static_cast<Eigen::Index>(r[i])) += g.row(static_cast<Eigen::Index>(i));
  });
}

Var Tape::replace_rows(Var a, Var row, const std::vector<char>& mask) {
  check(a), check(row);
  const Matrix& A = value(a);
  if (value(row).rows() != 1 || value(row).cols() != A.cols())
    throw Error(ErrorCode::kShapeMismatch, "replace_rows: row must be 1 x cols(a)");
  if (mask.size() != static_cast<std::size_t>(A.rows()))
    throw Error(ErrorCode::kShapeMismatch, "replace_rows: mask length differs from row count");
  Matrix out = A;
  for (Eigen::Index r = 0; r < out.rows(); ++r)
    if (mask[static_cast<std::size_t>(r)]) out.row(r) = value(row).row(0);
  const bool rg = node(a).requires_grad || node(row).requires_grad;
  const std::size_t ia = a.index, ir = row.index;
  return push(std::move(out), rg, [ia, ir, mask](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    const bool ga = t.nodes_[ia].requires_grad, gr = t.nodes_[ir].requires_grad;
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      if (mask[static_cast<std::size_t>(r)]) {
        if (gr) t.grad_of(ir).row(0) += g.row(r);
      } else if (ga) {
        t.grad_of(ia).row(r) += g.row(r);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Losses

Var Tape::mse(Var pred, const Matrix& target) {
  check(pred);
  require_same_shape(value(pred), target, "mse");
  if (target.size() == 0) throw Error(ErrorCode::kEmptyBatch, "mse over an empty matrix");
  Matrix diff = value(pred) - target;
  const double n = static_cast<double>(diff.size());
  Matrix out(1, 1);
  out(0, 0) = diff.squaredNorm() / n;
  const std::size_t ip = pred.index;
  return push(std::move(out), node(pred).requires_grad, [ip, diff = std::move(diff), n](Tape& t, std::size_t self) {
    t.grad_of(ip) += (2.0 * t.nodes_[self].grad(0, 0) / n) * diff;
  });
}

Var Tape::bce_with_logits(Var logits, std::span<const double> labels) {
  check(logits);
  const Matrix& Z = value(logits);
  if (Z.cols() != 1 || static_cast<std::size_t>(Z.rows()) != labels.size())
    throw Error(ErrorCode::kShapeMismatch, "bce_with_logits: expects n x 1 logits and n labels");
  if (labels.empty()) throw Error(ErrorCode::kEmptyBatch, "empty batch");
  const std::size_t n = labels.size();
  Matrix dz(static_cast<Eigen::Index>(n), 1);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = Z(static_cast<Eigen::Index>(i), 0);
    const double p = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    const double pc = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
    const double y = labels[i];
    total += -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
    dz(static_cast<Eigen::Index>(i), 0) = (p == pc) ? (p - y) / static_cast<double>(n) : 0.0;
  }
  Matrix out(1, 1);
  out(0, 0) = total / static_cast<double>(n);
  const std::size_t il = logits.index;
  return push(std::move(out), node(logits).requires_grad, [il, dz = std::move(dz)](Tape& t, std::size_t self) {
    t.grad_of(il) += t.nodes_[self].grad(0, 0) * dz;
  });
}

Var Tape::softmax_cross_entropy(Var logits, std::size_t label) {
  check(logits);
  const Matrix& Z = value(logits);
  if (Z.rows() != 1) throw Error(ErrorCode::kShapeMismatch, "softmax_cross_entropy: expects one logit row");
  if (label >= static_cast<std::size_t>(Z.cols()))
    throw Error(ErrorCode::kInvalidLabel, "label " + std::to_string(label) + " outside " + std::to_string(Z.cols()) + " classes");
  Matrix p = (Z.array() - Z.maxCoeff()).exp().matrix();
  p /= p.sum();
  const auto l = static_cast<Eigen::Index>(label);
  const double pl = p(0, l);
  Matrix out(1, 1);
  out(0, 0) = -std::log(std::max(pl, kProbClamp));
  Matrix dz = p;
  if (pl >= kProbClamp) {
    dz(0, l) -= 1.0;
  } else {
    dz.setZero();
  }
  const std::size_t il = logits.index;
  return push(std::move(out), node(logits).requires_grad, [il, dz = std::move(dz)](Tape& t, std::size_t self) {
    t.grad_of(il) += t.nodes_[self].grad(0, 0) * dz;
  });
}

Var Tape::sum_scalars(std::span<const Var> parts, std::span<const double> weights) {
  if (parts.size() != weights.size()) throw Error(ErrorCode::kShapeMismatch, "sum_scalars: weight count differs");
  Matrix out = Matrix::Zero(1, 1);
  bool rg = false;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    check(parts[i]);
    if (value(parts[i]).size() != 1) throw Error(ErrorCode::kShapeMismatch, "sum_scalars: operands must be 1 x 1");
    out(0, 0) += weights[i] * value(parts[i])(0, 0);
    rg = rg || node(parts[i]).requires_grad;
    idx.push_back(parts[i].index);
  }
  std::vector<double> w(weights.begin(), weights.end());
  return push(std::move(out), rg, [idx = std::move(idx), w = std::move(w)](Tape& t, std::size_t self) {
    const double g = t.nodes_[self].grad(0, 0);
    for (std::size_t i = 0; i < idx.size(); ++i)
      if (t.nodes_[idx[i]].requires_grad) t.grad_of(idx[i])(0, 0) += w[i] * g;
  });
}

// ---------------------------------------------------------------------------
// Reverse sweep

void Tape::backward(Var loss, GradientSet& grads) {
  if (nodes_.empty()) throw Error(ErrorCode::kBackwardBeforeForward, "backward before forward");
  check(loss);
  if (value(loss).size() != 1) throw Error(ErrorCode::kShapeMismatch, "backward needs a 1 x 1 loss");
  if (grads.size() != store_->size())
    throw Error(ErrorCode::kShapeMismatch, "gradient set does not match the parameter store");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  grad_of(loss.index)(0, 0) = 1.0;
  for (std::size_t i = loss.index + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.back) n.back(*this, i);
    if (n.param != static_cast<ParamId>(-1)) grads[n.param] += n.grad;
  }
}

}  // namespace tactile
