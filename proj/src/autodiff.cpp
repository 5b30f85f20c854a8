#include "itimer/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "itimer/errors.hpp"
#include "itimer/kernels.hpp"

namespace itimer::ad {

std::string_view op_name(OpKind k) {
  switch (k) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Constant: return "constant";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Div: return "div";
    case OpKind::Scale: return "scale";
    case OpKind::AddScalar: return "add_scalar";
    case OpKind::Matmul: return "matmul";
    case OpKind::Transpose: return "transpose";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::SumRows: return "sum_rows";
    case OpKind::SumCols: return "sum_cols";
    case OpKind::Exp: return "exp";
    case OpKind::Log: return "log";
    case OpKind::Sqrt: return "sqrt";
    case OpKind::Square: return "square";
    case OpKind::Relu: return "relu";
    case OpKind::Tanh: return "tanh";
    case OpKind::SoftmaxRows: return "softmax_rows";
    case OpKind::Concat: return "concat";
    case OpKind::Slice: return "slice";
    case OpKind::MaskedSelect: return "masked_select";
    case OpKind::Reshape: return "reshape";
  }
  return "?";
}

const Matrix& Tensor::value() const {
  if (!valid()) throw ContractError("use of an unbound tensor handle");
  return tape_->value(id_);
}

// --- Gradients -------------------------------------------------------------

Gradients::Gradients(const Tape& tape)
    : tape_(&tape), bufs_(tape.size()), zeros_(tape.size()) {}

Matrix& Gradients::acc(NodeId id) {
  auto& b = bufs_[static_cast<std::size_t>(id)];
  if (b.empty()) b = Matrix(tape_->value(id).shape());
  return b;
}

const Matrix& Gradients::operator[](NodeId id) const {
  const auto i = static_cast<std::size_t>(id);
  if (!bufs_[i].empty()) return bufs_[i];
  if (zeros_[i].empty()) zeros_[i] = Matrix(tape_->value(id).shape());
  return zeros_[i];
}

// --- Tape ------------------------------------------------------------------

Tensor Tape::leaf(Matrix value) {
  nodes_.push_back({OpKind::Leaf, {}, std::move(value), nullptr, true});
  return {this, static_cast<NodeId>(nodes_.size() - 1)};
}

Tensor Tape::constant(Matrix value) {
  nodes_.push_back({OpKind::Constant, {}, std::move(value), nullptr, false});
  return {this, static_cast<NodeId>(nodes_.size() - 1)};
}

Tensor Tape::record(OpKind kind, std::vector<NodeId> inputs, Matrix value, BackwardFn fn) {
  const auto self = static_cast<NodeId>(nodes_.size());
  bool rg = false;
  for (NodeId in : inputs) {
    if (in < 0 || in >= self) throw ContractError("tape input does not precede its consumer");
    rg = rg || nodes_[static_cast<std::size_t>(in)].requires_grad;
  }
  nodes_.push_back({kind, std::move(inputs), std::move(value), rg ? std::move(fn) : nullptr, rg});
  return {this, self};
}

Gradients Tape::backward(const Tensor& loss) const {
  if (loss.tape() != this) throw ContractError("loss does not live on this tape");
  if (loss.value().size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " + loss.shape().str());
  }
  Gradients grads(*this);
  grads.acc(loss.id())[0] = 1.0;
  for (NodeId id = loss.id(); id >= 0; --id) {
    const auto& node = nodes_[static_cast<std::size_t>(id)];
    if (!node.requires_grad || !node.backward || !grads.touched(id)) continue;
    node.backward(*this, id, grads[id], grads);
  }
  return grads;
}

// --- helpers ---------------------------------------------------------------

namespace {

Tape* same_tape(const Tensor& a, const Tensor& b) {
  if (a.tape() != b.tape() || a.tape() == nullptr) {
    throw ContractError("operands live on different tapes");
  }
  return a.tape();
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  auto dim = [&](std::size_t x, std::size_t y) -> std::size_t {
    if (x == y) return x;
    if (x == 1) return y;
    if (y == 1) return x;
    throw ShapeError(std::string(op) + ": incompatible shapes " + a.str() + " and " + b.str());
  };
  return {dim(a.rows, b.rows), dim(a.cols, b.cols)};
}

inline std::size_t bidx(const Shape& s, std::size_t i, std::size_t j) {
  return (s.rows == 1 ? 0 : i) * s.cols + (s.cols == 1 ? 0 : j);
}

template <typename F>
Matrix map(const Matrix& x, F f) {
  Matrix out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}

// Elementwise unary op whose local derivative depends on (input, output).
template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, OpKind kind, Fwd fwd, Deriv deriv) {
  Tape* t = a.tape();
  const NodeId ia = a.id();
  return t->record(kind, {ia}, map(a.value(), fwd),
                   [ia, deriv](const Tape& tp, NodeId self, const Matrix& g, Gradients& gr) {
                     const Matrix& x = tp.value(ia);
                     const Matrix& y = tp.value(self);
                     Matrix& ga = gr.acc(ia);
                     for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * deriv(x[i], y[i]);
                   });
}

}  // namespace

// --- binary ----------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  Tape* t = same_tape(a, b);
  const Shape sa = a.shape(), sb = b.shape();
  const Shape so = broadcast_shape(sa, sb, "add");
  Matrix out(so);
  for (std::size_t i = 0; i < so.rows; ++i)
    for (std::size_t j = 0; j < so.cols; ++j)
      out(i, j) = a.value()[bidx(sa, i, j)] + b.value()[bidx(sb, i, j)];
  const NodeId ia = a.id(), ib = b.id();
  return t->record(OpKind::Add, {ia, ib}, std::move(out),
                   [=](const Tape& tp, NodeId, const Matrix& g, Gradients& gr) {
                     const bool ra = tp.requires_grad(ia), rb = tp.requires_grad(ib);
                     for (std::size_t i = 0; i < so.rows; ++i)
                       for (std::size_t j = 0; j < so.cols; ++j) {
                         if (ra) gr.acc(ia)[bidx(sa, i, j)] += g(i, j);
                         if (rb) gr.acc(ib)[bidx(sb, i, j)] += g(i, j);
                       }
                   });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Tape* t = same_tape(a, b);
  const Shape sa = a.shape(), sb = b.shape();
  const Shape so = broadcast_shape(sa, sb, "sub");
  Matrix out(so);
  for (std::size_t i = 0; i < so.rows; ++i)
    for (std::size_t j = 0; j < so.cols; ++j)
      out(i, j) = a.value()[bidx(sa, i, j)] - b.value()[bidx(sb, i, j)];
  const NodeId ia = a.id(), ib = b.id();
  return t->record(OpKind::Sub, {ia, ib}, std::move(out),
                   [=](const Tape& tp, NodeId, const Matrix& g, Gradients& gr) {
                     const bool ra = tp.requires_grad(ia), rb = tp.requires_grad(ib);
                     for (std::size_t i = 0; i < so.rows; ++i)
                       for (std::size_t j = 0; j < so.cols; ++j) {
                         if (ra) gr.acc(ia)[bidx(sa, i, j)] += g(i, j);
                         if (rb) gr.acc(ib)[bidx(sb, i, j)] -= g(i, j);
                       }
                   });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Tape* t = same_tape(a, b);
  const Shape sa = a.shape(), sb = b.shape();
  const Shape so = broadcast_shape(sa, sb, "mul");
  Matrix out(so);
  for (std::size_t i = 0; i < so.rows; ++i)
    for (std::size_t j = 0; j < so.cols; ++j)
      out(i, j) = a.value()[bidx(sa, i, j)] * b.value()[bidx(sb, i, j)];
  const NodeId ia = a.id(), ib = b.id();
  return t->record(OpKind::Mul, {ia, ib}, std::move(out),
                   [=](const Tape& tp, NodeId, const Matrix& g, Gradients& gr) {
                     const Matrix& va = tp.value(ia);
                     const Matrix& vb = tp.value(ib);
                     const bool ra = tp.requires_grad(ia), rb = tp.requires_grad(ib);
                     for (std::size_t i = 0; i < so.rows; ++i)
                       for (std::size_t j = 0; j < so.cols; ++j) {
                         const std::size_t ka = bidx(sa, i, j), kb = bidx(sb, i, j);
                         if (ra) gr.acc(ia)[ka] += g(i, j) * vb[kb];
                         if (rb) gr.acc(ib)[kb] += g(i, j) * va[ka];
                       }
                   });
}

namespace {
inline double clamp_denominator(double d) {
  if (std::abs(d) >= kEps) return d;
  return d < 0.0 ? -kEps : kEps;
}
}  // namespace

Tensor div(const Tensor& a, const Tensor& b) {
  Tape* t = same_tape(a, b);
  const Shape sa = a.shape(), sb = b.shape();
  const Shape so = broadcast_shape(sa, sb, "div");
  Matrix out(so);
  for (std::size_t i = 0; i < so.rows; ++i)
    for (std::size_t j = 0; j < so.cols; ++j)
      out(i, j) = a.value()[bidx(sa, i, j)] / clamp_denominator(b.value()[bidx(sb, i, j)]);
  const NodeId ia = a.id(), ib = b.id();
  return t->record(OpKind::Div, {ia, ib}, std::move(out),
                   [=](const Tape& tp, NodeId, const Matrix& g, Gradients& gr) {
                     const Matrix& va = tp.value(ia);
                     const Matrix& vb = tp.value(ib);
                     const bool ra = tp.requires_grad(ia), rb = tp.requires_grad(ib);
                     for (std::size_t i = 0; i < so.rows; ++i)
                       for (std::size_t j = 0; j < so.cols; ++j) {
                         const std::size_t ka = bidx(sa, i, j), kb = bidx(sb, i, j);
                         const double d = clamp_denominator(vb[kb]);
                         if (ra) gr.acc(ia)[ka] += g(i, j) / d;
                         if (rb) gr.acc(ib)[kb] -= g(i, j) * va[ka] / (d * d);
                       }
                   });
}

// --- scalar affine -----------------------------------------------------------

Tensor scale(const Tensor& a, double s) {
  const NodeId ia = a.id();
  return a.tape()->record(OpKind::Scale, {ia}, map(a.value(), [s](double x) { return s * x; }),
                          [ia, s](const Tape&, NodeId, const Matrix& g, Gradients& gr) {
                            Matrix& ga = gr.acc(ia);
                            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
                          });
}

Tensor add_scalar(const Tensor& a, double s) {
  const NodeId ia = a.id();
  return a.tape()->record(OpKind::AddScalar, {ia},
                          map(a.value(), [s](double x) { return x + s; }),
                          [ia](const Tape&, NodeId, const Matrix& g, Gradients& gr) {
                            Matrix& ga = gr.acc(ia);
                            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                          });
}

// --- linear algebra ----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  Tape* t = same_tape(a, b);
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: incompatible shapes " + a.shape().str() + " and " + b.shape().str());
  }
  const NodeId ia = a.id(), ib = b.id();
  return t->record(OpKind::Matmul, {ia, ib}, kernels::matmul(a.value(), b.value()),
                   [ia, ib](const Tape& tp, NodeId, const Matrix& g, Gradients& gr) {
                     // dA = G B^T, dB = A^T G
                     if (tp.requires_grad(ia)) kernels::matmul_a_bt_acc(g, tp.value(ib), gr.acc(ia));
                     if (tp.requires_grad(ib)) kernels::matmul_at_b_acc(tp.value(ia), g, gr.acc(ib));
                   });
}

Tensor transpose(const Tensor& a) {
  const Matrix& x = a.value();
  Matrix out(x.cols(), x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out(j, i) = x(i, j);
  const NodeId ia = a.id();
  return a.tape()->record(OpKind::Transpose, {ia}, std::move(out),
                          [ia](const Tape&, NodeId, const Matrix& g, Gradients& gr) {
                            Matrix& ga = gr.acc(ia);
                            for (std::size_t i = 0; i < g.rows(); ++i)
                              for (std::size_t j = 0; j < g.cols(); ++j) ga(j, i) += g(i, j);
                          });
}

// --- reductions --------------------------------------------------------------

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const NodeId ia = a.id();
  return a.tape()->record(OpKind::Sum, {ia}, Matrix::scalar(s),
                          [ia](const Tape&, NodeId, const Matrix& g, Gradients& gr) {
                            Matrix& ga = gr.acc(ia);
                            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
                          });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw ContractError("mean of an empty tensor");
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const NodeId ia = a.id();
  return a.tape()->record(OpKind::Mean, {ia}, Matrix::scalar(s / n),
                          [ia, n](const Tape&, NodeId, const Matrix& g, Gradients& gr) {
                            Matrix& ga = gr.acc(ia);
                            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0] / n;
                          });
}

Tensor sum_rows(const Tensor& a) {
  const Matrix& x = a.value();
  Matrix out(1, x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out(0, j) += x(i, j);
  const NodeId ia = a.id();
  return a.tape()->record(OpKind::SumRows, {ia}, std::move(out),
                          [ia](const Tape&, NodeId, const Matrix& g, Gradients& gr) {
                            Matrix& ga = gr.acc(ia);
                            for (std::size_t i = 0; i < ga.rows(); ++i)
                              for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) += g(0, j);
                          });
}

Tensor sum_cols(const Tensor& a) {
  const Matrix& x = a.value();
  Matrix out(x.rows(), 1);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, 0) += x(i, j);
  const NodeId ia = a.id();
  return a.tape()->record(OpKind::SumCols, {ia}, std::move(out),
                          [ia](const Tape&, NodeId, const Matrix& g, Gradients& gr) {
                            Matrix& ga = gr.acc(ia);
                            for (std::size_t i = 0; i < ga.rows(); ++i)
                              for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) += g(i, 0);
                          });
}

// --- elementwise -------------------------------------------------------------

Tensor exp(const Tensor& a) {
  return unary(
      a, OpKind::Exp, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& a, bool clamp) {
  if (!clamp) {
    for (double v : a.value().data()) {
      if (!(v > 0.0)) throw DomainError("log of nonpositive input " + std::to_string(v));
    }
  }
  return unary(
      a, OpKind::Log, [](double x) { return std::log(std::max(x, kEps)); },
      [](double x, double) { return x > kEps ? 1.0 / x : 0.0; });
}

Tensor sqrt(const Tensor& a) {
  for (double v : a.value().data()) {
    if (v < 0.0) throw DomainError("sqrt of negative input " + std::to_string(v));
  }
  return unary(
      a, OpKind::Sqrt, [](double x) { return std::sqrt(x); },
      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Tensor square(const Tensor& a) {
  return unary(
      a, OpKind::Square, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, OpKind::Relu, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& a) {
  return unary(
      a, OpKind::Tanh, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor softmax_rows(const Tensor& a) {
  const Matrix& x = a.value();
  Matrix out(x.shape());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < x.cols(); ++j) m = std::max(m, x(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) {
      out(i, j) = std::exp(x(i, j) - m);
      z += out(i, j);
    }
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) /= z;
  }
  const NodeId ia = a.id();
  return a.tape()->record(OpKind::SoftmaxRows, {ia}, std::move(out),
                          [ia](const Tape& tp, NodeId self, const Matrix& g, Gradients& gr) {
                            const Matrix& y = tp.value(self);
                            Matrix& ga = gr.acc(ia);
                            for (std::size_t i = 0; i < y.rows(); ++i) {
                              double dot = 0.0;
                              for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
                              for (std::size_t j = 0; j < y.cols(); ++j)
                                ga(i, j) += y(i, j) * (g(i, j) - dot);
                            }
                          });
}

// --- structural --------------------------------------------------------------

Tensor concat(std::span<const Tensor> parts, Axis axis) {
  if (parts.empty()) throw ContractError("concat of zero tensors");
  Tape* t = parts[0].tape();
  std::vector<NodeId> ids;
  std::size_t rows = 0, cols = 0;
  for (const auto& p : parts) {
    same_tape(parts[0], p);
    ids.push_back(p.id());
    if (axis == Axis::Rows) {
      if (p.cols() != parts[0].cols())
        throw ShapeError("concat rows: " + parts[0].shape().str() + " vs " + p.shape().str());
      rows += p.rows();
      cols = p.cols();
    } else {
      if (p.rows() != parts[0].rows())
        throw ShapeError("concat cols: " + parts[0].shape().str() + " vs " + p.shape().str());
      cols += p.cols();
      rows = p.rows();
    }
  }
  Matrix out(rows, cols);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const Matrix& v = p.value();
    for (std::size_t i = 0; i < v.rows(); ++i)
      for (std::size_t j = 0; j < v.cols(); ++j) {
        if (axis == Axis::Rows) out(off + i, j) = v(i, j);
        else out(i, off + j) = v(i, j);
      }
    off += axis == Axis::Rows ? v.rows() : v.cols();
  }
  return t->record(OpKind::Concat, ids, std::move(out),
                   [ids, axis](const Tape& tp, NodeId, const Matrix& g, Gradients& gr) {
                     std::size_t o = 0;
                     for (NodeId id : ids) {
                       const Shape& s = tp.value(id).shape();
                       if (tp.requires_grad(id)) {
                         Matrix& gi = gr.acc(id);
                         for (std::size_t i = 0; i < s.rows; ++i)
                           for (std::size_t j = 0; j < s.cols; ++j)
                             gi(i, j) += axis == Axis::Rows ? g(o + i, j) : g(i, o + j);
                       }
                       o += axis == Axis::Rows ? s.rows : s.cols;
                     }
                   });
}

Tensor slice(const Tensor& a, std::size_t row0, std::size_t nrows, std::size_t col0,
             std::size_t ncols) {
  const Matrix& x = a.value();
  if (row0 + nrows > x.rows() || col0 + ncols > x.cols()) {
    throw ShapeError("slice [" + std::to_string(row0) + "+" + std::to_string(nrows) + ", " +
                     std::to_string(col0) + "+" + std::to_string(ncols) + "] out of " +
                     x.shape().str());
  }
  Matrix out(nrows, ncols);
  for (std::size_t i = 0; i < nrows; ++i)
    for (std::size_t j = 0; j < ncols; ++j) out(i, j) = x(row0 + i, col0 + j);
  const NodeId ia = a.id();
  return a.tape()->record(OpKind::Slice, {ia}, std::move(out),
                          [=](const Tape&, NodeId, const Matrix& g, Gradients& gr) {
                            Matrix& ga = gr.acc(ia);
                            for (std::size_t i = 0; i < nrows; ++i)
                              for (std::size_t j = 0; j < ncols; ++j)
                                ga(row0 + i, col0 + j) += g(i, j);
                          });
}

Tensor masked_select(const Tensor& a, const Mask& mask) {
  const Matrix& x = a.value();
  if (!(mask.shape() == x.shape())) {
    throw ShapeError("masked_select: mask " + mask.shape().str() + " vs tensor " + x.shape().str());
  }
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) idx.push_back(i);
  Matrix out(idx.size(), 1);
  for (std::size_t k = 0; k < idx.size(); ++k) out[k] = x[idx[k]];
  const NodeId ia = a.id();
  return a.tape()->record(OpKind::MaskedSelect, {ia}, std::move(out),
                          [ia, idx = std::move(idx)](const Tape&, NodeId, const Matrix& g,
                                                     Gradients& gr) {
                            Matrix& ga = gr.acc(ia);
                            for (std::size_t k = 0; k < idx.size(); ++k) ga[idx[k]] += g[k];
                          });
}

Tensor reshape(const Tensor& a, std::size_t rows, std::size_t cols) {
  const Matrix& x = a.value();
  if (rows * cols != x.size()) {
    throw ShapeError("reshape " + x.shape().str() + " to (" + std::to_string(rows) + ", " +
                     std::to_string(cols) + ")");
  }
  std::vector<double> d(x.data().begin(), x.data().end());
  const NodeId ia = a.id();
  return a.tape()->record(OpKind::Reshape, {ia}, Matrix(rows, cols, std::move(d)),
                          [ia](const Tape&, NodeId, const Matrix& g, Gradients& gr) {
                            Matrix& ga = gr.acc(ia);
                            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                          });
}

// --- sampling ----------------------------------------------------------------

Matrix gaussian_sample(const Matrix& mean, const Matrix& std, Rng& rng) {
  if (!(mean.shape() == std.shape())) {
    throw ShapeError("gaussian_sample: mean " + mean.shape().str() + " vs std " +
                     std.shape().str());
  }
  for (double s : std.data()) {
    if (s < 0.0 || std::isnan(s)) throw DomainError("gaussian_sample: negative std " + std::to_string(s));
  }
  Matrix out(mean.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double z = rng.normal();
    out[i] = std[i] == 0.0 ? mean[i] : mean[i] + std[i] * z;
  }
  return out;
}

Tensor gaussian_sample(const Tensor& mean, const Tensor& std, Rng& rng) {
  same_tape(mean, std);
  return mean.tape()->constant(gaussian_sample(mean.value(), std.value(), rng));
}

}  // namespace itimer::ad
