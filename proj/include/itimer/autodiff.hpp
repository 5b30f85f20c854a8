#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "itimer/matrix.hpp"
#include "itimer/rng.hpp"

// Minimal reverse-mode differentiation over 2-D double matrices.
//
// A Tape owns an append-only list of nodes. Each node stores its forward value
// and a closure that pushes the incoming gradient to its inputs. Because inputs
// must already exist when a node is recorded, node order is a topological
// order and backward is a single reverse sweep.
namespace itimer::ad {

using NodeId = std::int32_t;

enum class OpKind : std::uint8_t {
  Leaf,
  Constant,
  Add,
  Sub,
  Mul,
  Div,
  Scale,
  AddScalar,
  Matmul,
  Transpose,
  Sum,
  Mean,
  SumRows,
  SumCols,
  Exp,
  Log,
  Sqrt,
  Square,
  Relu,
  Tanh,
  SoftmaxRows,
  Concat,
  Slice,
  MaskedSelect,
  Reshape,
};

std::string_view op_name(OpKind k);

// Clamp applied inside log and division.
inline constexpr double kEps = 1e-12;

class Tape;
class Gradients;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return shape().rows; }
  std::size_t cols() const { return shape().cols; }
  double item() const { return value().item(); }
  NodeId id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr && id_ >= 0; }

 private:
  Tape* tape_ = nullptr;
  NodeId id_ = -1;
};

using BackwardFn = std::function<void(const Tape&, NodeId self, const Matrix& grad, Gradients&)>;

// Gradient buffers indexed by node id. Nodes the sweep never reached read as
// zeros of matching shape.
class Gradients {
 public:
  explicit Gradients(const Tape& tape);

  Matrix& acc(NodeId id);
  const Matrix& operator[](NodeId id) const;
  const Matrix& operator[](const Tensor& t) const { return (*this)[t.id()]; }
  bool touched(NodeId id) const { return !bufs_[static_cast<std::size_t>(id)].empty(); }

 private:
  const Tape* tape_;
  std::vector<Matrix> bufs_;
  mutable std::vector<Matrix> zeros_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Differentiable input (parameters, inputs under test).
  Tensor leaf(Matrix value);
  // Input that never receives gradient.
  Tensor constant(Matrix value);

  Tensor record(OpKind kind, std::vector<NodeId> inputs, Matrix value, BackwardFn fn);

  const Matrix& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  OpKind kind(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].kind; }
  const std::vector<NodeId>& inputs(NodeId id) const {
    return nodes_[static_cast<std::size_t>(id)].inputs;
  }
  bool requires_grad(NodeId id) const {
    return nodes_[static_cast<std::size_t>(id)].requires_grad;
  }
  std::size_t size() const { return nodes_.size(); }

  // Reverse sweep from a scalar loss.
  Gradients backward(const Tensor& loss) const;

 private:
  struct Node {
    OpKind kind;
    std::vector<NodeId> inputs;
    Matrix value;
    BackwardFn backward;
    bool requires_grad;
  };
  std::vector<Node> nodes_;
};

// Binary elementwise ops broadcast any operand dimension of extent 1.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// a / max(b, eps) for positive b; b must be nonzero.
Tensor div(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor sum(const Tensor& a);        // -> 1x1
Tensor mean(const Tensor& a);       // -> 1x1
Tensor sum_rows(const Tensor& a);   // column sums, -> 1 x cols
Tensor sum_cols(const Tensor& a);   // row sums, -> rows x 1

Tensor exp(const Tensor& a);
// Natural log. With `clamp` set, inputs below eps are clamped to eps (and get
// no gradient); otherwise nonpositive inputs raise DomainError.
Tensor log(const Tensor& a, bool clamp = false);
// Square root of nonnegative input. The derivative at exactly 0 is taken as 0.
Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor softmax_rows(const Tensor& a);

enum class Axis { Rows, Cols };
// Rows: stack vertically. Cols: stack horizontally.
Tensor concat(std::span<const Tensor> parts, Axis axis);
Tensor slice(const Tensor& a, std::size_t row0, std::size_t nrows, std::size_t col0,
             std::size_t ncols);
// Entries where mask == 1, row-major, as an n x 1 column.
Tensor masked_select(const Tensor& a, const Mask& mask);
Tensor reshape(const Tensor& a, std::size_t rows, std::size_t cols);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }

// mean + std * z with z ~ N(0, 1) from `rng`. The result is a plain value:
// no gradient flows back into mean or std.
Matrix gaussian_sample(const Matrix& mean, const Matrix& std, Rng& rng);
Tensor gaussian_sample(const Tensor& mean, const Tensor& std, Rng& rng);

}  // namespace itimer::ad
