#pragma once

// Reverse-mode automatic differentiation over dense double matrices.
//
// A Tape records primitive operations in topological order. Backward passes
// are themselves expressed with tape operations, so a gradient produced with
// `create_graph = true` is an ordinary Var that can be differentiated again.
// That is how the decoder Jacobian penalty gets its parameter gradients.
//
// Batched convention: a batch of B points in R^d is a B x d matrix, one point
// per row. All primitives except PairwiseDistance act row-independently, so
// reverse passes over a batch yield per-sample Jacobian rows in one sweep.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mae::ad {

using Matrix = Eigen::MatrixXd;

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the node exists.
class Var {
 public:
  Var() = default;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

enum class Op {
  Leaf,
  Add,
  Sub,
  Mul,
  Affine,  // alpha * a + beta
  MatMul,
  Transpose,
  AddRow,  // a + broadcast of a 1 x c row
  Tanh,
  Sum,
  SumRows,  // column sums, B x c -> 1 x c
  SumCols,  // row sums, B x c -> B x 1
  BroadcastScalar,
  BroadcastRows,  // 1 x c -> r x c
  BroadcastCols,  // r x 1 -> r x c
  Col,
  EmbedCol,
  PairwiseDistance,  // first-order only
};

enum class LeafKind { Input, Parameter, Constant };

struct BackwardOptions {
  /// Record the reverse pass on the tape so its results are differentiable.
  bool create_graph = false;
  /// Leaves (or any nodes) to differentiate with respect to. Empty means all
  /// differentiable leaves.
  std::vector<Var> wrt;
};

/// Result of a reverse pass: one gradient per requested node.
class Gradients {
 public:
  bool contains(Var node) const { return values_.count(node.id()) != 0; }
  const Matrix& value(Var node) const;
  /// Differentiable handle; only available after a create_graph pass.
  Var var(Var node) const;
  /// Gradients of named leaves.
  std::unordered_map<std::string, Matrix> by_name() const;

 private:
  friend class Tape;
  std::unordered_map<std::size_t, Matrix> values_;
  std::unordered_map<std::size_t, Var> vars_;
  std::unordered_map<std::size_t, std::string> names_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable input leaf. Inputs are fed in registration order by forward().
  Var input(Matrix value, std::string name = {});
  Var parameter(Matrix value, std::string name);
  Var constant(Matrix value);

  /// Look up a named input or parameter leaf.
  Var leaf(std::string_view name) const;
  const std::vector<Var>& inputs() const { return inputs_; }
  std::vector<Var> parameters() const;

  void set_output(Var output);
  Var output() const;

  /// Overwrite the registered inputs, replay every node and return the output.
  Matrix forward(std::span<const Matrix> inputs);
  /// Recompute every non-leaf node from its inputs.
  void replay();

  /// Vector-Jacobian product of `output` against `cotangent`.
  Gradients backward(Var output, const Matrix& cotangent, const BackwardOptions& options = {});

  std::size_t size() const { return nodes_.size(); }
  /// Drop nodes recorded after `mark`. Vars past the mark become dangling.
  void truncate(std::size_t mark);

  const Matrix& value(Var v) const { return nodes_.at(v.id()).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id()).requires_grad; }
  Op op(Var v) const { return nodes_.at(v.id()).op; }

  // Primitive recorders; use the free functions below instead.
  Var record(Op op, std::initializer_list<Var> inputs, double alpha = 0.0, double beta = 0.0,
             Eigen::Index index = 0, Eigen::Index extent = 0);

 private:
  struct Node {
    Op op = Op::Leaf;
    std::size_t in[2] = {0, 0};
    int arity = 0;
    double alpha = 0.0;
    double beta = 0.0;
    Eigen::Index index = 0;
    Eigen::Index extent = 0;
    LeafKind leaf_kind = LeafKind::Constant;
    bool requires_grad = false;
    Matrix value;
  };

  Var push_leaf(Matrix value, LeafKind kind, std::string name);
  void compute(Node& node) const;
  void vjp(std::size_t id, Var grad, const bool needs[2], Var out[2], bool create_graph);

  std::vector<Node> nodes_;
  std::vector<Var> inputs_;
  std::unordered_map<std::string, std::size_t> names_;
  std::optional<std::size_t> output_;
  bool recording_grad_ = true;
};

// Elementwise and structural primitives.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double alpha);
Var affine(Var a, double alpha, double beta);
Var matmul(Var a, Var b);
Var transpose(Var a);
Var add_row(Var a, Var row);
Var tanh(Var a);
Var sum(Var a);
Var sum_rows(Var a);
Var sum_cols(Var a);
Var broadcast_scalar(Var s, Eigen::Index rows, Eigen::Index cols);
Var broadcast_rows(Var row, Eigen::Index rows);
Var broadcast_cols(Var col, Eigen::Index cols);
Var col(Var a, Eigen::Index j);
Var embed_col(Var column, Eigen::Index j, Eigen::Index cols);
/// Euclidean distances between the rows of a: B x d -> B x B. Its reverse
/// pass is not itself differentiable; requesting create_graph through it
/// raises a capability error.
Var pairwise_distance(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }

/// Dense Jacobian, entry (i, j) = d output_i / d input_j. Entries are finite.
class Jacobian {
 public:
  explicit Jacobian(Matrix entries);

  Eigen::Index rows() const { return entries_.rows(); }
  Eigen::Index cols() const { return entries_.cols(); }
  double operator()(Eigen::Index i, Eigen::Index j) const { return entries_(i, j); }
  const Matrix& matrix() const { return entries_; }

 private:
  Matrix entries_;
};

/// Jacobian of the tape's output with respect to its single registered input,
/// evaluated at `point` (a row vector). One reverse pass per output coordinate.
Jacobian jacobian(Tape& tape, std::span<const double> point);

/// Per-output-coordinate reverse passes over a batched map. Element i of the
/// result holds, in row b, the gradient of output(b, i) with respect to row b
/// of `input`. Requires the map to act row-independently.
std::vector<Var> jacobian_rows(Tape& tape, Var output, Var input, bool create_graph);

/// Gradient over parameter leaves of a scalar function of the Jacobian at
/// `point`. The callback receives the Jacobian rows (each 1 x in) as
/// differentiable Vars and returns a 1 x 1 Var.
Gradients jacobian_with_grad(Tape& tape, std::span<const double> point,
                             const std::function<Var(const std::vector<Var>&)>& loss_of_jacobian);

}  // namespace mae::ad
