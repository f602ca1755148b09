#include "mae/autodiff.hpp"

#include "mae/error.hpp"

#include <cmath>
#include <sstream>

namespace mae::ad {

namespace {

std::string shape_of(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

[[noreturn]] void shape_error(std::string_view what, const Matrix& a, const Matrix& b) {
  throw Error(ErrorKind::Shape, std::string(what) + ": incompatible shapes " + shape_of(a) +
                                    " and " + shape_of(b));
}

Tape& common_tape(Var a, Var b) {
  if (!a.valid() || !b.valid() || a.tape() != b.tape()) {
    throw Error(ErrorKind::Shape, "operands live on different tapes");
  }
  return *a.tape();
}

Tape& tape_of(Var a) {
  if (!a.valid()) throw Error(ErrorKind::Shape, "operation on an empty Var");
  return *a.tape();
}

}  // namespace

const Matrix& Var::value() const { return tape_->value(*this); }
bool Var::requires_grad() const { return tape_->requires_grad(*this); }

const Matrix& Gradients::value(Var node) const {
  auto it = values_.find(node.id());
  if (it == values_.end()) throw Error(ErrorKind::Shape, "no gradient recorded for node");
  return it->second;
}

Var Gradients::var(Var node) const {
  auto it = vars_.find(node.id());
  if (it == vars_.end()) {
    throw Error(ErrorKind::Capability, "gradient is not differentiable; use create_graph");
  }
  return it->second;
}

std::unordered_map<std::string, Matrix> Gradients::by_name() const {
  std::unordered_map<std::string, Matrix> out;
  for (const auto& [id, name] : names_) out.emplace(name, values_.at(id));
  return out;
}

Var Tape::push_leaf(Matrix value, LeafKind kind, std::string name) {
  Node node;
  node.op = Op::Leaf;
  node.leaf_kind = kind;
  node.requires_grad = kind != LeafKind::Constant;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  const std::size_t id = nodes_.size() - 1;
  if (!name.empty()) {
    if (!names_.emplace(std::move(name), id).second) {
      throw Error(ErrorKind::Parameter, "duplicate leaf name on tape");
    }
  }
  return Var(this, id);
}

Var Tape::input(Matrix value, std::string name) {
  Var v = push_leaf(std::move(value), LeafKind::Input, std::move(name));
  inputs_.push_back(v);
  return v;
}

Var Tape::parameter(Matrix value, std::string name) {
  return push_leaf(std::move(value), LeafKind::Parameter, std::move(name));
}

Var Tape::constant(Matrix value) { return push_leaf(std::move(value), LeafKind::Constant, {}); }

Var Tape::leaf(std::string_view name) const {
  auto it = names_.find(std::string(name));
  if (it == names_.end()) throw Error(ErrorKind::Parameter, "unknown leaf: " + std::string(name));
  return Var(const_cast<Tape*>(this), it->second);
}

std::vector<Var> Tape::parameters() const {
  std::vector<Var> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].op == Op::Leaf && nodes_[i].leaf_kind == LeafKind::Parameter) {
      out.push_back(Var(const_cast<Tape*>(this), i));
    }
  }
  return out;
}

void Tape::set_output(Var output) {
  if (output.tape() != this) throw Error(ErrorKind::Shape, "output belongs to another tape");
  output_ = output.id();
}

Var Tape::output() const {
  if (!output_) throw Error(ErrorKind::Shape, "tape has no output");
  return Var(const_cast<Tape*>(this), *output_);
}

Matrix Tape::forward(std::span<const Matrix> inputs) {
  if (inputs.size() != inputs_.size()) {
    throw Error(ErrorKind::Shape, "expected " + std::to_string(inputs_.size()) + " inputs, got " +
                                      std::to_string(inputs.size()));
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Node& leaf = nodes_[inputs_[i].id()];
    if (leaf.value.rows() != inputs[i].rows() || leaf.value.cols() != inputs[i].cols()) {
      shape_error("forward input " + std::to_string(i), leaf.value, inputs[i]);
    }
    leaf.value = inputs[i];
  }
  replay();
  return value(output());
}

void Tape::replay() {
  for (Node& node : nodes_) {
    if (node.op != Op::Leaf) compute(node);
  }
}

void Tape::truncate(std::size_t mark) {
  if (mark >= nodes_.size()) return;
  nodes_.resize(mark);
  std::erase_if(inputs_, [mark](Var v) { return v.id() >= mark; });
  std::erase_if(names_, [mark](const auto& kv) { return kv.second >= mark; });
  if (output_ && *output_ >= mark) output_.reset();
}

void Tape::compute(Node& node) const {
  const Matrix& a = nodes_[node.in[0]].value;
  const Matrix& b = nodes_[node.in[node.arity > 1 ? 1 : 0]].value;
  switch (node.op) {
    case Op::Leaf: break;
    case Op::Add: node.value = a + b; break;
    case Op::Sub: node.value = a - b; break;
    case Op::Mul: node.value = a.cwiseProduct(b); break;
    case Op::Affine: node.value = (node.alpha * a.array() + node.beta).matrix(); break;
    case Op::MatMul: node.value.noalias() = a * b; break;
    case Op::Transpose: node.value = a.transpose(); break;
    case Op::AddRow: node.value = a.rowwise() + b.row(0); break;
    case Op::Tanh: node.value = a.array().tanh().matrix(); break;
    case Op::Sum: node.value = Matrix::Constant(1, 1, a.sum()); break;
    case Op::SumRows: node.value = a.colwise().sum(); break;
    case Op::SumCols: node.value = a.rowwise().sum(); break;
    case Op::BroadcastScalar: node.value = Matrix::Constant(node.index, node.extent, a(0, 0)); break;
    case Op::BroadcastRows: node.value = a.replicate(node.index, 1); break;
    case Op::BroadcastCols: node.value = a.replicate(1, node.index); break;
    case Op::Col: node.value = a.col(node.index); break;
    case Op::EmbedCol:
      node.value = Matrix::Zero(a.rows(), node.extent);
      node.value.col(node.index) = a.col(0);
      break;
    case Op::PairwiseDistance: {
      const Eigen::Index n = a.rows();
      node.value.resize(n, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        node.value(i, i) = 0.0;
        for (Eigen::Index j = i + 1; j < n; ++j) {
          const double d = (a.row(i) - a.row(j)).norm();
          node.value(i, j) = d;
          node.value(j, i) = d;
        }
      }
      break;
    }
  }
}

Var Tape::record(Op op, std::initializer_list<Var> inputs, double alpha, double beta,
                 Eigen::Index index, Eigen::Index extent) {
  Node node;
  node.op = op;
  node.alpha = alpha;
  node.beta = beta;
  node.index = index;
  node.extent = extent;
  node.arity = static_cast<int>(inputs.size());
  int k = 0;
  bool needs_grad = false;
  for (Var v : inputs) {
    if (v.tape() != this) throw Error(ErrorKind::Shape, "operand belongs to another tape");
    node.in[k++] = v.id();
    needs_grad = needs_grad || nodes_[v.id()].requires_grad;
  }
  node.requires_grad = needs_grad && recording_grad_;
  compute(node);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::vjp(std::size_t id, Var g, const bool needs[2], Var out[2], bool create_graph) {
  // Copy what we need: recording new nodes may reallocate nodes_.
  const Op op = nodes_[id].op;
  const Var a(this, nodes_[id].in[0]);
  const Var b(this, nodes_[id].in[nodes_[id].arity > 1 ? 1 : 0]);
  const Var self(this, id);
  const Eigen::Index index = nodes_[id].index;
  const double alpha = nodes_[id].alpha;
  const Eigen::Index a_rows = value(a).rows();
  const Eigen::Index a_cols = value(a).cols();

  switch (op) {
    case Op::Leaf: break;
    case Op::Add:
      if (needs[0]) out[0] = g;
      if (needs[1]) out[1] = g;
      break;
    case Op::Sub:
      if (needs[0]) out[0] = g;
      if (needs[1]) out[1] = scale(g, -1.0);
      break;
    case Op::Mul:
      if (needs[0]) out[0] = mul(g, b);
      if (needs[1]) out[1] = mul(g, a);
      break;
    case Op::Affine: out[0] = scale(g, alpha); break;
    case Op::MatMul:
      if (needs[0]) out[0] = matmul(g, transpose(b));
      if (needs[1]) out[1] = matmul(transpose(a), g);
      break;
    case Op::Transpose: out[0] = transpose(g); break;
    case Op::AddRow:
      if (needs[0]) out[0] = g;
      if (needs[1]) out[1] = sum_rows(g);
      break;
    case Op::Tanh: out[0] = mul(g, affine(mul(self, self), -1.0, 1.0)); break;
    case Op::Sum: out[0] = broadcast_scalar(g, a_rows, a_cols); break;
    case Op::SumRows: out[0] = broadcast_rows(g, a_rows); break;
    case Op::SumCols: out[0] = broadcast_cols(g, a_cols); break;
    case Op::BroadcastScalar: out[0] = sum(g); break;
    case Op::BroadcastRows: out[0] = sum_rows(g); break;
    case Op::BroadcastCols: out[0] = sum_cols(g); break;
    case Op::Col: out[0] = embed_col(g, index, a_cols); break;
    case Op::EmbedCol: out[0] = col(g, index); break;
    case Op::PairwiseDistance: {
      if (create_graph) {
        throw Error(ErrorKind::Capability,
                    "pairwise_distance does not support higher-order differentiation");
      }
      const Matrix& x = value(a);
      const Matrix& d = value(self);
      const Matrix& gv = value(g);
      const Eigen::Index n = x.rows();
      Matrix grad = Matrix::Zero(n, x.cols());
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
          if (i == j || d(i, j) <= 0.0) continue;
          const double w = (gv(i, j) + gv(j, i)) / d(i, j);
          grad.row(i) += w * (x.row(i) - x.row(j));
        }
      }
      out[0] = constant(std::move(grad));
      break;
    }
  }
}

Gradients Tape::backward(Var output, const Matrix& cotangent, const BackwardOptions& options) {
  if (output.tape() != this) throw Error(ErrorKind::Shape, "output belongs to another tape");
  const Matrix& out_value = value(output);
  if (cotangent.rows() != out_value.rows() || cotangent.cols() != out_value.cols()) {
    shape_error("backward cotangent", out_value, cotangent);
  }

  const std::size_t mark = nodes_.size();
  const std::size_t top = output.id();

  std::vector<std::size_t> targets;
  std::vector<char> reaches(top + 1, 0);
  if (options.wrt.empty()) {
    for (std::size_t i = 0; i <= top; ++i) {
      if (nodes_[i].op == Op::Leaf && nodes_[i].requires_grad) targets.push_back(i);
    }
  } else {
    for (Var v : options.wrt) {
      if (v.tape() != this) throw Error(ErrorKind::Shape, "wrt node belongs to another tape");
      targets.push_back(v.id());
    }
  }
  for (std::size_t t : targets) {
    if (t <= top) reaches[t] = 1;
  }
  for (std::size_t i = 0; i <= top; ++i) {
    const Node& node = nodes_[i];
    if (reaches[i] || node.op == Op::Leaf || !node.requires_grad) continue;
    for (int k = 0; k < node.arity; ++k) {
      if (reaches[node.in[k]]) reaches[i] = 1;
    }
  }

  const bool saved_recording = recording_grad_;
  recording_grad_ = options.create_graph;
  std::vector<std::optional<Var>> grads(top + 1);
  try {
    grads[top] = constant(cotangent);
    for (std::size_t i = top + 1; i-- > 0;) {
      if (!grads[i] || !reaches[i] || nodes_[i].op == Op::Leaf) continue;
      bool needs[2] = {false, false};
      for (int k = 0; k < nodes_[i].arity; ++k) needs[k] = reaches[nodes_[i].in[k]] != 0;
      if (!needs[0] && !needs[1]) continue;
      Var contrib[2];
      vjp(i, *grads[i], needs, contrib, options.create_graph);
      for (int k = 0; k < nodes_[i].arity; ++k) {
        if (!needs[k] || !contrib[k].valid()) continue;
        const std::size_t src = nodes_[i].in[k];
        grads[src] = grads[src] ? add(*grads[src], contrib[k]) : contrib[k];
      }
    }
  } catch (...) {
    recording_grad_ = saved_recording;
    truncate(mark);
    throw;
  }
  recording_grad_ = saved_recording;

  Gradients result;
  for (std::size_t t : targets) {
    if (t <= top && grads[t]) {
      result.values_[t] = value(*grads[t]);
      if (options.create_graph) result.vars_[t] = *grads[t];
    } else {
      const Matrix& v = nodes_.at(t).value;
      result.values_[t] = Matrix::Zero(v.rows(), v.cols());
      if (options.create_graph) result.vars_[t] = constant(Matrix::Zero(v.rows(), v.cols()));
    }
  }
  for (const auto& [name, id] : names_) {
    if (result.values_.count(id)) result.names_[id] = name;
  }
  if (!options.create_graph) truncate(mark);
  return result;
}

Var add(Var a, Var b) {
  Tape& t = common_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("add", a.value(), b.value());
  return t.record(Op::Add, {a, b});
}

Var sub(Var a, Var b) {
  Tape& t = common_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("sub", a.value(), b.value());
  return t.record(Op::Sub, {a, b});
}

Var mul(Var a, Var b) {
  Tape& t = common_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("mul", a.value(), b.value());
  return t.record(Op::Mul, {a, b});
}

Var scale(Var a, double alpha) { return tape_of(a).record(Op::Affine, {a}, alpha, 0.0); }

Var affine(Var a, double alpha, double beta) {
  return tape_of(a).record(Op::Affine, {a}, alpha, beta);
}

Var matmul(Var a, Var b) {
  Tape& t = common_tape(a, b);
  if (a.cols() != b.rows()) shape_error("matmul", a.value(), b.value());
  return t.record(Op::MatMul, {a, b});
}

Var transpose(Var a) { return tape_of(a).record(Op::Transpose, {a}); }

Var add_row(Var a, Var row) {
  Tape& t = common_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) shape_error("add_row", a.value(), row.value());
  return t.record(Op::AddRow, {a, row});
}

Var tanh(Var a) { return tape_of(a).record(Op::Tanh, {a}); }
Var sum(Var a) { return tape_of(a).record(Op::Sum, {a}); }
Var sum_rows(Var a) { return tape_of(a).record(Op::SumRows, {a}); }
Var sum_cols(Var a) { return tape_of(a).record(Op::SumCols, {a}); }

Var broadcast_scalar(Var s, Eigen::Index rows, Eigen::Index cols) {
  if (s.rows() != 1 || s.cols() != 1) throw Error(ErrorKind::Shape, "broadcast_scalar needs 1x1");
  return tape_of(s).record(Op::BroadcastScalar, {s}, 0.0, 0.0, rows, cols);
}

Var broadcast_rows(Var row, Eigen::Index rows) {
  if (row.rows() != 1) throw Error(ErrorKind::Shape, "broadcast_rows needs a row vector");
  return tape_of(row).record(Op::BroadcastRows, {row}, 0.0, 0.0, rows);
}

Var broadcast_cols(Var column, Eigen::Index cols) {
  if (column.cols() != 1) throw Error(ErrorKind::Shape, "broadcast_cols needs a column vector");
  return tape_of(column).record(Op::BroadcastCols, {column}, 0.0, 0.0, cols);
}

Var col(Var a, Eigen::Index j) {
  if (j < 0 || j >= a.cols()) throw Error(ErrorKind::Shape, "col index out of range");
  return tape_of(a).record(Op::Col, {a}, 0.0, 0.0, j);
}

Var embed_col(Var column, Eigen::Index j, Eigen::Index cols) {
  if (column.cols() != 1 || j < 0 || j >= cols) {
    throw Error(ErrorKind::Shape, "embed_col needs a column vector and an index below cols");
  }
  return tape_of(column).record(Op::EmbedCol, {column}, 0.0, 0.0, j, cols);
}

Var pairwise_distance(Var a) { return tape_of(a).record(Op::PairwiseDistance, {a}); }

Jacobian::Jacobian(Matrix entries) : entries_(std::move(entries)) {
  if (!entries_.allFinite()) throw Error(ErrorKind::Numeric, "Jacobian has non-finite entries");
}

std::vector<Var> jacobian_rows(Tape& tape, Var output, Var input, bool create_graph) {
  std::vector<Var> rows;
  rows.reserve(static_cast<std::size_t>(output.cols()));
  for (Eigen::Index i = 0; i < output.cols(); ++i) {
    Matrix cot = Matrix::Zero(output.rows(), output.cols());
    cot.col(i).setOnes();
    BackwardOptions opts;
    opts.create_graph = create_graph;
    opts.wrt = {input};
    Gradients g = tape.backward(output, cot, opts);
    rows.push_back(create_graph ? g.var(input) : tape.constant(g.value(input)));
  }
  return rows;
}

namespace {

Var single_input(Tape& tape, std::span<const double> point) {
  if (tape.inputs().size() != 1) {
    throw Error(ErrorKind::Shape, "jacobian needs a tape with exactly one input");
  }
  Var in = tape.inputs().front();
  if (in.rows() != 1 || in.cols() != static_cast<Eigen::Index>(point.size())) {
    throw Error(ErrorKind::Shape, "jacobian point has " + std::to_string(point.size()) +
                                      " entries, input expects " + shape_of(in.value()));
  }
  Matrix x(1, static_cast<Eigen::Index>(point.size()));
  for (std::size_t j = 0; j < point.size(); ++j) x(0, static_cast<Eigen::Index>(j)) = point[j];
  const Matrix inputs[] = {x};
  tape.forward(inputs);
  return in;
}

}  // namespace

Jacobian jacobian(Tape& tape, std::span<const double> point) {
  Var in = single_input(tape, point);
  Var out = tape.output();
  if (out.rows() != 1) throw Error(ErrorKind::Shape, "jacobian needs a row-vector output");
  const std::size_t mark = tape.size();
  Matrix entries(out.cols(), in.cols());
  for (Eigen::Index i = 0; i < out.cols(); ++i) {
    Matrix cot = Matrix::Zero(1, out.cols());
    cot(0, i) = 1.0;
    BackwardOptions opts;
    opts.wrt = {in};
    entries.row(i) = tape.backward(out, cot, opts).value(in);
  }
  tape.truncate(mark);
  return Jacobian(std::move(entries));
}

Gradients jacobian_with_grad(Tape& tape, std::span<const double> point,
                             const std::function<Var(const std::vector<Var>&)>& loss_of_jacobian) {
  Var in = single_input(tape, point);
  Var out = tape.output();
  if (out.rows() != 1) throw Error(ErrorKind::Shape, "jacobian needs a row-vector output");
  const std::size_t mark = tape.size();
  Gradients result;
  try {
    std::vector<Var> rows = jacobian_rows(tape, out, in, true);
    Var loss = loss_of_jacobian(rows);
    if (loss.rows() != 1 || loss.cols() != 1) {
      throw Error(ErrorKind::Shape, "loss of the Jacobian must be 1x1");
    }
    BackwardOptions opts;
    opts.wrt = tape.parameters();
    result = tape.backward(loss, Matrix::Ones(1, 1), opts);
  } catch (...) {
    tape.truncate(mark);
    throw;
  }
  tape.truncate(mark);
  return result;
}

}  // namespace mae::ad
