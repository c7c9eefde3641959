#include "mvlatent/tensor.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

namespace mvlatent {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const EMat>;
using MMap = Eigen::Map<EMat>;

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(shape_product(shape_), fill) {
  for (std::size_t d : shape_) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive");
  }
  if (shape_.empty() || shape_.size() > 3) {
    throw ShapeError("tensor rank must be 1..3, got " + shape_str(shape_));
  }
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  for (std::size_t d : shape_) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive");
  }
  if (shape_.empty() || shape_.size() > 3) {
    throw ShapeError("tensor rank must be 1..3, got " + shape_str(shape_));
  }
  if (shape_product(shape_) != data_.size()) {
    throw ShapeError("tensor data size " + std::to_string(data_.size()) +
                     " does not match shape " + shape_str(shape_));
  }
}

std::size_t Tensor::rows() const {
  if (rank() == 1) return 1;
  if (rank() == 2) return shape_[0];
  throw ShapeError("rows() requires rank 1 or 2, shape " + shape_str(shape_));
}

std::size_t Tensor::cols() const {
  if (rank() == 1) return shape_[0];
  if (rank() == 2) return shape_[1];
  throw ShapeError("cols() requires rank 1 or 2, shape " + shape_str(shape_));
}

double& Tensor::at(std::size_t r, std::size_t c) {
  return data_[r * cols() + c];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return data_[r * cols() + c];
}

double Tensor::item() const {
  if (size() != 1) {
    throw ShapeError("item() requires a scalar tensor, shape " + shape_str(shape_));
  }
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Matmul: return "matmul";
    case OpKind::Affine: return "affine";
    case OpKind::Add: return "add";
    case OpKind::AddScalar: return "add_scalar";
    case OpKind::Sub: return "sub";
    case OpKind::RsubScalar: return "rsub";
    case OpKind::Mul: return "mul";
    case OpKind::Scale: return "scale";
    case OpKind::Relu: return "relu";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Exp: return "exp";
    case OpKind::Log: return "log";
    case OpKind::Square: return "square";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::SumRows: return "sum_rows";
    case OpKind::ConcatCols: return "concat_cols";
    case OpKind::SliceCols: return "slice_cols";
    case OpKind::Clamp: return "clamp";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Tape

const Tensor& Var::value() const {
  if (!tape_) throw Error("value() on an unbound Var");
  return tape_->value(*this);
}

Var Tape::leaf(const Tensor& value, bool requires_grad) {
  Tensor copy = value;
  return leaf(std::move(copy), requires_grad);
}

Var Tape::leaf(Tensor&& value, bool requires_grad) {
  if (!value.all_finite()) throw NumericError("leaf tensor contains non-finite values");
  Node n;
  n.op = OpKind::Leaf;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::int32_t>(nodes_.size() - 1));
}

Var Tape::push(Node&& node, const char* op) {
  if (!node.value.all_finite()) {
    throw NumericError(std::string("non-finite result in ") + op);
  }
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::int32_t>(nodes_.size() - 1));
}

Tape::Node& Tape::node(const Var& v) { return nodes_[static_cast<std::size_t>(v.id())]; }

const Tape::Node& Tape::node(const Var& v) const {
  return nodes_[static_cast<std::size_t>(v.id())];
}

void Tape::check_owned(const Var& v, const char* what) const {
  if (v.tape() != this || v.id() < 0 ||
      static_cast<std::size_t>(v.id()) >= nodes_.size()) {
    throw Error(std::string(what) + ": Var is not on this tape");
  }
}

const Tensor& Tape::value(const Var& v) const {
  check_owned(v, "value");
  return node(v).value;
}

const Tensor& Tape::grad(const Var& v) const {
  check_owned(v, "grad");
  const Node& n = node(v);
  if (!n.requires_grad) throw Error("grad() on a Var that does not require grad");
  if (n.grad.size() == 0) throw Error("grad() before backward()");
  return n.grad;
}

bool Tape::has_grad(const Var& v) const {
  check_owned(v, "has_grad");
  return node(v).grad.size() != 0;
}

// Private accessor for the op implementations below.
struct TapeOps {
  static Tape::Node& node(Tape& t, const Var& v) { return t.node(v); }
  static const Tape::Node& node(const Tape& t, const Var& v) { return t.node(v); }
  static Var push(Tape& t, Tape::Node&& n, const char* op) {
    return t.push(std::move(n), op);
  }
  static bool requires_grad(const Var& v) {
    return v.tape()->node(v).requires_grad;
  }
  using Node = Tape::Node;
};

namespace {

// Ensures the accumulator exists (zeroed) before summing into it.
Tensor& acc(Tensor& grad, const Tensor& shape_like) {
  if (grad.size() == 0) grad = Tensor(shape_like.shape(), 0.0);
  return grad;
}

}  // namespace

void Tape::backward(const Var& loss) {
  check_owned(loss, "backward");
  if (node(loss).value.size() != 1) {
    throw ShapeError("backward() requires a scalar loss");
  }
  // Fresh accumulators for this pass.
  for (Node& n : nodes_) n.grad = Tensor();
  Node& top = node(loss);
  top.grad = Tensor(top.value.shape(), 0.0);
  top.grad.data()[0] = 1.0;

  for (std::size_t idx = nodes_.size(); idx-- > 0;) {
    Node& n = nodes_[idx];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    const Tensor& g = n.grad;
    auto parent = [&](int slot) -> Node& {
      return nodes_[static_cast<std::size_t>(n.parents[static_cast<std::size_t>(slot)])];
    };
    switch (n.op) {
      case OpKind::Leaf:
        break;
      case OpKind::Matmul: {
        Node& a = parent(0);
        Node& b = parent(1);
        if (a.requires_grad) {
          Tensor da(a.value.shape(), 0.0);
          kernels::matmul_a_bt(da, g, b.value);
          Tensor& dst = acc(a.grad, a.value);
          for (std::size_t i = 0; i < da.size(); ++i) dst.data()[i] += da.data()[i];
        }
        if (b.requires_grad) {
          Tensor db(b.value.shape(), 0.0);
          kernels::matmul_at_b(db, a.value, g);
          Tensor& dst = acc(b.grad, b.value);
          for (std::size_t i = 0; i < db.size(); ++i) dst.data()[i] += db.data()[i];
        }
        break;
      }
      case OpKind::Affine: {
        Node& x = parent(0);
        Node& w = parent(1);
        Node& b = parent(2);
        if (x.requires_grad) {
          Tensor dx(x.value.shape(), 0.0);
          kernels::matmul_a_bt(dx, g, w.value);
          Tensor& dst = acc(x.grad, x.value);
          for (std::size_t i = 0; i < dx.size(); ++i) dst.data()[i] += dx.data()[i];
        }
        if (w.requires_grad) {
          Tensor dw(w.value.shape(), 0.0);
          kernels::matmul_at_b(dw, x.value, g);
          Tensor& dst = acc(w.grad, w.value);
          for (std::size_t i = 0; i < dw.size(); ++i) dst.data()[i] += dw.data()[i];
        }
        if (b.requires_grad) {
          Tensor& dst = acc(b.grad, b.value);
          const std::size_t rows = g.rows();
          const std::size_t cols = g.cols();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) dst.data()[c] += g.at(r, c);
        }
        break;
      }
      case OpKind::Add: {
        for (int slot = 0; slot < 2; ++slot) {
          Node& p = parent(slot);
          if (!p.requires_grad) continue;
          Tensor& dst = acc(p.grad, p.value);
          for (std::size_t i = 0; i < g.size(); ++i) dst.data()[i] += g.data()[i];
        }
        break;
      }
      case OpKind::AddScalar: {
        Node& p = parent(0);
        if (p.requires_grad) {
          Tensor& dst = acc(p.grad, p.value);
          for (std::size_t i = 0; i < g.size(); ++i) dst.data()[i] += g.data()[i];
        }
        break;
      }
      case OpKind::Sub: {
        Node& a = parent(0);
        Node& b = parent(1);
        if (a.requires_grad) {
          Tensor& dst = acc(a.grad, a.value);
          for (std::size_t i = 0; i < g.size(); ++i) dst.data()[i] += g.data()[i];
        }
        if (b.requires_grad) {
          Tensor& dst = acc(b.grad, b.value);
          for (std::size_t i = 0; i < g.size(); ++i) dst.data()[i] -= g.data()[i];
        }
        break;
      }
      case OpKind::RsubScalar: {
        Node& p = parent(0);
        if (p.requires_grad) {
          Tensor& dst = acc(p.grad, p.value);
          for (std::size_t i = 0; i < g.size(); ++i) dst.data()[i] -= g.data()[i];
        }
        break;
      }
      case OpKind::Mul: {
        Node& a = parent(0);
        Node& b = parent(1);
        if (a.requires_grad) {
          Tensor& dst = acc(a.grad, a.value);
          for (std::size_t i = 0; i < g.size(); ++i)
            dst.data()[i] += g.data()[i] * b.value.data()[i];
        }
        if (b.requires_grad) {
          Tensor& dst = acc(b.grad, b.value);
          for (std::size_t i = 0; i < g.size(); ++i)
            dst.data()[i] += g.data()[i] * a.value.data()[i];
        }
        break;
      }
      case OpKind::Scale: {
        Node& p = parent(0);
        if (p.requires_grad) {
          Tensor& dst = acc(p.grad, p.value);
          for (std::size_t i = 0; i < g.size(); ++i) dst.data()[i] += n.a0 * g.data()[i];
        }
        break;
      }
      case OpKind::Relu: {
        Node& p = parent(0);
        if (p.requires_grad) {
          Tensor& dst = acc(p.grad, p.value);
          // Subgradient 0 at exactly 0.
          for (std::size_t i = 0; i < g.size(); ++i)
            if (p.value.data()[i] > 0.0) dst.data()[i] += g.data()[i];
        }
        break;
      }
      case OpKind::Sigmoid: {
        Node& p = parent(0);
        if (p.requires_grad) {
          Tensor& dst = acc(p.grad, p.value);
          for (std::size_t i = 0; i < g.size(); ++i) {
            const double y = n.value.data()[i];
            dst.data()[i] += g.data()[i] * y * (1.0 - y);
          }
        }
        break;
      }
      case OpKind::Exp: {
        Node& p = parent(0);
        if (p.requires_grad) {
          Tensor& dst = acc(p.grad, p.value);
          for (std::size_t i = 0; i < g.size(); ++i)
            dst.data()[i] += g.data()[i] * n.value.data()[i];
        }
        break;
      }
      case OpKind::Log: {
        Node& p = parent(0);
        if (p.requires_grad) {
          Tensor& dst = acc(p.grad, p.value);
          for (std::size_t i = 0; i < g.size(); ++i)
            dst.data()[i] += g.data()[i] / p.value.data()[i];
        }
        break;
      }
      case OpKind::Square: {
        Node& p = parent(0);
        if (p.requires_grad) {
          Tensor& dst = acc(p.grad, p.value);
          for (std::size_t i = 0; i < g.size(); ++i)
            dst.data()[i] += 2.0 * p.value.data()[i] * g.data()[i];
        }
        break;
      }
      case OpKind::Sum: {
        Node& p = parent(0);
        if (p.requires_grad) {
          Tensor& dst = acc(p.grad, p.value);
          const double gv = g.data()[0];
          for (std::size_t i = 0; i < dst.size(); ++i) dst.data()[i] += gv;
        }
        break;
      }
      case OpKind::Mean: {
        Node& p = parent(0);
        if (p.requires_grad) {
          Tensor& dst = acc(p.grad, p.value);
          const double gv = g.data()[0] / static_cast<double>(p.value.size());
          for (std::size_t i = 0; i < dst.size(); ++i) dst.data()[i] += gv;
        }
        break;
      }
      case OpKind::SumRows: {
        Node& p = parent(0);
        if (p.requires_grad) {
          Tensor& dst = acc(p.grad, p.value);
          const std::size_t rows = p.value.rows();
          const std::size_t cols = p.value.cols();
          for (std::size_t r = 0; r < rows; ++r) {
            const double gv = g.data()[r];
            for (std::size_t c = 0; c < cols; ++c) dst.data()[r * cols + c] += gv;
          }
        }
        break;
      }
      case OpKind::ConcatCols: {
        Node& a = parent(0);
        Node& b = parent(1);
        const std::size_t rows = n.value.rows();
        const std::size_t ca = a.value.cols();
        const std::size_t cb = b.value.cols();
        if (a.requires_grad) {
          Tensor& dst = acc(a.grad, a.value);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < ca; ++c)
              dst.data()[r * ca + c] += g.at(r, c);
        }
        if (b.requires_grad) {
          Tensor& dst = acc(b.grad, b.value);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cb; ++c)
              dst.data()[r * cb + c] += g.at(r, ca + c);
        }
        break;
      }
      case OpKind::SliceCols: {
        Node& p = parent(0);
        if (p.requires_grad) {
          Tensor& dst = acc(p.grad, p.value);
          const std::size_t begin = static_cast<std::size_t>(n.a0);
          const std::size_t rows = n.value.rows();
          const std::size_t count = n.value.cols();
          const std::size_t pcols = p.value.cols();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < count; ++c)
              dst.data()[r * pcols + begin + c] += g.at(r, c);
        }
        break;
      }
      case OpKind::Clamp: {
        Node& p = parent(0);
        if (p.requires_grad) {
          Tensor& dst = acc(p.grad, p.value);
          for (std::size_t i = 0; i < g.size(); ++i) {
            const double v = p.value.data()[i];
            if (v > n.a0 && v < n.a1) dst.data()[i] += g.data()[i];
          }
        }
        break;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Forward ops

namespace {

Tape* common_tape(const Var& a, const Var& b, const char* op) {
  if (!a.valid() || !b.valid()) throw Error(std::string(op) + ": unbound Var");
  if (a.tape() != b.tape()) throw Error(std::string(op) + ": Vars on different tapes");
  return a.tape();
}

void require_rank12(const Tensor& t, const char* op) {
  if (t.rank() > 2) {
    throw ShapeError(std::string(op) + ": rank must be 1 or 2");
  }
}

}  // namespace

#define MV_UNARY_PROLOGUE(a, opk)                        \
  if (!(a).valid()) throw Error("unbound Var");          \
  Tape* tape = (a).tape();                               \
  const Tensor& av = (a).value();                        \
  require_rank12(av, op_name(opk));                      \
  TapeOps::Node out;                                     \
  out.op = (opk);                                        \
  out.parents[0] = (a).id();                             \
  out.requires_grad = TapeOps::requires_grad(a);

Var matmul(const Var& a, const Var& b) {
  Tape* tape = common_tape(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows()) {
    throw ShapeError("matmul: inner dimensions must match");
  }
  TapeOps::Node out;
  out.op = OpKind::Matmul;
  out.parents = {a.id(), b.id(), -1};
  out.requires_grad = TapeOps::requires_grad(a) || TapeOps::requires_grad(b);
  out.value = Tensor({av.rows(), bv.cols()}, 0.0);
  kernels::matmul(out.value, av, bv);
  return TapeOps::push(*tape, std::move(out), "matmul");
}

Var affine(const Var& x, const Var& w, const Var& b) {
  Tape* tape = common_tape(x, w, "affine");
  common_tape(x, b, "affine");
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  if (xv.rank() != 2 || wv.rank() != 2 || xv.cols() != wv.rows()) {
    throw ShapeError("affine: input/weight dimensions must match");
  }
  if (bv.rank() != 1 || bv.size() != wv.cols()) {
    throw ShapeError("affine: bias length must equal output width");
  }
  TapeOps::Node out;
  out.op = OpKind::Affine;
  out.parents = {x.id(), w.id(), b.id()};
  out.requires_grad = TapeOps::requires_grad(x) || TapeOps::requires_grad(w) ||
                      TapeOps::requires_grad(b);
  out.value = Tensor({xv.rows(), wv.cols()}, 0.0);
  kernels::affine(out.value, xv, wv, bv);
  return TapeOps::push(*tape, std::move(out), "affine");
}

namespace {

Var binary_elementwise(const Var& a, const Var& b, OpKind op,
                       double (*f)(double, double)) {
  Tape* tape = common_tape(a, b, op_name(op));
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank12(av, op_name(op));
  if (!av.same_shape(bv)) {
    throw ShapeError(std::string(op_name(op)) + ": shapes must match exactly");
  }
  TapeOps::Node out;
  out.op = op;
  out.parents = {a.id(), b.id(), -1};
  out.requires_grad = TapeOps::requires_grad(a) || TapeOps::requires_grad(b);
  Tensor v(av.shape(), 0.0);
  for (std::size_t i = 0; i < v.size(); ++i)
    v.data()[i] = f(av.data()[i], bv.data()[i]);
  out.value = std::move(v);
  return TapeOps::push(*tape, std::move(out), op_name(op));
}

}  // namespace

Var add(const Var& a, const Var& b) {
  return binary_elementwise(a, b, OpKind::Add, [](double x, double y) { return x + y; });
}

Var sub(const Var& a, const Var& b) {
  return binary_elementwise(a, b, OpKind::Sub, [](double x, double y) { return x - y; });
}

Var mul(const Var& a, const Var& b) {
  return binary_elementwise(a, b, OpKind::Mul, [](double x, double y) { return x * y; });
}

Var add(const Var& a, double c) {
  MV_UNARY_PROLOGUE(a, OpKind::AddScalar)
  out.a0 = c;
  Tensor v = av;
  for (double& x : v.data()) x += c;
  out.value = std::move(v);
  return TapeOps::push(*tape, std::move(out), "add_scalar");
}

Var rsub(double c, const Var& a) {
  MV_UNARY_PROLOGUE(a, OpKind::RsubScalar)
  out.a0 = c;
  Tensor v = av;
  for (double& x : v.data()) x = c - x;
  out.value = std::move(v);
  return TapeOps::push(*tape, std::move(out), "rsub");
}

Var scale(const Var& a, double c) {
  MV_UNARY_PROLOGUE(a, OpKind::Scale)
  out.a0 = c;
  Tensor v = av;
  for (double& x : v.data()) x *= c;
  out.value = std::move(v);
  return TapeOps::push(*tape, std::move(out), "scale");
}

Var relu(const Var& a) {
  MV_UNARY_PROLOGUE(a, OpKind::Relu)
  Tensor v = av;
  kernels::relu_inplace(v);
  out.value = std::move(v);
  return TapeOps::push(*tape, std::move(out), "relu");
}

Var sigmoid(const Var& a) {
  MV_UNARY_PROLOGUE(a, OpKind::Sigmoid)
  Tensor v = av;
  kernels::sigmoid_inplace(v);
  out.value = std::move(v);
  return TapeOps::push(*tape, std::move(out), "sigmoid");
}

Var exp(const Var& a) {
  MV_UNARY_PROLOGUE(a, OpKind::Exp)
  Tensor v = av;
  for (double& x : v.data()) x = std::exp(x);
  out.value = std::move(v);
  return TapeOps::push(*tape, std::move(out), "exp");
}

Var log(const Var& a) {
  MV_UNARY_PROLOGUE(a, OpKind::Log)
  Tensor v = av;
  for (double& x : v.data()) x = std::log(x);
  out.value = std::move(v);
  return TapeOps::push(*tape, std::move(out), "log");
}

Var square(const Var& a) {
  MV_UNARY_PROLOGUE(a, OpKind::Square)
  Tensor v = av;
  for (double& x : v.data()) x *= x;
  out.value = std::move(v);
  return TapeOps::push(*tape, std::move(out), "square");
}

Var sum(const Var& a) {
  MV_UNARY_PROLOGUE(a, OpKind::Sum)
  double s = 0.0;
  for (double x : av.data()) s += x;
  out.value = Tensor::scalar(s);
  return TapeOps::push(*tape, std::move(out), "sum");
}

Var mean(const Var& a) {
  MV_UNARY_PROLOGUE(a, OpKind::Mean)
  double s = 0.0;
  for (double x : av.data()) s += x;
  out.value = Tensor::scalar(s / static_cast<double>(av.size()));
  return TapeOps::push(*tape, std::move(out), "mean");
}

Var sum_rows(const Var& a) {
  MV_UNARY_PROLOGUE(a, OpKind::SumRows)
  const std::size_t rows = av.rows();
  const std::size_t cols = av.cols();
  Tensor v({rows, 1}, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += av.at(r, c);
    v.data()[r] = s;
  }
  out.value = std::move(v);
  return TapeOps::push(*tape, std::move(out), "sum_rows");
}

Var concat_cols(const Var& a, const Var& b) {
  Tape* tape = common_tape(a, b, "concat_cols");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.rows() != bv.rows()) {
    throw ShapeError("concat_cols: operands must be 2-D with equal row counts");
  }
  TapeOps::Node out;
  out.op = OpKind::ConcatCols;
  out.parents = {a.id(), b.id(), -1};
  out.requires_grad = TapeOps::requires_grad(a) || TapeOps::requires_grad(b);
  const std::size_t rows = av.rows();
  const std::size_t ca = av.cols();
  const std::size_t cb = bv.cols();
  Tensor v({rows, ca + cb}, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < ca; ++c) v.at(r, c) = av.at(r, c);
    for (std::size_t c = 0; c < cb; ++c) v.at(r, ca + c) = bv.at(r, c);
  }
  out.value = std::move(v);
  return TapeOps::push(*tape, std::move(out), "concat_cols");
}

Var slice_cols(const Var& a, std::size_t begin, std::size_t count) {
  MV_UNARY_PROLOGUE(a, OpKind::SliceCols)
  if (av.rank() != 2) throw ShapeError("slice_cols: operand must be 2-D");
  if (count == 0 || begin + count > av.cols()) {
    throw ShapeError("slice_cols: range out of bounds");
  }
  out.a0 = static_cast<double>(begin);
  out.a1 = static_cast<double>(count);
  const std::size_t rows = av.rows();
  Tensor v({rows, count}, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < count; ++c) v.at(r, c) = av.at(r, begin + c);
  out.value = std::move(v);
  return TapeOps::push(*tape, std::move(out), "slice_cols");
}

Var clamp(const Var& a, double lo, double hi) {
  if (!(lo < hi)) throw NumericError("clamp: lo must be < hi");
  MV_UNARY_PROLOGUE(a, OpKind::Clamp)
  out.a0 = lo;
  out.a1 = hi;
  Tensor v = av;
  for (double& x : v.data()) x = std::min(hi, std::max(lo, x));
  out.value = std::move(v);
  return TapeOps::push(*tape, std::move(out), "clamp");
}

#undef MV_UNARY_PROLOGUE

// ---------------------------------------------------------------------------
// Sampling

double Rng::next_normal() {
  // u1 in (0,1] keeps the log finite; u2 in [0,1).
  const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  const double r = std::sqrt(-2.0 * std::log(u1));
  return r * std::cos(2.0 * std::numbers::pi * u2);
}

Tensor sample_standard_normal(Rng& rng, const std::vector<std::size_t>& shape) {
  Tensor t(shape, 0.0);
  for (double& v : t.data()) v = rng.next_normal();
  return t;
}

Tensor sample_uniform(Rng& rng, const std::vector<std::size_t>& shape, double lo,
                      double hi) {
  if (!(lo < hi)) throw NumericError("sample_uniform: lo must be < hi");
  Tensor t(shape, 0.0);
  for (double& v : t.data()) v = rng.next_uniform(lo, hi);
  return t;
}

Tensor sample_normal_per_row(const Rng& stream, std::size_t rows, std::size_t cols) {
  Tensor t({rows, cols}, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    Rng row_rng = stream.substream(r);
    for (std::size_t c = 0; c < cols; ++c) t.at(r, c) = row_rng.next_normal();
  }
  return t;
}

// ---------------------------------------------------------------------------
// Kernels

namespace kernels {

void matmul(Tensor& out, const Tensor& a, const Tensor& b) {
  MMap o(out.data().data(), static_cast<Eigen::Index>(out.rows()),
         static_cast<Eigen::Index>(out.cols()));
  CMap am(a.data().data(), static_cast<Eigen::Index>(a.rows()),
          static_cast<Eigen::Index>(a.cols()));
  CMap bm(b.data().data(), static_cast<Eigen::Index>(b.rows()),
          static_cast<Eigen::Index>(b.cols()));
  o.noalias() = am * bm;
}

void matmul_at_b(Tensor& out, const Tensor& a, const Tensor& b) {
  MMap o(out.data().data(), static_cast<Eigen::Index>(out.rows()),
         static_cast<Eigen::Index>(out.cols()));
  CMap am(a.data().data(), static_cast<Eigen::Index>(a.rows()),
          static_cast<Eigen::Index>(a.cols()));
  CMap bm(b.data().data(), static_cast<Eigen::Index>(b.rows()),
          static_cast<Eigen::Index>(b.cols()));
  o.noalias() = am.transpose() * bm;
}

void matmul_a_bt(Tensor& out, const Tensor& a, const Tensor& b) {
  MMap o(out.data().data(), static_cast<Eigen::Index>(out.rows()),
         static_cast<Eigen::Index>(out.cols()));
  CMap am(a.data().data(), static_cast<Eigen::Index>(a.rows()),
          static_cast<Eigen::Index>(a.cols()));
  CMap bm(b.data().data(), static_cast<Eigen::Index>(b.rows()),
          static_cast<Eigen::Index>(b.cols()));
  o.noalias() = am * bm.transpose();
}

void affine(Tensor& out, const Tensor& x, const Tensor& w, const Tensor& b) {
  matmul(out, x, w);
  const std::size_t rows = out.rows();
  const std::size_t cols = out.cols();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out.data()[r * cols + c] += b.data()[c];
}

void relu_inplace(Tensor& t) {
  for (double& v : t.data()) v = v > 0.0 ? v : 0.0;
}

double sigmoid(double v) {
  if (v >= 0.0) {
    return 1.0 / (1.0 + std::exp(-v));
  }
  const double e = std::exp(v);
  return e / (1.0 + e);
}

void sigmoid_inplace(Tensor& t) {
  for (double& v : t.data()) v = sigmoid(v);
}

}  // namespace kernels

}  // namespace mvlatent
