#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mvlatent/errors.hpp"
#include "mvlatent/rng.hpp"

namespace mvlatent {

// Dense row-major tensor of 64-bit reals. Rank 1..3 is supported as a
// container; differentiable ops accept rank 1 and 2 only.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }

  // 2-D accessors; a rank-1 tensor is treated as a single row.
  std::size_t rows() const;
  std::size_t cols() const;
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }
  std::span<const double> values() const { return {data_.data(), data_.size()}; }

  double item() const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  bool requires_grad = false;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

enum class OpKind : std::uint8_t {
  Leaf,
  Matmul,
  Affine,
  Add,
  AddScalar,
  Sub,
  RsubScalar,
  Mul,
  Scale,
  Relu,
  Sigmoid,
  Exp,
  Log,
  Square,
  Sum,
  Mean,
  SumRows,
  ConcatCols,
  SliceCols,
  Clamp,
};

const char* op_name(OpKind op);

class Tape;

// Handle to a node on a tape; cheap to copy.
class Var {
 public:
  Var() = default;
  const Tensor& value() const;
  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  std::int32_t id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::int32_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::int32_t id_ = -1;
};

// Wengert list. Nodes are appended in execution order, so parents always
// precede children and a reverse pass is a valid reverse-topological sweep.
// Gradient accumulators are zeroed at the start of backward() and summed
// into, never overwritten.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(const Tensor& value, bool requires_grad);
  Var leaf(Tensor&& value, bool requires_grad);
  Var constant(const Tensor& value) { return leaf(value, false); }
  Var constant(Tensor&& value) { return leaf(std::move(value), false); }

  // Reverse-mode sweep from a scalar loss. Fills gradient accumulators for
  // every node with requires_grad on the path; read them via grad().
  void backward(const Var& loss);

  const Tensor& value(const Var& v) const;
  const Tensor& grad(const Var& v) const;
  // False when the node received no adjoint (disconnected from the loss).
  bool has_grad(const Var& v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  friend struct TapeOps;

  struct Node {
    OpKind op = OpKind::Leaf;
    std::array<std::int32_t, 3> parents{-1, -1, -1};
    Tensor value;
    Tensor grad;
    double a0 = 0.0;  // op-specific scalar (scale factor, clamp lo, slice begin)
    double a1 = 0.0;  // op-specific scalar (clamp hi, slice count)
    bool requires_grad = false;
  };

  Var push(Node&& node, const char* op);
  Node& node(const Var& v);
  const Node& node(const Var& v) const;
  void check_owned(const Var& v, const char* what) const;

  std::vector<Node> nodes_;
};

// Primitive forward ops. Every op validates operand shapes, records itself
// on the operands' tape, and rejects non-finite results.
Var matmul(const Var& a, const Var& b);               // (m,k)x(k,n) -> (m,n)
Var affine(const Var& x, const Var& w, const Var& b); // x*w + row-broadcast b
Var add(const Var& a, const Var& b);
Var add(const Var& a, double c);
Var sub(const Var& a, const Var& b);
Var rsub(double c, const Var& a);                     // c - a
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var square(const Var& a);
Var sum(const Var& a);                                // -> shape {1}
Var mean(const Var& a);                               // -> shape {1}
Var sum_rows(const Var& a);                           // (n,d) -> (n,1)
Var concat_cols(const Var& a, const Var& b);          // along last axis
Var slice_cols(const Var& a, std::size_t begin, std::size_t count);
Var clamp(const Var& a, double lo, double hi);

// Sampling. Draws are row-major over the requested shape and advance rng.
Tensor sample_standard_normal(Rng& rng, const std::vector<std::size_t>& shape);
Tensor sample_uniform(Rng& rng, const std::vector<std::size_t>& shape,
                      double lo, double hi);

// Row i is drawn from stream.substream(i), so per-sample draws do not
// depend on batch layout and can be generated in parallel.
Tensor sample_normal_per_row(const Rng& stream, std::size_t rows,
                             std::size_t cols);

namespace kernels {
// Shared raw arithmetic used by both tape ops and no-tape evaluation
// forwards, so the two paths are arithmetically identical.
void matmul(Tensor& out, const Tensor& a, const Tensor& b);
void matmul_at_b(Tensor& out, const Tensor& a, const Tensor& b);  // a^T * b
void matmul_a_bt(Tensor& out, const Tensor& a, const Tensor& b);  // a * b^T
void affine(Tensor& out, const Tensor& x, const Tensor& w, const Tensor& b);
void relu_inplace(Tensor& t);
void sigmoid_inplace(Tensor& t);
double sigmoid(double v);
}  // namespace kernels

}  // namespace mvlatent
