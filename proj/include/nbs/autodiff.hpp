#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "nbs/numerics.hpp"

// Reverse-mode automatic differentiation over matrix-valued nodes.
//
// Every backward rule is itself expressed with recorded operations, so the
// result of Tape::grad is an ordinary differentiable variable. Differentiating
// it again yields Hessians, and a third pass gives directional derivatives of
// Hessians. The same tape carries closed-loop rollouts for backpropagation
// through time.
//
// Batched evaluation uses columns: a network input of shape (n x B) holds B
// independent samples, and every operation except matmul with a parameter
// matrix acts column-wise.

namespace nbs::ad {

class Tape;

/// Handle to one node on a Tape. Cheap to copy; valid until the tape is
/// truncated below its id.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  // Value of a 1x1 node.
  double scalar() const;

  Tape& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

enum class Op : std::uint8_t {
  Leaf,
  Constant,
  Identity,
  Add,
  Sub,
  Neg,
  Mul,
  Scale,
  AddScalar,
  ScaleBy,
  MatMul,
  Transpose,
  Sum,
  Fill,
  RowSum,
  ExpandCols,
  ColSum,
  ExpandRows,
  Block,
  Embed,
  VStack,
  Diag,
  DiagOf,
  StrictLower,
  StrictLowerOf,
  Tanh,
  Sigmoid,
  Softplus,
  Relu,
  Srelu,
  SreluPrime,
  Sin,
  Cos,
  Exp,
  Log,
  Square,
  Sqrt,
  Reciprocal,
  SolveSpd,
  BatchSolveSpd,
  LambdaMax,
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable input.
  Var variable(const Matrix& value);
  Var constant(const Matrix& value);
  Var constant(double value);
  Var zeros(Eigen::Index rows, Eigen::Index cols);

  std::size_t size() const { return size_; }

  /// Drops every node with id >= mark. Storage is kept for reuse, so a
  /// rollout that rewinds to the same mark every step allocates only once.
  void truncate(std::size_t mark);
  void clear() { truncate(0); }

  /// Derivatives of `output` with respect to each of `wrt`, recorded on the
  /// tape so they can be differentiated again. `seed` (same shape as output)
  /// defaults to all ones, i.e. the gradient of the sum of output entries.
  std::vector<Var> grad(const Var& output, std::span<const Var> wrt, const Var* seed = nullptr);
  Var grad(const Var& output, const Var& wrt);

  /// Same as grad but returns plain values and rewinds the tape afterwards.
  std::vector<Matrix> gradient(const Var& output, std::span<const Var> wrt);

  // Node construction used by the operation functions below.
  struct Node {
    Op op = Op::Constant;
    int a = -1;
    int b = -1;
    std::vector<int> more;
    double s = 0.0;
    int i0 = 0, i1 = 0, i2 = 0, i3 = 0;
    Matrix value;
  };
  Node& push(Op op, int a = -1, int b = -1);
  const Matrix& value_of(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  Var var(int id) { return Var(this, id); }

 private:
  void backprop(int id, const Var& g, int lo);
  void accumulate(int parent, const Var& contribution, int lo);
  bool on_path(int parent, int lo) const;

  std::vector<Node> nodes_;
  std::size_t size_ = 0;
  std::vector<int> adjoint_;
  std::vector<char> mask_;
};

inline const Matrix& Var::value() const { return tape_->value_of(id_); }

// ---------------------------------------------------------------------------
// Operations on tape variables.

Var identity(const Var& a);
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator-(const Var& a);
Var operator*(double s, const Var& a);
Var operator*(const Var& a, double s);
Var operator+(const Var& a, double s);
Var operator-(const Var& a, double s);
Var operator+(double s, const Var& a);
Var operator-(double s, const Var& a);

Var mul(const Var& a, const Var& b);  // elementwise
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var scale_by(const Var& s, const Var& a);  // s is 1x1
Var dot(const Var& a, const Var& b);       // sum(a .* b), 1x1

Var sum(const Var& a);
Var fill(const Var& s, Eigen::Index rows, Eigen::Index cols);
Var row_sum(const Var& a);                           // (r x c) -> (r x 1)
Var expand_cols(const Var& a, Eigen::Index cols);    // (r x 1) -> (r x cols)
Var col_sum(const Var& a);                           // (r x c) -> (1 x c)
Var expand_rows(const Var& a, Eigen::Index rows);    // (1 x c) -> (rows x c)
Var add_bias(const Var& a, const Var& bias);         // bias (r x 1) broadcast over columns

Var block(const Var& a, Eigen::Index r0, Eigen::Index c0, Eigen::Index nr, Eigen::Index nc);
Var rows(const Var& a, Eigen::Index r0, Eigen::Index nr);
Var entry(const Var& a, Eigen::Index r, Eigen::Index c);
Var embed(const Var& a, Eigen::Index r0, Eigen::Index c0, Eigen::Index total_rows,
          Eigen::Index total_cols);
Var vstack(std::span<const Var> parts);

Var diag(const Var& v);              // (n x 1) -> diagonal (n x n)
Var diag_of(const Var& a);           // (n x n) -> (n x 1)
Var strict_lower(const Var& v, Eigen::Index n);  // n(n-1)/2 entries, row-major below diagonal
Var strict_lower_of(const Var& a);

Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);
Var relu(const Var& a);
Var srelu(const Var& a, double d);
Var srelu_prime(const Var& a, double d);
Var sin(const Var& a);
Var cos(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var square(const Var& a);
Var sqrt(const Var& a);
Var reciprocal(const Var& a);

/// x = A^{-1} b for symmetric positive definite A (b may hold several columns).
Var solve_spd(const Var& a, const Var& b);
/// Column-wise solve: A_j(k, :) = rows_of_a[k](:, j), rhs column j.
Var batch_solve_spd(std::span<const Var> rows_of_a, const Var& rhs);
/// Largest eigenvalue of a symmetric matrix. The backward rule uses v v^T of
/// the top eigenvector; on ties the first eigenvector is taken.
Var lambda_max(const Var& a);

// ---------------------------------------------------------------------------
// Plain-matrix counterparts, so model code can be written once as a template
// over Matrix and Var.

inline Matrix matmul(const Matrix& a, const Matrix& b) { return a * b; }
inline Matrix transpose(const Matrix& a) { return a.transpose(); }
inline Matrix mul(const Matrix& a, const Matrix& b) { return a.cwiseProduct(b); }
inline Matrix sin(const Matrix& a) { return a.array().sin().matrix(); }
inline Matrix cos(const Matrix& a) { return a.array().cos().matrix(); }
inline Matrix diag(const Matrix& v) { return v.col(0).asDiagonal(); }
inline Matrix rows(const Matrix& a, Eigen::Index r0, Eigen::Index nr) {
  return a.middleRows(r0, nr);
}
inline Matrix solve_spd(const Matrix& a, const Matrix& b) { return nbs::solve_spd(a, b); }
inline Matrix vstack(std::span<const Matrix> parts) {
  Eigen::Index r = 0;
  for (const auto& p : parts) r += p.rows();
  Matrix out(r, parts.empty() ? 0 : parts.front().cols());
  r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p;
    r += p.rows();
  }
  return out;
}

inline Matrix lift(const Matrix&, const Matrix& c) { return c; }
inline Var lift(const Var& like, const Matrix& c) { return like.tape().constant(c); }

// ---------------------------------------------------------------------------
// Derivatives of user functions.

/// Maps a column input (n x 1) on some tape to a scalar (1 x 1) or a column
/// output (m x 1). Must be deterministic and free of side effects.
using DifferentiableFn = std::function<Var(const Var&)>;

Vector grad(const DifferentiableFn& f, const Vector& x);
Matrix jacobian(const DifferentiableFn& f, const Vector& x);
Matrix hessian(const DifferentiableFn& f, const Vector& x);

struct InputBlock {
  Eigen::Index offset = 0;
  Eigen::Index size = 0;
};

/// sum_k d(d^2 f / d b^2)/d a_k * v_k with x = [.., a, .., b, ..].
Matrix hessian_directional(const DifferentiableFn& f, const Vector& x, InputBlock a, InputBlock b,
                           const Vector& v);

// Graph-level helpers (results stay differentiable).

/// Hessian of scalar `y` with respect to the column `x`, symmetrized.
Var hessian_of(const Var& y, const Var& x);
/// Hessian-vector product (d^2 y / dx^2) v.
Var hessian_vector(const Var& y, const Var& x, const Var& v);

}  // namespace nbs::ad
