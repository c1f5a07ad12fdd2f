#include "nbs/autodiff.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <string>

namespace nbs::ad {

namespace {

Tape& same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw Error("autodiff: variables live on different tapes");
  return a.tape();
}

void require_same_shape(const Var& a, const Var& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionMismatch(std::string(what) + ": shape mismatch " + std::to_string(a.rows()) +
                            "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                            "x" + std::to_string(b.cols()));
  }
}

double softplus_value(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid_value(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double srelu_value(double x, double d) {
  if (x <= 0.0) return 0.0;
  if (x < d) return x * x / (2.0 * d);
  return x - 0.5 * d;
}

double srelu_slope(double x, double d) { return std::clamp(x / d, 0.0, 1.0); }

// Second derivative of srelu; the kink at 0 takes the left value, matching
// the relu convention.
double srelu_curvature(double x, double d) { return (x > 0.0 && x < d) ? 1.0 / d : 0.0; }

Matrix column_system(std::span<const int> rows_of_a, const Tape& tape, Eigen::Index col) {
  const auto n = static_cast<Eigen::Index>(rows_of_a.size());
  Matrix a(n, n);
  for (Eigen::Index k = 0; k < n; ++k) a.row(k) = tape.value_of(rows_of_a[k]).col(col).transpose();
  return a;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tape

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw DimensionMismatch("Var::scalar on a non-scalar node");
  return v(0, 0);
}

Tape::Node& Tape::push(Op op, int a, int b) {
  if (size_ == nodes_.size()) nodes_.emplace_back();
  Node& n = nodes_[size_++];
  n.op = op;
  n.a = a;
  n.b = b;
  n.more.clear();
  n.s = 0.0;
  n.i0 = n.i1 = n.i2 = n.i3 = 0;
  return n;
}

Var Tape::variable(const Matrix& value) {
  Node& n = push(Op::Leaf);
  n.value = value;
  return Var(this, static_cast<int>(size_ - 1));
}

Var Tape::constant(const Matrix& value) {
  Node& n = push(Op::Constant);
  n.value = value;
  return Var(this, static_cast<int>(size_ - 1));
}

Var Tape::constant(double value) {
  Node& n = push(Op::Constant);
  n.value.resize(1, 1);
  n.value(0, 0) = value;
  return Var(this, static_cast<int>(size_ - 1));
}

Var Tape::zeros(Eigen::Index rows, Eigen::Index cols) {
  Node& n = push(Op::Constant);
  n.value.setZero(rows, cols);
  return Var(this, static_cast<int>(size_ - 1));
}

void Tape::truncate(std::size_t mark) {
  if (mark < size_) size_ = mark;
}

bool Tape::on_path(int parent, int lo) const {
  return parent >= lo && mask_[static_cast<std::size_t>(parent - lo)] != 0;
}

void Tape::accumulate(int parent, const Var& contribution, int lo) {
  int& slot = adjoint_[static_cast<std::size_t>(parent - lo)];
  if (slot < 0) {
    slot = contribution.id();
  } else {
    slot = (Var(this, slot) + contribution).id();
  }
}

std::vector<Var> Tape::grad(const Var& output, std::span<const Var> wrt, const Var* seed) {
  if (&output.tape() != this) throw Error("Tape::grad: output lives on another tape");
  std::vector<Var> result;
  result.reserve(wrt.size());
  const int hi = output.id();
  int lo = hi + 1;
  for (const Var& w : wrt) {
    if (&w.tape() != this) throw Error("Tape::grad: input lives on another tape");
    lo = std::min(lo, w.id());
  }
  if (seed) require_same_shape(output, *seed, "Tape::grad seed");

  auto zeros_like = [&](const Var& w) { return zeros(w.rows(), w.cols()); };
  if (lo > hi) {
    for (const Var& w : wrt) result.push_back(zeros_like(w));
    return result;
  }

  const auto span = static_cast<std::size_t>(hi - lo + 1);
  mask_.assign(span, 0);
  for (const Var& w : wrt) {
    if (w.id() <= hi) mask_[static_cast<std::size_t>(w.id() - lo)] = 1;
  }
  for (int i = lo; i <= hi; ++i) {
    char& m = mask_[static_cast<std::size_t>(i - lo)];
    if (m) continue;
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    if (on_path(n.a, lo) || on_path(n.b, lo)) {
      m = 1;
      continue;
    }
    for (int p : n.more) {
      if (on_path(p, lo)) {
        m = 1;
        break;
      }
    }
  }
  if (!mask_[span - 1]) {
    for (const Var& w : wrt) result.push_back(zeros_like(w));
    return result;
  }

  adjoint_.assign(span, -1);
  if (seed) {
    adjoint_[span - 1] = seed->id();
  } else {
    adjoint_[span - 1] = constant(Matrix::Ones(output.rows(), output.cols())).id();
  }

  for (int i = hi; i >= lo; --i) {
    const auto k = static_cast<std::size_t>(i - lo);
    if (!mask_[k] || adjoint_[k] < 0) continue;
    backprop(i, Var(this, adjoint_[k]), lo);
  }

  for (const Var& w : wrt) {
    const int g = w.id() <= hi ? adjoint_[static_cast<std::size_t>(w.id() - lo)] : -1;
    result.push_back(g >= 0 ? Var(this, g) : zeros_like(w));
  }
  return result;
}

Var Tape::grad(const Var& output, const Var& wrt) {
  return grad(output, std::span<const Var>(&wrt, 1)).front();
}

std::vector<Matrix> Tape::gradient(const Var& output, std::span<const Var> wrt) {
  const std::size_t mark = size_;
  std::vector<Var> g = grad(output, wrt);
  std::vector<Matrix> out;
  out.reserve(g.size());
  for (const Var& v : g) out.push_back(v.value());
  truncate(mark);
  return out;
}

void Tape::backprop(int id, const Var& g, int lo) {
  // Copy what we need: recording new nodes may reallocate nodes_.
  const Node& node = nodes_[static_cast<std::size_t>(id)];
  const Op op = node.op;
  const int pa = node.a;
  const int pb = node.b;
  const double s = node.s;
  const int i0 = node.i0, i1 = node.i1, i2 = node.i2, i3 = node.i3;
  const Var self(this, id);
  const bool need_a = on_path(pa, lo);
  const bool need_b = on_path(pb, lo);
  const Var a = pa >= 0 ? Var(this, pa) : Var();
  const Var b = pb >= 0 ? Var(this, pb) : Var();

  switch (op) {
    case Op::Leaf:
    case Op::Constant:
      return;
    case Op::Identity:
    case Op::AddScalar:
      if (need_a) accumulate(pa, g, lo);
      return;
    case Op::Add:
      if (need_a) accumulate(pa, g, lo);
      if (need_b) accumulate(pb, g, lo);
      return;
    case Op::Sub:
      if (need_a) accumulate(pa, g, lo);
      if (need_b) accumulate(pb, -g, lo);
      return;
    case Op::Neg:
      if (need_a) accumulate(pa, -g, lo);
      return;
    case Op::Mul:
      if (need_a) accumulate(pa, mul(g, b), lo);
      if (need_b) accumulate(pb, mul(g, a), lo);
      return;
    case Op::Scale:
      if (need_a) accumulate(pa, s * g, lo);
      return;
    case Op::ScaleBy:
      if (need_a) accumulate(pa, dot(g, b), lo);
      if (need_b) accumulate(pb, scale_by(a, g), lo);
      return;
    case Op::MatMul:
      if (need_a) accumulate(pa, matmul(g, transpose(b)), lo);
      if (need_b) accumulate(pb, matmul(transpose(a), g), lo);
      return;
    case Op::Transpose:
      if (need_a) accumulate(pa, transpose(g), lo);
      return;
    case Op::Sum:
      if (need_a) accumulate(pa, fill(g, i0, i1), lo);
      return;
    case Op::Fill:
      if (need_a) accumulate(pa, sum(g), lo);
      return;
    case Op::RowSum:
      if (need_a) accumulate(pa, expand_cols(g, i0), lo);
      return;
    case Op::ExpandCols:
      if (need_a) accumulate(pa, row_sum(g), lo);
      return;
    case Op::ColSum:
      if (need_a) accumulate(pa, expand_rows(g, i0), lo);
      return;
    case Op::ExpandRows:
      if (need_a) accumulate(pa, col_sum(g), lo);
      return;
    case Op::Block: {
      if (!need_a) return;
      const Eigen::Index total_rows = a.rows();
      const Eigen::Index total_cols = a.cols();
      accumulate(pa, embed(g, i0, i1, total_rows, total_cols), lo);
      return;
    }
    case Op::Embed:
      if (need_a) accumulate(pa, block(g, i0, i1, i2, i3), lo);
      return;
    case Op::VStack: {
      const std::vector<int> parts = nodes_[static_cast<std::size_t>(id)].more;
      Eigen::Index offset = 0;
      for (int p : parts) {
        const Eigen::Index r = value_of(p).rows();
        if (on_path(p, lo)) accumulate(p, block(g, offset, 0, r, g.cols()), lo);
        offset += r;
      }
      return;
    }
    case Op::Diag:
      if (need_a) accumulate(pa, diag_of(g), lo);
      return;
    case Op::DiagOf:
      if (need_a) accumulate(pa, diag(g), lo);
      return;
    case Op::StrictLower:
      if (need_a) accumulate(pa, strict_lower_of(g), lo);
      return;
    case Op::StrictLowerOf:
      if (need_a) accumulate(pa, strict_lower(g, i0), lo);
      return;
    case Op::Tanh:
      if (need_a) accumulate(pa, mul(g, 1.0 - square(self)), lo);
      return;
    case Op::Sigmoid:
      if (need_a) accumulate(pa, mul(g, mul(self, 1.0 - self)), lo);
      return;
    case Op::Softplus:
      if (need_a) accumulate(pa, mul(g, sigmoid(a)), lo);
      return;
    case Op::Relu: {
      if (!need_a) return;
      Matrix step = (a.value().array() > 0.0).cast<double>().matrix();
      accumulate(pa, mul(g, constant(step)), lo);
      return;
    }
    case Op::Srelu:
      if (need_a) accumulate(pa, mul(g, srelu_prime(a, s)), lo);
      return;
    case Op::SreluPrime: {
      if (!need_a) return;
      Matrix curv = a.value().unaryExpr([d = s](double x) { return srelu_curvature(x, d); });
      accumulate(pa, mul(g, constant(curv)), lo);
      return;
    }
    case Op::Sin:
      if (need_a) accumulate(pa, mul(g, cos(a)), lo);
      return;
    case Op::Cos:
      if (need_a) accumulate(pa, -mul(g, sin(a)), lo);
      return;
    case Op::Exp:
      if (need_a) accumulate(pa, mul(g, self), lo);
      return;
    case Op::Log:
      if (need_a) accumulate(pa, mul(g, reciprocal(a)), lo);
      return;
    case Op::Square:
      if (need_a) accumulate(pa, 2.0 * mul(g, a), lo);
      return;
    case Op::Sqrt:
      if (need_a) accumulate(pa, mul(g, 0.5 * reciprocal(self)), lo);
      return;
    case Op::Reciprocal:
      if (need_a) accumulate(pa, -mul(g, square(self)), lo);
      return;
    case Op::SolveSpd: {
      const Var gb = solve_spd(transpose(a), g);
      if (need_a) accumulate(pa, -matmul(gb, transpose(self)), lo);
      if (need_b) accumulate(pb, gb, lo);
      return;
    }
    case Op::BatchSolveSpd: {
      const std::vector<int> hs = nodes_[static_cast<std::size_t>(id)].more;
      const auto n = static_cast<Eigen::Index>(hs.size());
      const Eigen::Index batch = g.cols();
      // Rows of A_j^T, in the same batched layout.
      std::vector<Var> transposed;
      transposed.reserve(hs.size());
      for (Eigen::Index k = 0; k < n; ++k) {
        std::vector<Var> col;
        col.reserve(hs.size());
        for (int h : hs) col.push_back(block(Var(this, h), k, 0, 1, batch));
        transposed.push_back(vstack(col));
      }
      const Var gb = batch_solve_spd(transposed, g);
      for (Eigen::Index k = 0; k < n; ++k) {
        const int h = hs[static_cast<std::size_t>(k)];
        if (!on_path(h, lo)) continue;
        accumulate(h, -mul(expand_rows(block(gb, k, 0, 1, batch), n), self), lo);
      }
      if (need_b) accumulate(pb, gb, lo);
      return;
    }
    case Op::LambdaMax: {
      if (!need_a) return;
      const SymEig eig = sym_eig(a.value());
      const Vector v = eig.vectors.col(0);
      accumulate(pa, scale_by(g, constant(v * v.transpose())), lo);
      return;
    }
  }
}

// ---------------------------------------------------------------------------
// Operations

namespace {

}  // namespace

#define NBS_NEW_NODE(tape, op, pa, pb) \
  Tape::Node& node = (tape).push(op, pa, pb); \
  const Var out = (tape).var(static_cast<int>((tape).size() - 1))

Var identity(const Var& a) {
  Tape& t = a.tape();
  NBS_NEW_NODE(t, Op::Identity, a.id(), -1);
  node.value = t.value_of(a.id());
  return out;
}

Var operator+(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a, b, "add");
  NBS_NEW_NODE(t, Op::Add, a.id(), b.id());
  node.value = t.value_of(a.id()) + t.value_of(b.id());
  return out;
}

Var operator-(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a, b, "sub");
  NBS_NEW_NODE(t, Op::Sub, a.id(), b.id());
  node.value = t.value_of(a.id()) - t.value_of(b.id());
  return out;
}

Var operator-(const Var& a) {
  Tape& t = a.tape();
  NBS_NEW_NODE(t, Op::Neg, a.id(), -1);
  node.value = -t.value_of(a.id());
  return out;
}

Var operator*(double s, const Var& a) {
  Tape& t = a.tape();
  NBS_NEW_NODE(t, Op::Scale, a.id(), -1);
  node.s = s;
  node.value = s * t.value_of(a.id());
  return out;
}

Var operator*(const Var& a, double s) { return s * a; }

Var operator+(const Var& a, double s) {
  Tape& t = a.tape();
  NBS_NEW_NODE(t, Op::AddScalar, a.id(), -1);
  node.s = s;
  node.value = (t.value_of(a.id()).array() + s).matrix();
  return out;
}

Var operator-(const Var& a, double s) { return a + (-s); }
Var operator+(double s, const Var& a) { return a + s; }
Var operator-(double s, const Var& a) { return (-a) + s; }

Var mul(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a, b, "mul");
  NBS_NEW_NODE(t, Op::Mul, a.id(), b.id());
  node.value = t.value_of(a.id()).cwiseProduct(t.value_of(b.id()));
  return out;
}

Var matmul(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  if (a.cols() != b.rows()) {
    throw DimensionMismatch("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                            " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  NBS_NEW_NODE(t, Op::MatMul, a.id(), b.id());
  node.value.noalias() = t.value_of(a.id()) * t.value_of(b.id());
  return out;
}

Var transpose(const Var& a) {
  Tape& t = a.tape();
  NBS_NEW_NODE(t, Op::Transpose, a.id(), -1);
  node.value = t.value_of(a.id()).transpose();
  return out;
}

Var scale_by(const Var& s, const Var& a) {
  Tape& t = same_tape(s, a);
  if (s.value().size() != 1) throw DimensionMismatch("scale_by: scale is not 1x1");
  NBS_NEW_NODE(t, Op::ScaleBy, s.id(), a.id());
  node.value = t.value_of(s.id())(0, 0) * t.value_of(a.id());
  return out;
}

Var dot(const Var& a, const Var& b) { return sum(mul(a, b)); }

Var sum(const Var& a) {
  Tape& t = a.tape();
  NBS_NEW_NODE(t, Op::Sum, a.id(), -1);
  const Matrix& v = t.value_of(a.id());
  node.i0 = static_cast<int>(v.rows());
  node.i1 = static_cast<int>(v.cols());
  node.value.resize(1, 1);
  node.value(0, 0) = v.sum();
  return out;
}

Var fill(const Var& s, Eigen::Index rows, Eigen::Index cols) {
  Tape& t = s.tape();
  if (s.value().size() != 1) throw DimensionMismatch("fill: source is not 1x1");
  NBS_NEW_NODE(t, Op::Fill, s.id(), -1);
  node.value.setConstant(rows, cols, t.value_of(s.id())(0, 0));
  return out;
}

Var row_sum(const Var& a) {
  Tape& t = a.tape();
  NBS_NEW_NODE(t, Op::RowSum, a.id(), -1);
  const Matrix& v = t.value_of(a.id());
  node.i0 = static_cast<int>(v.cols());
  node.value = v.rowwise().sum();
  return out;
}

Var expand_cols(const Var& a, Eigen::Index cols) {
  Tape& t = a.tape();
  if (a.cols() != 1) throw DimensionMismatch("expand_cols: source is not a column");
  NBS_NEW_NODE(t, Op::ExpandCols, a.id(), -1);
  node.value = t.value_of(a.id()).replicate(1, cols);
  return out;
}

Var col_sum(const Var& a) {
  Tape& t = a.tape();
  NBS_NEW_NODE(t, Op::ColSum, a.id(), -1);
  const Matrix& v = t.value_of(a.id());
  node.i0 = static_cast<int>(v.rows());
  node.value = v.colwise().sum();
  return out;
}

Var expand_rows(const Var& a, Eigen::Index rows) {
  Tape& t = a.tape();
  if (a.rows() != 1) throw DimensionMismatch("expand_rows: source is not a row");
  NBS_NEW_NODE(t, Op::ExpandRows, a.id(), -1);
  node.value = t.value_of(a.id()).replicate(rows, 1);
  return out;
}

Var add_bias(const Var& a, const Var& bias) {
  if (bias.cols() != 1 || bias.rows() != a.rows()) throw DimensionMismatch("add_bias: bad bias shape");
  if (a.cols() == 1) return a + bias;
  return a + expand_cols(bias, a.cols());
}

Var block(const Var& a, Eigen::Index r0, Eigen::Index c0, Eigen::Index nr, Eigen::Index nc) {
  Tape& t = a.tape();
  if (r0 < 0 || c0 < 0 || r0 + nr > a.rows() || c0 + nc > a.cols()) {
    throw DimensionMismatch("block: out of range");
  }
  NBS_NEW_NODE(t, Op::Block, a.id(), -1);
  node.i0 = static_cast<int>(r0);
  node.i1 = static_cast<int>(c0);
  node.i2 = static_cast<int>(nr);
  node.i3 = static_cast<int>(nc);
  node.value = t.value_of(a.id()).block(r0, c0, nr, nc);
  return out;
}

Var rows(const Var& a, Eigen::Index r0, Eigen::Index nr) { return block(a, r0, 0, nr, a.cols()); }

Var entry(const Var& a, Eigen::Index r, Eigen::Index c) { return block(a, r, c, 1, 1); }

Var embed(const Var& a, Eigen::Index r0, Eigen::Index c0, Eigen::Index total_rows,
          Eigen::Index total_cols) {
  Tape& t = a.tape();
  if (r0 + a.rows() > total_rows || c0 + a.cols() > total_cols) {
    throw DimensionMismatch("embed: out of range");
  }
  NBS_NEW_NODE(t, Op::Embed, a.id(), -1);
  const Matrix& v = t.value_of(a.id());
  node.i0 = static_cast<int>(r0);
  node.i1 = static_cast<int>(c0);
  node.i2 = static_cast<int>(v.rows());
  node.i3 = static_cast<int>(v.cols());
  node.value.setZero(total_rows, total_cols);
  node.value.block(r0, c0, v.rows(), v.cols()) = v;
  return out;
}

Var vstack(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionMismatch("vstack: no parts");
  Tape& t = parts.front().tape();
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index total = 0;
  for (const Var& p : parts) {
    if (&p.tape() != &t) throw Error("vstack: variables live on different tapes");
    if (p.cols() != cols) throw DimensionMismatch("vstack: column mismatch");
    total += p.rows();
  }
  NBS_NEW_NODE(t, Op::VStack, -1, -1);
  node.value.resize(total, cols);
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    node.more.push_back(p.id());
    const Matrix& v = t.value_of(p.id());
    node.value.middleRows(r, v.rows()) = v;
    r += v.rows();
  }
  return out;
}

Var diag(const Var& v) {
  Tape& t = v.tape();
  if (v.cols() != 1) throw DimensionMismatch("diag: source is not a column");
  NBS_NEW_NODE(t, Op::Diag, v.id(), -1);
  node.value = t.value_of(v.id()).col(0).asDiagonal();
  return out;
}

Var diag_of(const Var& a) {
  Tape& t = a.tape();
  if (a.rows() != a.cols()) throw DimensionMismatch("diag_of: matrix is not square");
  NBS_NEW_NODE(t, Op::DiagOf, a.id(), -1);
  node.value = t.value_of(a.id()).diagonal();
  return out;
}

Var strict_lower(const Var& v, Eigen::Index n) {
  Tape& t = v.tape();
  if (v.cols() != 1 || v.rows() != n * (n - 1) / 2) {
    throw DimensionMismatch("strict_lower: expected n(n-1)/2 entries");
  }
  NBS_NEW_NODE(t, Op::StrictLower, v.id(), -1);
  node.i0 = static_cast<int>(n);
  const Matrix& src = t.value_of(v.id());
  node.value.setZero(n, n);
  Eigen::Index k = 0;
  for (Eigen::Index i = 1; i < n; ++i)
    for (Eigen::Index j = 0; j < i; ++j) node.value(i, j) = src(k++, 0);
  return out;
}

Var strict_lower_of(const Var& a) {
  Tape& t = a.tape();
  if (a.rows() != a.cols()) throw DimensionMismatch("strict_lower_of: matrix is not square");
  NBS_NEW_NODE(t, Op::StrictLowerOf, a.id(), -1);
  const Matrix& src = t.value_of(a.id());
  const Eigen::Index n = src.rows();
  node.i0 = static_cast<int>(n);
  node.value.resize(n * (n - 1) / 2, 1);
  Eigen::Index k = 0;
  for (Eigen::Index i = 1; i < n; ++i)
    for (Eigen::Index j = 0; j < i; ++j) node.value(k++, 0) = src(i, j);
  return out;
}

#define NBS_ELEMENTWISE(name, op, expr)                           \
  Var name(const Var& a) {                                        \
    Tape& t = a.tape();                                           \
    NBS_NEW_NODE(t, op, a.id(), -1);                              \
    node.value = t.value_of(a.id()).unaryExpr([](double x) { return expr; }); \
    return out;                                                   \
  }

NBS_ELEMENTWISE(tanh, Op::Tanh, std::tanh(x))
NBS_ELEMENTWISE(sigmoid, Op::Sigmoid, sigmoid_value(x))
NBS_ELEMENTWISE(softplus, Op::Softplus, softplus_value(x))
NBS_ELEMENTWISE(relu, Op::Relu, x > 0.0 ? x : 0.0)
NBS_ELEMENTWISE(sin, Op::Sin, std::sin(x))
NBS_ELEMENTWISE(cos, Op::Cos, std::cos(x))
NBS_ELEMENTWISE(exp, Op::Exp, std::exp(x))
NBS_ELEMENTWISE(log, Op::Log, std::log(x))
NBS_ELEMENTWISE(square, Op::Square, x * x)
NBS_ELEMENTWISE(sqrt, Op::Sqrt, std::sqrt(x))
NBS_ELEMENTWISE(reciprocal, Op::Reciprocal, 1.0 / x)

#undef NBS_ELEMENTWISE

Var srelu(const Var& a, double d) {
  if (!(d > 0.0)) throw Error("srelu: threshold must be positive");
  Tape& t = a.tape();
  NBS_NEW_NODE(t, Op::Srelu, a.id(), -1);
  node.s = d;
  node.value = t.value_of(a.id()).unaryExpr([d](double x) { return srelu_value(x, d); });
  return out;
}

Var srelu_prime(const Var& a, double d) {
  Tape& t = a.tape();
  NBS_NEW_NODE(t, Op::SreluPrime, a.id(), -1);
  node.s = d;
  node.value = t.value_of(a.id()).unaryExpr([d](double x) { return srelu_slope(x, d); });
  return out;
}

Var solve_spd(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  if (a.rows() != a.cols() || a.rows() != b.rows()) throw DimensionMismatch("solve_spd: bad shapes");
  Matrix x = nbs::solve_spd(a.value(), b.value());
  NBS_NEW_NODE(t, Op::SolveSpd, a.id(), b.id());
  node.value = std::move(x);
  return out;
}

Var batch_solve_spd(std::span<const Var> rows_of_a, const Var& rhs) {
  Tape& t = rhs.tape();
  const auto n = static_cast<Eigen::Index>(rows_of_a.size());
  if (rhs.rows() != n) throw DimensionMismatch("batch_solve_spd: rhs rows do not match");
  std::vector<int> ids;
  ids.reserve(rows_of_a.size());
  for (const Var& r : rows_of_a) {
    if (&r.tape() != &t) throw Error("batch_solve_spd: variables live on different tapes");
    if (r.rows() != n || r.cols() != rhs.cols()) throw DimensionMismatch("batch_solve_spd: bad row");
    ids.push_back(r.id());
  }
  Matrix x(n, rhs.cols());
  for (Eigen::Index j = 0; j < rhs.cols(); ++j) {
    const Matrix a = column_system(ids, t, j);
    x.col(j) = nbs::solve_spd(a, Vector(rhs.value().col(j)));
  }
  NBS_NEW_NODE(t, Op::BatchSolveSpd, -1, rhs.id());
  node.more = std::move(ids);
  node.value = std::move(x);
  return out;
}

Var lambda_max(const Var& a) {
  Tape& t = a.tape();
  const double lmax = sym_eig(a.value()).values(0);
  NBS_NEW_NODE(t, Op::LambdaMax, a.id(), -1);
  node.value.resize(1, 1);
  node.value(0, 0) = lmax;
  return out;
}

#undef NBS_NEW_NODE

// ---------------------------------------------------------------------------
// Derivatives of user functions

namespace {

void check_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw NonFinite(std::string(what) + ": non-finite result");
}

Var column_input(Tape& t, const Vector& x) { return t.variable(Matrix(x)); }

}  // namespace

Vector grad(const DifferentiableFn& f, const Vector& x) {
  Tape t;
  const Var xv = column_input(t, x);
  const Var y = f(xv);
  if (y.value().size() != 1) throw DimensionMismatch("grad: function is not scalar-valued");
  check_finite(y.value(), "grad");
  Vector g = t.gradient(y, std::span<const Var>(&xv, 1)).front().col(0);
  check_finite(g, "grad");
  return g;
}

Matrix jacobian(const DifferentiableFn& f, const Vector& x) {
  Tape t;
  const Var xv = column_input(t, x);
  const Var y = f(xv);
  if (y.cols() != 1) throw DimensionMismatch("jacobian: output is not a column");
  check_finite(y.value(), "jacobian");
  Matrix jac(y.rows(), x.size());
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    const std::size_t mark = t.size();
    const Var yi = entry(y, i, 0);
    jac.row(i) = t.gradient(yi, std::span<const Var>(&xv, 1)).front().col(0).transpose();
    t.truncate(mark);
  }
  check_finite(jac, "jacobian");
  return jac;
}

Var hessian_of(const Var& y, const Var& x) {
  if (y.value().size() != 1) throw DimensionMismatch("hessian_of: output is not scalar");
  if (x.cols() != 1) throw DimensionMismatch("hessian_of: input is not a column");
  Tape& t = same_tape(y, x);
  const Var g = t.grad(y, x);
  std::vector<Var> rows_of_h;
  rows_of_h.reserve(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    rows_of_h.push_back(transpose(t.grad(entry(g, i, 0), x)));
  }
  const Var h = vstack(rows_of_h);
  return 0.5 * (h + transpose(h));
}

Var hessian_vector(const Var& y, const Var& x, const Var& v) {
  Tape& t = same_tape(y, x);
  const Var g = t.grad(y, x);
  return t.grad(dot(g, v), x);
}

Matrix hessian(const DifferentiableFn& f, const Vector& x) {
  Tape t;
  const Var xv = column_input(t, x);
  const Var y = f(xv);
  if (y.value().size() != 1) throw DimensionMismatch("hessian: function is not scalar-valued");
  Matrix h = hessian_of(y, xv).value();
  check_finite(h, "hessian");
  return h;
}

Matrix hessian_directional(const DifferentiableFn& f, const Vector& x, InputBlock a, InputBlock b,
                           const Vector& v) {
  if (v.size() != a.size) throw DimensionMismatch("hessian_directional: direction size mismatch");
  if (a.offset < 0 || b.offset < 0 || a.offset + a.size > x.size() || b.offset + b.size > x.size()) {
    throw DimensionMismatch("hessian_directional: block out of range");
  }
  Tape t;
  const Var xv = column_input(t, x);
  const Var y = f(xv);
  if (y.value().size() != 1) throw DimensionMismatch("hessian_directional: function is not scalar");
  // d^2/db^2 of (grad_a f . v) equals the requested third-order contraction.
  const Var g = t.grad(y, xv);
  const Var directional = dot(rows(g, a.offset, a.size), t.constant(Matrix(v)));
  const Var h = hessian_of(directional, xv);
  Matrix out = h.value().block(b.offset, b.offset, b.size, b.size);
  check_finite(out, "hessian_directional");
  return out;
}

}  // namespace nbs::ad
