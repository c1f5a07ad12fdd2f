#include "nbs/structured.hpp"

namespace nbs {

using ad::Var;

PotentialPhi make_potential(Eigen::Index n, const std::vector<int>& hidden_widths, const Matrix& S) {
  if (S.rows() != n || S.cols() != n) throw DimensionMismatch("make_potential: S must be n x n");
  if (asymmetry(S) > 1e-12) throw NonSymmetric("make_potential: S is not symmetric");
  cholesky(S);  // positive definiteness
  return PotentialPhi{make_potential_ficnn(n, hidden_widths), S};
}

BoundPhi bind(ad::Tape& tape, const PotentialPhi& phi, Bind mode, std::vector<Var>* leaves) {
  return BoundPhi{bind(tape, phi.psi, mode, leaves), tape.constant(phi.S)};
}

Var phi_value(const BoundPhi& phi, const Var& z) {
  if (z.rows() != phi.S.rows()) throw DimensionMismatch("phi_value: dimension mismatch");
  const Var quad = ad::col_sum(ad::mul(z, ad::matmul(phi.S, z)));
  return forward(phi.psi, z) + quad;
}

namespace {

ad::DifferentiableFn phi_fn(const PotentialPhi& phi) {
  return [&phi](const Var& z) {
    const BoundPhi b = bind(z.tape(), phi, Bind::Constant);
    return phi_value(b, z);
  };
}

void check_dim(const PotentialPhi& phi, const Vector& z) {
  if (z.size() != phi.dim()) throw DimensionMismatch("potential: dimension mismatch");
}

}  // namespace

double phi_value(const PotentialPhi& phi, const Vector& z) {
  check_dim(phi, z);
  ad::Tape tape;
  return phi_fn(phi)(tape.constant(Matrix(z))).scalar();
}

Vector phi_grad(const PotentialPhi& phi, const Vector& z) {
  check_dim(phi, z);
  return ad::grad(phi_fn(phi), z);
}

Matrix phi_hessian_at(const PotentialPhi& phi, const Vector& z) {
  check_dim(phi, z);
  return ad::hessian(phi_fn(phi), z);
}

// ---------------------------------------------------------------------------

ParamList DampingD::parameters() {
  ParamList out;
  for (ParamRef& p : diag_net.parameters()) {
    p.name = "diag." + p.name;
    out.push_back(p);
  }
  for (ParamRef& p : offdiag_net.parameters()) {
    p.name = "offdiag." + p.name;
    out.push_back(p);
  }
  return out;
}

DampingD make_damping(Eigen::Index n, const std::vector<int>& hidden_widths, double m, double ridge) {
  if (!(m > 0.0)) throw ConfigError("damping: m must be positive");
  if (ridge < 0.0) throw ConfigError("damping: ridge must be nonnegative");
  DampingD d;
  d.n = n;
  d.m = m;
  d.ridge = ridge;
  std::vector<int> widths = hidden_widths;
  widths.push_back(static_cast<int>(n));
  d.diag_net = make_mlp(n, widths, Activation::Tanh, Activation::Tanh);
  if (n > 1) {
    widths.back() = static_cast<int>(n * (n - 1) / 2);
    d.offdiag_net = make_mlp(n, widths, Activation::Tanh, Activation::Tanh);
  }
  return d;
}

BoundDamping bind(ad::Tape& tape, const DampingD& d, Bind mode, std::vector<Var>* leaves) {
  BoundDamping out;
  out.shape = &d;
  out.diag_net = bind(tape, d.diag_net, mode, leaves);
  out.offdiag_net = bind(tape, d.offdiag_net, mode, leaves);
  return out;
}

Var damping_matrix(const BoundDamping& d, const Var& z) {
  const Eigen::Index n = d.shape->n;
  if (z.rows() != n || z.cols() != 1) throw DimensionMismatch("damping_matrix: dimension mismatch");
  Var t = ad::diag(ad::relu(forward(d.diag_net, z)) + d.shape->m);
  if (n > 1) t = t + ad::strict_lower(forward(d.offdiag_net, z), n);
  Var out = ad::matmul(ad::transpose(t), t);
  if (d.shape->ridge > 0.0) {
    out = out + z.tape().constant(Matrix(d.shape->ridge * Matrix::Identity(n, n)));
  }
  return out;
}

Matrix damping_matrix(const DampingD& d, const Vector& z) {
  ad::Tape tape;
  const BoundDamping b = bind(tape, d, Bind::Constant);
  return damping_matrix(b, tape.constant(Matrix(z))).value();
}

}  // namespace nbs
