#pragma once

#include "nbs/nets.hpp"

namespace nbs {

/// Strongly convex potential Phi(z) = psi(z) + z^T S z with psi a
/// nonnegative input-convex network vanishing at the origin.
struct PotentialPhi {
  FicnnParams psi;
  Matrix S;

  Eigen::Index dim() const { return S.rows(); }
  ParamList parameters() { return psi.parameters(); }
};

PotentialPhi make_potential(Eigen::Index n, const std::vector<int>& hidden_widths, const Matrix& S);

struct BoundPhi {
  BoundFicnn psi;
  ad::Var S;
};

BoundPhi bind(ad::Tape& tape, const PotentialPhi& phi, Bind mode,
              std::vector<ad::Var>* leaves = nullptr);
// z is (n x B); returns (1 x B).
ad::Var phi_value(const BoundPhi& phi, const ad::Var& z);

double phi_value(const PotentialPhi& phi, const Vector& z);
Vector phi_grad(const PotentialPhi& phi, const Vector& z);
Matrix phi_hessian_at(const PotentialPhi& phi, const Vector& z);

/// State-dependent damping D(z) = T^T T + ridge*I, where T is lower
/// triangular with diagonal relu(diag_net(z)) + m and strict lower part
/// offdiag_net(z).
struct DampingD {
  MlpParams diag_net;
  MlpParams offdiag_net;  // unused (no layers) when n == 1
  double m = 1e-3;
  double ridge = 0.0;
  Eigen::Index n = 0;

  ParamList parameters();
};

DampingD make_damping(Eigen::Index n, const std::vector<int>& hidden_widths, double m, double ridge);

struct BoundDamping {
  const DampingD* shape = nullptr;
  BoundMlp diag_net;
  BoundMlp offdiag_net;
};

BoundDamping bind(ad::Tape& tape, const DampingD& d, Bind mode,
                  std::vector<ad::Var>* leaves = nullptr);
// z is (n x 1); returns (n x n).
ad::Var damping_matrix(const BoundDamping& d, const ad::Var& z);

Matrix damping_matrix(const DampingD& d, const Vector& z);

}  // namespace nbs
