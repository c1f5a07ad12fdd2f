#pragma once

#include <Eigen/Dense>

#include <string>
#include <utility>

#include "nbs/errors.hpp"

namespace nbs {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

bool all_finite(const Matrix& m);

// Induced infinity norm of A - A^T.
double asymmetry(const Matrix& a);

/// Lower-triangular Cholesky factor of a symmetric matrix; only the lower
/// triangle of `a` is read. Throws NotPositiveDefinite when a pivot <= 1e-14.
Matrix cholesky(const Matrix& a);

struct SymEig {
  Vector values;   // descending
  Matrix vectors;  // column i pairs with values(i)
};

/// Cyclic Jacobi eigen-decomposition for small symmetric matrices.
/// Throws NonSymmetric when the induced inf-norm of A - A^T exceeds 1e-9.
SymEig sym_eig(const Matrix& a);

double lambda_min(const Matrix& a);
double lambda_max(const Matrix& a);

Vector solve_spd(const Matrix& a, const Vector& b);
// Multiple right-hand sides, one per column.
Matrix solve_spd(const Matrix& a, const Matrix& b);

template <class State>
struct OdeStateT {
  double t = 0.0;
  State y;
};

using OdeState = OdeStateT<Vector>;

namespace detail {
template <class V>
bool stage_finite(const V& v) {
  if constexpr (requires { v.allFinite(); }) {
    return v.allFinite();
  } else {
    return all_finite(v.value());
  }
}
}  // namespace detail

/// Classical four-stage Runge-Kutta step for y' = f(t, y). `State` is either
/// a plain vector or a tape variable, so the same integrator serves
/// simulation and backpropagation through time.
template <class State, class Field>
OdeStateT<State> rk4_step(Field&& f, const OdeStateT<State>& s, double dt) {
  if (!(dt > 0.0)) throw Error("rk4_step: dt must be positive");
  auto checked = [&](double t, const State& y) {
    State k = f(t, y);
    if (!detail::stage_finite(k)) {
      throw NonFiniteDerivative("rk4_step: non-finite derivative at t = " + std::to_string(t));
    }
    return k;
  };
  const double h2 = 0.5 * dt;
  State k1 = checked(s.t, s.y);
  State k2 = checked(s.t + h2, s.y + h2 * k1);
  State k3 = checked(s.t + h2, s.y + h2 * k2);
  State k4 = checked(s.t + dt, s.y + dt * k3);
  OdeStateT<State> out;
  out.t = s.t + dt;
  out.y = s.y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  return out;
}

}  // namespace nbs
