#include "nbs/plants.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nbs {

using ad::lift;

void PlanarArm::validate() const {
  if (masses.empty()) throw ConfigError("arm: at least one link required");
  if (masses.size() != lengths.size()) throw ConfigError("arm: masses and lengths differ in count");
  for (double m : masses)
    if (!(m > 0.0) || !std::isfinite(m)) throw ConfigError("arm: masses must be positive");
  for (double l : lengths)
    if (!(l > 0.0) || !std::isfinite(l)) throw ConfigError("arm: lengths must be positive");
  if (!std::isfinite(gravity)) throw ConfigError("arm: gravity must be finite");
}

PlanarArm unit_arm(int links, double gravity) {
  PlanarArm arm;
  arm.masses.assign(static_cast<std::size_t>(links), 1.0);
  arm.lengths.assign(static_cast<std::size_t>(links), 1.0);
  arm.gravity = gravity;
  return arm;
}

ArmCoefficients arm_coefficients(const PlanarArm& arm) {
  arm.validate();
  const Eigen::Index n = arm.dof();
  ArmCoefficients c;
  c.A = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) c.A(i, j) = 1.0;
  std::vector<double> outward(static_cast<std::size_t>(n) + 1, 0.0);
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    const auto k = static_cast<std::size_t>(i);
    outward[k] = outward[k + 1] + arm.masses[k];
  }
  c.coupling.resize(n, n);
  c.weight.resize(n, 1);
  for (Eigen::Index a = 0; a < n; ++a) {
    const auto ka = static_cast<std::size_t>(a);
    for (Eigen::Index b = 0; b < n; ++b) {
      const auto kb = static_cast<std::size_t>(b);
      c.coupling(a, b) = outward[std::max(ka, kb)] * arm.lengths[ka] * arm.lengths[kb];
    }
    c.weight(a, 0) = arm.gravity * outward[ka] * arm.lengths[ka];
  }
  return c;
}

namespace {

void require_column(const Matrix& v, Eigen::Index n, const char* what) {
  if (v.rows() != n || v.cols() != 1) throw DimensionMismatch(std::string(what) + ": dimension mismatch");
}
void require_column(const ad::Var& v, Eigen::Index n, const char* what) {
  require_column(v.value(), n, what);
}

// cos(theta_a - theta_b) and sin(theta_a - theta_b) as outer products.
template <class T>
std::pair<T, T> angle_differences(const T& theta) {
  const T c = ad::cos(theta);
  const T s = ad::sin(theta);
  const T ct = ad::transpose(c);
  const T st = ad::transpose(s);
  T cosd = ad::matmul(c, ct) + ad::matmul(s, st);
  T sind = ad::matmul(s, ct) - ad::matmul(c, st);
  return {cosd, sind};
}

}  // namespace

template <class T>
T mass_matrix(const PlanarArm& arm, const T& q) {
  require_column(q, arm.dof(), "mass_matrix");
  const ArmCoefficients k = arm_coefficients(arm);
  const T A = lift(q, k.A);
  const T theta = ad::matmul(A, q);
  const auto [cosd, sind] = angle_differences(theta);
  const T inner = ad::mul(lift(q, k.coupling), cosd);
  return ad::matmul(ad::transpose(A), ad::matmul(inner, A));
}

template <class T>
T coriolis(const PlanarArm& arm, const T& q, const T& qdot) {
  require_column(q, arm.dof(), "coriolis");
  require_column(qdot, arm.dof(), "coriolis");
  const ArmCoefficients k = arm_coefficients(arm);
  const T A = lift(q, k.A);
  const T theta = ad::matmul(A, q);
  const T omega = ad::matmul(A, qdot);
  const auto [cosd, sind] = angle_differences(theta);
  const T inner = ad::matmul(ad::mul(lift(q, k.coupling), sind), ad::diag(omega));
  return ad::matmul(ad::transpose(A), ad::matmul(inner, A));
}

template <class T>
T gravity(const PlanarArm& arm, const T& q) {
  require_column(q, arm.dof(), "gravity");
  const ArmCoefficients k = arm_coefficients(arm);
  const T A = lift(q, k.A);
  const T theta = ad::matmul(A, q);
  return ad::matmul(ad::transpose(A), ad::mul(lift(q, k.weight), ad::cos(theta)));
}

template <class T>
T potential(const PlanarArm& arm, const T& q) {
  require_column(q, arm.dof(), "potential");
  const ArmCoefficients k = arm_coefficients(arm);
  const T theta = ad::matmul(lift(q, k.A), q);
  return ad::matmul(ad::transpose(lift(q, k.weight)), ad::sin(theta));
}

template <class T>
T forward_dynamics(const PlanarArm& arm, const T& q, const T& qdot, const T& force) {
  require_column(force, arm.dof(), "forward_dynamics");
  const T M = mass_matrix(arm, q);
  const T rhs = force - ad::matmul(coriolis(arm, q, qdot), qdot) - gravity(arm, q);
  return ad::solve_spd(M, rhs);
}

template Matrix mass_matrix<Matrix>(const PlanarArm&, const Matrix&);
template ad::Var mass_matrix<ad::Var>(const PlanarArm&, const ad::Var&);
template Matrix coriolis<Matrix>(const PlanarArm&, const Matrix&, const Matrix&);
template ad::Var coriolis<ad::Var>(const PlanarArm&, const ad::Var&, const ad::Var&);
template Matrix gravity<Matrix>(const PlanarArm&, const Matrix&);
template ad::Var gravity<ad::Var>(const PlanarArm&, const ad::Var&);
template Matrix potential<Matrix>(const PlanarArm&, const Matrix&);
template ad::Var potential<ad::Var>(const PlanarArm&, const ad::Var&);
template Matrix forward_dynamics<Matrix>(const PlanarArm&, const Matrix&, const Matrix&,
                                         const Matrix&);
template ad::Var forward_dynamics<ad::Var>(const PlanarArm&, const ad::Var&, const ad::Var&,
                                           const ad::Var&);

Vector forward_dynamics(const PlanarArm& arm, const Vector& q, const Vector& qdot, const Vector& u,
                        const Vector& disturbance) {
  const Matrix force = disturbance.size() > 0 ? Matrix(u + disturbance) : Matrix(u);
  return forward_dynamics<Matrix>(arm, Matrix(q), Matrix(qdot), force).col(0);
}

double kinetic_energy(const PlanarArm& arm, const Vector& q, const Vector& qdot) {
  return 0.5 * qdot.dot(mass_matrix<Matrix>(arm, Matrix(q)) * qdot);
}

double total_energy(const PlanarArm& arm, const Vector& q, const Vector& qdot) {
  return kinetic_energy(arm, q, qdot) + potential<Matrix>(arm, Matrix(q))(0, 0);
}

InertiaBounds inertia_bounds(const PlanarArm& arm, int samples_per_joint) {
  const Eigen::Index n = arm.dof();
  InertiaBounds b{std::numeric_limits<double>::infinity(), 0.0};
  const Eigen::Index free = std::max<Eigen::Index>(n - 1, 0);
  long total = 1;
  for (Eigen::Index i = 0; i < free; ++i) total *= samples_per_joint;
  const double pi = std::acos(-1.0);
  for (long idx = 0; idx < total; ++idx) {
    Vector q = Vector::Zero(n);
    long rest = idx;
    for (Eigen::Index j = 1; j < n; ++j) {
      q(j) = -pi + 2.0 * pi * static_cast<double>(rest % samples_per_joint) / samples_per_joint;
      rest /= samples_per_joint;
    }
    const SymEig e = sym_eig(mass_matrix<Matrix>(arm, Matrix(q)));
    b.lower = std::min(b.lower, e.values(n - 1));
    b.upper = std::max(b.upper, e.values(0));
  }
  return b;
}

}  // namespace nbs
