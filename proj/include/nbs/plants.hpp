#pragma once

#include <vector>

#include "nbs/autodiff.hpp"

namespace nbs {

/// Planar serial arm with point masses at the link ends and absolute link
/// angles theta = A q (A lower-triangular ones). Angles are measured from the
/// horizontal, so the potential is g * sum_i m_i * height_i.
struct PlanarArm {
  std::vector<double> masses;
  std::vector<double> lengths;
  double gravity = 9.8;

  Eigen::Index dof() const { return static_cast<Eigen::Index>(masses.size()); }
  void validate() const;
};

PlanarArm unit_arm(int links, double gravity = 9.8);

/// Constant coefficients of the closed-form dynamics.
struct ArmCoefficients {
  Matrix A;         // theta = A q
  Matrix coupling;  // c_ab = mu_ab l_a l_b, mu_ab = sum of masses from max(a, b) outward
  Matrix weight;    // column g * mu_aa * l_a
};

ArmCoefficients arm_coefficients(const PlanarArm& arm);

// The templates below work for Matrix and ad::Var columns (n x 1).

template <class T>
T mass_matrix(const PlanarArm& arm, const T& q);
/// Christoffel-symbol Coriolis matrix; M' - 2C is skew-symmetric.
template <class T>
T coriolis(const PlanarArm& arm, const T& q, const T& qdot);
/// G = dV/dq.
template <class T>
T gravity(const PlanarArm& arm, const T& q);
/// Potential energy, 1 x 1.
template <class T>
T potential(const PlanarArm& arm, const T& q);
/// q'' = M^{-1}(u + tau - C q' - G).
template <class T>
T forward_dynamics(const PlanarArm& arm, const T& q, const T& qdot, const T& force);

Vector forward_dynamics(const PlanarArm& arm, const Vector& q, const Vector& qdot, const Vector& u,
                        const Vector& disturbance);
double kinetic_energy(const PlanarArm& arm, const Vector& q, const Vector& qdot);
double total_energy(const PlanarArm& arm, const Vector& q, const Vector& qdot);

/// Constant external torque; its bound d is ||tau||^2.
struct Disturbance {
  Vector tau;

  bool active() const { return tau.size() > 0 && tau.squaredNorm() > 0.0; }
  double bound() const { return tau.size() > 0 ? tau.squaredNorm() : 0.0; }
  Vector at(Eigen::Index n) const { return tau.size() > 0 ? tau : Vector(Vector::Zero(n)); }
};

/// Smallest and largest inertia eigenvalues over a grid of configurations
/// (the first joint does not affect M).
struct InertiaBounds {
  double lower = 0.0;
  double upper = 0.0;
};

InertiaBounds inertia_bounds(const PlanarArm& arm, int samples_per_joint);

}  // namespace nbs
