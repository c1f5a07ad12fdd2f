#pragma once

#include <functional>
#include <memory>

#include "nbs/model.hpp"
#include "nbs/structured.hpp"

namespace nbs {

struct ReferenceSample {
  Vector q, qdot, qddot;
};

struct ReferenceTrajectory {
  Eigen::Index dof = 0;
  std::function<ReferenceSample(double)> sample;

  ReferenceSample at(double t) const { return sample(t); }

  /// Joint i follows sin(omega t) for even i and cos(omega t) for odd i.
  static ReferenceTrajectory sinusoid(Eigen::Index dof, double omega = 0.1);
  /// Holds every joint at `q`.
  static ReferenceTrajectory constant(const Vector& q);
};

struct NbsController {
  PotentialPhi phi;
  DampingD damping;
  std::shared_ptr<const DynamicsModel> model;

  Eigen::Index dof() const { return phi.dim(); }
  /// Trainable parameters: psi first, then the damping nets.
  ParamList parameters();
  void validate() const;
};

struct ControllerShape {
  std::vector<int> psi_widths{32, 32, 32};
  std::vector<int> damping_widths{32, 32};
  double s_scale = 1.0;  // S = s_scale * I
  double srelu_width = 0.3;
  double m = 2.0;
  double ridge = 0.0;
};

/// Freshly initialized controller for `model`.
NbsController make_controller(std::shared_ptr<const DynamicsModel> model, const ControllerShape& shape,
                              std::uint64_t seed);

// ---------------------------------------------------------------------------
// Tape form, used by both simulation and training.

struct BoundController {
  BoundPhi phi;
  BoundDamping damping;
  ModelFn model;
};

BoundController bind(ad::Tape& tape, const NbsController& c, Bind mode,
                     std::vector<ad::Var>* leaves = nullptr);

struct ControlTrace {
  ad::Var u;
  ad::Var z1, z2;
  ad::Var phi_grad;  // dPhi/dz1 at z1
  ad::Var phi;       // virtual velocity qd_dot - dPhi/dz1
  ad::Var phi_rate;  // qd_ddot - HessPhi(z1) (qdot - qd_dot)
  ModelTermsVar model;
};

/// u = G + M phi_rate + C phi - dPhi/dz1 - D(z2) z2, with every piece kept.
ControlTrace nbs_control(const BoundController& c, const ad::Var& q, const ad::Var& qdot,
                         const ReferenceSample& ref);

// ---------------------------------------------------------------------------
// Plain-value helpers.

struct TrackingErrors {
  Vector z1, z2;
};

TrackingErrors tracking_errors(const PotentialPhi& phi, const Vector& q, const Vector& qdot,
                               const ReferenceSample& ref);
Vector virtual_signal(const PotentialPhi& phi, const Vector& z1, const Vector& qd_dot);
Vector virtual_signal_rate(const PotentialPhi& phi, const Vector& z1, const Vector& z1_dot,
                           const Vector& qd_ddot);
Vector nbs_control(const NbsController& c, const Vector& q, const Vector& qdot, const ReferenceSample& ref);

/// V = Phi(z1) + z2^T M z2 / 2 with the caller's inertia.
double lyapunov(const PotentialPhi& phi, const Matrix& M, const Vector& z1, const Vector& z2);

/// Simulation-side view of a controller. `control` may be called at any
/// intermediate state; `commit` is called once per completed step.
class ControlPolicy {
 public:
  virtual ~ControlPolicy() = default;
  virtual Vector control(double t, const Vector& q, const Vector& qdot) = 0;
  virtual void commit(double /*t*/, const Vector& /*q*/, const Vector& /*qdot*/, double /*dt*/) {}
  virtual void reset() {}
};

/// NBS evaluated on a private tape with parameters recorded once.
class NbsPolicy : public ControlPolicy {
 public:
  NbsPolicy(const NbsController& c, ReferenceTrajectory ref);
  Vector control(double t, const Vector& q, const Vector& qdot) override;
  const NbsController& controller() const { return c_; }

 private:
  const NbsController& c_;
  ReferenceTrajectory ref_;
  std::unique_ptr<ad::Tape> tape_;
  BoundController bound_;
  std::size_t mark_ = 0;
};

struct PidGains {
  double kp = 50.0;
  double ki = 10.0;
  double kd = 20.0;
  double clamp = 100.0;  // bound on each integral component
};

/// u = Kp e + Ki int(e) + Kd de/dt with e = qd - q. The integral is
/// advanced by the trapezoid rule in `commit` and held between steps.
class PidPolicy : public ControlPolicy {
 public:
  PidPolicy(PidGains gains, ReferenceTrajectory ref);
  Vector control(double t, const Vector& q, const Vector& qdot) override;
  void commit(double t, const Vector& q, const Vector& qdot, double dt) override;
  void reset() override;
  const Vector& integral() const { return integral_; }

 private:
  PidGains g_;
  ReferenceTrajectory ref_;
  Vector integral_;
  Vector last_error_;
};

}  // namespace nbs
