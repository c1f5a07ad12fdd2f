#pragma once

#include <functional>
#include <iosfwd>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "nbs/controller.hpp"
#include "nbs/optim.hpp"

namespace nbs {

/// Ground truth a rollout integrates: either an arm or a learned Lagrangian.
class Plant {
 public:
  virtual ~Plant() = default;
  virtual Eigen::Index dof() const = 0;
  virtual Vector accel(const Vector& q, const Vector& qdot, const Vector& force) const = 0;
  virtual Matrix inertia(const Vector& q, const Vector& qdot) const = 0;
  /// Tape form of `accel` for training through the dynamics.
  virtual std::function<ad::Var(const ad::Var&, const ad::Var&, const ad::Var&)> bind(ad::Tape& tape) const = 0;
};

class ArmPlant : public Plant {
 public:
  explicit ArmPlant(PlanarArm arm);
  Eigen::Index dof() const override { return arm_.dof(); }
  Vector accel(const Vector& q, const Vector& qdot, const Vector& force) const override;
  Matrix inertia(const Vector& q, const Vector& qdot) const override;
  std::function<ad::Var(const ad::Var&, const ad::Var&, const ad::Var&)> bind(ad::Tape& tape) const override;
  const PlanarArm& arm() const { return arm_; }

 private:
  PlanarArm arm_;
};

class LearnedPlant : public Plant {
 public:
  explicit LearnedPlant(std::shared_ptr<const LagrangianNet> net);
  Eigen::Index dof() const override { return net_->dof; }
  Vector accel(const Vector& q, const Vector& qdot, const Vector& force) const override;
  Matrix inertia(const Vector& q, const Vector& qdot) const override;
  std::function<ad::Var(const ad::Var&, const ad::Var&, const ad::Var&)> bind(ad::Tape& tape) const override;

 private:
  std::shared_ptr<const LagrangianNet> net_;
};

struct SimConfig {
  double dt = 0.01;
  double horizon = 100.0;
  Disturbance disturbance;
  Vector q0, qdot0;  // zero when empty
  bool zero_order_hold = false;

  void validate() const;
};

struct RolloutLog {
  Eigen::Index dof = 0;
  std::vector<double> t;
  std::vector<Vector> q, qdot, qd, z1, z2, u;
  std::vector<double> z1sq;
  std::vector<double> V;  // NaN when the policy has no potential

  std::size_t size() const { return t.size(); }
};

/// RK4 closed loop. `phi`, when given, defines z2 and V in the log.
RolloutLog rollout(const Plant& plant, ControlPolicy& policy, const ReferenceTrajectory& ref,
                   const SimConfig& cfg, const PotentialPhi* phi = nullptr);
/// Convenience for an NBS controller: V uses the plant's inertia.
RolloutLog rollout(const Plant& plant, const NbsController& c, const ReferenceTrajectory& ref,
                   const SimConfig& cfg);

struct Metrics {
  double steady_state_error = 0.0;
  double convergence_time = std::numeric_limits<double>::infinity();
  bool converged = false;
};

struct MetricsConfig {
  double window = 30.0;
  double threshold = 0.01;
  double min_horizon = 100.0;
};

/// Steady error is max |z1|^2 over the final window. Convergence is the
/// instant after which |z1|^2 stays below the threshold, found by linear
/// interpolation across the last crossing.
Metrics metrics(const RolloutLog& log, const MetricsConfig& cfg = {});

/// Largest per-step increase V(t_{k+1}) - V(t_k) in a log.
double max_lyapunov_increase(const RolloutLog& log);

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  double horizon = 1.0;
  double dt = 0.01;
  int epochs = 200;
  double lr = 1e-3;
  double lr_decay = 0.995;
  double alpha = 0.0;  // regularizer threshold on HessPhi(0)
  Vector q0, qdot0;
  bool zero_order_hold = false;
  AdamConfig adam;
  std::function<void(int, double)> progress;

  void validate() const;
};

struct TrainResult {
  std::vector<double> loss;        // per epoch, before that epoch's update
  std::vector<double> stage_cost;  // sum of z1^T z1 dt
  std::vector<double> regularizer;
};

struct TrainingLoss {
  ad::Var total, stage_cost, regularizer;
};

/// Records the discretized training objective for `c` bound on `tape`.
TrainingLoss training_loss(const BoundController& c, const Plant& plant, const ReferenceTrajectory& ref,
                           const TrainConfig& cfg, ad::Tape& tape);

TrainResult train_controller(NbsController& c, const Plant& plant, const ReferenceTrajectory& ref,
                             const TrainConfig& cfg);

/// Smallest eigenvalue of HessPhi at the origin.
double hessian_min_at_origin(const PotentialPhi& phi);

// ---------------------------------------------------------------------------
// Disturbance sweep

struct SweepConfig {
  std::vector<double> alphas;
  Vector tau;  // constant disturbance
  ControllerShape shape;
  TrainConfig train;
  SimConfig sim;
  MetricsConfig metrics;
  std::uint64_t seed = 0;
  int jobs = 1;
  std::function<void(std::size_t, double)> progress;
};

struct SweepRow {
  double alpha = 0.0;
  double steady = 0.0;
  double bound = 0.0;
  double convergence = 0.0;
  double hessian_min = 0.0;
};

/// `count` evenly spaced values on (lo, hi], hi included.
std::vector<double> alpha_grid(double lo, double hi, int count);
/// d / (2 alpha^2); infinite at alpha = 0.
double theorem_bound(double d, double alpha);
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

std::vector<SweepRow> alpha_sweep(const PlanarArm& arm, const ReferenceTrajectory& ref, const SweepConfig& cfg);

// ---------------------------------------------------------------------------
// CSV

void write_rollout_csv(std::ostream& os, const RolloutLog& log);
void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows);
void write_dataset_csv(std::ostream& os, const Dataset& data);
Dataset read_dataset_csv(std::istream& is);

}  // namespace nbs
