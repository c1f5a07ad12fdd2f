#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nbs/nets.hpp"
#include "nbs/plants.hpp"

namespace nbs {

/// L(q, qdot) = L_T(q, qdot) + eps_m/2 |qdot|^2 - L_V(q), where L_T is
/// convex in qdot (partially input-convex network with q as context) and
/// L_V is a plain network of q. The quadratic term keeps the learned inertia
/// d^2L/dqdot^2 >= eps_m * I.
struct LagrangianNet {
  Eigen::Index dof = 0;
  PicnnParams kinetic;
  MlpParams potential;
  double eps_m = 1e-3;

  ParamList parameters();
};

LagrangianNet make_lagrangian_net(Eigen::Index dof, const std::vector<int>& hidden_widths,
                                  double eps_m);
/// Depth-scaled Gaussian initialization of both parts.
void init_lagrangian_net(LagrangianNet& net, std::uint64_t seed);

/// Any Lagrangian expressed on the tape: (q, qdot) each (n x B) -> (1 x B).
using LagrangianFn = std::function<ad::Var(const ad::Var& q, const ad::Var& qdot)>;

LagrangianFn lagrangian_fn(ad::Tape& tape, const LagrangianNet& net, Bind mode,
                           std::vector<ad::Var>* leaves = nullptr);

/// Model terms of a single state (q, qdot are n x 1).
struct ModelTermsVar {
  ad::Var M, C, G;
};

/// Everything the Euler-Lagrange inversion needs at one state, recorded so it
/// stays differentiable.
struct LagrangianTerms {
  ad::Var dL_dq;      // n x 1
  ad::Var mass;       // d^2L/dqdot^2
  ad::Var mixed;      // (d^2L/dqdot dq) qdot
  ad::Var mass_rate;  // sum_k dM/dq_k qdot_k, velocity slot held fixed
};

LagrangianTerms lagrangian_terms(const LagrangianFn& L, const ad::Var& q, const ad::Var& qdot);

/// C = Mdot - Mdot^T/2 and G = -dL/dq + Mdot^T qdot / 2.
ModelTermsVar model_terms(const LagrangianTerms& t, const ad::Var& qdot);

/// qdd = M^{-1}(u + dL/dq - (d^2L/dqdot dq) qdot) for every column.
ad::Var predict_accel(const LagrangianFn& L, const ad::Var& q, const ad::Var& qdot,
                      const ad::Var& u);

// Plain-value conveniences for a trained (or hand-built) network.
Matrix mass_hat(const LagrangianNet& net, const Vector& q, const Vector& qdot);
Matrix mdot_hat(const LagrangianNet& net, const Vector& q, const Vector& qdot);
Matrix coriolis_hat(const LagrangianNet& net, const Vector& q, const Vector& qdot);
Vector gravity_hat(const LagrangianNet& net, const Vector& q, const Vector& qdot);
double lagrangian(const LagrangianNet& net, const Vector& q, const Vector& qdot);
Matrix predict_accel(const LagrangianNet& net, const Matrix& q, const Matrix& qdot, const Matrix& u);
/// |M qdd_pred - (u - C qdot - G)|: how far the (M, C, G) split is from the
/// exact inversion at this state.
double decomposition_residual(const LagrangianNet& net, const Vector& q, const Vector& qdot,
                              const Vector& u);

// ---------------------------------------------------------------------------
// Data and training

struct Dataset {
  Vector t;
  Matrix q, qdot, qddot, u;  // n x N

  Eigen::Index size() const { return q.cols(); }
  Eigen::Index dof() const { return q.rows(); }
  Dataset subset(const std::vector<Eigen::Index>& idx) const;
};

struct DataGenConfig {
  Eigen::Index samples = 10000;
  double dt = 1e-3;
  Vector initial;  // stacked [q; qdot]; zero when empty
};

/// Free motion (u = 0) of the arm integrated with RK4; accelerations are the
/// exact plant values at each logged state.
Dataset generate_free_motion(const PlanarArm& arm, const DataGenConfig& cfg);

struct LnnTrainConfig {
  int epochs = 200;
  Eigen::Index batch = 10;
  double lr = 1e-3;
  double lr_decay = 0.995;
  double holdout_fraction = 0.1;
  Matrix Q;  // identity when empty
  std::uint64_t seed = 0;
  // Called after each epoch with (epoch, mean train loss, held-out MSE).
  std::function<void(int, double, double)> progress;
};

struct LnnTrainResult {
  std::vector<double> train_loss;   // per epoch, mean batch loss
  std::vector<double> holdout_mse;  // entry 0 is before training, then per epoch
};

/// Mean over batch columns of err^T Q err with err = predicted - observed.
ad::Var acceleration_loss(const LagrangianFn& L, const ad::Var& q,
                          const ad::Var& qdot, const ad::Var& qddot, const ad::Var& u,
                          const ad::Var& Q);

double acceleration_mse(const LagrangianNet& net, const Dataset& data);

LnnTrainResult train_lnn(LagrangianNet& net, const Dataset& data, const LnnTrainConfig& cfg);

/// Relative Frobenius error of the learned inertia against the arm's.
double inertia_relative_error(const LagrangianNet& net, const PlanarArm& arm, const Vector& q,
                              const Vector& qdot);

}  // namespace nbs
