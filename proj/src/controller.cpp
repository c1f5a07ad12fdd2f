#include "nbs/controller.hpp"

#include <algorithm>
#include <cmath>

namespace nbs {

using ad::Var;

// ---------------------------------------------------------------------------
// Models

ExactModel::ExactModel(PlanarArm arm) : arm_(std::move(arm)) { arm_.validate(); }

ModelFn ExactModel::bind(ad::Tape&) const {
  const PlanarArm arm = arm_;
  return [arm](const Var& q, const Var& qdot) {
    return ModelTermsVar{mass_matrix<Var>(arm, q), coriolis<Var>(arm, q, qdot), gravity<Var>(arm, q)};
  };
}

LearnedModel::LearnedModel(std::shared_ptr<const LagrangianNet> net) : net_(std::move(net)) {
  if (!net_) throw ConfigError("learned model: missing network");
}

ModelFn LearnedModel::bind(ad::Tape& tape) const {
  const LagrangianFn L = lagrangian_fn(tape, *net_, Bind::Constant);
  return [L](const Var& q, const Var& qdot) { return model_terms(lagrangian_terms(L, q, qdot), qdot); };
}

// ---------------------------------------------------------------------------
// Reference

ReferenceTrajectory ReferenceTrajectory::sinusoid(Eigen::Index dof, double omega) {
  ReferenceTrajectory r;
  r.dof = dof;
  r.sample = [dof, omega](double t) {
    ReferenceSample s{Vector(dof), Vector(dof), Vector(dof)};
    const double sn = std::sin(omega * t), cs = std::cos(omega * t);
    for (Eigen::Index i = 0; i < dof; ++i) {
      if (i % 2 == 0) {
        s.q(i) = sn;
        s.qdot(i) = omega * cs;
        s.qddot(i) = -omega * omega * sn;
      } else {
        s.q(i) = cs;
        s.qdot(i) = -omega * sn;
        s.qddot(i) = -omega * omega * cs;
      }
    }
    return s;
  };
  return r;
}

ReferenceTrajectory ReferenceTrajectory::constant(const Vector& q) {
  ReferenceTrajectory r;
  r.dof = q.size();
  r.sample = [q](double) {
    return ReferenceSample{q, Vector::Zero(q.size()), Vector::Zero(q.size())};
  };
  return r;
}

// ---------------------------------------------------------------------------
// Controller

ParamList NbsController::parameters() {
  ParamList out;
  for (ParamRef& p : phi.parameters()) {
    p.name = "phi." + p.name;
    out.push_back(p);
  }
  for (ParamRef& p : damping.parameters()) {
    p.name = "damping." + p.name;
    out.push_back(p);
  }
  return out;
}

void NbsController::validate() const {
  if (!model) throw ConfigError("controller: missing dynamics model");
  if (model->dof() != phi.dim() || damping.n != phi.dim()) {
    throw DimensionMismatch("controller: potential, damping and model dimensions differ");
  }
}

NbsController make_controller(std::shared_ptr<const DynamicsModel> model, const ControllerShape& shape,
                              std::uint64_t seed) {
  if (!model) throw ConfigError("controller: missing dynamics model");
  if (!(shape.s_scale > 0.0)) throw ConfigError("controller: s_scale must be positive");
  if (!(shape.srelu_width > 0.0)) throw ConfigError("controller: srelu_width must be positive");
  const Eigen::Index n = model->dof();
  NbsController c;
  c.model = std::move(model);
  c.phi = make_potential(n, shape.psi_widths, shape.s_scale * Matrix::Identity(n, n));
  c.phi.psi.srelu_width = shape.srelu_width;
  c.damping = make_damping(n, shape.damping_widths, shape.m, shape.ridge);
  init_params(c.phi.parameters(), seed);
  init_params(c.damping.parameters(), seed + 0x632be59bd9b4e019ULL);
  c.validate();
  return c;
}

BoundController bind(ad::Tape& tape, const NbsController& c, Bind mode, std::vector<Var>* leaves) {
  c.validate();
  BoundController out;
  out.phi = bind(tape, c.phi, mode, leaves);
  out.damping = bind(tape, c.damping, mode, leaves);
  out.model = c.model->bind(tape);
  return out;
}

ControlTrace nbs_control(const BoundController& c, const Var& q, const Var& qdot, const ReferenceSample& ref) {
  const Eigen::Index n = q.rows();
  if (q.cols() != 1 || qdot.rows() != n || qdot.cols() != 1 || ref.q.size() != n) {
    throw DimensionMismatch("nbs_control: state or reference dimension");
  }
  ad::Tape& t = q.tape();
  ControlTrace tr;
  tr.z1 = q - t.constant(Matrix(ref.q));
  const Var z1 = ad::identity(tr.z1);
  tr.phi_grad = t.grad(ad::sum(phi_value(c.phi, z1)), z1);
  const Var z1_dot = qdot - t.constant(Matrix(ref.qdot));
  const Var curvature = t.grad(ad::dot(tr.phi_grad, z1_dot), z1);
  tr.phi = t.constant(Matrix(ref.qdot)) - tr.phi_grad;
  tr.phi_rate = t.constant(Matrix(ref.qddot)) - curvature;
  tr.z2 = qdot - tr.phi;
  tr.model = c.model(q, qdot);
  const Var D = damping_matrix(c.damping, tr.z2);
  tr.u = tr.model.G + ad::matmul(tr.model.M, tr.phi_rate) + ad::matmul(tr.model.C, tr.phi) - tr.phi_grad -
         ad::matmul(D, tr.z2);
  return tr;
}

// ---------------------------------------------------------------------------
// Plain-value helpers

namespace {

void require_dim(const Vector& v, Eigen::Index n, const char* what) {
  if (v.size() != n) throw DimensionMismatch(std::string(what) + ": expected dimension " + std::to_string(n));
}

}  // namespace

TrackingErrors tracking_errors(const PotentialPhi& phi, const Vector& q, const Vector& qdot,
                               const ReferenceSample& ref) {
  const Eigen::Index n = phi.dim();
  require_dim(q, n, "tracking_errors q");
  require_dim(qdot, n, "tracking_errors qdot");
  require_dim(ref.q, n, "tracking_errors reference");
  TrackingErrors e;
  e.z1 = q - ref.q;
  e.z2 = qdot - virtual_signal(phi, e.z1, ref.qdot);
  return e;
}

Vector virtual_signal(const PotentialPhi& phi, const Vector& z1, const Vector& qd_dot) {
  require_dim(z1, phi.dim(), "virtual_signal z1");
  require_dim(qd_dot, phi.dim(), "virtual_signal qd_dot");
  return qd_dot - phi_grad(phi, z1);
}

Vector virtual_signal_rate(const PotentialPhi& phi, const Vector& z1, const Vector& z1_dot,
                           const Vector& qd_ddot) {
  require_dim(z1, phi.dim(), "virtual_signal_rate z1");
  require_dim(z1_dot, phi.dim(), "virtual_signal_rate z1_dot");
  require_dim(qd_ddot, phi.dim(), "virtual_signal_rate qd_ddot");
  ad::Tape tape;
  const BoundPhi b = bind(tape, phi, Bind::Constant);
  const Var z = tape.constant(Matrix(z1));
  const Var g = tape.grad(ad::sum(phi_value(b, z)), z);
  const Var hv = tape.grad(ad::dot(g, tape.constant(Matrix(z1_dot))), z);
  return qd_ddot - hv.value().col(0);
}

Vector nbs_control(const NbsController& c, const Vector& q, const Vector& qdot, const ReferenceSample& ref) {
  require_dim(q, c.dof(), "nbs_control q");
  require_dim(qdot, c.dof(), "nbs_control qdot");
  ad::Tape tape;
  const BoundController b = bind(tape, c, Bind::Constant);
  const Vector u = nbs_control(b, tape.constant(Matrix(q)), tape.constant(Matrix(qdot)), ref).u.value().col(0);
  if (!u.allFinite()) throw NonFinite("nbs_control: non-finite control");
  return u;
}

double lyapunov(const PotentialPhi& phi, const Matrix& M, const Vector& z1, const Vector& z2) {
  return phi_value(phi, z1) + 0.5 * z2.dot(M * z2);
}

// ---------------------------------------------------------------------------
// Policies

NbsPolicy::NbsPolicy(const NbsController& c, ReferenceTrajectory ref)
    : c_(c), ref_(std::move(ref)), tape_(std::make_unique<ad::Tape>()) {
  if (ref_.dof != c.dof()) throw DimensionMismatch("nbs policy: reference dimension");
  bound_ = bind(*tape_, c_, Bind::Constant);
  mark_ = tape_->size();
}

Vector NbsPolicy::control(double t, const Vector& q, const Vector& qdot) {
  tape_->truncate(mark_);
  const ControlTrace tr = nbs_control(bound_, tape_->constant(Matrix(q)), tape_->constant(Matrix(qdot)), ref_.at(t));
  Vector u = tr.u.value().col(0);
  if (!u.allFinite()) throw NonFinite("nbs policy: non-finite control at t = " + std::to_string(t));
  return u;
}

PidPolicy::PidPolicy(PidGains gains, ReferenceTrajectory ref) : g_(gains), ref_(std::move(ref)) {
  if (g_.kp < 0 || g_.ki < 0 || g_.kd < 0 || g_.clamp < 0) throw ConfigError("pid: gains must be non-negative");
  reset();
}

void PidPolicy::reset() {
  integral_ = Vector::Zero(ref_.dof);
  last_error_.resize(0);
}

Vector PidPolicy::control(double t, const Vector& q, const Vector& qdot) {
  const ReferenceSample r = ref_.at(t);
  return g_.kp * (r.q - q) + g_.ki * integral_ + g_.kd * (r.qdot - qdot);
}

void PidPolicy::commit(double t, const Vector& q, const Vector&, double dt) {
  const Vector e = ref_.at(t).q - q;
  if (last_error_.size() == e.size()) {
    integral_ += 0.5 * dt * (last_error_ + e);
    integral_ = integral_.cwiseMax(-g_.clamp).cwiseMin(g_.clamp);
  }
  last_error_ = e;
}

}  // namespace nbs
