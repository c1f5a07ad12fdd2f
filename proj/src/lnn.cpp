#include "nbs/lnn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "nbs/optim.hpp"

namespace nbs {

using ad::Var;

ParamList LagrangianNet::parameters() {
  ParamList out;
  for (ParamRef& p : kinetic.parameters()) {
    p.name = "kinetic." + p.name;
    out.push_back(p);
  }
  for (ParamRef& p : potential.parameters()) {
    p.name = "potential." + p.name;
    out.push_back(p);
  }
  return out;
}

LagrangianNet make_lagrangian_net(Eigen::Index dof, const std::vector<int>& hidden_widths,
                                  double eps_m) {
  if (dof < 1) throw ConfigError("lagrangian net: dof must be positive");
  if (!(eps_m > 0.0)) throw ConfigError("lagrangian net: eps_m must be positive");
  std::vector<int> widths = hidden_widths;
  widths.push_back(1);
  LagrangianNet net;
  net.dof = dof;
  net.eps_m = eps_m;
  net.kinetic = make_picnn(dof, dof, widths, Activation::Softplus, Activation::Linear);
  net.potential = make_mlp(dof, widths, Activation::Softplus, Activation::Linear);
  return net;
}

void init_lagrangian_net(LagrangianNet& net, std::uint64_t seed) {
  init_params(net.kinetic.parameters(), seed);
  init_params(net.potential.parameters(), seed ^ 0x9e3779b97f4a7c15ULL);
}

LagrangianFn lagrangian_fn(ad::Tape& tape, const LagrangianNet& net, Bind mode,
                           std::vector<Var>* leaves) {
  const BoundPicnn kinetic = bind(tape, net.kinetic, mode, leaves);
  const BoundMlp potential = bind(tape, net.potential, mode, leaves);
  const double eps = net.eps_m;
  return [kinetic, potential, eps](const Var& q, const Var& qdot) {
    const Var quad = (0.5 * eps) * ad::col_sum(ad::square(qdot));
    return forward(kinetic, q, qdot) + quad - forward(potential, q);
  };
}

namespace {

Var stack_rows(const std::vector<Var>& columns) {
  std::vector<Var> rows;
  rows.reserve(columns.size());
  for (const Var& c : columns) rows.push_back(ad::transpose(c));
  const Var m = ad::vstack(rows);
  return 0.5 * (m + ad::transpose(m));
}

void require_state(const Var& q, const Var& qdot, const char* what) {
  if (q.rows() != qdot.rows() || q.cols() != qdot.cols()) {
    throw DimensionMismatch(std::string(what) + ": q and qdot shapes differ");
  }
}

}  // namespace

LagrangianTerms lagrangian_terms(const LagrangianFn& L, const Var& q, const Var& qdot) {
  require_state(q, qdot, "lagrangian_terms");
  if (q.cols() != 1) throw DimensionMismatch("lagrangian_terms: expects a single state");
  ad::Tape& t = q.tape();
  const Eigen::Index n = q.rows();
  // The velocity multiplying dM/dq is a separate slot so that second
  // derivatives in qdot do not act on it.
  const Var slot = ad::identity(qdot);
  const Var qv = ad::identity(q);
  const Var qdv = ad::identity(qdot);
  const Var value = L(qv, qdv);
  const std::vector<Var> wrt{qv, qdv};
  const std::vector<Var> g = t.grad(ad::sum(value), wrt);

  LagrangianTerms out;
  out.dL_dq = g[0];
  std::vector<Var> mass_rows;
  for (Eigen::Index k = 0; k < n; ++k) mass_rows.push_back(t.grad(ad::entry(g[1], k, 0), qdv));
  out.mass = stack_rows(mass_rows);

  const Var directional = ad::dot(g[0], slot);
  out.mixed = t.grad(directional, qdv);
  std::vector<Var> rate_rows;
  for (Eigen::Index k = 0; k < n; ++k) rate_rows.push_back(t.grad(ad::entry(out.mixed, k, 0), qdv));
  out.mass_rate = stack_rows(rate_rows);
  return out;
}

ModelTermsVar model_terms(const LagrangianTerms& t, const Var& qdot) {
  const Var rate_t = ad::transpose(t.mass_rate);
  ModelTermsVar out;
  out.M = t.mass;
  out.C = t.mass_rate - 0.5 * rate_t;
  out.G = -t.dL_dq + 0.5 * ad::matmul(rate_t, qdot);
  return out;
}

Var predict_accel(const LagrangianFn& L, const Var& q, const Var& qdot, const Var& u) {
  require_state(q, qdot, "predict_accel");
  if (u.rows() != q.rows() || u.cols() != q.cols()) throw DimensionMismatch("predict_accel: u shape");
  ad::Tape& t = q.tape();
  const Eigen::Index n = q.rows();
  const Var slot = ad::identity(qdot);
  const Var qv = ad::identity(q);
  const Var qdv = ad::identity(qdot);
  const std::vector<Var> wrt{qv, qdv};
  const std::vector<Var> g = t.grad(ad::sum(L(qv, qdv)), wrt);
  std::vector<Var> mass_rows;
  for (Eigen::Index k = 0; k < n; ++k) mass_rows.push_back(t.grad(ad::sum(ad::rows(g[1], k, 1)), qdv));
  const Var mixed = t.grad(ad::sum(ad::mul(g[0], slot)), qdv);
  return ad::batch_solve_spd(mass_rows, u + g[0] - mixed);
}

// ---------------------------------------------------------------------------
// Plain-value conveniences

namespace {

template <class F>
auto with_terms(const LagrangianNet& net, const Vector& q, const Vector& qdot, F&& f) {
  if (q.size() != net.dof || qdot.size() != net.dof) throw DimensionMismatch("lnn: state dimension");
  ad::Tape tape;
  const LagrangianFn L = lagrangian_fn(tape, net, Bind::Constant);
  const Var qv = tape.constant(Matrix(q));
  const Var qdv = tape.constant(Matrix(qdot));
  return f(lagrangian_terms(L, qv, qdv), qdv);
}

}  // namespace

Matrix mass_hat(const LagrangianNet& net, const Vector& q, const Vector& qdot) {
  return with_terms(net, q, qdot, [](const LagrangianTerms& t, const Var&) { return Matrix(t.mass.value()); });
}

Matrix mdot_hat(const LagrangianNet& net, const Vector& q, const Vector& qdot) {
  return with_terms(net, q, qdot,
                    [](const LagrangianTerms& t, const Var&) { return Matrix(t.mass_rate.value()); });
}

Matrix coriolis_hat(const LagrangianNet& net, const Vector& q, const Vector& qdot) {
  return with_terms(net, q, qdot, [](const LagrangianTerms& t, const Var& qd) {
    return Matrix(model_terms(t, qd).C.value());
  });
}

Vector gravity_hat(const LagrangianNet& net, const Vector& q, const Vector& qdot) {
  return with_terms(net, q, qdot, [](const LagrangianTerms& t, const Var& qd) {
    return Vector(model_terms(t, qd).G.value().col(0));
  });
}

double lagrangian(const LagrangianNet& net, const Vector& q, const Vector& qdot) {
  if (q.size() != net.dof || qdot.size() != net.dof) throw DimensionMismatch("lnn: state dimension");
  ad::Tape tape;
  const LagrangianFn L = lagrangian_fn(tape, net, Bind::Constant);
  return L(tape.constant(Matrix(q)), tape.constant(Matrix(qdot))).scalar();
}

Matrix predict_accel(const LagrangianNet& net, const Matrix& q, const Matrix& qdot, const Matrix& u) {
  if (q.rows() != net.dof) throw DimensionMismatch("lnn: state dimension");
  ad::Tape tape;
  const LagrangianFn L = lagrangian_fn(tape, net, Bind::Constant);
  return predict_accel(L, tape.constant(q), tape.constant(qdot), tape.constant(u)).value();
}

double decomposition_residual(const LagrangianNet& net, const Vector& q, const Vector& qdot,
                              const Vector& u) {
  const Matrix qdd = predict_accel(net, Matrix(q), Matrix(qdot), Matrix(u));
  return with_terms(net, q, qdot, [&](const LagrangianTerms& t, const Var& qd) {
    const ModelTermsVar m = model_terms(t, qd);
    const Vector lhs = m.M.value() * qdd;
    const Vector rhs = u - m.C.value() * qdot - m.G.value().col(0);
    return (lhs - rhs).norm();
  });
}

// ---------------------------------------------------------------------------
// Data

Dataset Dataset::subset(const std::vector<Eigen::Index>& idx) const {
  Dataset out;
  const auto m = static_cast<Eigen::Index>(idx.size());
  out.t.resize(m);
  out.q.resize(dof(), m);
  out.qdot.resize(dof(), m);
  out.qddot.resize(dof(), m);
  out.u.resize(dof(), m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const Eigen::Index k = idx[static_cast<std::size_t>(j)];
    out.t(j) = t(k);
    out.q.col(j) = q.col(k);
    out.qdot.col(j) = qdot.col(k);
    out.qddot.col(j) = qddot.col(k);
    out.u.col(j) = u.col(k);
  }
  return out;
}

Dataset generate_free_motion(const PlanarArm& arm, const DataGenConfig& cfg) {
  arm.validate();
  if (cfg.samples < 1) throw ConfigError("samples must be positive");
  if (!(cfg.dt > 0.0)) throw ConfigError("dt must be positive");
  const Eigen::Index n = arm.dof();
  Vector y = cfg.initial.size() > 0 ? cfg.initial : Vector(Vector::Zero(2 * n));
  if (y.size() != 2 * n) throw DimensionMismatch("initial state must have 2n entries");
  const Vector zero = Vector::Zero(n);
  auto field = [&](double, const Vector& s) {
    Vector d(2 * n);
    d.head(n) = s.tail(n);
    d.tail(n) = forward_dynamics(arm, s.head(n), s.tail(n), zero, Vector());
    return d;
  };
  Dataset data;
  data.t.resize(cfg.samples);
  data.q.resize(n, cfg.samples);
  data.qdot.resize(n, cfg.samples);
  data.qddot.resize(n, cfg.samples);
  data.u = Matrix::Zero(n, cfg.samples);
  OdeState s{0.0, y};
  for (Eigen::Index k = 0; k < cfg.samples; ++k) {
    data.t(k) = static_cast<double>(k) * cfg.dt;
    data.q.col(k) = s.y.head(n);
    data.qdot.col(k) = s.y.tail(n);
    data.qddot.col(k) = forward_dynamics(arm, s.y.head(n), s.y.tail(n), zero, Vector());
    if (k + 1 < cfg.samples) {
      s = rk4_step(field, s, cfg.dt);
      s.t = static_cast<double>(k + 1) * cfg.dt;
    }
  }
  return data;
}

// ---------------------------------------------------------------------------
// Training

Var acceleration_loss(const LagrangianFn& L, const Var& q, const Var& qdot, const Var& qddot,
                      const Var& u, const Var& Q) {
  const Var err = predict_accel(L, q, qdot, u) - qddot;
  return (1.0 / static_cast<double>(q.cols())) * ad::sum(ad::mul(err, ad::matmul(Q, err)));
}

double acceleration_mse(const LagrangianNet& net, const Dataset& data) {
  if (data.size() == 0) throw Error("acceleration_mse: empty dataset");
  const Eigen::Index chunk = 250;
  double total = 0.0;
  for (Eigen::Index start = 0; start < data.size(); start += chunk) {
    const Eigen::Index m = std::min(chunk, data.size() - start);
    const Matrix pred = predict_accel(net, data.q.middleCols(start, m), data.qdot.middleCols(start, m),
                                      data.u.middleCols(start, m));
    total += (pred - data.qddot.middleCols(start, m)).squaredNorm();
  }
  return total / static_cast<double>(data.size() * data.dof());
}

LnnTrainResult train_lnn(LagrangianNet& net, const Dataset& data, const LnnTrainConfig& cfg) {
  const Eigen::Index n = net.dof;
  if (data.dof() != n) throw DimensionMismatch("train_lnn: dataset dimension");
  if (data.size() < 2) throw ConfigError("train_lnn: dataset too small");
  if (cfg.batch < 1 || cfg.epochs < 0) throw ConfigError("train_lnn: batch and epochs");
  const Matrix Q = cfg.Q.size() > 0 ? cfg.Q : Matrix(Matrix::Identity(n, n));
  if (Q.rows() != n || Q.cols() != n) throw DimensionMismatch("train_lnn: Q shape");
  cholesky(Q);

  std::mt19937_64 rng(cfg.seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const auto held = static_cast<std::size_t>(
      std::llround(cfg.holdout_fraction * static_cast<double>(data.size())));
  std::vector<Eigen::Index> holdout_idx(order.begin(), order.begin() + static_cast<long>(held));
  std::vector<Eigen::Index> train_idx(order.begin() + static_cast<long>(held), order.end());
  const Dataset train = data.subset(train_idx);
  const Dataset holdout = held > 0 ? data.subset(holdout_idx) : train;

  LnnTrainResult result;
  result.holdout_mse.push_back(acceleration_mse(net, holdout));

  const ParamList params = net.parameters();
  Adam adam;
  ad::Tape tape;
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(train.size()));
  std::iota(perm.begin(), perm.end(), 0);
  Matrix bq(n, cfg.batch), bqd(n, cfg.batch), bqdd(n, cfg.batch), bu(n, cfg.batch);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(perm.begin(), perm.end(), rng);
    const double lr = decayed_rate(cfg.lr, cfg.lr_decay, epoch);
    double loss_sum = 0.0;
    long batches = 0;
    for (std::size_t start = 0; start < perm.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const auto m = static_cast<Eigen::Index>(
          std::min<std::size_t>(static_cast<std::size_t>(cfg.batch), perm.size() - start));
      bq.resize(n, m);
      bqd.resize(n, m);
      bqdd.resize(n, m);
      bu.resize(n, m);
      for (Eigen::Index j = 0; j < m; ++j) {
        const Eigen::Index k = perm[start + static_cast<std::size_t>(j)];
        bq.col(j) = train.q.col(k);
        bqd.col(j) = train.qdot.col(k);
        bqdd.col(j) = train.qddot.col(k);
        bu.col(j) = train.u.col(k);
      }
      tape.clear();
      std::vector<Var> leaves;
      const LagrangianFn L = lagrangian_fn(tape, net, Bind::Trainable, &leaves);
      const Var loss = acceleration_loss(L, tape.constant(bq), tape.constant(bqd),
                                         tape.constant(bqdd), tape.constant(bu), tape.constant(Q));
      const double value = loss.scalar();
      if (!std::isfinite(value)) {
        throw NonFiniteLoss("train_lnn: non-finite loss at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(batches));
      }
      std::vector<Matrix> grads = tape.gradient(loss, leaves);
      for (const Matrix& g : grads) {
        if (!g.allFinite()) {
          throw NonFiniteLoss("train_lnn: non-finite gradient at epoch " + std::to_string(epoch) +
                              ", batch " + std::to_string(batches));
        }
      }
      adam.step(params, grads, lr);
      loss_sum += value;
      ++batches;
    }
    result.train_loss.push_back(loss_sum / static_cast<double>(std::max<long>(batches, 1)));
    result.holdout_mse.push_back(acceleration_mse(net, holdout));
    if (cfg.progress) cfg.progress(epoch, result.train_loss.back(), result.holdout_mse.back());
  }
  return result;
}

double inertia_relative_error(const LagrangianNet& net, const PlanarArm& arm, const Vector& q,
                              const Vector& qdot) {
  const Matrix truth = mass_matrix<Matrix>(arm, Matrix(q));
  return (mass_hat(net, q, qdot) - truth).norm() / truth.norm();
}

}  // namespace nbs
