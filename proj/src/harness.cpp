#include "nbs/harness.hpp"

#include <atomic>
#include <cmath>
#include <istream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>
#include <utility>

namespace nbs {

using ad::Var;

// ---------------------------------------------------------------------------
// Plants

ArmPlant::ArmPlant(PlanarArm arm) : arm_(std::move(arm)) { arm_.validate(); }

Vector ArmPlant::accel(const Vector& q, const Vector& qdot, const Vector& force) const {
  return forward_dynamics(arm_, q, qdot, force, Vector());
}

Matrix ArmPlant::inertia(const Vector& q, const Vector&) const { return mass_matrix<Matrix>(arm_, Matrix(q)); }

std::function<Var(const Var&, const Var&, const Var&)> ArmPlant::bind(ad::Tape&) const {
  const PlanarArm arm = arm_;
  return [arm](const Var& q, const Var& qdot, const Var& force) {
    return forward_dynamics<Var>(arm, q, qdot, force);
  };
}

LearnedPlant::LearnedPlant(std::shared_ptr<const LagrangianNet> net) : net_(std::move(net)) {
  if (!net_) throw ConfigError("learned plant: missing network");
}

Vector LearnedPlant::accel(const Vector& q, const Vector& qdot, const Vector& force) const {
  return predict_accel(*net_, Matrix(q), Matrix(qdot), Matrix(force)).col(0);
}

Matrix LearnedPlant::inertia(const Vector& q, const Vector& qdot) const { return mass_hat(*net_, q, qdot); }

std::function<Var(const Var&, const Var&, const Var&)> LearnedPlant::bind(ad::Tape& tape) const {
  const LagrangianFn L = lagrangian_fn(tape, *net_, Bind::Constant);
  return [L](const Var& q, const Var& qdot, const Var& force) { return predict_accel(L, q, qdot, force); };
}

// ---------------------------------------------------------------------------
// Rollout

void SimConfig::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("sim.dt must be positive");
  if (!(horizon >= dt) || !std::isfinite(horizon)) throw ConfigError("sim.horizon must be at least dt");
}

namespace {

Vector or_zero(const Vector& v, Eigen::Index n, const char* what) {
  if (v.size() == 0) return Vector::Zero(n);
  if (v.size() != n) throw DimensionMismatch(std::string(what) + ": expected dimension " + std::to_string(n));
  return v;
}

}  // namespace

RolloutLog rollout(const Plant& plant, ControlPolicy& policy, const ReferenceTrajectory& ref,
                   const SimConfig& cfg, const PotentialPhi* phi) {
  cfg.validate();
  const Eigen::Index n = plant.dof();
  if (ref.dof != n) throw DimensionMismatch("rollout: reference dimension");
  if (phi && phi->dim() != n) throw DimensionMismatch("rollout: potential dimension");
  Vector q = or_zero(cfg.q0, n, "rollout q0");
  Vector v = or_zero(cfg.qdot0, n, "rollout qdot0");
  const Vector tau = cfg.disturbance.at(n);
  if (tau.size() != n) throw DimensionMismatch("rollout: disturbance dimension");

  const long steps = std::lround(cfg.horizon / cfg.dt);
  const double h = cfg.dt;
  RolloutLog log;
  log.dof = n;
  const auto reserve = static_cast<std::size_t>(steps + 1);
  for (auto* s : {&log.q, &log.qdot, &log.qd, &log.z1, &log.z2, &log.u}) s->reserve(reserve);
  log.t.reserve(reserve);
  log.z1sq.reserve(reserve);
  log.V.reserve(reserve);

  policy.reset();
  policy.commit(0.0, q, v, 0.0);
  for (long k = 0;; ++k) {
    const double t = static_cast<double>(k) * h;
    const Vector u1 = policy.control(t, q, v);
    if (!u1.allFinite()) throw NonFinite("rollout: non-finite control at step " + std::to_string(k));

    const ReferenceSample r = ref.at(t);
    log.t.push_back(t);
    log.q.push_back(q);
    log.qdot.push_back(v);
    log.qd.push_back(r.q);
    log.u.push_back(u1);
    const Vector z1 = q - r.q;
    log.z1.push_back(z1);
    log.z1sq.push_back(z1.squaredNorm());
    if (phi) {
      const Vector z2 = v - r.qdot + phi_grad(*phi, z1);
      log.z2.push_back(z2);
      log.V.push_back(lyapunov(*phi, plant.inertia(q, v), z1, z2));
    } else {
      log.z2.push_back(v - r.qdot);
      log.V.push_back(std::numeric_limits<double>::quiet_NaN());
    }
    if (k == steps) break;

    auto ctrl = [&](double ts, const Vector& qs, const Vector& vs) {
      return cfg.zero_order_hold ? u1 : policy.control(ts, qs, vs);
    };
    const Vector a1 = plant.accel(q, v, u1 + tau);
    const Vector q2 = q + 0.5 * h * v, v2 = v + 0.5 * h * a1;
    const Vector a2 = plant.accel(q2, v2, ctrl(t + 0.5 * h, q2, v2) + tau);
    const Vector q3 = q + 0.5 * h * v2, v3 = v + 0.5 * h * a2;
    const Vector a3 = plant.accel(q3, v3, ctrl(t + 0.5 * h, q3, v3) + tau);
    const Vector q4 = q + h * v3, v4 = v + h * a3;
    const Vector a4 = plant.accel(q4, v4, ctrl(t + h, q4, v4) + tau);
    q += (h / 6.0) * (v + 2.0 * v2 + 2.0 * v3 + v4);
    v += (h / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
    if (!q.allFinite() || !v.allFinite()) {
      throw NonFinite("rollout: non-finite state at step " + std::to_string(k + 1));
    }
    policy.commit(static_cast<double>(k + 1) * h, q, v, h);
  }
  return log;
}

RolloutLog rollout(const Plant& plant, const NbsController& c, const ReferenceTrajectory& ref,
                   const SimConfig& cfg) {
  NbsPolicy policy(c, ref);
  return rollout(plant, policy, ref, cfg, &c.phi);
}

Metrics metrics(const RolloutLog& log, const MetricsConfig& cfg) {
  if (log.size() < 2) throw HorizonTooShort("metrics: log has fewer than two samples");
  const double t0 = log.t.front(), t1 = log.t.back();
  if (t1 - t0 < cfg.min_horizon - 1e-9) {
    throw HorizonTooShort("metrics: log covers " + std::to_string(t1 - t0) + " s, need " +
                          std::to_string(cfg.min_horizon) + " s");
  }
  Metrics m;
  m.steady_state_error = 0.0;
  for (std::size_t k = 0; k < log.size(); ++k) {
    if (log.t[k] >= t1 - cfg.window - 1e-9) m.steady_state_error = std::max(m.steady_state_error, log.z1sq[k]);
  }
  // Last sample at or above the threshold.
  std::size_t last = log.size();
  for (std::size_t k = log.size(); k-- > 0;) {
    if (!(log.z1sq[k] < cfg.threshold)) {
      last = k;
      break;
    }
  }
  if (last == log.size()) {
    m.converged = true;
    m.convergence_time = t0;
  } else if (last + 1 < log.size()) {
    const double a = log.z1sq[last], b = log.z1sq[last + 1];
    const double frac = std::isfinite(a) && a > b ? (a - cfg.threshold) / (a - b) : 0.0;
    m.converged = true;
    m.convergence_time = log.t[last] + frac * (log.t[last + 1] - log.t[last]);
  }
  return m;
}

double max_lyapunov_increase(const RolloutLog& log) {
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k < log.V.size(); ++k) worst = std::max(worst, log.V[k] - log.V[k - 1]);
  return worst;
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate() const {
  if (!(dt > 0.0)) throw ConfigError("train.dt must be positive");
  if (!(horizon >= dt)) throw ConfigError("train.horizon must be at least dt");
  if (epochs < 0) throw ConfigError("train.epochs must be non-negative");
  if (!(lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("train.lr_decay must lie in (0, 1]");
  if (!(alpha >= 0.0)) throw ConfigError("train.alpha must be non-negative");
}

TrainingLoss training_loss(const BoundController& c, const Plant& plant, const ReferenceTrajectory& ref,
                           const TrainConfig& cfg, ad::Tape& tape) {
  const Eigen::Index n = plant.dof();
  const auto accel = plant.bind(tape);
  Var q = tape.constant(Matrix(or_zero(cfg.q0, n, "train q0")));
  Var v = tape.constant(Matrix(or_zero(cfg.qdot0, n, "train qdot0")));
  const long steps = std::lround(cfg.horizon / cfg.dt);
  const double h = cfg.dt;
  auto ctrl = [&](double ts, const Var& qs, const Var& vs) { return nbs_control(c, qs, vs, ref.at(ts)).u; };

  Var cost = tape.constant(0.0);
  for (long k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * h;
    const Var u1 = ctrl(t, q, v);
    const Var a1 = accel(q, v, u1);
    const Var q2 = q + (0.5 * h) * v, v2 = v + (0.5 * h) * a1;
    const Var a2 = accel(q2, v2, cfg.zero_order_hold ? u1 : ctrl(t + 0.5 * h, q2, v2));
    const Var q3 = q + (0.5 * h) * v2, v3 = v + (0.5 * h) * a2;
    const Var a3 = accel(q3, v3, cfg.zero_order_hold ? u1 : ctrl(t + 0.5 * h, q3, v3));
    const Var q4 = q + h * v3, v4 = v + h * a3;
    const Var a4 = accel(q4, v4, cfg.zero_order_hold ? u1 : ctrl(t + h, q4, v4));
    q = q + (h / 6.0) * (v + 2.0 * v2 + 2.0 * v3 + v4);
    v = v + (h / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
    const Var z1 = q - tape.constant(Matrix(ref.at(t + h).q));
    cost = cost + h * ad::dot(z1, z1);
  }

  const Var origin = ad::identity(tape.zeros(n, 1));
  const Var hess = ad::hessian_of(ad::sum(phi_value(c.phi, origin)), origin);
  const Var gap = tape.constant(Matrix(cfg.alpha * Matrix::Identity(n, n))) - hess;
  const Var reg = ad::relu(ad::lambda_max(gap));
  return TrainingLoss{cost + reg, cost, reg};
}

TrainResult train_controller(NbsController& c, const Plant& plant, const ReferenceTrajectory& ref,
                             const TrainConfig& cfg) {
  cfg.validate();
  c.validate();
  if (plant.dof() != c.dof() || ref.dof != c.dof()) throw DimensionMismatch("train_controller: dimensions");
  const ParamList params = c.parameters();
  Adam adam(cfg.adam);
  ad::Tape tape;
  TrainResult out;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    tape.clear();
    std::vector<Var> leaves;
    const BoundController b = nbs::bind(tape, std::as_const(c), Bind::Trainable, &leaves);
    const TrainingLoss loss = training_loss(b, plant, ref, cfg, tape);
    const double value = loss.total.scalar();
    if (!std::isfinite(value)) {
      throw NonFiniteLoss("train_controller: non-finite loss at epoch " + std::to_string(epoch));
    }
    const std::vector<Matrix> grads = tape.gradient(loss.total, leaves);
    for (std::size_t i = 0; i < grads.size(); ++i) {
      if (!grads[i].allFinite()) {
        throw NonFiniteLoss("train_controller: non-finite gradient for " + params[i].name + " at epoch " +
                            std::to_string(epoch));
      }
    }
    out.loss.push_back(value);
    out.stage_cost.push_back(loss.stage_cost.scalar());
    out.regularizer.push_back(loss.regularizer.scalar());
    adam.step(params, grads, decayed_rate(cfg.lr, cfg.lr_decay, epoch));
    if (cfg.progress) cfg.progress(epoch, value);
  }
  return out;
}

double hessian_min_at_origin(const PotentialPhi& phi) {
  return lambda_min(phi_hessian_at(phi, Vector::Zero(phi.dim())));
}

// ---------------------------------------------------------------------------
// Sweep

std::vector<double> alpha_grid(double lo, double hi, int count) {
  if (count < 1 || !(hi > lo)) throw ConfigError("alpha grid: need count >= 1 and hi > lo");
  std::vector<double> out;
  for (int i = 1; i <= count; ++i) out.push_back(lo + (hi - lo) * static_cast<double>(i) / count);
  return out;
}

double theorem_bound(double d, double alpha) {
  if (alpha <= 0.0) return std::numeric_limits<double>::infinity();
  return d / (2.0 * alpha * alpha);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  // splitmix64 of a per-index offset
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<SweepRow> alpha_sweep(const PlanarArm& arm, const ReferenceTrajectory& ref, const SweepConfig& cfg) {
  const auto model = std::make_shared<const ExactModel>(arm);
  const ArmPlant plant(arm);
  const Eigen::Index n = arm.dof();
  if (cfg.tau.size() != n) throw DimensionMismatch("alpha sweep: disturbance dimension");
  const double d = cfg.tau.squaredNorm();
  std::vector<SweepRow> rows(cfg.alphas.size());
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr failure;

  auto worker = [&]() {
    for (std::size_t i = next++; i < rows.size(); i = next++) {
      try {
        NbsController c = make_controller(model, cfg.shape, derive_seed(cfg.seed, i));
        TrainConfig tc = cfg.train;
        tc.alpha = cfg.alphas[i];
        tc.progress = nullptr;
        train_controller(c, plant, ref, tc);
        SimConfig sim = cfg.sim;
        sim.disturbance.tau = cfg.tau;
        const Metrics m = metrics(rollout(plant, c, ref, sim), cfg.metrics);
        rows[i] = SweepRow{cfg.alphas[i], m.steady_state_error, theorem_bound(d, cfg.alphas[i]),
                           m.convergence_time, hessian_min_at_origin(c.phi)};
        if (cfg.progress) {
          std::lock_guard<std::mutex> lock(mu);
          cfg.progress(i, rows[i].steady);
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!failure) failure = std::current_exception();
        next = rows.size();
      }
    }
  };
  const int jobs = std::max(1, std::min<int>(cfg.jobs, static_cast<int>(rows.size())));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return rows;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

void header_block(std::ostream& os, const char* prefix, Eigen::Index n) {
  for (Eigen::Index i = 0; i < n; ++i) os << ',' << prefix << '_' << i;
}

void row_block(std::ostream& os, const Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) os << ',' << v(i);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

void write_rollout_csv(std::ostream& os, const RolloutLog& log) {
  const auto old = os.precision(17);
  os << 't';
  header_block(os, "q", log.dof);
  header_block(os, "qd", log.dof);
  header_block(os, "z1", log.dof);
  header_block(os, "u", log.dof);
  os << ",z1sq,V\n";
  for (std::size_t k = 0; k < log.size(); ++k) {
    os << log.t[k];
    row_block(os, log.q[k]);
    row_block(os, log.qd[k]);
    row_block(os, log.z1[k]);
    row_block(os, log.u[k]);
    os << ',' << log.z1sq[k] << ',' << log.V[k] << '\n';
  }
  os.precision(old);
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  const auto old = os.precision(17);
  os << "alpha,steady,bound\n";
  for (const SweepRow& r : rows) os << r.alpha << ',' << r.steady << ',' << r.bound << '\n';
  os.precision(old);
}

void write_dataset_csv(std::ostream& os, const Dataset& data) {
  const auto old = os.precision(17);
  const Eigen::Index n = data.dof();
  os << 't';
  header_block(os, "q", n);
  header_block(os, "qd", n);
  header_block(os, "qdd", n);
  header_block(os, "u", n);
  os << '\n';
  for (Eigen::Index k = 0; k < data.size(); ++k) {
    os << data.t(k);
    row_block(os, data.q.col(k));
    row_block(os, data.qdot.col(k));
    row_block(os, data.qddot.col(k));
    row_block(os, data.u.col(k));
    os << '\n';
  }
  os.precision(old);
}

Dataset read_dataset_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("dataset csv: missing header");
  const std::vector<std::string> head = split(line);
  if (head.empty() || head[0] != "t" || (head.size() - 1) % 4 != 0 || head.size() < 5) {
    throw ConfigError("dataset csv: header must be t, q_*, qd_*, qdd_*, u_*");
  }
  const auto n = static_cast<Eigen::Index>((head.size() - 1) / 4);
  const char* prefixes[] = {"q", "qd", "qdd", "u"};
  for (Eigen::Index b = 0; b < 4; ++b) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const std::string expect = std::string(prefixes[b]) + "_" + std::to_string(i);
      if (head[static_cast<std::size_t>(1 + b * n + i)] != expect) {
        throw ConfigError("dataset csv: expected column '" + expect + "'");
      }
    }
  }
  std::vector<std::vector<double>> rows;
  long lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::vector<std::string> cells = split(line);
    if (cells.size() != head.size()) {
      throw ConfigError("dataset csv: line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                        " cells");
    }
    std::vector<double> r;
    for (const std::string& c : cells) {
      try {
        r.push_back(std::stod(c));
      } catch (const std::exception&) {
        throw ConfigError("dataset csv: line " + std::to_string(lineno) + ": bad number '" + c + "'");
      }
    }
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw ConfigError("dataset csv: no rows");
  const auto m = static_cast<Eigen::Index>(rows.size());
  Dataset d;
  d.t.resize(m);
  d.q.resize(n, m);
  d.qdot.resize(n, m);
  d.qddot.resize(n, m);
  d.u.resize(n, m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const std::vector<double>& r = rows[static_cast<std::size_t>(k)];
    d.t(k) = r[0];
    for (Eigen::Index i = 0; i < n; ++i) {
      d.q(i, k) = r[static_cast<std::size_t>(1 + i)];
      d.qdot(i, k) = r[static_cast<std::size_t>(1 + n + i)];
      d.qddot(i, k) = r[static_cast<std::size_t>(1 + 2 * n + i)];
      d.u(i, k) = r[static_cast<std::size_t>(1 + 3 * n + i)];
    }
  }
  for (const Matrix* x : {&d.q, &d.qdot, &d.qddot, &d.u}) {
    if (!x->allFinite()) throw ConfigError("dataset csv: non-finite entries");
  }
  return d;
}

}  // namespace nbs
