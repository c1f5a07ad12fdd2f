#include <cmath>
#include <random>

#include "doctest.h"
#include "nbs/controller.hpp"
#include "nbs/errors.hpp"

using nbs::Matrix;
using nbs::Vector;
namespace ad = nbs::ad;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

Vector gaussian(std::mt19937_64& rng, Eigen::Index n, double s = 1.0) {
  std::normal_distribution<double> g(0.0, s);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = g(rng);
  return v;
}

nbs::NbsController exact_controller(const nbs::PlanarArm& arm, std::uint64_t seed, double m = 2.0) {
  nbs::ControllerShape shape;
  shape.psi_widths = {16, 16};
  shape.damping_widths = {16};
  shape.m = m;
  return nbs::make_controller(std::make_shared<const nbs::ExactModel>(arm), shape, seed);
}

// Same arm, but M, C, G extracted from L = q'^T M(q) q' / 2 - V(q).
class LagrangianArmModel : public nbs::DynamicsModel {
 public:
  explicit LagrangianArmModel(nbs::PlanarArm arm) : arm_(std::move(arm)) {}
  Eigen::Index dof() const override { return arm_.dof(); }
  nbs::ModelFn bind(ad::Tape&) const override {
    const nbs::PlanarArm arm = arm_;
    const nbs::LagrangianFn L = [arm](const ad::Var& q, const ad::Var& qd) {
      return 0.5 * ad::dot(qd, ad::matmul(nbs::mass_matrix<ad::Var>(arm, q), qd)) -
             nbs::potential<ad::Var>(arm, q);
    };
    return [L](const ad::Var& q, const ad::Var& qd) {
      return nbs::model_terms(nbs::lagrangian_terms(L, q, qd), qd);
    };
  }

 private:
  nbs::PlanarArm arm_;
};

// V along the closed loop, with the reference evaluated at t.
double lyapunov_at(const nbs::NbsController& c, const nbs::PlanarArm& arm, const nbs::ReferenceTrajectory& ref,
                   double t, const Vector& q, const Vector& qd) {
  const nbs::ReferenceSample r = ref.at(t);
  const nbs::TrackingErrors e = nbs::tracking_errors(c.phi, q, qd, r);
  return nbs::lyapunov(c.phi, nbs::mass_matrix<Matrix>(arm, Matrix(q)), e.z1, e.z2);
}

}  // namespace

TEST_CASE("sinusoid reference derivatives match finite differences") {
  const nbs::ReferenceTrajectory ref = nbs::ReferenceTrajectory::sinusoid(3);
  const double h = 1e-5;
  for (double t : {0.0, 1.3, 17.0, 55.5}) {
    const nbs::ReferenceSample s = ref.at(t);
    CHECK(s.q(0) == doctest::Approx(std::sin(0.1 * t)));
    CHECK(s.q(1) == doctest::Approx(std::cos(0.1 * t)));
    const Vector dq = (ref.at(t + h).q - ref.at(t - h).q) / (2 * h);
    const Vector ddq = (ref.at(t + h).qdot - ref.at(t - h).qdot) / (2 * h);
    CHECK((dq - s.qdot).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK((ddq - s.qddot).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("error coordinates") {
  const nbs::PlanarArm arm = nbs::unit_arm(2);
  const nbs::NbsController c = exact_controller(arm, 3);
  const nbs::ReferenceSample r{vec({0.2, 1.0}), vec({0.1, 0.0}), vec({0.0, -0.01})};

  SUBCASE("on the reference both errors vanish") {
    const nbs::TrackingErrors e = nbs::tracking_errors(c.phi, r.q, r.qdot, r);
    CHECK(e.z1.norm() == 0.0);
    CHECK(e.z2.norm() <= 1e-14);
  }

  SUBCASE("z2 = z1' + grad Phi(z1)") {
    std::mt19937_64 rng(5);
    for (int k = 0; k < 50; ++k) {
      const Vector q = r.q + gaussian(rng, 2), qd = gaussian(rng, 2);
      const nbs::TrackingErrors e = nbs::tracking_errors(c.phi, q, qd, r);
      CHECK((e.z1 - (q - r.q)).norm() == 0.0);
      CHECK((e.z2 - ((qd - r.qdot) + nbs::phi_grad(c.phi, e.z1))).norm() <= 1e-12);
    }
  }

  SUBCASE("dimension errors") {
    CHECK_THROWS_AS(nbs::tracking_errors(c.phi, vec({1.0}), vec({1.0, 2.0}), r), nbs::DimensionMismatch);
    CHECK_THROWS_AS(nbs::nbs_control(c, vec({1.0, 2.0, 3.0}), vec({1.0, 2.0}), r), nbs::DimensionMismatch);
  }
}

TEST_CASE("virtual signal rate is the time derivative of the virtual signal") {
  const nbs::PlanarArm arm = nbs::unit_arm(2);
  const nbs::NbsController c = exact_controller(arm, 11);
  const nbs::ReferenceTrajectory ref = nbs::ReferenceTrajectory::sinusoid(2);
  // Smooth test path q(t) and its derivative.
  auto q_of = [](double t) { return vec({0.7 * std::sin(1.3 * t) + 0.2, -0.4 * std::cos(0.9 * t)}); };
  auto qd_of = [](double t) { return vec({0.91 * std::cos(1.3 * t), 0.36 * std::sin(0.9 * t)}); };
  auto phi_of = [&](double t) {
    const nbs::ReferenceSample r = ref.at(t);
    return nbs::virtual_signal(c.phi, q_of(t) - r.q, r.qdot);
  };
  const double h = 1e-5;
  for (double t : {0.0, 0.4, 2.5, 7.0}) {
    const nbs::ReferenceSample r = ref.at(t);
    const Vector rate = nbs::virtual_signal_rate(c.phi, q_of(t) - r.q, qd_of(t) - r.qdot, r.qddot);
    const Vector fd = (phi_of(t + h) - phi_of(t - h)) / (2 * h);
    CHECK((rate - fd).cwiseAbs().maxCoeff() <= 1e-6 * std::max(1.0, fd.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("control examples") {
  SUBCASE("one-link arm held at rest at zero needs only gravity") {
    const nbs::PlanarArm arm = nbs::unit_arm(1);
    const nbs::NbsController c = exact_controller(arm, 1);
    const nbs::ReferenceSample r{vec({0.0}), vec({0.0}), vec({0.0})};
    const Vector u = nbs::nbs_control(c, vec({0.0}), vec({0.0}), r);
    CHECK(u(0) == doctest::Approx(9.8).epsilon(1e-12));
  }

  SUBCASE("on the reference the feedforward reproduces the reference acceleration") {
    const nbs::PlanarArm arm = nbs::unit_arm(3);
    const nbs::NbsController c = exact_controller(arm, 2);
    const nbs::ReferenceTrajectory ref = nbs::ReferenceTrajectory::sinusoid(3);
    for (double t : {0.0, 3.0, 12.0, 40.0}) {
      const nbs::ReferenceSample r = ref.at(t);
      const Vector u = nbs::nbs_control(c, r.q, r.qdot, r);
      const Vector qdd = nbs::forward_dynamics(arm, r.q, r.qdot, u, Vector::Zero(3));
      CHECK((qdd - r.qddot).cwiseAbs().maxCoeff() <= 1e-10);
    }
  }

  SUBCASE("control terms add up") {
    const nbs::PlanarArm arm = nbs::unit_arm(2);
    const nbs::NbsController c = exact_controller(arm, 4);
    ad::Tape tape;
    const nbs::BoundController b = nbs::bind(tape, c, nbs::Bind::Constant);
    const nbs::ReferenceSample r{vec({0.1, 0.9}), vec({0.05, -0.02}), vec({0.0, -0.01})};
    const Vector q = vec({0.5, 0.2}), qd = vec({-0.3, 0.8});
    const nbs::ControlTrace tr = nbs::nbs_control(b, tape.constant(Matrix(q)), tape.constant(Matrix(qd)), r);
    const Vector z2 = tr.z2.value().col(0);
    const Matrix M = nbs::mass_matrix<Matrix>(arm, Matrix(q));
    const Matrix C = nbs::coriolis<Matrix>(arm, Matrix(q), Matrix(qd));
    const Vector G = nbs::gravity<Matrix>(arm, Matrix(q)).col(0);
    const Vector expect = G + M * tr.phi_rate.value().col(0) + C * tr.phi.value().col(0) -
                          tr.phi_grad.value().col(0) - nbs::damping_matrix(c.damping, z2) * z2;
    CHECK((tr.u.value().col(0) - expect).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((tr.u.value().col(0) - nbs::nbs_control(c, q, qd, r)).norm() == 0.0);
  }
}

TEST_CASE("Lagrangian-derived model matches the exact model when z2 = 0") {
  const nbs::PlanarArm arm = nbs::unit_arm(3);
  const nbs::NbsController exact = exact_controller(arm, 8);
  nbs::NbsController derived = exact;
  derived.model = std::make_shared<const LagrangianArmModel>(arm);
  const nbs::ReferenceTrajectory ref = nbs::ReferenceTrajectory::sinusoid(3);
  std::mt19937_64 rng(21);
  for (int k = 0; k < 100; ++k) {
    const nbs::ReferenceSample r = ref.at(0.37 * k);
    const Vector q = r.q + gaussian(rng, 3, 0.5);
    // qdot = virtual signal puts the state on z2 = 0.
    const Vector qd = nbs::virtual_signal(exact.phi, q - r.q, r.qdot);
    const Vector ue = nbs::nbs_control(exact, q, qd, r);
    const Vector ul = nbs::nbs_control(derived, q, qd, r);
    CHECK((ue - ul).cwiseAbs().maxCoeff() <= 1e-9 * std::max(1.0, ue.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("closed-loop Lyapunov derivative") {
  const nbs::PlanarArm arm = nbs::unit_arm(2);
  const nbs::NbsController c = exact_controller(arm, 6);
  const nbs::ReferenceTrajectory ref = nbs::ReferenceTrajectory::sinusoid(2);
  std::mt19937_64 rng(99);
  const double h = 1e-6;
  int checked = 0;
  for (int k = 0; k < 1000; ++k) {
    const double t = 0.1 * k;
    const nbs::ReferenceSample r = ref.at(t);
    const Vector q = r.q + gaussian(rng, 2), qd = r.qdot + gaussian(rng, 2);
    const Vector u = nbs::nbs_control(c, q, qd, r);
    const Vector qdd = nbs::forward_dynamics(arm, q, qd, u, Vector::Zero(2));
    const nbs::TrackingErrors e = nbs::tracking_errors(c.phi, q, qd, r);
    const Vector g = nbs::phi_grad(c.phi, e.z1);
    const double vdot = -g.squaredNorm() - e.z2.dot(nbs::damping_matrix(c.damping, e.z2) * e.z2);
    REQUIRE(vdot <= 0.0);
    if (k % 10 == 0) {
      // Frozen control over the small step keeps V's flow derivative intact.
      const double vp = lyapunov_at(c, arm, ref, t + h, q + h * qd, qd + h * qdd);
      const double vm = lyapunov_at(c, arm, ref, t - h, q - h * qd, qd - h * qdd);
      CHECK((vp - vm) / (2 * h) == doctest::Approx(vdot).epsilon(1e-5).scale(1.0));
      ++checked;
    }
  }
  CHECK(checked == 100);
}

TEST_CASE("policy evaluation") {
  const nbs::PlanarArm arm = nbs::unit_arm(2);
  const nbs::NbsController c = exact_controller(arm, 12);
  const nbs::ReferenceTrajectory ref = nbs::ReferenceTrajectory::sinusoid(2);
  nbs::NbsPolicy policy(c, ref);
  const Vector q = vec({0.4, -0.2}), qd = vec({0.1, 0.3});
  const Vector first = policy.control(1.5, q, qd);
  for (int k = 0; k < 5; ++k) CHECK((policy.control(1.5, q, qd) - first).norm() == 0.0);
  CHECK((first - nbs::nbs_control(c, q, qd, ref.at(1.5))).norm() == 0.0);
  CHECK_THROWS_AS(nbs::NbsPolicy(c, nbs::ReferenceTrajectory::sinusoid(3)), nbs::DimensionMismatch);
}

TEST_CASE("controller construction") {
  const nbs::PlanarArm arm = nbs::unit_arm(2);
  auto model = std::make_shared<const nbs::ExactModel>(arm);
  nbs::ControllerShape bad;
  bad.srelu_width = 0.0;
  CHECK_THROWS_AS(nbs::make_controller(model, bad, 1), nbs::ConfigError);
  CHECK_THROWS_AS(nbs::make_controller(nullptr, {}, 1), nbs::ConfigError);

  nbs::NbsController a = nbs::make_controller(model, {}, 7);
  nbs::NbsController b = nbs::make_controller(model, {}, 7);
  const nbs::ParamList pa = a.parameters(), pb = b.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].name == pb[i].name);
    CHECK((*pa[i].value - *pb[i].value).norm() == 0.0);
  }
  CHECK(pa.front().name.rfind("phi.", 0) == 0);
  CHECK(pa.back().name.rfind("damping.", 0) == 0);
}

TEST_CASE("pid policy") {
  nbs::PidGains gains;
  gains.clamp = 0.05;
  const nbs::ReferenceTrajectory ref = nbs::ReferenceTrajectory::constant(vec({1.0, 0.0}));
  nbs::PidPolicy pid(gains, ref);

  SUBCASE("zero error gives zero control") {
    const Vector u = pid.control(0.0, vec({1.0, 0.0}), vec({0.0, 0.0}));
    CHECK(u.norm() == 0.0);
  }

  SUBCASE("proportional and derivative terms") {
    const Vector u = pid.control(0.0, vec({0.5, 0.0}), vec({0.0, 2.0}));
    CHECK(u(0) == doctest::Approx(50.0 * 0.5));
    CHECK(u(1) == doctest::Approx(-20.0 * 2.0));
  }

  SUBCASE("trapezoid integral with clamp") {
    const Vector q = vec({0.0, 0.0}), qd = vec({0.0, 0.0});
    pid.commit(0.0, q, qd, 0.01);  // first commit only records the error
    CHECK(pid.integral().norm() == 0.0);
    pid.commit(0.01, q, qd, 0.01);
    CHECK(pid.integral()(0) == doctest::Approx(0.01));
    for (int k = 0; k < 20; ++k) pid.commit(0.01 * (k + 2), q, qd, 0.01);
    CHECK(pid.integral()(0) == doctest::Approx(0.05));
    const Vector u = pid.control(0.3, q, qd);
    CHECK(u(0) == doctest::Approx(50.0 + 10.0 * 0.05));
    pid.reset();
    CHECK(pid.integral().norm() == 0.0);
  }

  SUBCASE("negative gains are rejected") {
    nbs::PidGains g;
    g.kd = -1.0;
    CHECK_THROWS_AS(nbs::PidPolicy(g, ref), nbs::ConfigError);
  }
}
