#include <cmath>
#include <random>

#include "doctest.h"
#include "nbs/numerics.hpp"

using nbs::Matrix;
using nbs::Vector;

namespace {

Matrix random_symmetric(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) a(i, j) = a(j, i) = u(rng);
  return a;
}

double inf_norm(const Matrix& a) { return a.cwiseAbs().rowwise().sum().maxCoeff(); }

}  // namespace

TEST_CASE("cholesky examples") {
  CHECK(nbs::cholesky(Matrix::Identity(2, 2)).isApprox(Matrix::Identity(2, 2)));

  Matrix a(2, 2);
  a << 4, 2, 2, 2;
  Matrix expected(2, 2);
  expected << 2, 0, 1, 1;
  const Matrix l = nbs::cholesky(a);
  CHECK((l - expected).norm() < 1e-14);
  CHECK((l * l.transpose() - a).norm() < 1e-12);

  Matrix indefinite(2, 2);
  indefinite << 1, 2, 2, 1;
  CHECK_THROWS_AS(nbs::cholesky(indefinite), nbs::NotPositiveDefinite);
}

TEST_CASE("sym_eig examples") {
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 2;
  d(1, 1) = 1;
  nbs::SymEig e = nbs::sym_eig(d);
  CHECK(e.values(0) == doctest::Approx(2.0));
  CHECK(e.values(1) == doctest::Approx(1.0));
  CHECK(std::abs(e.vectors(0, 0)) == doctest::Approx(1.0));
  CHECK(std::abs(e.vectors(1, 1)) == doctest::Approx(1.0));

  Matrix swap(2, 2);
  swap << 0, 1, 1, 0;
  e = nbs::sym_eig(swap);
  CHECK(e.values(0) == doctest::Approx(1.0));
  CHECK(e.values(1) == doctest::Approx(-1.0));

  Matrix bad(2, 2);
  bad << 0, 1, 0, 0;
  CHECK_THROWS_AS(nbs::sym_eig(bad), nbs::NonSymmetric);
}

TEST_CASE("sym_eig reconstruction and orthonormality on random matrices") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + trial % 6;
    const Matrix a = random_symmetric(rng, n);
    const nbs::SymEig e = nbs::sym_eig(a);
    const Matrix rebuilt = e.vectors * e.values.asDiagonal() * e.vectors.transpose();
    REQUIRE(inf_norm(rebuilt - a) <= 1e-8);
    REQUIRE(inf_norm(e.vectors.transpose() * e.vectors - Matrix::Identity(n, n)) <= 1e-8);
    for (int i = 0; i < n; ++i) {
      REQUIRE((a * e.vectors.col(i) - e.values(i) * e.vectors.col(i)).norm() <= 1e-8);
      if (i > 0) REQUIRE(e.values(i - 1) >= e.values(i));
    }
  }
}

TEST_CASE("solve_spd examples and random residuals") {
  Vector b(2);
  b << 3, -4;
  CHECK((nbs::solve_spd(Matrix::Identity(2, 2), b) - b).norm() < 1e-15);

  Matrix a(2, 2);
  a << 5, 2, 2, 1;
  Vector rhs(2);
  rhs << 5, 2;
  Vector x = nbs::solve_spd(a, rhs);
  CHECK(x(0) == doctest::Approx(1.0));
  CHECK(std::abs(x(1)) < 1e-12);

  Matrix two = 2.0 * Matrix::Identity(2, 2);
  rhs << 4, 6;
  x = nbs::solve_spd(two, rhs);
  CHECK(x(0) == doctest::Approx(2.0));
  CHECK(x(1) == doctest::Approx(3.0));

  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 1 + trial % 6;
    Matrix bm(n, n);
    Vector r(n);
    for (int i = 0; i < n; ++i) {
      r(i) = g(rng);
      for (int j = 0; j < n; ++j) bm(i, j) = g(rng);
    }
    const Matrix spd = bm.transpose() * bm + Matrix::Identity(n, n);
    const Vector sol = nbs::solve_spd(spd, r);
    REQUIRE((spd * sol - r).norm() <= 1e-9 * r.norm());
  }
}

TEST_CASE("rk4_step examples") {
  auto zero = [](double, const Vector& y) { return Vector(Vector::Zero(y.size())); };
  nbs::OdeState s{0.0, Vector::Ones(1)};
  nbs::OdeState out = nbs::rk4_step(zero, s, 0.01);
  CHECK(out.y(0) == 1.0);
  CHECK(out.t == doctest::Approx(0.01));

  auto growth = [](double, const Vector& y) { return y; };
  out = nbs::rk4_step(growth, s, 0.01);
  CHECK(std::abs(out.y(0) - std::exp(0.01)) < 1e-10);

  auto oscillator = [](double, const Vector& y) {
    Vector d(2);
    d << y(1), -y(0);
    return d;
  };
  Vector y0(2);
  y0 << 1, 0;
  out = nbs::rk4_step(oscillator, nbs::OdeState{0.0, y0}, 0.01);
  CHECK(std::abs(out.y(0) - std::cos(0.01)) < 1e-9);
  CHECK(std::abs(out.y(1) + std::sin(0.01)) < 1e-9);

  CHECK_THROWS_AS(nbs::rk4_step(growth, s, 0.0), nbs::Error);
  auto blowup = [](double, const Vector& y) { return Vector(y / 0.0); };
  CHECK_THROWS_AS(nbs::rk4_step(blowup, s, 0.01), nbs::NonFiniteDerivative);
}

TEST_CASE("rk4 global error and fourth-order convergence") {
  auto growth = [](double, const Vector& y) { return y; };
  auto integrate = [&](double dt) {
    nbs::OdeState s{0.0, Vector::Ones(1)};
    const int steps = static_cast<int>(std::lround(1.0 / dt));
    for (int k = 0; k < steps; ++k) s = nbs::rk4_step(growth, s, dt);
    return std::abs(s.y(0) - std::exp(1.0)) / std::exp(1.0);
  };
  const double e1 = integrate(1e-3);
  CHECK(e1 <= 1e-10);
  const double coarse = integrate(0.02);
  const double fine = integrate(0.01);
  CHECK(coarse / fine == doctest::Approx(16.0).epsilon(0.1));
}
