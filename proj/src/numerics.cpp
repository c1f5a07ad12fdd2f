#include "nbs/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace nbs {

namespace {
constexpr double kPivotFloor = 1e-14;
constexpr double kSymmetryTol = 1e-9;
constexpr double kJacobiTol = 1e-12;
constexpr int kJacobiMaxSweeps = 100;
}  // namespace

bool all_finite(const Matrix& m) { return m.allFinite(); }

double asymmetry(const Matrix& a) {
  if (a.rows() != a.cols()) throw DimensionMismatch("asymmetry: matrix is not square");
  return (a - a.transpose()).cwiseAbs().rowwise().sum().maxCoeff();
}

Matrix cholesky(const Matrix& a) {
  if (a.rows() != a.cols()) throw DimensionMismatch("cholesky: matrix is not square");
  const Eigen::Index n = a.rows();
  Matrix l = Matrix::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double pivot = a(j, j);
    for (Eigen::Index k = 0; k < j; ++k) pivot -= l(j, k) * l(j, k);
    if (!(pivot > kPivotFloor)) {
      throw NotPositiveDefinite("cholesky: pivot " + std::to_string(pivot) + " at index " +
                                std::to_string(j));
    }
    const double ljj = std::sqrt(pivot);
    l(j, j) = ljj;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

SymEig sym_eig(const Matrix& input) {
  if (input.rows() != input.cols()) throw DimensionMismatch("sym_eig: matrix is not square");
  if (asymmetry(input) > kSymmetryTol) throw NonSymmetric("sym_eig: matrix is not symmetric");
  const Eigen::Index n = input.rows();
  Matrix a = 0.5 * (input + input.transpose());
  Matrix v = Matrix::Identity(n, n);

  auto off_norm = [&] {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
  };
  // Absolute threshold for unit-scale inputs, relative for large ones.
  const double tol = kJacobiTol * std::max(1.0, a.norm());

  for (int sweep = 0; sweep < kJacobiMaxSweeps && off_norm() >= tol; ++sweep) {
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  // Stable so that ties keep their Jacobi order, which makes the reported
  // top eigenvector deterministic.
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index i, Eigen::Index j) { return a(i, i) > a(j, j); });
  SymEig out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    out.values(k) = a(order[k], order[k]);
    out.vectors.col(k) = v.col(order[k]);
  }
  return out;
}

double lambda_min(const Matrix& a) { return sym_eig(a).values.minCoeff(); }
double lambda_max(const Matrix& a) { return sym_eig(a).values.maxCoeff(); }

Matrix solve_spd(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw DimensionMismatch("solve_spd: rhs rows do not match");
  const Matrix l = cholesky(a);
  const auto lower = l.triangularView<Eigen::Lower>();
  Matrix y = lower.solve(b);
  return lower.transpose().solve(y);
}

Vector solve_spd(const Matrix& a, const Vector& b) {
  return solve_spd(a, Matrix(b)).col(0);
}

}  // namespace nbs
