#include "nbs/optim.hpp"

#include <cmath>

namespace nbs {

void Adam::step(const ParamList& params, const std::vector<Matrix>& grads, double lr) {
  if (params.size() != grads.size()) throw DimensionMismatch("adam: parameter/gradient count");
  if (m_.empty()) {
    for (const ParamRef& p : params) {
      m_.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
      v_.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
    }
  }
  if (m_.size() != params.size()) throw DimensionMismatch("adam: parameter set changed");
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& g = grads[i];
    if (g.rows() != params[i].value->rows() || g.cols() != params[i].value->cols()) {
      throw DimensionMismatch("adam: gradient shape for " + params[i].name);
    }
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    const auto mhat = (m_[i] / c1).array();
    const auto vhat = (v_[i] / c2).array();
    params[i].value->array() -= lr * mhat / (vhat.sqrt() + cfg_.epsilon);
  }
}

}  // namespace nbs
