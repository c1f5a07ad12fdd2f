#pragma once

#include <vector>

#include "nbs/nets.hpp"

namespace nbs {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Moments are allocated on the first step.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(const ParamList& params, const std::vector<Matrix>& grads, double lr);
  long steps() const { return t_; }

 private:
  AdamConfig cfg_;
  long t_ = 0;
  std::vector<Matrix> m_, v_;
};

/// Learning rate lr0 * decay^epoch.
inline double decayed_rate(double lr0, double decay, int epoch) {
  double lr = lr0;
  for (int i = 0; i < epoch; ++i) lr *= decay;
  return lr;
}

}  // namespace nbs
