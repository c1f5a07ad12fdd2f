#pragma once

#include <functional>
#include <memory>

#include "nbs/lnn.hpp"
#include "nbs/plants.hpp"

namespace nbs {

/// (q, qdot) -> (M, C, G) on whatever tape q lives on.
using ModelFn = std::function<ModelTermsVar(const ad::Var& q, const ad::Var& qdot)>;

/// Source of the M, C, G terms the controller cancels.
class DynamicsModel {
 public:
  virtual ~DynamicsModel() = default;
  virtual Eigen::Index dof() const = 0;
  /// Records any constants the model needs on `tape` once; the returned
  /// function may then be called repeatedly while those nodes stay alive.
  virtual ModelFn bind(ad::Tape& tape) const = 0;
};

class ExactModel : public DynamicsModel {
 public:
  explicit ExactModel(PlanarArm arm);
  Eigen::Index dof() const override { return arm_.dof(); }
  ModelFn bind(ad::Tape& tape) const override;
  const PlanarArm& arm() const { return arm_; }

 private:
  PlanarArm arm_;
};

/// M-hat, C-hat, G-hat from a Lagrangian network; parameters are constants.
class LearnedModel : public DynamicsModel {
 public:
  explicit LearnedModel(std::shared_ptr<const LagrangianNet> net);
  Eigen::Index dof() const override { return net_->dof; }
  ModelFn bind(ad::Tape& tape) const override;
  const LagrangianNet& net() const { return *net_; }

 private:
  std::shared_ptr<const LagrangianNet> net_;
};

}  // namespace nbs
