#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"
#include "nbs/harness.hpp"

namespace nbs {

inline constexpr int kConfigVersion = 1;

enum class ControllerKind { Nbs, Pid };
enum class ModelKind { Exact, Learned };

struct ControllerConfig {
  ControllerKind kind = ControllerKind::Nbs;
  ModelKind model = ModelKind::Exact;
  ControllerShape shape;
  PidGains pid;
  std::string params;  // trained parameter file; empty = fresh initialization
  std::string lnn = "lnn.json";
};

struct ReferenceConfig {
  std::string kind = "sinusoid";  // or "constant"
  double omega = 0.1;
  Vector q;  // constant target
};

struct SweepSettings {
  double alpha_lo = 0.2;
  double alpha_hi = 2.0;
  int count = 40;
  Vector tau;  // defaults to ones
};

struct LnnSettings {
  std::vector<int> hidden{32, 32, 32};
  double eps_m = 1e-3;
  LnnTrainConfig train;
  std::string dataset = "dataset.csv";
  std::string output = "lnn.json";
  int eval_states = 100;
};

/// Everything a CLI command needs. Every section is optional except
/// "version" and "seed"; unknown keys are rejected at every level.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string label;  // report row; derived when empty
  PlanarArm arm = unit_arm(2);
  ControllerConfig controller;
  ReferenceConfig reference;
  SimConfig sim;
  TrainConfig train;
  MetricsConfig metrics;
  SweepSettings sweep;
  DataGenConfig data;
  LnnSettings lnn;

  ReferenceTrajectory reference_trajectory() const;
  /// Checks every section; messages name the offending field.
  void validate() const;
};

RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace nbs
