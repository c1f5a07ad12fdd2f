#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "nbs/controller.hpp"

namespace nbs {

/// Parameter files are JSON:
///   {"format": "nbs-params", "version": 1, "kind": ..., "shape": {...},
///    "tensors": [{"name", "rows", "cols", "data": [row-major values]}]}
/// Doubles are written in shortest round-trip form, so reloads are bit-exact.
inline constexpr int kParamsVersion = 1;

nlohmann::json tensors_to_json(const ParamList& params);
/// Copies tensors into `params` by name; every name must appear once with
/// matching dimensions.
void tensors_from_json(const nlohmann::json& j, const ParamList& params);

nlohmann::json controller_to_json(NbsController& c, const ControllerShape& shape);
NbsController controller_from_json(const nlohmann::json& j, std::shared_ptr<const DynamicsModel> model);

nlohmann::json lagrangian_to_json(LagrangianNet& net, const std::vector<int>& hidden);
LagrangianNet lagrangian_from_json(const nlohmann::json& j);

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);
/// Throws MissingArtifact naming the path when the file does not exist.
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace nbs
