#include "nbs/serialize.hpp"

#include <fstream>
#include <map>

#include "nbs/errors.hpp"

namespace nbs {

using nlohmann::json;

namespace {

void check_header(const json& j, const char* kind) {
  if (!j.is_object() || j.value("format", "") != "nbs-params") throw ConfigError("params: not an nbs-params file");
  if (j.value("version", 0) != kParamsVersion) {
    throw ConfigError("params: unsupported version " + j.value("version", json()).dump());
  }
  if (j.value("kind", "") != kind) {
    throw ConfigError(std::string("params: expected kind '") + kind + "', found '" + j.value("kind", "") + "'");
  }
}

std::vector<int> int_list(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_array()) throw ConfigError(std::string("params: shape.") + key + " missing");
  return j[key].get<std::vector<int>>();
}

}  // namespace

json tensors_to_json(const ParamList& params) {
  json out = json::array();
  for (const ParamRef& p : params) {
    const Matrix& m = *p.value;
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    }
    out.push_back({{"name", p.name}, {"rows", m.rows()}, {"cols", m.cols()}, {"data", data}});
  }
  return out;
}

void tensors_from_json(const json& j, const ParamList& params) {
  if (!j.is_array()) throw ConfigError("params: tensors must be an array");
  std::map<std::string, const json*> by_name;
  for (const json& t : j) {
    const std::string name = t.value("name", "");
    if (!by_name.emplace(name, &t).second) throw ConfigError("params: duplicate tensor '" + name + "'");
  }
  if (by_name.size() != params.size()) {
    throw ConfigError("params: expected " + std::to_string(params.size()) + " tensors, found " +
                      std::to_string(by_name.size()));
  }
  for (const ParamRef& p : params) {
    const auto it = by_name.find(p.name);
    if (it == by_name.end()) throw ConfigError("params: missing tensor '" + p.name + "'");
    const json& t = *it->second;
    Matrix& m = *p.value;
    const auto data = t.at("data").get<std::vector<double>>();
    if (t.at("rows").get<Eigen::Index>() != m.rows() || t.at("cols").get<Eigen::Index>() != m.cols() ||
        static_cast<Eigen::Index>(data.size()) != m.size()) {
      throw DimensionMismatch("params: tensor '" + p.name + "' has the wrong shape");
    }
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = data[k++];
    }
  }
}

json controller_to_json(NbsController& c, const ControllerShape& shape) {
  return {{"format", "nbs-params"},
          {"version", kParamsVersion},
          {"kind", "controller"},
          {"shape",
           {{"dof", c.dof()},
            {"psi_widths", shape.psi_widths},
            {"damping_widths", shape.damping_widths},
            {"s_scale", shape.s_scale},
            {"srelu_width", shape.srelu_width},
            {"m", shape.m},
            {"ridge", shape.ridge}}},
          {"tensors", tensors_to_json(c.parameters())}};
}

NbsController controller_from_json(const json& j, std::shared_ptr<const DynamicsModel> model) {
  check_header(j, "controller");
  if (!model) throw ConfigError("params: missing dynamics model");
  try {
    const json& s = j.at("shape");
    ControllerShape shape;
    shape.psi_widths = int_list(s, "psi_widths");
    shape.damping_widths = int_list(s, "damping_widths");
    shape.s_scale = s.at("s_scale").get<double>();
    shape.srelu_width = s.at("srelu_width").get<double>();
    shape.m = s.at("m").get<double>();
    shape.ridge = s.at("ridge").get<double>();
    if (s.at("dof").get<Eigen::Index>() != model->dof()) {
      throw DimensionMismatch("params: controller was saved for a different number of joints");
    }
    NbsController c = make_controller(std::move(model), shape, 0);
    tensors_from_json(j.at("tensors"), c.parameters());
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("params: ") + e.what());
  }
}

json lagrangian_to_json(LagrangianNet& net, const std::vector<int>& hidden) {
  return {{"format", "nbs-params"},
          {"version", kParamsVersion},
          {"kind", "lagrangian"},
          {"shape", {{"dof", net.dof}, {"hidden", hidden}, {"eps_m", net.eps_m}}},
          {"tensors", tensors_to_json(net.parameters())}};
}

LagrangianNet lagrangian_from_json(const json& j) {
  check_header(j, "lagrangian");
  try {
    const json& s = j.at("shape");
    LagrangianNet net =
        make_lagrangian_net(s.at("dof").get<Eigen::Index>(), int_list(s, "hidden"), s.at("eps_m").get<double>());
    tensors_from_json(j.at("tensors"), net.parameters());
    return net;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("params: ") + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw MissingArtifact("missing file: " + path.string());
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace nbs
