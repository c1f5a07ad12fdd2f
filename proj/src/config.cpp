#include "nbs/config.hpp"

#include <cmath>
#include <set>

#include "nbs/errors.hpp"
#include "nbs/serialize.hpp"

namespace nbs {

using nlohmann::json;

namespace {

// Reads keys from one JSON object and rejects any key it was not asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where("") + " must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where(key) + " has the wrong type");
    }
  }

  void get(const char* key, Vector& out) {
    std::vector<double> v;
    seen_.insert(key);
    if (!j_.contains(key)) return;
    get(key, v);
    out = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
  }

  bool has(const char* key) const { return j_.contains(key); }

  Section child(const char* key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Section(j_.contains(key) ? j_.at(key) : empty, where(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown key " + where(it.key()));
    }
  }

  std::string where(const std::string& key) const {
    if (path_.empty()) return key;
    return key.empty() ? path_ : path_ + "." + key;
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

}  // namespace

ReferenceTrajectory RunConfig::reference_trajectory() const {
  if (reference.kind == "constant") {
    return ReferenceTrajectory::constant(reference.q.size() ? reference.q : Vector(Vector::Zero(arm.dof())));
  }
  return ReferenceTrajectory::sinusoid(arm.dof(), reference.omega);
}

void RunConfig::validate() const {
  try {
    arm.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("plant: ") + e.what());
  }
  const Eigen::Index n = arm.dof();
  auto dim = [n](const Vector& v, const char* field) {
    require(v.size() == 0 || v.size() == n, std::string(field) + " must have one entry per joint");
  };
  require(reference.kind == "sinusoid" || reference.kind == "constant",
          "reference.kind must be \"sinusoid\" or \"constant\"");
  require(std::isfinite(reference.omega), "reference.omega must be finite");
  dim(reference.q, "reference.q");
  sim.validate();
  dim(sim.q0, "sim.q0");
  dim(sim.qdot0, "sim.qdot0");
  dim(sim.disturbance.tau, "sim.disturbance");
  train.validate();
  dim(train.q0, "train.q0");
  dim(train.qdot0, "train.qdot0");
  require(metrics.window > 0.0, "metrics.window must be positive");
  require(metrics.threshold > 0.0, "metrics.threshold must be positive");
  const ControllerShape& s = controller.shape;
  require(!s.psi_widths.empty(), "controller.psi_widths must be non-empty");
  require(!s.damping_widths.empty(), "controller.damping_widths must be non-empty");
  for (int w : s.psi_widths) require(w > 0, "controller.psi_widths entries must be positive");
  for (int w : s.damping_widths) require(w > 0, "controller.damping_widths entries must be positive");
  require(s.s_scale > 0.0, "controller.s_scale must be positive");
  require(s.srelu_width > 0.0, "controller.srelu_width must be positive");
  require(s.m >= 0.0, "controller.m must be non-negative");
  require(s.ridge >= 0.0, "controller.ridge must be non-negative");
  const PidGains& g = controller.pid;
  require(g.kp >= 0.0 && g.ki >= 0.0 && g.kd >= 0.0 && g.clamp >= 0.0, "pid gains must be non-negative");
  require(sweep.count >= 1, "sweep.count must be at least 1");
  require(sweep.alpha_hi > sweep.alpha_lo, "sweep.alpha_hi must exceed sweep.alpha_lo");
  dim(sweep.tau, "sweep.tau");
  require(data.samples >= 2, "data.samples must be at least 2");
  require(data.dt > 0.0, "data.dt must be positive");
  require(data.initial.size() == 0 || data.initial.size() == 2 * n, "data.initial must stack q and qdot");
  require(!lnn.hidden.empty(), "lnn.hidden must be non-empty");
  for (int w : lnn.hidden) require(w > 0, "lnn.hidden entries must be positive");
  require(lnn.eps_m > 0.0, "lnn.eps_m must be positive");
  require(lnn.train.epochs >= 0, "lnn.epochs must be non-negative");
  require(lnn.train.batch >= 1, "lnn.batch must be at least 1");
  require(lnn.train.lr > 0.0, "lnn.lr must be positive");
  require(lnn.train.lr_decay > 0.0 && lnn.train.lr_decay <= 1.0, "lnn.lr_decay must lie in (0, 1]");
  require(lnn.train.holdout_fraction > 0.0 && lnn.train.holdout_fraction < 1.0,
          "lnn.holdout_fraction must lie in (0, 1)");
  require(lnn.eval_states >= 1, "lnn.eval_states must be at least 1");
  require(lnn.train.Q.size() == 0 || lnn.train.Q.rows() == n, "lnn.Q must be n x n");
}

RunConfig parse_run_config(const json& j) {
  RunConfig c;
  Section root(j, "");
  int version = 0;
  root.get("version", version);
  require(root.has("version"), "version is required");
  require(version == kConfigVersion, "version must be " + std::to_string(kConfigVersion));
  require(root.has("seed"), "seed is required");
  root.get("seed", c.seed);
  root.get("label", c.label);

  {
    Section s = root.child("plant");
    int links = 2;
    s.get("links", links);
    require(links >= 1, "plant.links must be at least 1");
    c.arm = unit_arm(links);
    s.get("masses", c.arm.masses);
    s.get("lengths", c.arm.lengths);
    s.get("gravity", c.arm.gravity);
    s.finish();
  }
  {
    Section s = root.child("controller");
    std::string kind = "nbs", model = "exact";
    s.get("kind", kind);
    s.get("model", model);
    require(kind == "nbs" || kind == "pid", "controller.kind must be \"nbs\" or \"pid\"");
    require(model == "exact" || model == "learned", "controller.model must be \"exact\" or \"learned\"");
    c.controller.kind = kind == "pid" ? ControllerKind::Pid : ControllerKind::Nbs;
    c.controller.model = model == "learned" ? ModelKind::Learned : ModelKind::Exact;
    ControllerShape& sh = c.controller.shape;
    s.get("psi_widths", sh.psi_widths);
    s.get("damping_widths", sh.damping_widths);
    s.get("s_scale", sh.s_scale);
    s.get("srelu_width", sh.srelu_width);
    s.get("m", sh.m);
    s.get("ridge", sh.ridge);
    s.get("params", c.controller.params);
    s.get("lnn", c.controller.lnn);
    {
      Section p = s.child("pid");
      p.get("kp", c.controller.pid.kp);
      p.get("ki", c.controller.pid.ki);
      p.get("kd", c.controller.pid.kd);
      p.get("clamp", c.controller.pid.clamp);
      p.finish();
    }
    s.finish();
  }
  {
    Section s = root.child("reference");
    s.get("kind", c.reference.kind);
    s.get("omega", c.reference.omega);
    s.get("q", c.reference.q);
    s.finish();
  }
  {
    Section s = root.child("sim");
    s.get("dt", c.sim.dt);
    s.get("horizon", c.sim.horizon);
    s.get("q0", c.sim.q0);
    s.get("qdot0", c.sim.qdot0);
    s.get("disturbance", c.sim.disturbance.tau);
    s.get("zero_order_hold", c.sim.zero_order_hold);
    s.finish();
  }
  {
    Section s = root.child("train");
    s.get("horizon", c.train.horizon);
    s.get("dt", c.train.dt);
    s.get("epochs", c.train.epochs);
    s.get("lr", c.train.lr);
    s.get("lr_decay", c.train.lr_decay);
    s.get("alpha", c.train.alpha);
    s.get("q0", c.train.q0);
    s.get("qdot0", c.train.qdot0);
    s.get("zero_order_hold", c.train.zero_order_hold);
    s.finish();
  }
  {
    Section s = root.child("metrics");
    s.get("window", c.metrics.window);
    s.get("threshold", c.metrics.threshold);
    s.get("min_horizon", c.metrics.min_horizon);
    s.finish();
  }
  {
    Section s = root.child("sweep");
    s.get("alpha_lo", c.sweep.alpha_lo);
    s.get("alpha_hi", c.sweep.alpha_hi);
    s.get("count", c.sweep.count);
    s.get("tau", c.sweep.tau);
    s.finish();
  }
  {
    Section s = root.child("data");
    s.get("samples", c.data.samples);
    s.get("dt", c.data.dt);
    s.get("initial", c.data.initial);
    s.finish();
  }
  {
    Section s = root.child("lnn");
    s.get("hidden", c.lnn.hidden);
    s.get("eps_m", c.lnn.eps_m);
    s.get("epochs", c.lnn.train.epochs);
    s.get("batch", c.lnn.train.batch);
    s.get("lr", c.lnn.train.lr);
    s.get("lr_decay", c.lnn.train.lr_decay);
    s.get("holdout_fraction", c.lnn.train.holdout_fraction);
    s.get("dataset", c.lnn.dataset);
    s.get("output", c.lnn.output);
    s.get("eval_states", c.lnn.eval_states);
    std::vector<std::vector<double>> Q;
    s.get("Q", Q);
    if (!Q.empty()) {
      const auto n = static_cast<Eigen::Index>(Q.size());
      c.lnn.train.Q.resize(n, n);
      for (Eigen::Index r = 0; r < n; ++r) {
        require(static_cast<Eigen::Index>(Q[static_cast<std::size_t>(r)].size()) == n, "lnn.Q must be square");
        for (Eigen::Index k = 0; k < n; ++k) c.lnn.train.Q(r, k) = Q[static_cast<std::size_t>(r)][static_cast<std::size_t>(k)];
      }
    }
    s.finish();
  }
  root.finish();
  if (c.sweep.tau.size() == 0) c.sweep.tau = Vector::Ones(c.arm.dof());
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  try {
    return parse_run_config(read_json_file(path));
  } catch (const MissingArtifact&) {
    throw ConfigError("config file not found: " + path.string());
  }
}

}  // namespace nbs
