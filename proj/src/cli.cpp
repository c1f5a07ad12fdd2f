#include "nbs/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "nbs/config.hpp"
#include "nbs/errors.hpp"
#include "nbs/serialize.hpp"

namespace nbs {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Table I row order; anything else follows alphabetically.
const std::vector<std::string> kReportOrder = {
    "PID controller",
    "NBS tracking controller (without training)",
    "NBS tracking controller (after training)",
};

struct Context {
  RunConfig cfg;
  fs::path out;
  int jobs = 1;
  std::ostream* log = nullptr;
};

fs::path resolve(const fs::path& out, const std::string& name) {
  const fs::path p(name);
  return p.is_absolute() ? p : out / p;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string format_vector(const Vector& v) {
  std::ostringstream os;
  os << '[';
  for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? "," : "") << std::fixed << std::setprecision(1) << v(i);
  os << ']';
  return os.str();
}

std::string derive_label(const RunConfig& cfg) {
  if (!cfg.label.empty()) return cfg.label;
  if (cfg.controller.kind == ControllerKind::Pid) return "PID controller";
  if (cfg.controller.model == ModelKind::Learned) return "NBS tracking controller (learned model)";
  if (cfg.sim.disturbance.active()) {
    std::ostringstream os;
    os << "NBS tracking controller (alpha=" << cfg.train.alpha << ", tau_d=" << format_vector(cfg.sim.disturbance.tau)
       << ")";
    return os.str();
  }
  return cfg.controller.params.empty() ? "NBS tracking controller (without training)"
                                       : "NBS tracking controller (after training)";
}

std::shared_ptr<const DynamicsModel> build_model(const Context& ctx) {
  if (ctx.cfg.controller.model == ModelKind::Exact) return std::make_shared<const ExactModel>(ctx.cfg.arm);
  const fs::path path = resolve(ctx.out, ctx.cfg.controller.lnn);
  auto net = std::make_shared<const LagrangianNet>(lagrangian_from_json(read_json_file(path)));
  if (net->dof != ctx.cfg.arm.dof()) throw DimensionMismatch(path.string() + ": network dimension differs from plant");
  return std::make_shared<const LearnedModel>(std::move(net));
}

NbsController build_controller(const Context& ctx) {
  auto model = build_model(ctx);
  if (ctx.cfg.controller.params.empty()) return make_controller(model, ctx.cfg.controller.shape, ctx.cfg.seed);
  return controller_from_json(read_json_file(resolve(ctx.out, ctx.cfg.controller.params)), model);
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  return os;
}

Dataset load_dataset(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw MissingArtifact("missing dataset: " + path.string());
  return read_dataset_csv(is);
}

void cmd_simulate(const Context& ctx) {
  const RunConfig& cfg = ctx.cfg;
  const ArmPlant plant(cfg.arm);
  const ReferenceTrajectory ref = cfg.reference_trajectory();
  RolloutLog log;
  std::optional<NbsController> c;
  if (cfg.controller.kind == ControllerKind::Pid) {
    PidPolicy pid(cfg.controller.pid, ref);
    log = rollout(plant, pid, ref, cfg.sim);
  } else {
    c = build_controller(ctx);
    log = rollout(plant, *c, ref, cfg.sim);
  }
  std::ofstream csv = open_out(ctx.out / "rollout.csv");
  write_rollout_csv(csv, log);
  const Metrics m = metrics(log, cfg.metrics);
  json j = {{"label", derive_label(cfg)},
            {"seed", cfg.seed},
            {"rows", log.size()},
            {"steady_state_error", m.steady_state_error},
            {"convergence_time", number_or_null(m.convergence_time)},
            {"converged", m.converged},
            {"max_lyapunov_increase", c ? number_or_null(max_lyapunov_increase(log)) : json(nullptr)}};
  write_json_file(ctx.out / "metrics.json", j);
  *ctx.log << j["label"].get<std::string>() << ": steady " << m.steady_state_error << ", convergence "
           << m.convergence_time << " s\n";
}

void cmd_train(const Context& ctx) {
  const RunConfig& cfg = ctx.cfg;
  if (cfg.controller.kind != ControllerKind::Nbs) throw ConfigError("train: controller.kind must be \"nbs\"");
  NbsController c = make_controller(build_model(ctx), cfg.controller.shape, cfg.seed);
  TrainConfig tc = cfg.train;
  tc.progress = [&](int epoch, double loss) {
    if (epoch % 20 == 0 || epoch + 1 == tc.epochs) *ctx.log << "epoch " << epoch << " loss " << loss << '\n';
  };
  const TrainResult r = train_controller(c, ArmPlant(cfg.arm), cfg.reference_trajectory(), tc);
  const std::string name = cfg.controller.params.empty() ? "controller.json" : cfg.controller.params;
  write_json_file(resolve(ctx.out, name), controller_to_json(c, cfg.controller.shape));
  std::ofstream csv = open_out(ctx.out / "train_loss.csv");
  csv.precision(17);
  csv << "epoch,loss,stage_cost,regularizer\n";
  for (std::size_t e = 0; e < r.loss.size(); ++e) {
    csv << e << ',' << r.loss[e] << ',' << r.stage_cost[e] << ',' << r.regularizer[e] << '\n';
  }
}

void cmd_sweep(const Context& ctx) {
  const RunConfig& cfg = ctx.cfg;
  SweepConfig sc;
  sc.alphas = alpha_grid(cfg.sweep.alpha_lo, cfg.sweep.alpha_hi, cfg.sweep.count);
  sc.tau = cfg.sweep.tau;
  sc.shape = cfg.controller.shape;
  sc.train = cfg.train;
  sc.sim = cfg.sim;
  sc.metrics = cfg.metrics;
  sc.seed = cfg.seed;
  sc.jobs = ctx.jobs;
  sc.progress = [&](std::size_t i, double steady) {
    *ctx.log << "alpha " << sc.alphas[i] << " steady " << steady << '\n';
  };
  const std::vector<SweepRow> rows = alpha_sweep(cfg.arm, cfg.reference_trajectory(), sc);
  std::ofstream csv = open_out(ctx.out / "sweep.csv");
  write_sweep_csv(csv, rows);
  json j = json::array();
  for (const SweepRow& r : rows) {
    j.push_back({{"alpha", r.alpha},
                 {"steady", r.steady},
                 {"bound", number_or_null(r.bound)},
                 {"convergence_time", number_or_null(r.convergence)},
                 {"hessian_min_at_origin", r.hessian_min}});
  }
  write_json_file(ctx.out / "sweep.json", {{"seed", cfg.seed}, {"disturbance_bound", sc.tau.squaredNorm()}, {"rows", j}});
}

void cmd_gen_data(const Context& ctx) {
  const Dataset d = generate_free_motion(ctx.cfg.arm, ctx.cfg.data);
  std::ofstream csv = open_out(resolve(ctx.out, ctx.cfg.lnn.dataset));
  write_dataset_csv(csv, d);
  *ctx.log << "wrote " << d.size() << " samples\n";
}

void cmd_train_lnn(const Context& ctx) {
  const RunConfig& cfg = ctx.cfg;
  const Dataset data = load_dataset(resolve(ctx.out, cfg.lnn.dataset));
  if (data.dof() != cfg.arm.dof()) throw DimensionMismatch("train-lnn: dataset dimension differs from plant");
  LagrangianNet net = make_lagrangian_net(cfg.arm.dof(), cfg.lnn.hidden, cfg.lnn.eps_m);
  init_lagrangian_net(net, cfg.seed);
  LnnTrainConfig tc = cfg.lnn.train;
  tc.seed = cfg.seed;
  tc.progress = [&](int epoch, double loss, double holdout) {
    if (epoch % 10 == 0 || epoch + 1 == tc.epochs) {
      *ctx.log << "epoch " << epoch << " loss " << loss << " held-out " << holdout << '\n';
    }
  };
  const LnnTrainResult r = train_lnn(net, data, tc);
  write_json_file(resolve(ctx.out, cfg.lnn.output), lagrangian_to_json(net, cfg.lnn.hidden));
  std::ofstream csv = open_out(ctx.out / "lnn_train.csv");
  csv.precision(17);
  csv << "epoch,train_loss,holdout_mse\n";
  for (std::size_t e = 0; e < r.holdout_mse.size(); ++e) {
    csv << e << ',';
    if (e > 0) csv << r.train_loss[e - 1];
    csv << ',' << r.holdout_mse[e] << '\n';
  }
  const double first = r.holdout_mse.front(), last = r.holdout_mse.back();
  write_json_file(ctx.out / "lnn_metrics.json", {{"seed", cfg.seed},
                                                  {"holdout_mse_initial", first},
                                                  {"holdout_mse_final", last},
                                                  {"improvement", number_or_null(first / last)}});
}

void cmd_eval_lnn(const Context& ctx) {
  const RunConfig& cfg = ctx.cfg;
  const Dataset data = load_dataset(resolve(ctx.out, cfg.lnn.dataset));
  const LagrangianNet net = lagrangian_from_json(read_json_file(resolve(ctx.out, cfg.lnn.output)));
  if (net.dof != data.dof() || net.dof != cfg.arm.dof()) throw DimensionMismatch("eval-lnn: dimensions differ");
  const Eigen::Index count = std::min<Eigen::Index>(cfg.lnn.eval_states, data.size());
  double inertia_mean = 0.0, inertia_max = 0.0, residual_max = 0.0;
  for (Eigen::Index i = 0; i < count; ++i) {
    const Eigen::Index k = i * (data.size() - 1) / std::max<Eigen::Index>(count - 1, 1);
    const Vector q = data.q.col(k), qd = data.qdot.col(k), u = data.u.col(k);
    const double e = inertia_relative_error(net, cfg.arm, q, qd);
    inertia_mean += e / static_cast<double>(count);
    inertia_max = std::max(inertia_max, e);
    residual_max = std::max(residual_max, decomposition_residual(net, q, qd, u));
  }
  const json j = {{"samples", data.size()},
                  {"acceleration_mse", acceleration_mse(net, data)},
                  {"eval_states", count},
                  {"inertia_relative_error_mean", inertia_mean},
                  {"inertia_relative_error_max", inertia_max},
                  {"decomposition_residual_max", residual_max}};
  write_json_file(ctx.out / "lnn_eval.json", j);
  *ctx.log << j.dump(2) << '\n';
}

void cmd_report(const fs::path& dir, std::ostream& out) {
  if (!fs::is_directory(dir)) throw MissingArtifact("report: missing directory " + dir.string());
  std::vector<fs::path> files;
  if (fs::exists(dir / "metrics.json")) files.push_back(dir / "metrics.json");
  for (const fs::directory_entry& e : fs::directory_iterator(dir)) {
    if (e.is_directory() && fs::exists(e.path() / "metrics.json")) files.push_back(e.path() / "metrics.json");
  }
  if (files.empty()) throw MissingArtifact("report: no metrics.json under " + dir.string());
  struct Row {
    std::string label;
    json steady, convergence;
  };
  std::vector<Row> rows;
  for (const fs::path& f : files) {
    const json j = read_json_file(f);
    try {
      rows.push_back({j.at("label").get<std::string>(), j.at("steady_state_error"), j.at("convergence_time")});
    } catch (const json::exception&) {
      throw ConfigError(f.string() + ": not a metrics file");
    }
  }
  auto rank = [](const std::string& label) {
    const auto it = std::find(kReportOrder.begin(), kReportOrder.end(), label);
    return static_cast<std::size_t>(it - kReportOrder.begin());
  };
  std::stable_sort(rows.begin(), rows.end(), [&](const Row& a, const Row& b) {
    return rank(a.label) != rank(b.label) ? rank(a.label) < rank(b.label) : a.label < b.label;
  });
  std::ostringstream csv;
  csv << "controller,steady_state_error,convergence_time\n";
  for (const Row& r : rows) {
    csv << '"' << r.label << "\"," << r.steady.dump() << ',' << (r.convergence.is_null() ? "inf" : r.convergence.dump())
        << '\n';
  }
  std::ofstream os = open_out(dir / "summary.csv");
  os << csv.str();
  out << csv.str();
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Neural backstepping tracking control and Lagrangian dynamics learning"};
  app.require_subcommand(1);
  std::string config_path, out_dir = ".";
  std::optional<std::uint64_t> seed;
  int jobs = 1;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "run configuration (JSON)")->required();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "override the configured seed");
  };
  struct Command {
    const char* name;
    const char* help;
    void (*run)(const Context&);
  };
  const Command commands[] = {
      {"simulate", "closed-loop rollout; writes rollout.csv and metrics.json", cmd_simulate},
      {"train", "train controller parameters by BPTT", cmd_train},
      {"sweep-alpha", "disturbance sweep over the curvature threshold", cmd_sweep},
      {"gen-data", "free-motion dataset for the dynamics learner", cmd_gen_data},
      {"train-lnn", "fit the Lagrangian network to a dataset", cmd_train_lnn},
      {"eval-lnn", "evaluate a fitted Lagrangian network", cmd_eval_lnn},
  };
  std::vector<CLI::App*> subs;
  for (const Command& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    add_common(sub);
    if (std::string(c.name) == "sweep-alpha") sub->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
    subs.push_back(sub);
  }
  std::string report_dir;
  CLI::App* report = app.add_subcommand("report", "aggregate metrics.json files into summary.csv");
  report->add_option("dir", report_dir, "directory holding run subdirectories");
  report->add_option("--out", out_dir, "same as dir");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (report->parsed()) {
      cmd_report(report_dir.empty() ? fs::path(out_dir) : fs::path(report_dir), out);
      return 0;
    }
    Context ctx;
    ctx.cfg = load_run_config(config_path);
    if (seed) ctx.cfg.seed = *seed;
    ctx.out = out_dir;
    ctx.jobs = jobs;
    ctx.log = &err;
    fs::create_directories(ctx.out);
    for (std::size_t i = 0; i < subs.size(); ++i) {
      if (subs[i]->parsed()) commands[i].run(ctx);
    }
    return 0;
  } catch (const NonFinite& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const MissingArtifact& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const DimensionMismatch& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const HorizonTooShort& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const NotPositiveDefinite& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace nbs
