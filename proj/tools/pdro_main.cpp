// Copyright 2026 the pdro authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line driver: wires run configurations to solves and experiments
// with reproducible artifacts (manifest, effective config echo, CSV reports).

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "pdro/config.hpp"
#include "pdro/conic/sdpa.hpp"
#include "pdro/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pdro;

namespace {

struct Cli {
  std::string config_path;
  std::string out_dir = "out";
  std::string cone = "";
  std::string epsilon = "";
  std::string gamma = "";
  std::string constructors = "";
  std::string methods = "";
  double tol = -1.0;
  long seed = -1;
  int parallel = -1;
  bool paper_scale = false;
  bool verbose = false;
};

struct Artifacts {
  fs::path dir;
  json manifest;
  std::chrono::steady_clock::time_point t0 =
      std::chrono::steady_clock::now();

  explicit Artifacts(const std::string& out, const std::string& command) {
    dir = out;
    fs::create_directories(dir);
    manifest["command"] = command;
    manifest["version"] = kVersion;
    manifest["outputs"] = json::array();
  }

  std::ofstream open(const std::string& name) {
    manifest["outputs"].push_back(name);
    std::ofstream f(dir / name);
    detail::require(f.good(), "cannot write " + (dir / name).string());
    f.precision(12);
    return f;
  }

  void phase(const std::string& name) {
    manifest["wall_times_sec"][name] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    t0 = std::chrono::steady_clock::now();
  }

  void finish() {
    auto f = open("manifest.json");
    f << manifest.dump(2) << "\n";
  }
};

RunConfig load_config(const Cli& cli, Artifacts& art) {
  std::ifstream f(cli.config_path);
  detail::require(f.good(), "cannot open config file " + cli.config_path);
  std::stringstream buf;
  buf << f.rdbuf();
  const std::string bytes = buf.str();
  std::istringstream is(bytes);
  RunConfig rc = validate_config(is);

  // command-line overrides
  if (cli.paper_scale) {
    rc.experiment.paper_scale = true;
    ExperimentConfig fresh;
    fresh.family = rc.experiment.family;
    fresh.paper_scale = true;
    fresh.M = 0;
    apply_family_defaults(fresh);
    fresh.delta = rc.experiment.delta;
    fresh.n_test = rc.experiment.n_test;
    fresh.trials = rc.experiment.trials;
    fresh.K = rc.experiment.K;
    fresh.seed = rc.experiment.seed;
    fresh.epsilon_policy = rc.experiment.epsilon_policy;
    fresh.epsilon_fixed = rc.experiment.epsilon_fixed;
    fresh.gamma_policy = rc.experiment.gamma_policy;
    fresh.gamma_fixed = rc.experiment.gamma_fixed;
    fresh.cv_grid = rc.experiment.cv_grid;
    fresh.cv_folds = rc.experiment.cv_folds;
    fresh.rho1 = rc.experiment.rho1;
    fresh.rho2 = rc.experiment.rho2;
    fresh.constructors = rc.experiment.constructors;
    fresh.n_train = rc.experiment.n_train;
    rc.experiment = fresh;
  }
  if (cli.seed >= 0) rc.experiment.seed = (std::uint64_t)cli.seed;
  if (cli.parallel >= 1) rc.benders.parallel = cli.parallel;
  if (cli.tol > 0) rc.benders.tol = cli.tol;
  if (!cli.constructors.empty()) {
    if (cli.constructors == "halton")
      rc.experiment.constructors = ConstructorPolicy::halton;
    else if (cli.constructors == "from-samples")
      rc.experiment.constructors = ConstructorPolicy::from_samples;
    else
      throw ValidationError("--constructors must be halton or from-samples");
  }
  if (!cli.epsilon.empty()) {
    if (cli.epsilon == "theoretical")
      rc.experiment.epsilon_policy = EpsilonPolicy::theoretical;
    else if (cli.epsilon == "cv")
      rc.experiment.epsilon_policy = EpsilonPolicy::cross_validated;
    else {
      rc.experiment.epsilon_policy = EpsilonPolicy::fixed;
      rc.experiment.epsilon_fixed = std::stod(cli.epsilon);
    }
  }
  if (!cli.gamma.empty()) {
    if (cli.gamma == "theoretical")
      rc.experiment.gamma_policy = GammaPolicy::theoretical;
    else if (cli.gamma == "zero")
      rc.experiment.gamma_policy = GammaPolicy::zero;
    else {
      rc.experiment.gamma_policy = GammaPolicy::fixed;
      rc.experiment.gamma_fixed = std::stod(cli.gamma);
    }
  }
  if (!cli.methods.empty()) {
    rc.methods.clear();
    std::istringstream ss(cli.methods);
    std::string cell;
    while (std::getline(ss, cell, ','))
      rc.methods.push_back(method_from_string(cell));
  }
  rc.experiment.validate();

  art.manifest["config_path"] = cli.config_path;
  art.manifest["config_fnv1a"] = fnv1a(bytes);
  art.manifest["seed"] = rc.experiment.seed;
  auto echo = art.open("effective_config.txt");
  write_effective_config(rc, echo);
  return rc;
}

struct PreparedInstance {
  TwoStageProblem problem;
  Matrix train;
  PartitionScheme scheme;
  AmbiguityParameters amb;
  CvReport cv;
  bool has_cv = false;
  FacilityDraw facility;
};

PreparedInstance prepare(const RunConfig& rc, Artifacts& art) {
  PreparedInstance inst;
  const auto& cfg = rc.experiment;
  Rng master(cfg.seed);
  Rng trial = master.split(1000);
  Rng train_rng = trial.split(0);
  Rng cost_rng = trial.split(2);
  const FacilityDraw* fac = nullptr;
  if (cfg.family == Family::facility) {
    inst.facility = draw_facility_costs(cfg, cost_rng);
    fac = &inst.facility;
  }
  inst.problem = build_instance(cfg, fac);
  if (!rc.samples_csv.empty())
    inst.train = read_samples_csv_file(rc.samples_csv, cfg.S());
  else
    inst.train = draw_samples(cfg, cfg.n_train, train_rng);
  Matrix pts = constructor_points(cfg, inst.problem, inst.train);
  inst.scheme = build_partition_scheme(inst.problem.support, pts, inst.train);
  inst.amb = calibrate_ambiguity(cfg, inst.problem, inst.scheme, inst.train,
                                 rc.solver,
                                 cfg.epsilon_policy ==
                                         EpsilonPolicy::cross_validated
                                     ? &inst.cv
                                     : nullptr);
  inst.has_cv = cfg.epsilon_policy == EpsilonPolicy::cross_validated;
  {
    auto f = art.open("partition_scheme.txt");
    write_partition_scheme(inst.scheme, f);
  }
  {
    auto f = art.open("calibration.txt");
    write_calibration_report(inst.amb, inst.has_cv ? &inst.cv : nullptr, f);
  }
  return inst;
}

void write_solution(const PdrSolution& sol, std::ostream& os) {
  os << "status " << to_string(sol.status) << "\n";
  os << "cone " << to_string(sol.cone) << "\n";
  os << "objective " << sol.objective << "\n";
  os << "theta " << sol.theta << "\n";
  os << "x";
  for (int i = 0; i < sol.x.size(); ++i) os << " " << sol.x[i];
  os << "\n";
  for (std::size_t k = 0; k < sol.rules.size(); ++k) {
    const auto& r = sol.rules[k];
    os << "partition " << k << " alpha " << r.alpha << "\n";
    auto dump = [&](const char* tag, const Matrix& M) {
      os << tag << " " << M.rows() << " " << M.cols() << "\n";
      for (int i = 0; i < M.rows(); ++i) {
        for (int j = 0; j < M.cols(); ++j) os << (j ? " " : "") << M(i, j);
        os << "\n";
      }
    };
    if (r.Y.size() > 0) dump("Y", r.Y);
    if (r.Q.size() > 0) dump("Q", r.Q);
    if (r.B.size() > 0) dump("B", r.B);
  }
}

int cmd_solve(const Cli& cli) {
  Artifacts art(cli.out_dir, "solve");
  RunConfig rc = load_config(cli, art);
  if (!cli.cone.empty())
    rc.cone = cli.cone == "ia1" ? InnerCone::ia1 : InnerCone::ia0;
  auto inst = prepare(rc, art);
  art.phase("prepare");
  PdrOptions opt;
  opt.cone = rc.cone;
  auto sol = solve_pdr(inst.problem, inst.scheme, inst.amb, opt, rc.solver);
  art.phase("solve");
  {
    auto f = art.open("solution.txt");
    write_solution(sol, f);
  }
  art.finish();
  if (!sol.ok()) {
    std::cerr << "solve finished with status " << to_string(sol.status)
              << "\n";
    return 3;
  }
  std::cout << "objective " << sol.objective << " (" << to_string(sol.cone)
            << ", status " << to_string(sol.status) << ")\n";
  return 0;
}

int cmd_benders(const Cli& cli) {
  Artifacts art(cli.out_dir, "benders");
  RunConfig rc = load_config(cli, art);
  auto inst = prepare(rc, art);
  art.phase("prepare");
  auto res = benders_solve(inst.problem, inst.scheme, inst.amb, rc.benders);
  art.phase("solve");
  {
    auto f = art.open("benders_trace.csv");
    f << "iter,lower,upper,jhat,opt_cuts,feas_cuts,wall_ms";
    for (int k = 0; k < inst.scheme.K(); ++k) f << ",z" << k;
    f << "\n";
    for (const auto& row : res.trace) {
      f << row.iter << "," << row.lower << "," << row.upper << ","
        << row.jhat << "," << row.opt_cuts_added << ","
        << row.feas_cuts_added << "," << row.wall_ms;
      for (int k = 0; k < row.subvalues.size(); ++k)
        f << "," << row.subvalues[k];
      f << "\n";
    }
  }
  {
    auto f = art.open("solution.txt");
    write_solution(res.solution, f);
    f << "lower " << res.lower << "\nupper " << res.upper << "\n";
    f << "iterations " << res.iterations << "\n";
    f << "converged " << (res.converged ? "true" : "false") << "\n";
    if (res.floor_active) f << "warning master floor active\n";
  }
  art.finish();
  if (res.solution.x.size() == 0) {
    std::cerr << "decomposition failed\n";
    return 3;
  }
  std::cout << "objective " << res.solution.objective << " gap ["
            << res.lower << ", " << res.upper << "] iterations "
            << res.iterations << (res.converged ? "" : " (cap hit)") << "\n";
  return 0;
}

int cmd_experiment(const Cli& cli) {
  Artifacts art(cli.out_dir, "experiment");
  RunConfig rc = load_config(cli, art);
  std::vector<EvaluationReport> sweep;
  for (int n : rc.n_train_list) {
    ExperimentConfig cfg = rc.experiment;
    cfg.n_train = n;
    cfg.validate();
    sweep.push_back(run_experiment(cfg, rc.methods, rc.solver, rc.benders,
                                   cli.verbose ? &std::cerr : nullptr));
  }
  art.phase("experiments");
  {
    auto f = art.open("report.csv");
    bool first = true;
    for (const auto& rep : sweep) {
      std::ostringstream chunk;
      write_report_csv(rep, chunk);
      std::string text = chunk.str();
      if (!first) text = text.substr(text.find('\n') + 1);
      f << text;
      first = false;
    }
  }
  {
    auto f = art.open("plot_data.csv");
    write_plot_data(sweep, "N", f);
  }
  {
    auto f = art.open("failures.txt");
    for (const auto& rep : sweep)
      for (const auto& row : rep.rows)
        for (const auto& note : row.failures)
          f << to_string(row.method) << " " << note << "\n";
  }
  art.finish();
  for (const auto& rep : sweep)
    for (const auto& row : rep.rows)
      std::cout << to_string(rep.config.family) << " N=" << rep.config.n_train
                << " " << to_string(row.method) << ": mean cost "
                << row.mean_cost << " feas " << row.feasibility_rate
                << " runtime " << row.mean_runtime_sec << "s\n";
  return 0;
}

int cmd_check_recourse(const Cli& cli) {
  Artifacts art(cli.out_dir, "check-recourse");
  RunConfig rc = load_config(cli, art);
  if (!cli.cone.empty())
    rc.cone = cli.cone == "ia1" ? InnerCone::ia1 : InnerCone::ia0;
  Rng master(rc.experiment.seed);
  Rng cost_rng = master.split(1000).split(2);
  FacilityDraw fac;
  const FacilityDraw* fac_ptr = nullptr;
  if (rc.experiment.family == Family::facility) {
    fac = draw_facility_costs(rc.experiment, cost_rng);
    fac_ptr = &fac;
  }
  auto prob = build_instance(rc.experiment, fac_ptr);
  auto cert = check_complete_recourse(prob, rc.cone, 1e-6, rc.solver);
  art.phase("check");
  {
    auto f = art.open("recourse.txt");
    f << "verdict " << (cert.certified ? "certified" : "unknown") << "\n";
    f << "margin " << cert.margin << "\n";
    if (cert.certified) {
      f << "Y " << cert.Y.rows() << " " << cert.Y.cols() << "\n";
      for (int i = 0; i < cert.Y.rows(); ++i) {
        for (int j = 0; j < cert.Y.cols(); ++j)
          f << (j ? " " : "") << cert.Y(i, j);
        f << "\n";
      }
      f << "beta";
      for (int l = 0; l < cert.beta.size(); ++l) f << " " << cert.beta[l];
      f << "\n";
    }
  }
  art.finish();
  std::cout << "complete recourse: "
            << (cert.certified ? "certified" : "unknown")
            << " (margin " << cert.margin << ")\n";
  return 0;
}

int cmd_calibrate(const Cli& cli) {
  Artifacts art(cli.out_dir, "calibrate");
  RunConfig rc = load_config(cli, art);
  prepare(rc, art);  // writes calibration.txt and partition_scheme.txt
  art.phase("calibrate");
  art.finish();
  std::cout << "calibration written to " << cli.out_dir << "/calibration.txt\n";
  return 0;
}

int cmd_export_conic(const Cli& cli) {
  Artifacts art(cli.out_dir, "export-conic");
  RunConfig rc = load_config(cli, art);
  if (!cli.cone.empty())
    rc.cone = cli.cone == "ia1" ? InnerCone::ia1 : InnerCone::ia0;
  auto inst = prepare(rc, art);
  auto build = build_pdr_cop(inst.problem, inst.scheme, inst.amb,
                             PdrOptions{rc.cone, BuildMode::automatic});
  auto program = finish_pdr_program(build, rc.cone);
  art.phase("build");
  {
    auto f = art.open("program.dat-s");
    write_sdpa(program, f);
  }
  art.finish();
  std::cout << "wrote " << cli.out_dir << "/program.dat-s ("
            << program.num_vars << " variables, " << program.total_rows()
            << " rows)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "two-stage distributionally robust optimization with piecewise "
      "decision rules"};
  app.require_subcommand(1);

  Cli cli;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", cli.config_path, "run configuration file")
        ->required();
    sub->add_option("-o,--out", cli.out_dir, "output directory");
    sub->add_option("--seed", cli.seed, "override the master seed");
    sub->add_option("--parallel", cli.parallel,
                    "concurrent subproblem solves");
    sub->add_flag("--paper-scale", cli.paper_scale,
                  "published experiment dimensions");
    sub->add_option("--constructors", cli.constructors,
                    "halton | from-samples");
    sub->add_option("--epsilon", cli.epsilon,
                    "theoretical | cv | <value>");
    sub->add_option("--gamma", cli.gamma, "theoretical | zero | <value>");
    sub->add_flag("-v,--verbose", cli.verbose, "log per-trial failures");
  };

  auto* solve_cmd = app.add_subcommand("solve", "monolithic solve");
  add_common(solve_cmd);
  solve_cmd->add_option("--cone", cli.cone, "ia0 | ia1");

  auto* benders_cmd = app.add_subcommand("benders", "decomposition solve");
  add_common(benders_cmd);
  benders_cmd->add_option("--tol", cli.tol, "relative gap tolerance");

  auto* exp_cmd = app.add_subcommand("experiment", "out-of-sample benchmark");
  add_common(exp_cmd);
  exp_cmd->add_option("--methods", cli.methods,
                      "comma list: ia0,ia1,benders-ia0,saa");

  auto* rec_cmd =
      app.add_subcommand("check-recourse", "complete recourse certificate");
  add_common(rec_cmd);
  rec_cmd->add_option("--cone", cli.cone, "ia0 | ia1");

  auto* cal_cmd = app.add_subcommand("calibrate", "ambiguity calibration");
  add_common(cal_cmd);

  auto* exp_conic =
      app.add_subcommand("export-conic", "write the compiled program");
  add_common(exp_conic);
  exp_conic->add_option("--cone", cli.cone, "ia0 | ia1");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*solve_cmd) return cmd_solve(cli);
    if (*benders_cmd) return cmd_benders(cli);
    if (*exp_cmd) return cmd_experiment(cli);
    if (*rec_cmd) return cmd_check_recourse(cli);
    if (*cal_cmd) return cmd_calibrate(cli);
    if (*exp_conic) return cmd_export_conic(cli);
  } catch (const ValidationError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const SolverError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
