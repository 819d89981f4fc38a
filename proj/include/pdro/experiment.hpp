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

#ifndef PDRO_EXPERIMENT_HPP
#define PDRO_EXPERIMENT_HPP

#include <iostream>
#include <map>
#include <set>

#include "pdro/benders.hpp"
#include "pdro/calibration.hpp"

namespace pdro {

enum class Method : std::uint8_t { ia0, ia1, benders_ia0, saa };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::ia0: return "ia0";
    case Method::ia1: return "ia1";
    case Method::benders_ia0: return "benders-ia0";
    case Method::saa: return "saa";
  }
  return "?";
}

inline Method method_from_string(const std::string& s) {
  if (s == "ia0") return Method::ia0;
  if (s == "ia1") return Method::ia1;
  if (s == "benders-ia0") return Method::benders_ia0;
  if (s == "saa") return Method::saa;
  throw ValidationError("unknown method: " + s);
}

/// Aggregated out-of-sample statistics for one method.
struct MethodReport {
  Method method = Method::saa;
  int trials_attempted = 0;
  int trials_completed = 0;
  double mean_cost = kNaN;   // c.x + empirical CVaR_delta on the test set
  double q10 = kNaN, q90 = kNaN;
  double mean_cost_mean = kNaN;  // plain test mean, emitted for transparency
  double feasibility_rate = kNaN;
  double mean_runtime_sec = kNaN;
  std::vector<double> per_trial_cost;
  std::vector<std::string> failures;
};

struct EvaluationReport {
  ExperimentConfig config;
  std::vector<MethodReport> rows;
};

namespace detail {

inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  const double pos = q * (static_cast<double>(v.size()) - 1.0);
  const int lo = static_cast<int>(std::floor(pos));
  const int hi = std::min<int>(lo + 1, (int)v.size() - 1);
  const double frac = pos - lo;
  return (1.0 - frac) * v[lo] + frac * v[hi];
}

}  // namespace detail

/// Runs `trials` independent draws: fresh train/test data, per-method first
/// stage, exact out-of-sample recourse evaluation.  Per-method failures are
/// recorded, never fatal to the trial.
inline EvaluationReport run_experiment(const ExperimentConfig& cfg,
                                       const std::vector<Method>& methods,
                                       const SolveSettings& settings = {},
                                       const BendersSettings& benders = {},
                                       std::ostream* log = nullptr) {
  cfg.validate();
  EvaluationReport report;
  report.config = cfg;
  report.rows.resize(methods.size());
  for (std::size_t m = 0; m < methods.size(); ++m)
    report.rows[m].method = methods[m];

  std::vector<std::vector<double>> costs(methods.size());
  std::vector<std::vector<double>> mean_costs(methods.size());
  std::vector<std::vector<double>> feas(methods.size());
  std::vector<std::vector<double>> runtimes(methods.size());

  Rng master(cfg.seed);
  for (int trial = 0; trial < cfg.trials; ++trial) {
    Rng trial_rng = master.split(1000 + trial);
    Rng train_rng = trial_rng.split(0);
    Rng test_rng = trial_rng.split(1);
    Rng cost_rng = trial_rng.split(2);

    FacilityDraw fac;
    const FacilityDraw* fac_ptr = nullptr;
    if (cfg.family == Family::facility) {
      fac = draw_facility_costs(cfg, cost_rng);
      fac_ptr = &fac;
    }
    TwoStageProblem prob = build_instance(cfg, fac_ptr);
    Matrix train = draw_samples(cfg, cfg.n_train, train_rng);
    Matrix test = draw_samples(cfg, cfg.n_test, test_rng);

    PartitionScheme scheme;
    AmbiguityParameters amb;
    bool scheme_ready = false;
    auto ensure_scheme = [&] {
      if (scheme_ready) return;
      Matrix pts = constructor_points(cfg, prob, train);
      scheme = build_partition_scheme(prob.support, pts, train);
      amb = calibrate_ambiguity(cfg, prob, scheme, train, settings);
      scheme_ready = true;
    };

    for (std::size_t m = 0; m < methods.size(); ++m) {
      auto& row = report.rows[m];
      ++row.trials_attempted;
      const auto t0 = std::chrono::steady_clock::now();
      Vector x;
      try {
        switch (methods[m]) {
          case Method::ia0:
          case Method::ia1: {
            ensure_scheme();
            PdrOptions opt;
            opt.cone =
                methods[m] == Method::ia0 ? InnerCone::ia0 : InnerCone::ia1;
            auto sol = solve_pdr(prob, scheme, amb, opt, settings);
            if (!sol.ok())
              throw SolverError(std::string("solve status ") +
                                to_string(sol.status));
            x = sol.x;
            break;
          }
          case Method::benders_ia0: {
            ensure_scheme();
            BendersSettings bs = benders;
            bs.cone = OuterCone::oa0;
            bs.recover_policy = false;
            auto res = benders_solve(prob, scheme, amb, bs);
            if (res.solution.x.size() == 0)
              throw SolverError("decomposition produced no incumbent");
            x = res.solution.x;
            break;
          }
          case Method::saa: {
            x = saa_solve(prob, train, settings);
            break;
          }
        }
      } catch (const Error& err) {
        row.failures.push_back("trial " + std::to_string(trial) + ": " +
                               err.what());
        if (log)
          (*log) << "[experiment] " << to_string(methods[m]) << " trial "
                 << trial << " failed: " << err.what() << "\n";
        continue;
      }
      const double rt = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - t0)
                            .count();
      auto ev = evaluate_second_stage(prob, x, test, settings);
      double cost = kInf, mean_cost = kInf;
      if (ev.invalid == 0 || !ev.values.empty()) {
        std::vector<double> vals;
        vals.reserve(ev.values.size());
        for (double v : ev.values)
          if (!std::isnan(v)) vals.push_back(v);
        if (!vals.empty()) {
          cost = prob.c.dot(x) + empirical_cvar(vals, prob.delta);
          double s = 0.0;
          for (double v : vals) s += v;
          mean_cost = prob.c.dot(x) + s / vals.size();
        }
      }
      ++row.trials_completed;
      costs[m].push_back(cost);
      mean_costs[m].push_back(mean_cost);
      feas[m].push_back(ev.feasibility_rate());
      runtimes[m].push_back(rt);
      row.per_trial_cost.push_back(cost);
    }
  }

  for (std::size_t m = 0; m < methods.size(); ++m) {
    auto& row = report.rows[m];
    if (costs[m].empty()) continue;
    double s = 0.0, sm = 0.0, sf = 0.0, sr = 0.0;
    for (double v : costs[m]) s += v;
    for (double v : mean_costs[m]) sm += v;
    for (double v : feas[m]) sf += v;
    for (double v : runtimes[m]) sr += v;
    const double n = static_cast<double>(costs[m].size());
    row.mean_cost = s / n;
    row.mean_cost_mean = sm / n;
    row.feasibility_rate = sf / n;
    row.mean_runtime_sec = sr / n;
    row.q10 = detail::quantile(costs[m], 0.10);
    row.q90 = detail::quantile(costs[m], 0.90);
  }
  return report;
}

inline void write_report_csv(const EvaluationReport& report, std::ostream& os) {
  os << "family,n_train,k_partitions,delta,method,trials_completed,"
        "mean_cost_cvar,mean_cost_mean,q10,q90,feasibility_rate,"
        "mean_runtime_sec\n";
  os.precision(10);
  for (const auto& row : report.rows) {
    os << to_string(report.config.family) << "," << report.config.n_train
       << "," << report.config.effective_K() << "," << report.config.delta
       << "," << to_string(row.method) << "," << row.trials_completed << ","
       << row.mean_cost << "," << row.mean_cost_mean << "," << row.q10 << ","
       << row.q90 << "," << row.feasibility_rate << ","
       << row.mean_runtime_sec << "\n";
  }
}

/// Plot-data companion: one line per (method, x) pair, x being whatever the
/// sweep varied (sample size or partition count).
inline void write_plot_data(const std::vector<EvaluationReport>& sweep,
                            const std::string& x_name, std::ostream& os) {
  os << "x_name,x,method,mean,q10,q90\n";
  os.precision(10);
  for (const auto& rep : sweep)
    for (const auto& row : rep.rows) {
      const int x = x_name == "K" ? rep.config.effective_K()
                                  : rep.config.n_train;
      os << x_name << "," << x << "," << to_string(row.method) << ","
         << row.mean_cost << "," << row.q10 << "," << row.q90 << "\n";
    }
}

}  // namespace pdro

#endif  // PDRO_EXPERIMENT_HPP
