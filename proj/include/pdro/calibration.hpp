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

#ifndef PDRO_CALIBRATION_HPP
#define PDRO_CALIBRATION_HPP

#include <iostream>
#include <sstream>

#include "pdro/evalsuite.hpp"

namespace pdro {

/// Concentration-bound radii for a fitted scheme: empty partitions borrow
/// the largest calibrated radius so their programs stay well-posed.
inline Vector theoretical_epsilon_vector(const PartitionScheme& scheme,
                                         double rho1) {
  const int K = scheme.K();
  Vector eps = Vector::Zero(K);
  double worst = 0.0;
  for (int k = 0; k < K; ++k) {
    const long nk = static_cast<long>(scheme.index_sets[k].size());
    if (nk == 0) continue;
    eps[k] = theoretical_epsilon(scheme.radius[k], nk, K, rho1);
    worst = std::max(worst, eps[k]);
  }
  for (int k = 0; k < K; ++k)
    if (scheme.index_sets[k].empty()) eps[k] = worst;
  return eps;
}

struct CvReport {
  std::vector<double> grid;
  std::vector<double> mean_cost;     // across folds; inf = disqualified
  std::vector<std::string> notes;
  double chosen = 0.0;
};

/// 2-fold (by default) cross-validation of one shared multiplier on the
/// theoretical radius shape, normalized so grid values carry absolute radius
/// units: candidate eps_k = g * shape_k with mean(shape) = 1 over nonempty
/// partitions.  Held-out cost is c.x-hat plus the empirical CVaR of the
/// held-out recourse values.
inline CvReport cross_validate_epsilon(
    const TwoStageProblem& prob, const Matrix& samples,
    const std::vector<double>& grid, int folds, int K,
    ConstructorPolicy constructors, double gamma, double rho1,
    const PdrOptions& opt = {}, const SolveSettings& settings = {}) {
  detail::require(!grid.empty(), "empty candidate grid");
  detail::require(folds >= 2, "need at least two folds");
  const int N = static_cast<int>(samples.rows());
  detail::require(N >= folds, "fewer samples than folds");

  CvReport report;
  report.grid = grid;
  report.mean_cost.assign(grid.size(), 0.0);
  report.notes.assign(grid.size(), "");

  std::vector<int> fold_of(N);
  for (int i = 0; i < N; ++i) fold_of[i] = i % folds;

  for (int f = 0; f < folds; ++f) {
    int n_tr = 0;
    for (int i = 0; i < N; ++i) n_tr += fold_of[i] != f;
    Matrix train(n_tr, samples.cols()), test(N - n_tr, samples.cols());
    int a = 0, b = 0;
    for (int i = 0; i < N; ++i) {
      if (fold_of[i] != f)
        train.row(a++) = samples.row(i);
      else
        test.row(b++) = samples.row(i);
    }

    Matrix pts;
    if (constructors == ConstructorPolicy::from_samples) {
      const int kk = std::min(K, n_tr);
      pts = from_sample_constructors(kk, train);
    } else {
      const int S = prob.S();
      Vector lo(S), hi(S);
      for (int j = 0; j < S; ++j) {
        auto [x, y] = prob.support.coordinate_range(j);
        lo[j] = x;
        hi[j] = y;
      }
      pts = halton_constructors(K, lo, hi);
    }
    auto scheme = build_partition_scheme(prob.support, pts, train);
    Vector shape = theoretical_epsilon_vector(scheme, rho1);
    double mean_shape = 0.0;
    int nonempty = 0;
    for (int k = 0; k < scheme.K(); ++k)
      if (!scheme.index_sets[k].empty()) {
        mean_shape += shape[k];
        ++nonempty;
      }
    mean_shape = nonempty > 0 ? mean_shape / nonempty : 1.0;
    if (mean_shape <= 0.0) mean_shape = 1.0;

    for (std::size_t g = 0; g < grid.size(); ++g) {
      if (std::isinf(report.mean_cost[g])) continue;
      AmbiguityParameters amb;
      amb.epsilon = grid[g] / mean_shape * shape;
      amb.gamma = gamma;
      amb.provenance = AmbiguityProvenance::cross_validated;
      amb.cv_folds = folds;
      try {
        auto sol = solve_pdr(prob, scheme, amb, opt, settings);
        if (!sol.ok()) throw SolverError(to_string(sol.status));
        auto ev = evaluate_second_stage(prob, sol.x, test, settings);
        const double cost =
            prob.c.dot(sol.x) + empirical_cvar(ev.values, prob.delta);
        report.mean_cost[g] += cost / folds;
      } catch (const Error& err) {
        report.mean_cost[g] = kInf;
        report.notes[g] = std::string("disqualified: ") + err.what();
      }
    }
  }

  std::size_t best = 0;
  for (std::size_t g = 1; g < grid.size(); ++g)
    if (report.mean_cost[g] < report.mean_cost[best]) best = g;
  detail::require(!std::isinf(report.mean_cost[best]),
                  "every cross-validation candidate failed");
  report.chosen = grid[best];
  return report;
}

/// Resolves the config's ambiguity policy against a fitted scheme.
inline AmbiguityParameters calibrate_ambiguity(
    const ExperimentConfig& cfg, const TwoStageProblem& prob,
    const PartitionScheme& scheme, const Matrix& train,
    const SolveSettings& settings = {}, CvReport* cv_out = nullptr) {
  AmbiguityParameters amb;
  const int K = scheme.K();
  const int N = static_cast<int>(train.rows());

  switch (cfg.gamma_policy) {
    case GammaPolicy::zero: amb.gamma = 0.0; break;
    case GammaPolicy::fixed: amb.gamma = cfg.gamma_fixed; break;
    case GammaPolicy::theoretical:
      amb.gamma = theoretical_gamma(N, K, cfg.rho2);
      amb.rho2 = cfg.rho2;
      break;
  }

  switch (cfg.epsilon_policy) {
    case EpsilonPolicy::fixed:
      amb.epsilon = Vector::Constant(K, cfg.epsilon_fixed);
      amb.provenance = AmbiguityProvenance::manual;
      break;
    case EpsilonPolicy::theoretical:
      amb.epsilon = theoretical_epsilon_vector(scheme, cfg.rho1);
      amb.provenance = AmbiguityProvenance::theoretical;
      amb.rho1 = cfg.rho1;
      break;
    case EpsilonPolicy::cross_validated: {
      auto report = cross_validate_epsilon(
          prob, train, cfg.cv_grid, cfg.cv_folds, K, cfg.constructors,
          amb.gamma, cfg.rho1, {}, settings);
      Vector shape = theoretical_epsilon_vector(scheme, cfg.rho1);
      double mean_shape = 0.0;
      int nonempty = 0;
      for (int k = 0; k < K; ++k)
        if (!scheme.index_sets[k].empty()) {
          mean_shape += shape[k];
          ++nonempty;
        }
      mean_shape = nonempty > 0 ? mean_shape / nonempty : 1.0;
      if (mean_shape <= 0.0) mean_shape = 1.0;
      amb.epsilon = report.chosen / mean_shape * shape;
      amb.provenance = AmbiguityProvenance::cross_validated;
      amb.cv_folds = cfg.cv_folds;
      if (cv_out) *cv_out = report;
      break;
    }
  }
  amb.validate(K);
  return amb;
}

/// Structured-text calibration report.
inline void write_calibration_report(const AmbiguityParameters& amb,
                                     const CvReport* cv, std::ostream& os) {
  os.precision(12);
  os << "calibration-report\n";
  os << "provenance " << to_string(amb.provenance) << "\n";
  if (!std::isnan(amb.rho1)) os << "rho1 " << amb.rho1 << "\n";
  if (!std::isnan(amb.rho2)) os << "rho2 " << amb.rho2 << "\n";
  if (amb.cv_folds > 0) os << "folds " << amb.cv_folds << "\n";
  os << "gamma " << amb.gamma << "\n";
  os << "epsilon";
  for (int k = 0; k < amb.epsilon.size(); ++k) os << " " << amb.epsilon[k];
  os << "\n";
  if (cv) {
    os << "cv-grid value mean-held-out-cost note\n";
    for (std::size_t g = 0; g < cv->grid.size(); ++g)
      os << "cv " << cv->grid[g] << " " << cv->mean_cost[g] << " "
         << (cv->notes[g].empty() ? "-" : cv->notes[g]) << "\n";
    os << "cv-chosen " << cv->chosen << "\n";
  }
}

}  // namespace pdro

#endif  // PDRO_CALIBRATION_HPP
