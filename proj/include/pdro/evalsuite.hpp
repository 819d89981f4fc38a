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

#ifndef PDRO_EVALSUITE_HPP
#define PDRO_EVALSUITE_HPP

#include <algorithm>
#include <string>
#include <vector>

#include "pdro/reformulate.hpp"
#include "pdro/rng.hpp"

namespace pdro {

// Benchmark harness: the four experiment families (network inventory,
// multi-item newsvendor, medical scheduling, facility location), their
// truncated-lognormal data models, per-sample recourse evaluation and the
// sample-average baseline.

/// i.i.d. draws of exp(Normal(mu, sigma)) conditioned on [lower, upper] by
/// rejection.  The acceptance region must carry nonnegligible mass.
inline Vector sample_truncated_lognormal(double mu, double sigma, double lower,
                                         double upper, int count, Rng& rng) {
  detail::require(lower < upper, "truncation bounds crossed");
  detail::require(count >= 0, "negative sample count");
  Vector out(count);
  long attempts = 0;
  for (int i = 0; i < count; ++i) {
    double x;
    do {
      ++attempts;
      if (attempts > 1000L * (i + 1) + 10000L)
        throw ValidationError(
            "truncated lognormal acceptance rate collapsed; "
            "check the bounds against exp(mu +- 3 sigma)");
      x = std::exp(rng.normal(mu, sigma));
    } while (x < lower || x > upper);
    out[i] = x;
  }
  return out;
}

enum class Family : std::uint8_t { inventory, newsvendor, medical, facility };

inline const char* to_string(Family f) {
  switch (f) {
    case Family::inventory: return "inventory";
    case Family::newsvendor: return "newsvendor";
    case Family::medical: return "medical";
    case Family::facility: return "facility";
  }
  return "?";
}

inline Family family_from_string(const std::string& s) {
  if (s == "inventory") return Family::inventory;
  if (s == "newsvendor") return Family::newsvendor;
  if (s == "medical") return Family::medical;
  if (s == "facility") return Family::facility;
  throw ValidationError("unknown family: " + s);
}

enum class EpsilonPolicy : std::uint8_t { theoretical, cross_validated, fixed };
enum class GammaPolicy : std::uint8_t { theoretical, zero, fixed };
enum class ConstructorPolicy : std::uint8_t { halton, from_samples };

/// Instance + evaluation description.  Desk-scale defaults keep the
/// semidefinite blocks small; `paper_scale` restores the published
/// dimensions.
struct ExperimentConfig {
  Family family = Family::newsvendor;
  bool paper_scale = false;
  int M = 3;         // items / locations / patients (I = J for facility)
  int n_train = 10;
  int n_test = 1000;
  int trials = 20;
  int K = 10;        // partitions; 0 means K = n_train
  double delta = 0.1;
  std::uint64_t seed = 1;

  EpsilonPolicy epsilon_policy = EpsilonPolicy::theoretical;
  double epsilon_fixed = 0.0;
  std::vector<double> cv_grid = {0.0, 0.5, 2.0, 8.0};
  int cv_folds = 2;
  double rho1 = 0.1;
  GammaPolicy gamma_policy = GammaPolicy::zero;
  double gamma_fixed = 0.0;
  double rho2 = 0.1;
  ConstructorPolicy constructors = ConstructorPolicy::halton;

  // family data; filled by apply_family_defaults
  Vector cost_c;          // first-stage costs (f for facility)
  Vector lower1, upper1;  // first uncertain block support
  Vector lower2, upper2;  // second uncertain block support (empty if none)
  Vector mu1, sigma1, mu2, sigma2;
  double stock_cap = 80.0;     // inventory T
  double budget = 0.0;         // newsvendor B
  Vector holding;              // newsvendor g
  double overtime_cost = 200.0;  // medical c
  double working_time = 0.0;     // medical T
  double capacity = 1500.0;      // facility u_i
  double stockout = 1000.0;      // facility g_j
  // facility per-trial draws
  double trans_lo = 10.0, trans_hi = 100.0;
  double fixed_lo = 4000.0, fixed_hi = 5000.0;

  int S() const {
    switch (family) {
      case Family::inventory: return M + M * M;
      case Family::newsvendor: return 2 * M;
      case Family::medical: return 2 * M;
      case Family::facility: return M;
    }
    return 0;
  }

  int effective_K() const { return K > 0 ? K : n_train; }

  void validate() const {
    detail::require(M >= 1, "need at least one item");
    detail::require(n_train >= 1 && n_test >= 1 && trials >= 1,
                    "sample counts must be positive");
    detail::require(delta > 0.0 && delta <= 1.0, "delta must lie in (0, 1]");
    detail::require(S() + 1 <= 60,
                    "uncertainty dimension too large: semidefinite blocks "
                    "grow with (S+1)^2; reduce M");
    detail::require(!(constructors == ConstructorPolicy::from_samples &&
                      effective_K() > n_train),
                    "cannot take more from-sample constructor points than "
                    "training samples");
    detail::require(gamma_fixed >= 0.0, "gamma must be nonnegative");
    detail::require(epsilon_fixed >= 0.0, "epsilon must be nonnegative");
  }
};

inline void apply_family_defaults(ExperimentConfig& c) {
  const bool paper = c.paper_scale;
  switch (c.family) {
    case Family::inventory: {
      if (c.M <= 0) c.M = paper ? 5 : 2;
      const int M = c.M;
      c.delta = 1.0;
      c.cost_c.resize(M);
      for (int i = 0; i < M; ++i) c.cost_c[i] = 40.0 + 10.0 * i;
      c.stock_cap = 80.0;
      c.lower1 = Vector::Constant(M, 20.0);
      c.upper1 = Vector::Constant(M, 40.0);
      c.mu1.resize(M);
      for (int i = 0; i < M; ++i) c.mu1[i] = i < (M + 1) / 2 ? 3.0 : 3.5;
      c.sigma1 = Vector::Constant(M, 0.2);
      c.lower2 = Vector::Constant(M * M, 40.0);
      c.upper2 = Vector::Constant(M * M, 50.0);
      // the published location parameter puts ~3e-12 of the lognormal mass
      // inside [40, 50]; ln(45) keeps the stated support workable
      c.mu2 = Vector::Constant(M * M, std::log(45.0));
      c.sigma2 = Vector::Constant(M * M, 0.1);
      break;
    }
    case Family::newsvendor: {
      if (c.M <= 0) c.M = paper ? 5 : 3;
      const int M = c.M;
      c.budget = 6.0 * M;
      c.cost_c = Vector::Zero(M);
      c.holding.resize(M);
      for (int i = 0; i < M; ++i) c.holding[i] = 5.0 + i;
      c.lower1 = Vector::Zero(M);
      c.upper1 = Vector::Constant(M, 10.0);
      c.mu1 = Vector::Constant(M, 1.0);
      c.sigma1 = Vector::Constant(M, 1.0);
      c.lower2 = Vector::Zero(M);
      c.upper2 = Vector::Constant(M, 50.0);
      c.mu2 = Vector::Constant(M, 3.0);
      c.sigma2 = Vector::Constant(M, 2.0);
      break;
    }
    case Family::medical: {
      if (c.M <= 0) c.M = paper ? 8 : 3;
      const int M = c.M;
      c.overtime_cost = 200.0;
      c.lower1 = Vector::Constant(M, 20.0);
      c.upper1 = Vector::Constant(M, 100.0);
      c.working_time = 0.5 * (20.0 + 100.0) * M;
      c.mu1 = Vector::Constant(M, 4.0);
      c.sigma1 = Vector::Constant(M, 0.5);
      c.lower2 = Vector::Constant(M, 1.0);
      c.upper2 = Vector::Constant(M, 10.0);
      c.mu2 = Vector::Constant(M, 1.0);
      c.sigma2 = Vector::Constant(M, 0.5);
      c.cost_c = Vector::Zero(M);
      break;
    }
    case Family::facility: {
      if (c.M <= 0) c.M = paper ? 5 : 3;
      const int M = c.M;
      c.delta = 1.0;
      c.capacity = 1500.0;
      c.stockout = 1000.0;
      c.lower1 = Vector::Constant(M, 200.0);
      c.upper1 = Vector::Constant(M, 3000.0);
      c.mu1 = Vector::Constant(M, 6.0);
      c.sigma1 = Vector::Constant(M, 1.0);
      c.lower2.resize(0);
      c.upper2.resize(0);
      c.cost_c.resize(M);  // fixed costs drawn per trial; placeholder
      c.cost_c.setConstant(4500.0);
      break;
    }
  }
}

inline ExperimentConfig make_config(Family f, bool paper_scale = false) {
  ExperimentConfig c;
  c.family = f;
  c.paper_scale = paper_scale;
  c.M = 0;
  apply_family_defaults(c);
  if (f == Family::inventory || f == Family::facility) c.delta = 1.0;
  c.validate();
  return c;
}

/// One row per sample, S columns: block 1 then block 2.
inline Matrix draw_samples(const ExperimentConfig& c, int n, Rng& rng) {
  const int s1 = static_cast<int>(c.lower1.size());
  const int s2 = static_cast<int>(c.lower2.size());
  Matrix out(n, s1 + s2);
  for (int j = 0; j < s1; ++j)
    out.col(j) = sample_truncated_lognormal(c.mu1[j], c.sigma1[j], c.lower1[j],
                                            c.upper1[j], n, rng);
  for (int j = 0; j < s2; ++j)
    out.col(s1 + j) = sample_truncated_lognormal(
        c.mu2[j], c.sigma2[j], c.lower2[j], c.upper2[j], n, rng);
  return out;
}

/// Per-trial cost structure for the facility family.
struct FacilityDraw {
  Matrix trans;   // I x J unit transportation costs
  Vector fixed;   // I fixed opening costs
};

inline FacilityDraw draw_facility_costs(const ExperimentConfig& c, Rng& rng) {
  FacilityDraw d;
  d.trans.resize(c.M, c.M);
  for (int i = 0; i < c.M; ++i)
    for (int j = 0; j < c.M; ++j)
      d.trans(i, j) = rng.uniform(c.trans_lo, c.trans_hi);
  d.fixed.resize(c.M);
  for (int i = 0; i < c.M; ++i)
    d.fixed[i] = rng.uniform(c.fixed_lo, c.fixed_hi);
  return d;
}

/// Canonical two-stage data for a config.  Facility instances additionally
/// need the per-trial cost draw.
inline TwoStageProblem build_instance(const ExperimentConfig& c,
                                      const FacilityDraw* facility = nullptr) {
  c.validate();
  const int M = c.M;
  TwoStageProblem p;
  p.delta = c.delta;

  auto zero_map = [](int d, int n1) {
    AffineMap m;
    m.A = Matrix::Zero(d, n1);
    m.t = Vector::Zero(d);
    return m;
  };

  switch (c.family) {
    case Family::inventory: {
      // stock x_i in [0, T]; uncertain (u demands, v transport costs);
      // y_ij transported i -> j; flow cover x_i + in - out >= u_i
      const int S = M + M * M;
      const int d = S + 1;
      const int n2 = M * M;
      p.c = c.cost_c;
      Vector lo(S), hi(S);
      lo.head(M) = c.lower1;
      hi.head(M) = c.upper1;
      lo.tail(M * M) = c.lower2;
      hi.tail(M * M) = c.upper2;
      p.support = build_box_support(lo, hi);
      p.D = Matrix::Zero(n2, d);
      for (int i = 0; i < M; ++i)
        for (int j = 0; j < M; ++j)
          p.D(i * M + j, M + i * M + j) = 1.0;  // v_ij on y_ij
      for (int i = 0; i < M; ++i) {             // demand rows
        Matrix W = Matrix::Zero(n2, d);
        for (int j = 0; j < M; ++j) {
          W(j * M + i, S) += 1.0;  // inflow y_ji
          W(i * M + j, S) -= 1.0;  // outflow y_ij
        }
        p.W.push_back(W);
        AffineMap m = zero_map(d, M);
        m.t[i] = 1.0;      // u_i
        m.A(S, i) = -1.0;  // - x_i nu
        p.T.push_back(m);
      }
      for (int n = 0; n < n2; ++n) {  // y >= 0
        Matrix W = Matrix::Zero(n2, d);
        W(n, S) = 1.0;
        p.W.push_back(W);
        p.T.push_back(zero_map(d, M));
      }
      FirstStageRows nn;
      nn.R = Matrix::Identity(M, M);
      nn.r = Vector::Zero(M);
      p.first_stage.push_back(nn);
      FirstStageRows cap;
      cap.R = -Matrix::Identity(M, M);
      cap.r = Vector::Constant(M, c.stock_cap);
      p.first_stage.push_back(cap);
      break;
    }
    case Family::newsvendor: {
      const int S = 2 * M;
      const int d = S + 1;
      const int n2 = 2 * M;  // y1 excess, y2 shortfall
      p.c = Vector::Zero(M);
      Vector lo(S), hi(S);
      lo.head(M) = c.lower1;
      hi.head(M) = c.upper1;
      lo.tail(M) = c.lower2;
      hi.tail(M) = c.upper2;
      p.support = build_box_support(lo, hi);
      p.D = Matrix::Zero(n2, d);
      for (int i = 0; i < M; ++i) {
        p.D(i, S) = c.holding[i];  // g_i nu on y1_i
        p.D(M + i, M + i) = 1.0;   // s_i on y2_i
      }
      for (int i = 0; i < M; ++i) {  // y1 >= 0
        Matrix W = Matrix::Zero(n2, d);
        W(i, S) = 1.0;
        p.W.push_back(W);
        p.T.push_back(zero_map(d, M));
      }
      for (int i = 0; i < M; ++i) {  // y1_i >= x_i - xi_i
        Matrix W = Matrix::Zero(n2, d);
        W(i, S) = 1.0;
        p.W.push_back(W);
        AffineMap m = zero_map(d, M);
        m.A(S, i) = 1.0;
        m.t[i] = -1.0;
        p.T.push_back(m);
      }
      for (int i = 0; i < M; ++i) {  // y2 >= 0
        Matrix W = Matrix::Zero(n2, d);
        W(M + i, S) = 1.0;
        p.W.push_back(W);
        p.T.push_back(zero_map(d, M));
      }
      for (int i = 0; i < M; ++i) {  // y2_i >= xi_i - x_i
        Matrix W = Matrix::Zero(n2, d);
        W(M + i, S) = 1.0;
        p.W.push_back(W);
        AffineMap m = zero_map(d, M);
        m.A(S, i) = -1.0;
        m.t[i] = 1.0;
        p.T.push_back(m);
      }
      FirstStageRows nn;
      nn.R = Matrix::Identity(M, M);
      nn.r = Vector::Zero(M);
      p.first_stage.push_back(nn);
      FirstStageRows cap;
      cap.R = -Matrix::Ones(1, M);
      cap.r = Vector::Constant(1, c.budget);
      p.first_stage.push_back(cap);
      break;
    }
    case Family::medical: {
      // appointment lengths x; uncertain (durations xi, waiting costs pi);
      // waiting times y_1..y_M plus overtime y_{M+1}
      const int S = 2 * M;
      const int d = S + 1;
      const int n2 = M + 1;
      p.c = Vector::Zero(M);
      Vector lo(S), hi(S);
      lo.head(M) = c.lower1;
      hi.head(M) = c.upper1;
      lo.tail(M) = c.lower2;
      hi.tail(M) = c.upper2;
      p.support = build_box_support(lo, hi);
      p.D = Matrix::Zero(n2, d);
      for (int i = 0; i < M; ++i) p.D(i, M + i) = 1.0;  // pi_i on y_i
      p.D(M, S) = c.overtime_cost;
      for (int n = 0; n < n2; ++n) {  // y >= 0
        Matrix W = Matrix::Zero(n2, d);
        W(n, S) = 1.0;
        p.W.push_back(W);
        p.T.push_back(zero_map(d, M));
      }
      for (int i = 0; i < M; ++i) {  // y_{i+1} - y_i >= xi_i - x_i
        Matrix W = Matrix::Zero(n2, d);
        W(i + 1, S) = 1.0;
        W(i, S) = -1.0;
        p.W.push_back(W);
        AffineMap m = zero_map(d, M);
        m.t[i] = 1.0;
        m.A(S, i) = -1.0;
        p.T.push_back(m);
      }
      FirstStageRows nn;
      nn.R = Matrix::Identity(M, M);
      nn.r = Vector::Zero(M);
      p.first_stage.push_back(nn);
      FirstStageRows cap;
      cap.R = -Matrix::Ones(1, M);
      cap.r = Vector::Constant(1, c.working_time);
      p.first_stage.push_back(cap);
      break;
    }
    case Family::facility: {
      detail::require(facility != nullptr,
                      "facility instances need the per-trial cost draw");
      const int I = M, J = M;
      const int S = J;
      const int d = S + 1;
      const int n2 = I * J + J;  // y_ij fractions, w_j shortfall fractions
      p.c = facility->fixed;
      p.binary.assign(I, 1);
      p.support = build_box_support(c.lower1, c.upper1);
      p.D = Matrix::Zero(n2, d);
      for (int i = 0; i < I; ++i)
        for (int j = 0; j < J; ++j)
          p.D(i * J + j, j) = facility->trans(i, j);  // c_ij d_j y_ij
      for (int j = 0; j < J; ++j) p.D(I * J + j, j) = c.stockout;
      for (int j = 0; j < J; ++j) {  // coverage sum_i y_ij + w_j >= 1
        Matrix W = Matrix::Zero(n2, d);
        for (int i = 0; i < I; ++i) W(i * J + j, S) = 1.0;
        W(I * J + j, S) = 1.0;
        p.W.push_back(W);
        AffineMap m = zero_map(d, I);
        m.t[S] = 1.0;
        p.T.push_back(m);
      }
      for (int i = 0; i < I; ++i) {  // capacity: -sum_j d_j y_ij >= -u x_i
        Matrix W = Matrix::Zero(n2, d);
        for (int j = 0; j < J; ++j) W(i * J + j, j) = -1.0;
        p.W.push_back(W);
        AffineMap m = zero_map(d, I);
        m.A(S, i) = -c.capacity;
        p.T.push_back(m);
      }
      for (int n = 0; n < n2; ++n) {  // y, w >= 0
        Matrix W = Matrix::Zero(n2, d);
        W(n, S) = 1.0;
        p.W.push_back(W);
        p.T.push_back(zero_map(d, I));
      }
      FirstStageRows nn;
      nn.R = Matrix::Identity(I, I);
      nn.r = Vector::Zero(I);
      p.first_stage.push_back(nn);
      FirstStageRows ub;
      ub.R = -Matrix::Identity(I, I);
      ub.r = Vector::Ones(I);
      p.first_stage.push_back(ub);
      break;
    }
  }
  p.validate();
  return p;
}

/// Constructor points for the config's partitioning policy.
inline Matrix constructor_points(const ExperimentConfig& c,
                                 const TwoStageProblem& p,
                                 const Matrix& train) {
  const int K = c.effective_K();
  if (c.constructors == ConstructorPolicy::from_samples)
    return from_sample_constructors(K, train);
  const int S = p.S();
  Vector lo(S), hi(S);
  for (int j = 0; j < S; ++j) {
    auto [a, b] = p.support.coordinate_range(j);
    lo[j] = a;
    hi[j] = b;
  }
  return halton_constructors(K, lo, hi);
}

// --- evaluation --------------------------------------------------------------

/// Exact recourse values Z(x, xi) by per-sample linear programs; +inf marks
/// infeasible samples, NaN marks solver failures (counted, excluded).
struct SecondStageEvaluation {
  std::vector<double> values;
  int infeasible = 0;
  int invalid = 0;

  double feasibility_rate() const {
    const int n = static_cast<int>(values.size());
    return n > 0 ? 1.0 - static_cast<double>(infeasible) / n : 1.0;
  }
};

inline SecondStageEvaluation evaluate_second_stage(
    const TwoStageProblem& p, const Vector& x, const Matrix& samples,
    const SolveSettings& settings = {}) {
  detail::require(x.size() == p.n1(), "first-stage point has wrong size");
  SecondStageEvaluation ev;
  const int n = static_cast<int>(samples.rows());
  ev.values.resize(n, kNaN);
  for (int i = 0; i < n; ++i) {
    Vector xi = p.support.lift(samples.row(i));
    ProgramBuilder b;
    int y0 = b.add_vars(p.n2());
    Vector dxi = p.D * xi;
    for (int v = 0; v < p.n2(); ++v) b.obj(y0 + v, dxi[v]);
    std::vector<LinExpr> rows;
    for (int l = 0; l < p.L(); ++l) {
      const double rhs = (p.T[l].A * x + p.T[l].t).dot(xi);
      Vector wxi = p.W[l] * xi;
      LinExpr e(-rhs);
      for (int v = 0; v < p.n2(); ++v)
        if (wxi[v] != 0.0) e.add(y0 + v, wxi[v]);
      rows.push_back(e);
    }
    b.add_nonneg(std::move(rows));
    SolveResult res = solve(b.build(), settings);
    if (res.status == SolveStatus::infeasible) {
      ev.values[i] = kInf;
      ++ev.infeasible;
    } else if (res.ok()) {
      ev.values[i] = res.objective;
    } else {
      ++ev.invalid;
    }
  }
  return ev;
}

/// Empirical CVaR at level delta of equally weighted values (exact
/// Rockafellar-Uryasev minimizer for the discrete uniform distribution).
inline double empirical_cvar(const std::vector<double>& values, double delta) {
  detail::require(delta > 0.0 && delta <= 1.0, "delta must lie in (0, 1]");
  detail::require(!values.empty(), "no values");
  for (double v : values) {
    if (std::isinf(v)) return kInf;
    detail::require(!std::isnan(v), "NaN recourse value");
  }
  std::vector<double> v = values;
  std::sort(v.begin(), v.end(), std::greater<double>());
  const double m = delta * static_cast<double>(v.size());
  const int whole = static_cast<int>(std::floor(m));
  double acc = 0.0;
  for (int i = 0; i < whole; ++i) acc += v[i];
  const double frac = m - whole;
  if (frac > 0.0 && whole < (int)v.size()) acc += frac * v[whole];
  return acc / m;
}

/// Scenario program: min c.x + theta + 1/(delta N) sum t_i with per-scenario
/// recourse copies; binary first stages go through branch-and-bound.
inline Vector saa_solve(const TwoStageProblem& p, const Matrix& train,
                        const SolveSettings& settings = {}) {
  const int N = static_cast<int>(train.rows());
  detail::require(N >= 1, "no training samples");
  ProgramBuilder b;
  const int x0 = b.add_vars(p.n1());
  for (int v = 0; v < p.n1(); ++v) b.obj(x0 + v, p.c[v]);
  if (!p.binary.empty())
    for (int v = 0; v < p.n1(); ++v)
      if (p.binary[v]) b.mark_integer(x0 + v);
  for (const auto& fs : p.first_stage) {
    std::vector<LinExpr> rows;
    for (int r = 0; r < fs.R.rows(); ++r) {
      LinExpr e(fs.r[r]);
      for (int v = 0; v < p.n1(); ++v)
        if (fs.R(r, v) != 0.0) e.add(x0 + v, fs.R(r, v));
      rows.push_back(e);
    }
    switch (fs.kind) {
      case ConeKind::zero: b.add_zero(std::move(rows)); break;
      case ConeKind::nonneg: b.add_nonneg(std::move(rows)); break;
      case ConeKind::soc: b.add_soc(std::move(rows)); break;
      default: throw ValidationError("unsupported first-stage cone");
    }
  }
  const bool expectation = p.delta >= 1.0;
  int theta = -1;
  if (!expectation) {
    theta = b.add_var();
    b.obj(theta, 1.0);
  }
  for (int i = 0; i < N; ++i) {
    Vector xi = p.support.lift(train.row(i));
    const int y0 = b.add_vars(p.n2());
    Vector dxi = p.D * xi;
    LinExpr cost;
    for (int v = 0; v < p.n2(); ++v)
      if (dxi[v] != 0.0) cost.add(y0 + v, dxi[v]);
    if (expectation) {
      cost *= 1.0 / N;
      b.obj(cost);
    } else {
      const int t = b.add_var();
      b.obj(t, 1.0 / (p.delta * N));
      b.add_nonneg(LinExpr::variable(t));
      LinExpr epi = LinExpr::variable(t) + LinExpr::variable(theta) - cost;
      b.add_nonneg(epi);
    }
    std::vector<LinExpr> rows;
    for (int l = 0; l < p.L(); ++l) {
      Vector wxi = p.W[l] * xi;
      LinExpr e;
      for (int v = 0; v < p.n2(); ++v)
        if (wxi[v] != 0.0) e.add(y0 + v, wxi[v]);
      // subtract T_l(x).xi, affine in x
      Vector xc = p.T[l].A.transpose() * xi;
      for (int v = 0; v < p.n1(); ++v)
        if (xc[v] != 0.0) e.add(x0 + v, -xc[v]);
      e += LinExpr(-p.T[l].t.dot(xi));
      rows.push_back(e);
    }
    b.add_nonneg(std::move(rows));
  }
  auto prog = b.build();
  SolveResult res =
      prog.has_integers() ? solve_mixed(prog, settings) : solve(prog, settings);
  if (!res.ok())
    throw SolverError(std::string("scenario program solve failed: ") +
                      to_string(res.status));
  return res.x.segment(x0, p.n1());
}

}  // namespace pdro

#endif  // PDRO_EVALSUITE_HPP
