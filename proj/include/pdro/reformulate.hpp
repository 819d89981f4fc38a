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

#ifndef PDRO_REFORMULATE_HPP
#define PDRO_REFORMULATE_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pdro/ambiguity.hpp"
#include "pdro/conic/solve.hpp"
#include "pdro/geometry.hpp"
#include "pdro/requirement.hpp"

namespace pdro {

// Compiles the two-stage problem under piecewise linear/quadratic decision
// rules into a conic program: one family of copositivity requirements per
// partition, discharged through semidefinite-representable inner
// approximations of the copositive cone.

/// T_l(x) = A x + t, an affine map into homogenized space.
struct AffineMap {
  Matrix A;  // (S+1) x N1
  Vector t;  // (S+1)
};

/// Rows R x + r in cone, describing the first-stage feasible set.
struct FirstStageRows {
  Matrix R;
  Vector r;
  ConeKind kind = ConeKind::nonneg;
};

/// Two-stage problem data: first stage min c.x over X, recourse
/// Z(x, xi) = inf { (D xi).y : T_l(x).xi <= (W_l xi).y for l in [L] },
/// worst-case CVaR at level delta over the data-driven ambiguity set.
/// delta = 1 gives the worst-case expectation.
struct TwoStageProblem {
  Vector c;                              // N1
  std::vector<FirstStageRows> first_stage;
  std::vector<std::uint8_t> binary;      // empty or one flag per x variable
  Matrix D;                              // N2 x (S+1)
  std::vector<Matrix> W;                 // L matrices, N2 x (S+1)
  std::vector<AffineMap> T;              // L affine maps
  SupportCone support;
  double delta = 1.0;

  int n1() const { return static_cast<int>(c.size()); }
  int n2() const { return static_cast<int>(D.rows()); }
  int L() const { return static_cast<int>(W.size()); }
  int S() const { return support.S; }

  void validate() const {
    support.validate();
    const int d = S() + 1;
    detail::require(n1() >= 1, "problem needs a first-stage variable");
    detail::require(D.cols() == d, "D has wrong width");
    detail::require(!W.empty() && W.size() == T.size(),
                    "need matching W_l / T_l rows");
    for (const auto& w : W)
      detail::require(w.rows() == n2() && w.cols() == d, "W_l shape mismatch");
    for (const auto& t : T)
      detail::require(t.A.rows() == d && t.A.cols() == n1() &&
                          t.t.size() == d,
                      "T_l shape mismatch");
    for (const auto& fs : first_stage)
      detail::require(fs.R.cols() == n1() && fs.R.rows() == fs.r.size(),
                      "first-stage rows shape mismatch");
    detail::require(binary.empty() ||
                        static_cast<int>(binary.size()) == n1(),
                    "binary mask length mismatch");
    detail::require(delta > 0.0 && delta <= 1.0, "delta must lie in (0, 1]");
  }
};

/// One row of the lifted constraint system; the L native recourse rows are
/// followed by the two epigraph rows of the piecewise quadratic variable.
struct ExtendedRow {
  Matrix W;       // N2 x (S+1)
  Matrix TA;      // (S+1) x N1
  Vector Tt;      // (S+1)
  double lambda = 0.0;
  double kappa = 0.0;
};

struct ExtendedSystem {
  std::vector<ExtendedRow> rows;  // L + 2
  int L_native() const { return static_cast<int>(rows.size()) - 2; }
};

/// Lifts the native system: rows [0, L) copy (T_l, W_l, 0, 0); row L is
/// (0, 0, 1, 0); row L+1 is (0, -D, 1, 1).
inline ExtendedSystem extend_system(const TwoStageProblem& p) {
  p.validate();
  const int d = p.S() + 1;
  ExtendedSystem sys;
  sys.rows.resize(p.L() + 2);
  for (int l = 0; l < p.L(); ++l) {
    sys.rows[l].W = p.W[l];
    sys.rows[l].TA = p.T[l].A;
    sys.rows[l].Tt = p.T[l].t;
  }
  auto& tau_pos = sys.rows[p.L()];
  tau_pos.W = Matrix::Zero(p.n2(), d);
  tau_pos.TA = Matrix::Zero(d, p.n1());
  tau_pos.Tt = Vector::Zero(d);
  tau_pos.lambda = 1.0;
  tau_pos.kappa = 0.0;
  auto& tau_epi = sys.rows[p.L() + 1];
  tau_epi.W = -p.D;
  tau_epi.TA = Matrix::Zero(d, p.n1());
  tau_epi.Tt = Vector::Zero(d);
  tau_epi.lambda = 1.0;
  tau_epi.kappa = 1.0;
  return sys;
}

/// The symmetric matrix whose quadratic form reproduces row l of the lifted
/// system on the slice:
///   Delta = (W'Y + Y'W + lambda (Q + Q') - T(x) e' - e T(x)') / 2.
/// `x` holds the first-stage expressions, `Y(n, j)` the linear-rule
/// coefficients, `Q` the quadratic rule (nullptr when absent).  Affine in
/// all arguments by construction.
inline SymExpr delta_matrix(const ExtendedRow& row,
                            const std::vector<LinExpr>& x,
                            const std::function<LinExpr(int, int)>& Y,
                            const SymExpr* Q) {
  const int d = static_cast<int>(row.W.cols());
  const int n2 = static_cast<int>(row.W.rows());
  SymExpr delta(d);
  for (int j = 0; j < d; ++j) {
    for (int i = j; i < d; ++i) {
      LinExpr e;
      for (int n = 0; n < n2; ++n) {
        if (row.W(n, i) != 0.0) e += Y(n, j) * (0.5 * row.W(n, i));
        if (row.W(n, j) != 0.0) e += Y(n, i) * (0.5 * row.W(n, j));
      }
      if (row.lambda != 0.0 && Q != nullptr) e += Q->at(i, j) * row.lambda;
      // - sym(T(x) e_{S+1}')
      if (j == d - 1) {
        LinExpr tx(row.Tt[i]);
        for (int v = 0; v < (int)x.size(); ++v)
          if (row.TA(i, v) != 0.0) tx += x[v] * row.TA(i, v);
        e -= tx * 0.5;
      }
      if (i == d - 1) {
        LinExpr tx(row.Tt[j]);
        for (int v = 0; v < (int)x.size(); ++v)
          if (row.TA(j, v) != 0.0) tx += x[v] * row.TA(j, v);
        e -= tx * 0.5;
      }
      delta.at(i, j) = std::move(e);
    }
  }
  return delta;
}

// --- inner approximations of the copositive cone ----------------------------

enum class InnerCone : std::uint8_t { ia0, ia1 };

inline const char* to_string(InnerCone c) {
  return c == InnerCone::ia0 ? "ia0" : "ia1";
}

/// M-hat = R'(e_r e_r' - sum_{l < r} e_l e_l')R over the second-order rows;
/// zero when the cone has none.
inline Matrix soc_quadratic_matrix(const SupportCone& cone) {
  const int sr = cone.num_soc();
  if (sr == 0) return Matrix::Zero(cone.dim(), cone.dim());
  Vector diag = Vector::Constant(sr, -1.0);
  diag[sr - 1] = 1.0;
  return cone.R.transpose() * diag.asDiagonal() * cone.R;
}

struct DischargeVars {
  int beta0 = -1, n_beta = 0;     // level-0 multipliers
  int tau = -1;                   // soc multiplier (both levels)
  int sigma0 = -1, n_sigma = 0;   // level-1 polyhedral certificate
  int phi0 = -1, phi_rows = 0, phi_cols = 0;  // level-1 cross certificate
};

namespace detail {

// rows supported on the homogenization coordinate alone contribute a psd
// rank-1 term that the certificate's U can absorb; emitting a multiplier for
// them only creates a flat optimal face
inline bool nu_only_row(const Matrix& P, int a) {
  const int d = static_cast<int>(P.cols());
  for (int j = 0; j + 1 < d; ++j)
    if (P(a, j) != 0.0) return false;
  return P(a, d - 1) > 0.0;
}

}  // namespace detail

/// level-0 certificate: expr = U + tau M-hat + (P' beta e' + e beta' P)/2
/// with U psd, beta >= 0, tau >= 0.  The tau M-hat term is omitted when the
/// cone has no second-order rows; multipliers that are absorbable into U are
/// not emitted (same cone, fewer flat directions).
inline DischargeVars ia0_discharge(ProgramBuilder& b,
                                   const CopositiveRequirement& req) {
  const SupportCone& cone = *req.cone;
  const int d = cone.dim();
  const int sp = cone.num_poly();
  DischargeVars vars;
  std::vector<int> beta_var(sp, -1);
  {
    std::vector<LinExpr> nn;
    for (int a = 0; a < sp; ++a) {
      if (detail::nu_only_row(cone.P, a)) continue;
      beta_var[a] = b.add_var();
      ++vars.n_beta;
      nn.push_back(LinExpr::variable(beta_var[a]));
    }
    if (!nn.empty()) b.add_nonneg(std::move(nn));
  }
  vars.beta0 = -1;  // sparse allocation; see beta_var
  Matrix Mhat;
  if (cone.has_soc()) {
    vars.tau = b.add_var();
    b.add_nonneg(LinExpr::variable(vars.tau));
    Mhat = soc_quadratic_matrix(cone);
  }
  SymExpr U(d);
  for (int j = 0; j < d; ++j)
    for (int i = j; i < d; ++i) {
      LinExpr e = req.expr.at(i, j);
      if (vars.tau >= 0) e.add(vars.tau, -Mhat(i, j));
      if (j == d - 1)
        for (int a = 0; a < sp; ++a)
          if (beta_var[a] >= 0 && cone.P(a, i) != 0.0)
            e.add(beta_var[a], -0.5 * cone.P(a, i));
      if (i == d - 1)
        for (int a = 0; a < sp; ++a)
          if (beta_var[a] >= 0 && cone.P(a, j) != 0.0)
            e.add(beta_var[a], -0.5 * cone.P(a, j));
      U.at(i, j) = std::move(e);
    }
  b.add_psd(U);
  return vars;
}

/// level-1 certificate: expr = U + tau M-hat + P' Sigma P + sym(P' Phi R)
/// with U psd, Sigma symmetric entrywise nonnegative, Rows(Phi) in the
/// second-order cone.  Diagonal Sigma entries add psd rank-1 terms that U
/// absorbs, so only the off-diagonal part is emitted.
inline DischargeVars ia1_discharge(ProgramBuilder& b,
                                   const CopositiveRequirement& req) {
  const SupportCone& cone = *req.cone;
  const int d = cone.dim();
  const int sp = cone.num_poly();
  const int sr = cone.num_soc();
  DischargeVars vars;
  // strict lower-triangle indexing of the off-diagonal Sigma entries
  std::vector<int> sigma_var(sp * sp, -1);
  {
    std::vector<LinExpr> nn;
    for (int a = 1; a < sp; ++a)
      for (int c = 0; c < a; ++c) {
        const int v = b.add_var();
        sigma_var[a * sp + c] = sigma_var[c * sp + a] = v;
        ++vars.n_sigma;
        nn.push_back(LinExpr::variable(v));
      }
    if (!nn.empty()) b.add_nonneg(std::move(nn));
  }
  Matrix Mhat;
  if (sr > 0) {
    vars.tau = b.add_var();
    b.add_nonneg(LinExpr::variable(vars.tau));
    Mhat = soc_quadratic_matrix(cone);
    vars.phi0 = b.add_vars(sp * sr);
    vars.phi_rows = sp;
    vars.phi_cols = sr;
    for (int a = 0; a < sp; ++a) {
      std::vector<LinExpr> soc;
      for (int r = 0; r < sr; ++r)
        soc.push_back(LinExpr::variable(vars.phi0 + a * sr + r));
      b.add_soc(std::move(soc));
    }
  }
  SymExpr U(d);
  for (int j = 0; j < d; ++j)
    for (int i = j; i < d; ++i) {
      LinExpr e = req.expr.at(i, j);
      if (vars.tau >= 0) e.add(vars.tau, -Mhat(i, j));
      // -(P' Sigma P)_{ij} over the off-diagonal entries: Sigma_{ac} with
      // a != c contributes P_{ai} P_{cj} + P_{ci} P_{aj}
      for (int a = 1; a < sp; ++a)
        for (int c = 0; c < a; ++c) {
          const double coef =
              cone.P(a, i) * cone.P(c, j) + cone.P(c, i) * cone.P(a, j);
          if (coef != 0.0) e.add(sigma_var[a * sp + c], -coef);
        }
      if (sr > 0)
        for (int a = 0; a < sp; ++a)
          for (int r = 0; r < sr; ++r) {
            const double coef = 0.5 * (cone.P(a, i) * cone.R(r, j) +
                                       cone.P(a, j) * cone.R(r, i));
            if (coef != 0.0) e.add(vars.phi0 + a * sr + r, -coef);
          }
      U.at(i, j) = std::move(e);
    }
  b.add_psd(U);
  return vars;
}

inline DischargeVars discharge(ProgramBuilder& b,
                               const CopositiveRequirement& req,
                               InnerCone level) {
  return level == InnerCone::ia0 ? ia0_discharge(b, req)
                                 : ia1_discharge(b, req);
}

// --- compilation-time coordinate scaling -------------------------------------
//
// The homogenized data mixes magnitudes badly (second moments grow with the
// square of the support bounds while the epigraph rows are unit scale), so
// programs are compiled in the congruence-scaled basis xi' = inv(Sigma) xi
// with Sigma = diag(sigma, 1) taken from the support ranges.  The inner
// approximations transform covariantly (IA(inv(Sigma) K) =
// inv(Sigma) IA(K) inv(Sigma)), so this is an exact change of variables, not
// an approximation; Frobenius-ball radii keep their original meaning through
// entry weights sigma_i sigma_j in the norm blocks.

struct CompileScaling {
  Vector sigma;     // (S+1) diagonal, last entry 1
  Matrix weights;   // 1/(sigma_i sigma_j): scaled entries back to original
  double cost_scale = 1.0;  // second-stage cost normalization

  Matrix scale_cols(const Matrix& M) const {  // M * Sigma
    return M * sigma.asDiagonal();
  }
  Matrix congruence_inv(const Matrix& M) const {  // inv(S) M inv(S)
    Vector inv = sigma.cwiseInverse();
    return inv.asDiagonal() * M * inv.asDiagonal();
  }
  SupportCone scale_cone(const SupportCone& cone) const {
    SupportCone out = cone;
    out.P = cone.P * sigma.asDiagonal();
    // each polyhedral row is a half-space; unit-normalizing it changes
    // nothing but the certificate multipliers' units
    for (int a = 0; a < out.P.rows(); ++a) {
      const double mx = out.P.row(a).cwiseAbs().maxCoeff();
      if (mx > 1e-12) out.P.row(a) /= mx;
    }
    if (cone.has_soc()) {
      out.R = cone.R * sigma.asDiagonal();
      const double mx = out.R.cwiseAbs().maxCoeff();
      if (mx > 1e-12) out.R /= mx;  // uniform: rows of R couple
    }
    return out;
  }
};

inline CompileScaling compile_scaling(const SupportCone& support,
                                      const SolveSettings& settings = {}) {
  CompileScaling sc;
  sc.sigma = Vector::Ones(support.dim());
  for (int i = 0; i < support.S; ++i) {
    auto [lo, hi] = support.coordinate_range(i, settings);
    const double m = std::max(std::abs(lo), std::abs(hi));
    sc.sigma[i] = m > 1e-8 ? m : 1.0;
  }
  Vector inv = sc.sigma.cwiseInverse();
  sc.weights = inv * inv.transpose();
  return sc;
}

/// Certified membership of a numeric matrix in the inner cone (certificate
/// feasibility).  `false` means no certificate exists; the matrix may still
/// be copositive.
inline bool ia_member(const Matrix& V, const SupportCone& cone, InnerCone level,
                      const SolveSettings& s = {}) {
  ProgramBuilder b;
  CopositiveRequirement req;
  req.cone = &cone;
  req.expr = SymExpr(cone.dim());
  req.expr.add_constant(V);
  discharge(b, req, level);
  auto res = solve(b.build(), s);
  if (res.status == SolveStatus::infeasible) return false;
  if (res.ok()) return true;
  throw SolverError(std::string("membership solve failed: ") +
                    to_string(res.status));
}

// --- the piecewise-decision-rule program ------------------------------------

enum class BuildMode : std::uint8_t {
  automatic,           // delta < 1: full epigraph; delta = 1: theta fixed at 0
  epigraph,            // full CVaR epigraph regardless of delta
  direct_expectation,  // delta = 1 only: Q eliminated via sym(D'Y)
};

struct PdrOptions {
  InnerCone cone = InnerCone::ia0;
  BuildMode mode = BuildMode::automatic;
};

struct PdrVarMap {
  int x0 = -1, n1 = 0;
  int theta = -1;  // -1 when theta is fixed at zero
  Chi2DualLayer layer;
  struct Partition {
    int Y0 = -1;             // N2 x (S+1), row-major
    int q0 = -1;             // svec of Q; -1 in direct-expectation mode
    int alpha = -1;
    int b0 = -1;             // svec of B
    std::vector<int> rows;   // extended-system row indices in use
  };
  std::vector<Partition> parts;
  int n2 = 0, d = 0;

  LinExpr Y(int k, int n, int j) const {
    return LinExpr::variable(parts[k].Y0 + n * d + j);
  }
  LinExpr theta_expr() const {
    return theta >= 0 ? LinExpr::variable(theta) : LinExpr(0.0);
  }
};

struct PdrBuildArtifacts {
  ProgramBuilder builder;
  std::vector<CopositiveRequirement> requirements;
  PdrVarMap map;
  ExtendedSystem system;  // in the scaled basis
  BuildMode resolved_mode = BuildMode::automatic;
  bool theta_fixed_zero = false;
  CompileScaling scaling;

  /// requirement cones point into this copy of the scheme (scaled basis)
  std::vector<SupportCone> cones;
};

/// Emits the objective, first-stage set, chi^2 layer, rule variables and
/// per-partition moment blocks; the copositivity requirements are returned
/// for a later discharge pass.  Objective:
///   c.x + theta + (1/delta)(gamma w - eta - 2 phat.r + 2 w phat.e).
inline PdrBuildArtifacts build_pdr_cop(const TwoStageProblem& prob,
                                       const PartitionScheme& scheme,
                                       const AmbiguityParameters& amb,
                                       const PdrOptions& opt = {}) {
  prob.validate();
  const int K = scheme.K();
  detail::require(K >= 1, "partition scheme is empty");
  amb.validate(K);
  detail::require(prob.S() == scheme.S(), "scheme/problem dimension mismatch");

  PdrBuildArtifacts art;
  art.scaling = compile_scaling(prob.support);
  TwoStageProblem scaled = prob;
  scaled.D = art.scaling.scale_cols(prob.D);
  {
    // normalize the cost-unit chain: Q, B, alpha, pi, theta and the layer all
    // inherit D's magnitude, unlike the rule coefficients Y
    const double dmax = scaled.D.cwiseAbs().maxCoeff();
    art.scaling.cost_scale = dmax > 1e-8 ? dmax : 1.0;
    scaled.D /= art.scaling.cost_scale;
  }
  for (auto& W : scaled.W) W = art.scaling.scale_cols(W);
  for (auto& t : scaled.T) {
    t.A = art.scaling.sigma.asDiagonal() * t.A;
    t.t = art.scaling.sigma.asDiagonal() * t.t;
  }
  scaled.support = art.scaling.scale_cone(prob.support);
  art.system = extend_system(scaled);
  art.cones.reserve(scheme.cones.size());
  for (const auto& cone : scheme.cones)
    art.cones.push_back(art.scaling.scale_cone(cone));
  const int L = prob.L();
  const int d = prob.S() + 1;
  const int n1 = prob.n1();
  const int n2 = prob.n2();

  BuildMode mode = opt.mode;
  const bool delta_one = prob.delta >= 1.0;
  if (mode == BuildMode::direct_expectation)
    detail::require(delta_one, "direct-expectation build needs delta = 1");
  art.resolved_mode = mode;
  const bool use_theta = (mode == BuildMode::epigraph) || !delta_one;
  art.theta_fixed_zero = !use_theta;

  // rows of the lifted system each partition must dominate
  std::vector<int> used_rows;
  for (int l = 0; l < L; ++l) used_rows.push_back(l);
  if (mode != BuildMode::direct_expectation) {
    if (use_theta) used_rows.push_back(L);  // tau >= 0
    used_rows.push_back(L + 1);             // tau >= (D xi).y - kappa theta
  }

  ProgramBuilder& b = art.builder;
  PdrVarMap& map = art.map;
  map.n1 = n1;
  map.n2 = n2;
  map.d = d;
  map.x0 = b.add_vars(n1);
  for (int v = 0; v < n1; ++v) b.obj(map.x0 + v, prob.c[v]);
  if (!prob.binary.empty())
    for (int v = 0; v < n1; ++v)
      if (prob.binary[v]) b.mark_integer(map.x0 + v);

  for (const auto& fs : prob.first_stage) {
    std::vector<LinExpr> rows;
    for (int rIdx = 0; rIdx < fs.R.rows(); ++rIdx) {
      LinExpr e(fs.r[rIdx]);
      for (int v = 0; v < n1; ++v)
        if (fs.R(rIdx, v) != 0.0) e.add(map.x0 + v, fs.R(rIdx, v));
      rows.push_back(e);
    }
    switch (fs.kind) {
      case ConeKind::zero: b.add_zero(std::move(rows)); break;
      case ConeKind::nonneg: b.add_nonneg(std::move(rows)); break;
      case ConeKind::soc: b.add_soc(std::move(rows)); break;
      default: throw ValidationError("unsupported first-stage cone");
    }
  }

  if (use_theta) {
    map.theta = b.add_var();
    b.obj(map.theta, art.scaling.cost_scale);
  }

  map.layer = emit_chi2_dual_layer(b, scheme.p_hat, amb.gamma, prob.delta,
                                   art.scaling.cost_scale);

  std::vector<LinExpr> x_exprs;
  for (int v = 0; v < n1; ++v) x_exprs.push_back(LinExpr::variable(map.x0 + v));

  map.parts.resize(K);
  for (int k = 0; k < K; ++k) {
    auto& part = map.parts[k];
    part.rows = used_rows;
    part.Y0 = b.add_vars(n2 * d);

    // quadratic rule: explicit variables, or sym(D'Y) in direct mode
    SymExpr Q(d);
    if (mode == BuildMode::direct_expectation) {
      for (int j = 0; j < d; ++j)
        for (int i = j; i < d; ++i) {
          LinExpr e;
          for (int n = 0; n < n2; ++n) {
            if (scaled.D(n, i) != 0.0)
              e += map.Y(k, n, j) * (0.5 * scaled.D(n, i));
            if (scaled.D(n, j) != 0.0)
              e += map.Y(k, n, i) * (0.5 * scaled.D(n, j));
          }
          Q.at(i, j) = std::move(e);
        }
    } else {
      part.q0 = b.add_vars(svec_len(d));
      for (int j = 0; j < d; ++j)
        for (int i = j; i < d; ++i)
          Q.at(i, j) =
              LinExpr::variable(part.q0 + j * d - j * (j - 1) / 2 + (i - j));
    }

    const Matrix omega_scaled = art.scaling.congruence_inv(scheme.omega_hat[k]);
    // an unweighted epigraph variable has no downward pressure; pinning it
    // removes an optimal ray without changing the value
    const bool pin = map.layer.collapsed && scheme.p_hat[k] == 0.0;
    auto moment = emit_moment_dual(
        b, Q, omega_scaled, amb.epsilon[k], art.cones[k],
        LinExpr::variable(map.layer.s0 + k), "moment k=" + std::to_string(k),
        &art.scaling.weights, pin);
    part.alpha = moment.alpha;
    part.b0 = moment.b0;
    art.requirements.push_back(std::move(moment.requirement));
    // re-anchor the cone pointer at our stable copy
    art.requirements.back().cone = &art.cones[k];

    // the scalar multipliers pi_l >= -kappa_l theta fold into the matrix
    // requirement (pi e e' is absorbable), leaving Delta + kappa theta e e'
    auto Yfun = [&map, k](int n, int j) { return map.Y(k, n, j); };
    for (std::size_t idx = 0; idx < part.rows.size(); ++idx) {
      const int l = part.rows[idx];
      const auto& row = art.system.rows[l];
      SymExpr dm = delta_matrix(row, x_exprs, Yfun, &Q);
      if (row.kappa != 0.0 && use_theta)
        dm.at(d - 1, d - 1) += map.theta_expr() * row.kappa;
      CopositiveRequirement req;
      req.expr = std::move(dm);
      req.cone = &art.cones[k];
      req.tag = "k=" + std::to_string(k) + " l=" + std::to_string(l);
      art.requirements.push_back(std::move(req));
    }
  }
  return art;
}

/// Discharges every requirement at the chosen level and finalizes the
/// program.
inline ConicProgram finish_pdr_program(PdrBuildArtifacts& art, InnerCone level) {
  for (const auto& req : art.requirements) discharge(art.builder, req, level);
  return art.builder.build();
}

struct PdrSolution {
  SolveStatus status = SolveStatus::numerical_failure;
  InnerCone cone = InnerCone::ia0;
  Vector x;
  double theta = 0.0;
  double objective = kNaN;
  // chi^2 dual layer values (empty when gamma = 0 collapsed the layer)
  double omega = 0.0, eta_dual = 0.0;
  Vector r, s;
  struct Rule {
    Matrix Y;   // N2 x (S+1)
    Matrix Q;   // (S+1) x (S+1); sym(D'Y) in direct mode
    Matrix B;
    double alpha = 0.0;
    Vector pi;
  };
  std::vector<Rule> rules;
  SolveResult detail;

  bool ok() const {
    return status == SolveStatus::optimal || status == SolveStatus::inaccurate;
  }
};

inline PdrSolution extract_pdr_solution(const PdrBuildArtifacts& art,
                                        const TwoStageProblem& prob,
                                        const SolveResult& res,
                                        InnerCone level) {
  PdrSolution sol;
  sol.status = res.status;
  sol.cone = level;
  sol.detail = res;
  if (!res.ok()) return sol;
  const auto& map = art.map;
  const int d = map.d, n2 = map.n2;
  const double cu = art.scaling.cost_scale;  // back to original cost units
  sol.objective = res.objective;
  sol.x = res.x.segment(map.x0, map.n1);
  sol.theta = map.theta >= 0 ? cu * res.x[map.theta] : 0.0;
  const int K = static_cast<int>(map.parts.size());
  sol.s.resize(K);
  for (int k = 0; k < K; ++k) sol.s[k] = cu * res.x[map.layer.s0 + k];
  if (!map.layer.collapsed) {
    sol.omega = cu * res.x[map.layer.omega];
    sol.eta_dual = cu * res.x[map.layer.eta_dual];
    sol.r.resize(K);
    for (int k = 0; k < K; ++k) sol.r[k] = cu * res.x[map.layer.r0 + k];
  }
  sol.rules.resize(K);
  const Vector& sigma = art.scaling.sigma;
  for (int k = 0; k < K; ++k) {
    auto& rule = sol.rules[k];
    const auto& part = map.parts[k];
    // variables live in the scaled basis; map rules back to original
    // coordinates (Y <- Y' inv(Sigma), Q/B <- inv(Sigma) Q' inv(Sigma))
    rule.Y.resize(n2, d);
    for (int n = 0; n < n2; ++n)
      for (int j = 0; j < d; ++j)
        rule.Y(n, j) = res.x[part.Y0 + n * d + j] / sigma[j];
    if (part.q0 >= 0) {
      rule.Q.resize(d, d);
      int at = 0;
      for (int j = 0; j < d; ++j)
        for (int i = j; i < d; ++i) {
          const double q =
              cu * res.x[part.q0 + at++] / (sigma[i] * sigma[j]);
          rule.Q(i, j) = rule.Q(j, i) = q;
        }
    } else {
      rule.Q = 0.5 * (prob.D.transpose() * rule.Y + rule.Y.transpose() * prob.D);
    }
    rule.B.resize(d, d);
    int at = 0;
    for (int j = 0; j < d; ++j)
      for (int i = j; i < d; ++i) {
        const double v = cu * res.x[part.b0 + at++] / (sigma[i] * sigma[j]);
        rule.B(i, j) = rule.B(j, i) = v;
      }
    rule.alpha = cu * res.x[part.alpha];
    // the folded multipliers correspond to pi_l = -kappa_l theta
    rule.pi.resize(part.rows.size());
    for (std::size_t idx = 0; idx < part.rows.size(); ++idx) {
      const double kap = art.system.rows[part.rows[idx]].kappa;
      rule.pi[idx] = -kap * sol.theta;
    }
  }
  return sol;
}

/// Builds and solves the piecewise-decision-rule program.  An infeasible
/// level-0 build is retried once at level 1 before reporting.
inline PdrSolution solve_pdr(const TwoStageProblem& prob,
                             const PartitionScheme& scheme,
                             const AmbiguityParameters& amb,
                             const PdrOptions& opt = {},
                             const SolveSettings& settings = {}) {
  auto art = build_pdr_cop(prob, scheme, amb, opt);
  auto program = finish_pdr_program(art, opt.cone);
  SolveResult res = program.has_integers() ? solve_mixed(program, settings)
                                           : solve(program, settings);
  if (res.status == SolveStatus::infeasible && opt.cone == InnerCone::ia0) {
    PdrOptions retry = opt;
    retry.cone = InnerCone::ia1;
    auto art1 = build_pdr_cop(prob, scheme, amb, retry);
    auto program1 = finish_pdr_program(art1, retry.cone);
    SolveResult res1 = program1.has_integers() ? solve_mixed(program1, settings)
                                               : solve(program1, settings);
    if (res1.ok()) return extract_pdr_solution(art1, prob, res1, retry.cone);
  }
  return extract_pdr_solution(art, prob, res, opt.cone);
}

// --- complete recourse certificate ------------------------------------------

struct RecourseCertificate {
  bool certified = false;
  double margin = kNaN;  // best min_l beta_l under the normalization |Y| <= 1
  Matrix Y;
  Vector beta;
};

/// Searches for a linear rule Y with (W_l xi)' Y xi > 0 on the support cone
/// for every native row, via the inner approximation.  `certified` means the
/// margin exceeds `recourse_tol` under the normalization |Y_ij| <= 1;
/// `unknown` (certified = false) is inconclusive since the inner cone is
/// only sufficient.
inline RecourseCertificate check_complete_recourse(
    const TwoStageProblem& prob, InnerCone level = InnerCone::ia0,
    double recourse_tol = 1e-6, const SolveSettings& settings = {}) {
  prob.validate();
  const int d = prob.S() + 1;
  const int n2 = prob.n2();
  const int L = prob.L();
  const CompileScaling sc = compile_scaling(prob.support);
  const SupportCone cone = sc.scale_cone(prob.support);
  std::vector<Matrix> W(L);
  for (int l = 0; l < L; ++l) W[l] = sc.scale_cols(prob.W[l]);
  ProgramBuilder b;
  const int y0 = b.add_vars(n2 * d);
  const int beta0 = b.add_vars(L);
  const int t = b.add_var();
  b.obj(t, -1.0);  // maximize the worst margin
  {
    std::vector<LinExpr> box;
    for (int i = 0; i < n2 * d; ++i) {
      box.push_back(LinExpr(1.0) - LinExpr::variable(y0 + i));
      box.push_back(LinExpr(1.0) + LinExpr::variable(y0 + i));
    }
    b.add_nonneg(std::move(box));
  }
  {
    std::vector<LinExpr> rows;
    for (int l = 0; l < L; ++l)
      rows.push_back(LinExpr::variable(beta0 + l) - LinExpr::variable(t));
    b.add_nonneg(std::move(rows));
  }
  std::vector<CopositiveRequirement> reqs(L);
  for (int l = 0; l < L; ++l) {
    SymExpr m(d);
    for (int j = 0; j < d; ++j)
      for (int i = j; i < d; ++i) {
        LinExpr e;
        for (int n = 0; n < n2; ++n) {
          if (W[l](n, i) != 0.0) e.add(y0 + n * d + j, 0.5 * W[l](n, i));
          if (W[l](n, j) != 0.0) e.add(y0 + n * d + i, 0.5 * W[l](n, j));
        }
        m.at(i, j) = std::move(e);
      }
    m.at(d - 1, d - 1).add(beta0 + l, -1.0);
    reqs[l].expr = std::move(m);
    reqs[l].cone = &cone;
    reqs[l].tag = "recourse l=" + std::to_string(l);
    discharge(b, reqs[l], level);
  }
  RecourseCertificate cert;
  SolveResult res;
  try {
    res = solve(b.build(), settings);
  } catch (const SolverError&) {
    return cert;  // unknown
  }
  if (!res.ok()) return cert;  // unknown
  cert.margin = -res.objective;
  cert.certified = cert.margin > recourse_tol;
  cert.Y.resize(n2, d);
  for (int n = 0; n < n2; ++n)
    for (int j = 0; j < d; ++j)
      cert.Y(n, j) = res.x[y0 + n * d + j] / sc.sigma[j];
  cert.beta.resize(L);
  for (int l = 0; l < L; ++l) cert.beta[l] = res.x[beta0 + l];
  return cert;
}

}  // namespace pdro

#endif  // PDRO_REFORMULATE_HPP
