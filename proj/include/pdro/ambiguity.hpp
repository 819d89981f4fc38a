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

#ifndef PDRO_AMBIGUITY_HPP
#define PDRO_AMBIGUITY_HPP

#include <cmath>
#include <string>
#include <vector>

#include "pdro/conic/solve.hpp"
#include "pdro/requirement.hpp"

namespace pdro {

// Two-layer ambiguity set: a chi^2 ball of radius gamma around the empirical
// partition probabilities, and per-partition Frobenius balls of radius
// epsilon_k around the empirical second-moment matrices.

enum class AmbiguityProvenance : std::uint8_t { theoretical, cross_validated, manual };

inline const char* to_string(AmbiguityProvenance p) {
  switch (p) {
    case AmbiguityProvenance::theoretical: return "theoretical";
    case AmbiguityProvenance::cross_validated: return "cross-validated";
    case AmbiguityProvenance::manual: return "manual";
  }
  return "?";
}

struct AmbiguityParameters {
  Vector epsilon;  // K Frobenius radii, >= 0
  double gamma = 0.0;
  AmbiguityProvenance provenance = AmbiguityProvenance::manual;
  double rho1 = kNaN, rho2 = kNaN;  // set for theoretical provenance
  int cv_folds = 0;                 // set for cross-validated provenance

  void validate(int K) const {
    detail::require(static_cast<int>(epsilon.size()) == K,
                    "epsilon vector must have one radius per partition");
    detail::require((epsilon.array() >= 0).all(), "epsilon must be nonnegative");
    detail::require(gamma >= 0.0, "gamma must be nonnegative");
  }
};

/// Moment-ball radius that makes the partition ambiguity set hold with
/// probability 1 - rho1/K:  (R^2 / sqrt(n)) (2 + sqrt(2 ln(K/rho1))).
inline double theoretical_epsilon(double radius, long n_k, int K, double rho1) {
  detail::require(n_k >= 1, "theoretical_epsilon: empty partition");
  detail::require(rho1 > 0.0 && rho1 <= static_cast<double>(K),
                  "theoretical_epsilon: need 0 < rho1 <= K");
  const double lg = std::log(static_cast<double>(K) / rho1);
  return radius * radius / std::sqrt(static_cast<double>(n_k)) *
         (2.0 + std::sqrt(2.0 * lg));
}

enum class GammaVariant : std::uint8_t {
  calibrated,   // coefficient 2 on the sqrt term; the operative statement
  tail_bound,   // coefficient 1 variant of the concentration inequality
};

/// chi^2-ball radius: (1/N)(K - 1 + 2 sqrt(-(K-1) ln rho2) - 2 ln rho2).
inline double theoretical_gamma(long N, int K, double rho2,
                                GammaVariant variant = GammaVariant::calibrated) {
  detail::require(N >= 1, "theoretical_gamma: need N >= 1");
  detail::require(rho2 > 0.0 && rho2 <= 1.0,
                  "theoretical_gamma: need 0 < rho2 <= 1");
  const double neg_log = -std::log(rho2);
  const double coef = variant == GammaVariant::calibrated ? 2.0 : 1.0;
  return (static_cast<double>(K) - 1.0 +
          coef * std::sqrt((static_cast<double>(K) - 1.0) * neg_log) +
          2.0 * neg_log) /
         static_cast<double>(N);
}

// --- chi^2 uncertainty set --------------------------------------------------

/// Worst-case weight problem max_{p in Delta(gamma)} phi . p, solved through
/// its second-order cone form over (p, q):
///   e.p = 1, e.q <= gamma, p, q >= 0,
///   sqrt((p_k - phat_k)^2 + p_k^2/4 + q_k^2) <= p_k/2 + q_k.
inline ConicProgram chi2_primal_program(const Vector& phi, const Vector& p_hat,
                                        double gamma) {
  const int K = static_cast<int>(p_hat.size());
  detail::require(phi.size() == K, "phi/p_hat size mismatch");
  detail::require(std::abs(p_hat.sum() - 1.0) <= 1e-9,
                  "p_hat must sum to one");
  detail::require(gamma >= 0.0, "gamma must be nonnegative");
  ProgramBuilder b;
  int p0 = b.add_vars(K), q0 = b.add_vars(K);
  for (int k = 0; k < K; ++k) b.obj(p0 + k, -phi[k]);  // maximize
  {
    LinExpr sum(-1.0);
    for (int k = 0; k < K; ++k) sum.add(p0 + k, 1.0);
    b.add_zero(sum);
  }
  {
    LinExpr cap(gamma);
    for (int k = 0; k < K; ++k) cap.add(q0 + k, -1.0);
    b.add_nonneg(cap);
  }
  std::vector<LinExpr> nn;
  for (int k = 0; k < K; ++k) nn.push_back(LinExpr::variable(p0 + k));
  for (int k = 0; k < K; ++k) nn.push_back(LinExpr::variable(q0 + k));
  b.add_nonneg(nn);
  for (int k = 0; k < K; ++k) {
    b.add_soc({LinExpr::variable(p0 + k) - LinExpr(p_hat[k]),
               LinExpr::variable(p0 + k) * 0.5, LinExpr::variable(q0 + k),
               LinExpr::variable(p0 + k) * 0.5 + LinExpr::variable(q0 + k)});
  }
  return b.build();
}

/// Optimal value of max_{p in Delta(gamma)} phi . p.  gamma = 0 collapses
/// the set to the empirical weights.
inline double chi2_worst_case(const Vector& phi, const Vector& p_hat,
                              double gamma, const SolveSettings& s = {}) {
  if (gamma <= 0.0) return phi.dot(p_hat);
  auto res = solve(chi2_primal_program(phi, p_hat, gamma), s);
  if (!res.ok())
    throw SolverError(std::string("chi2 worst case solve failed: ") +
                      to_string(res.status));
  return -res.objective;  // undo the max -> min normalization
}

/// The dual second-order cone form of the same value:
///   min gamma w - eta - 2 phat.r + 2 w phat.e
///   s.t. phi_k <= s_k, s_k + eta <= w,
///        sqrt(4 r_k^2 + (s_k+eta)^2) <= 2 w - s_k - eta, w >= 0.
inline double chi2_dual_value(const Vector& phi, const Vector& p_hat,
                              double gamma, const SolveSettings& s = {}) {
  const int K = static_cast<int>(p_hat.size());
  ProgramBuilder b;
  int w = b.add_var(), eta = b.add_var();
  int r0 = b.add_vars(K), s0 = b.add_vars(K);
  b.obj(w, gamma + 2.0 * p_hat.sum());
  b.obj(eta, -1.0);
  for (int k = 0; k < K; ++k) b.obj(r0 + k, -2.0 * p_hat[k]);
  b.add_nonneg(LinExpr::variable(w));
  for (int k = 0; k < K; ++k) {
    b.add_nonneg(LinExpr::variable(s0 + k) - LinExpr(phi[k]));
    b.add_nonneg(LinExpr::variable(w) - LinExpr::variable(s0 + k) -
                 LinExpr::variable(eta));
    b.add_soc({LinExpr::variable(r0 + k) * 2.0,
               LinExpr::variable(s0 + k) + LinExpr::variable(eta),
               LinExpr::variable(w) * 2.0 - LinExpr::variable(s0 + k) -
                   LinExpr::variable(eta)});
  }
  auto res = solve(b.build(), s);
  if (!res.ok())
    throw SolverError(std::string("chi2 dual solve failed: ") +
                      to_string(res.status));
  return res.objective;
}

/// Variable handles of the chi^2 dual layer when embedded into a larger
/// program (the piecewise-rule objective and the decomposition master both
/// carry it).
struct Chi2DualLayer {
  int omega = -1, eta_dual = -1;  // -1 when gamma = 0 collapses the layer
  int r0 = -1;
  int s0 = -1;  // always present: epigraph variables bounding partition values
  bool collapsed = false;
};

/// Adds the outer-layer variables and rows to `b` and accumulates the
/// objective contribution (1/delta)(gamma w - eta - 2 phat.r + 2 w phat.e),
/// or, when gamma = 0, the collapsed weighting (1/delta) sum_k phat_k s_k.
/// `obj_scale` restores original cost units when the epigraph chain was
/// compiled in normalized units.
inline Chi2DualLayer emit_chi2_dual_layer(ProgramBuilder& b, const Vector& p_hat,
                                          double gamma, double delta,
                                          double obj_scale = 1.0) {
  const int K = static_cast<int>(p_hat.size());
  const double w = obj_scale / delta;
  Chi2DualLayer layer;
  layer.s0 = b.add_vars(K);
  if (gamma <= 0.0) {
    layer.collapsed = true;
    for (int k = 0; k < K; ++k) b.obj(layer.s0 + k, p_hat[k] * w);
    return layer;
  }
  layer.omega = b.add_var();
  layer.eta_dual = b.add_var();
  layer.r0 = b.add_vars(K);
  b.obj(layer.omega, (gamma + 2.0 * p_hat.sum()) * w);
  b.obj(layer.eta_dual, -w);
  for (int k = 0; k < K; ++k) b.obj(layer.r0 + k, -2.0 * p_hat[k] * w);
  b.add_nonneg(LinExpr::variable(layer.omega));
  for (int k = 0; k < K; ++k) {
    b.add_nonneg(LinExpr::variable(layer.omega) -
                 LinExpr::variable(layer.s0 + k) -
                 LinExpr::variable(layer.eta_dual));
    b.add_soc({LinExpr::variable(layer.r0 + k) * 2.0,
               LinExpr::variable(layer.s0 + k) + LinExpr::variable(layer.eta_dual),
               LinExpr::variable(layer.omega) * 2.0 -
                   LinExpr::variable(layer.s0 + k) -
                   LinExpr::variable(layer.eta_dual)});
  }
  return layer;
}

// --- per-partition moment dual ----------------------------------------------

/// Variable handles for one partition's worst-case expectation block.
struct MomentDualBlock {
  int alpha = -1;
  int b0 = -1;       // svec-ordered symmetric B variables
  int frob = -1;     // Frobenius epigraph variable
  CopositiveRequirement requirement;  // B + alpha e e' on the partition cone
};

/// Emits the dual of the moment problem
///   sup { E[xi' Q xi] : ||E[xi xi'] - Omega||_F <= eps, support in cone }
/// as  alpha + tr(Q Omega) + tr(B Omega) + eps ||Q' + B||_F <= bound,
/// with B symmetric, alpha free, plus the returned copositivity requirement
/// alpha e e' + B on the partition cone.  `Q` may be any affine symmetric
/// expression; the Frobenius norm is encoded over the plain (S+1)^2
/// vectorization (entrywise, no scaling).  When the caller compiles in a
/// rescaled coordinate basis, `entry_weights` carries the congruence factors
/// so the norm still measures the original-space matrix.
inline MomentDualBlock emit_moment_dual(ProgramBuilder& b, const SymExpr& Q,
                                        const Matrix& omega_hat, double eps,
                                        const SupportCone& cone,
                                        const LinExpr& bound,
                                        const std::string& tag = {},
                                        const Matrix* entry_weights = nullptr,
                                        bool pin_bound = false) {
  const int d = Q.side();
  detail::require(omega_hat.rows() == d && omega_hat.cols() == d,
                  "moment dual: Omega size mismatch");
  detail::require(eps >= 0.0, "moment dual: negative radius");
  MomentDualBlock blk;
  blk.alpha = b.add_var();
  blk.b0 = b.add_vars(svec_len(d));
  // without the Frobenius term, (B_nu_nu, alpha) trade one-for-one in every
  // expression; pin the matrix entry to remove the flat direction
  if (eps == 0.0)
    b.add_zero(LinExpr::variable(blk.b0 + svec_len(d) - 1));

  auto B_at = [&](int i, int j) {
    if (i < j) std::swap(i, j);
    return blk.b0 + j * d - j * (j - 1) / 2 + (i - j);
  };

  // moment inequality: alpha + tr(Q Omega) + tr(B Omega) + eps*f <= bound
  LinExpr row = bound;
  row.add(blk.alpha, -1.0);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      row -= Q.at(i, j) * omega_hat(i, j);
      row.add(B_at(i, j), -omega_hat(i, j));
    }
  if (eps > 0.0) {
    blk.frob = b.add_var();
    row.add(blk.frob, -eps);
    // weighted entries go through auxiliaries so the norm block itself keeps
    // unit coefficients (second-order blocks only admit uniform scaling)
    const int t0 = b.add_vars(d * d);
    std::vector<LinExpr> defs;
    std::vector<LinExpr> soc;
    defs.reserve(d * d);
    soc.reserve(d * d + 1);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        const double w = entry_weights ? (*entry_weights)(i, j) : 1.0;
        LinExpr e = Q.at(j, i) * w;  // Q' entry
        e.add(B_at(i, j), w);
        e.add(t0 + i * d + j, -1.0);
        defs.push_back(std::move(e));
        soc.push_back(LinExpr::variable(t0 + i * d + j));
      }
    b.add_zero(std::move(defs));
    soc.push_back(LinExpr::variable(blk.frob));
    b.add_soc(std::move(soc));
  }
  if (pin_bound)
    b.add_zero(row);  // no weight pulls the bound down; pin it tight
  else
    b.add_nonneg(row);

  // deferred copositivity: alpha e e' + B on the partition cone
  blk.requirement.expr = SymExpr(d);
  for (int j = 0; j < d; ++j)
    for (int i = j; i < d; ++i)
      blk.requirement.expr.at(i, j) = LinExpr::variable(B_at(i, j));
  blk.requirement.expr.at(d - 1, d - 1) += LinExpr::variable(blk.alpha);
  blk.requirement.cone = &cone;
  blk.requirement.tag = tag;
  return blk;
}

}  // namespace pdro

#endif  // PDRO_AMBIGUITY_HPP
