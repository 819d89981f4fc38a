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

#ifndef PDRO_BENDERS_HPP
#define PDRO_BENDERS_HPP

#include <atomic>
#include <memory>
#include <optional>
#include <sstream>
#include <thread>
#include <vector>

#include "pdro/reformulate.hpp"

namespace pdro {

// Decomposition of the piecewise-decision-rule program: a master
// second-order cone program over (x, theta, chi^2 layer, s) accumulates
// optimality and feasibility cuts generated by per-partition dual
// subproblems whose completely positive memberships are relaxed to outer
// semidefinite approximations.  The outer level-l cone is the exact conic
// dual of the inner level-l cone, so with matching levels the loop solves
// the same program as the monolithic build.

enum class OuterCone : std::uint8_t { oa0, oa1 };

inline const char* to_string(OuterCone c) {
  return c == OuterCone::oa0 ? "oa0" : "oa1";
}

inline InnerCone paired_inner(OuterCone c) {
  return c == OuterCone::oa0 ? InnerCone::ia0 : InnerCone::ia1;
}

struct BendersSettings {
  double tol = 0.05;            // relative gap target (the algorithm's eta)
  int max_iters = 200;
  OuterCone cone = OuterCone::oa0;
  int parallel = 2;             // concurrent subproblem solves
  bool recover_policy = true;   // final primal pass for the rule coefficients
  double ray_tol = 1e-7;
  double cut_dedup_tol = 1e-9;
  double floor = 1e4;           // master lower floor on s and theta (scaled)
  SolveSettings solver;
  SolveSettings master_solver;

  BendersSettings() {
    solver.feas_tol = solver.gap_tol = 1e-8;
    master_solver.feas_tol = master_solver.gap_tol = 1e-9;
  }
};

struct CutPool {
  // one tuple of matrices (H_l, l in the active row set) per cut
  std::vector<std::vector<Matrix>> optimality;
  std::vector<std::vector<Matrix>> feasibility;
};

struct BendersIterRow {
  int iter = 0;
  double lower = -kInf, upper = kInf, jhat = kNaN;
  Vector subvalues;  // true cost units
  int opt_cuts_added = 0, feas_cuts_added = 0;
  double wall_ms = 0.0;
};

struct BendersResult {
  PdrSolution solution;
  std::vector<BendersIterRow> trace;
  double lower = -kInf, upper = kInf;
  int iterations = 0;
  bool converged = false;
  bool floor_active = false;
  std::vector<CutPool> pools;
};

namespace detail {

// shared compilation context, scaled exactly like build_pdr_cop
struct BendersContext {
  const TwoStageProblem* prob = nullptr;
  const PartitionScheme* scheme = nullptr;
  const AmbiguityParameters* amb = nullptr;
  CompileScaling sc;
  ExtendedSystem system;            // scaled
  std::vector<SupportCone> cones;   // scaled
  std::vector<Matrix> omega;        // scaled
  std::vector<int> rows;            // active extended-system rows
  bool use_theta = false;
  int d = 0;

  void init(const TwoStageProblem& p, const PartitionScheme& sch,
            const AmbiguityParameters& a) {
    prob = &p;
    scheme = &sch;
    amb = &a;
    p.validate();
    a.validate(sch.K());
    sc = compile_scaling(p.support);
    TwoStageProblem scaled = p;
    scaled.D = sc.scale_cols(p.D);
    const double dmax = scaled.D.cwiseAbs().maxCoeff();
    sc.cost_scale = dmax > 1e-8 ? dmax : 1.0;
    scaled.D /= sc.cost_scale;
    for (auto& W : scaled.W) W = sc.scale_cols(W);
    for (auto& t : scaled.T) {
      t.A = sc.sigma.asDiagonal() * t.A;
      t.t = sc.sigma.asDiagonal() * t.t;
    }
    scaled.support = sc.scale_cone(p.support);
    system = extend_system(scaled);
    cones.clear();
    for (const auto& c : sch.cones) cones.push_back(sc.scale_cone(c));
    omega.clear();
    for (const auto& om : sch.omega_hat) omega.push_back(sc.congruence_inv(om));
    use_theta = p.delta < 1.0;
    rows.clear();
    for (int l = 0; l < p.L(); ++l) rows.push_back(l);
    if (use_theta) rows.push_back(p.L());
    rows.push_back(p.L() + 1);
    d = p.S() + 1;
  }
};

// outer membership blocks for a symmetric matrix of variables
inline void add_outer_membership(ProgramBuilder& b, int var0, int d,
                                 const SupportCone& cone, OuterCone level) {
  auto at = [&](int i, int j) {
    if (i < j) std::swap(i, j);
    return var0 + j * d - j * (j - 1) / 2 + (i - j);
  };
  SymExpr F(d);
  for (int j = 0; j < d; ++j)
    for (int i = j; i < d; ++i) F.at(i, j) = LinExpr::variable(at(i, j));
  b.add_psd(F);
  {
    std::vector<LinExpr> rows;
    for (int a = 0; a < cone.num_poly(); ++a) {
      LinExpr e;  // (P F e)_a
      for (int j = 0; j < d; ++j)
        if (cone.P(a, j) != 0.0) e.add(at(j, d - 1), cone.P(a, j));
      rows.push_back(e);
    }
    b.add_nonneg(std::move(rows));
  }
  if (cone.has_soc()) {
    const Matrix M = soc_quadratic_matrix(cone);
    LinExpr tr;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        if (M(i, j) != 0.0) tr.add(at(i, j), M(i, j));
    b.add_nonneg(tr);
  }
  if (level == OuterCone::oa1) {
    const int sp = cone.num_poly();
    std::vector<LinExpr> rows;
    for (int a = 0; a < sp; ++a)
      for (int c = a; c < sp; ++c) {
        LinExpr e;  // (P F P')_{ac}
        for (int i = 0; i < d; ++i) {
          if (cone.P(a, i) == 0.0) continue;
          for (int j = 0; j < d; ++j)
            if (cone.P(c, j) != 0.0) e.add(at(i, j), cone.P(a, i) * cone.P(c, j));
        }
        rows.push_back(e);
      }
    b.add_nonneg(std::move(rows));
    if (cone.has_soc()) {
      const int sr = cone.num_soc();
      for (int a = 0; a < sp; ++a) {
        std::vector<LinExpr> soc;
        for (int r = 0; r < sr; ++r) {
          LinExpr e;  // (P F R')_{ar}
          for (int i = 0; i < d; ++i) {
            if (cone.P(a, i) == 0.0) continue;
            for (int j = 0; j < d; ++j)
              if (cone.R(r, j) != 0.0)
                e.add(at(i, j), cone.P(a, i) * cone.R(r, j));
          }
          soc.push_back(e);
        }
        b.add_soc(std::move(soc));
      }
    }
  }
}

// Dual subproblem for partition k at fixed first-stage candidate; the
// constraint set is candidate-independent, so the solver (and its
// factorization) is reused across iterations with updated objectives.
class Subproblem {
 public:
  Subproblem(const BendersContext& ctx, int k, const BendersSettings& bset)
      : ctx_(ctx), k_(k) {
    const int d = ctx.d;
    const int nrows = static_cast<int>(ctx.rows.size());
    ProgramBuilder b;
    g0_ = b.add_vars(d * d);
    o0_ = b.add_vars(svec_len(d));
    h0_.resize(nrows);
    for (int r = 0; r < nrows; ++r) h0_[r] = b.add_vars(svec_len(d));

    auto sym_at = [&](int base, int i, int j) {
      if (i < j) std::swap(i, j);
      return base + j * d - j * (j - 1) / 2 + (i - j);
    };

    // ||G~||_F <= eps (plain ball; the congruence weights sit in the
    // equality rows so the ball measures the original-space norm)
    {
      std::vector<LinExpr> soc;
      for (int i = 0; i < d * d; ++i) soc.push_back(LinExpr::variable(g0_ + i));
      soc.push_back(LinExpr((*ctx.amb).epsilon[k]));
      b.add_soc(std::move(soc));
    }
    // sum_l W_l H_l = 0
    {
      std::vector<LinExpr> rows;
      for (int n = 0; n < ctx.prob->n2(); ++n)
        for (int j = 0; j < d; ++j) {
          LinExpr e;
          for (int r = 0; r < nrows; ++r) {
            const auto& W = ctx.system.rows[ctx.rows[r]].W;
            for (int i = 0; i < d; ++i)
              if (W(n, i) != 0.0) e.add(sym_at(h0_[r], i, j), W(n, i));
          }
          rows.push_back(e);
        }
      b.add_zero(std::move(rows));
    }
    // e'Oe = 1 and e'H_l e >= 0
    b.add_zero(LinExpr::variable(sym_at(o0_, d - 1, d - 1)) - LinExpr(1.0));
    {
      std::vector<LinExpr> rows;
      for (int r = 0; r < nrows; ++r)
        rows.push_back(LinExpr::variable(sym_at(h0_[r], d - 1, d - 1)));
      b.add_nonneg(std::move(rows));
    }
    // Omega + w.G~ - O = 0 and Omega + w.G~ - sum_l lambda_l H_l = 0
    {
      std::vector<LinExpr> r1, r2;
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
          const double w = 1.0 / (ctx.sc.sigma[i] * ctx.sc.sigma[j]);
          LinExpr base(ctx.omega[k](i, j));
          base.add(g0_ + i * d + j, w);
          LinExpr e1 = base;
          e1.add(sym_at(o0_, i, j), -1.0);
          r1.push_back(std::move(e1));
          LinExpr e2 = base;
          for (int r = 0; r < nrows; ++r) {
            const double lam = ctx.system.rows[ctx.rows[r]].lambda;
            if (lam != 0.0) e2.add(sym_at(h0_[r], i, j), -lam);
          }
          r2.push_back(std::move(e2));
        }
      b.add_zero(std::move(r1));
      b.add_zero(std::move(r2));
    }
    add_outer_membership(b, o0_, d, ctx.cones[k], bset.cone);
    for (int r = 0; r < nrows; ++r)
      add_outer_membership(b, h0_[r], d, ctx.cones[k], bset.cone);

    program_ = b.build();
    solver_.emplace(program_, bset.solver);
  }

  /// Maximization objective for candidate (x, theta'), as a minimization
  /// vector for the solver.
  Vector objective(const Vector& x, double theta_scaled) const {
    const int d = ctx_.d;
    Vector c = Vector::Zero(program_.num_vars);
    for (std::size_t r = 0; r < ctx_.rows.size(); ++r) {
      const auto& row = ctx_.system.rows[ctx_.rows[r]];
      Vector tx = row.TA * x + row.Tt;
      // T(x)' H e: coefficient tx_i on H(i, d-1), doubled off the diagonal
      for (int i = 0; i < d; ++i) {
        if (tx[i] == 0.0) continue;
        add_sym(c, h0_[r], i, d - 1, tx[i]);
      }
      if (row.kappa != 0.0 && theta_scaled != 0.0)
        add_sym(c, h0_[r], d - 1, d - 1, -row.kappa * theta_scaled);
    }
    return -c;  // maximize
  }

  struct Outcome {
    SolveStatus status = SolveStatus::numerical_failure;
    double value = kNaN;            // scaled units
    std::vector<Matrix> H;          // scaled basis
  };

  Outcome solve(const Vector& x, double theta_scaled,
                const BendersSettings& bset) {
    Vector c = objective(x, theta_scaled);
    solver_->set_objective(c);
    SolveResult res = solver_->solve();
    if (!res.ok() && res.status != SolveStatus::unbounded) {
      // one retry from scratch at relaxed tolerance
      SolveSettings relaxed = bset.solver;
      relaxed.feas_tol *= 100.0;
      relaxed.gap_tol *= 100.0;
      SplittingSolver fresh(program_, relaxed);
      fresh.set_objective(c);
      res = fresh.solve();
    }
    Outcome out;
    out.status = res.status;
    if (res.ok()) {
      out.value = -res.objective;
      out.H = extract_H(res.x);
    }
    return out;
  }

  /// Unbounded-direction program: homogenized constraints plus unit box.
  Outcome feasibility_ray(const Vector& x, double theta_scaled,
                          const BendersSettings& bset) const {
    const int d = ctx_.d;
    const int nrows = static_cast<int>(ctx_.rows.size());
    ProgramBuilder b;
    const int g0 = b.add_vars(d * d);
    const int o0 = b.add_vars(svec_len(d));
    std::vector<int> h0(nrows);
    for (int r = 0; r < nrows; ++r) h0[r] = b.add_vars(svec_len(d));
    auto sym_at = [&](int base, int i, int j) {
      if (i < j) std::swap(i, j);
      return base + j * d - j * (j - 1) / 2 + (i - j);
    };
    {
      std::vector<LinExpr> soc;
      for (int i = 0; i < d * d; ++i) soc.push_back(LinExpr::variable(g0 + i));
      soc.push_back(LinExpr((*ctx_.amb).epsilon[k_]));
      b.add_soc(std::move(soc));
    }
    {
      std::vector<LinExpr> rows;
      for (int n = 0; n < ctx_.prob->n2(); ++n)
        for (int j = 0; j < d; ++j) {
          LinExpr e;
          for (int r = 0; r < nrows; ++r) {
            const auto& W = ctx_.system.rows[ctx_.rows[r]].W;
            for (int i = 0; i < d; ++i)
              if (W(n, i) != 0.0) e.add(sym_at(h0[r], i, j), W(n, i));
          }
          rows.push_back(e);
        }
      b.add_zero(std::move(rows));
    }
    b.add_zero(LinExpr::variable(sym_at(o0, d - 1, d - 1)));  // e'Oe = 0
    {
      std::vector<LinExpr> rows;
      for (int r = 0; r < nrows; ++r)
        rows.push_back(LinExpr::variable(sym_at(h0[r], d - 1, d - 1)));
      b.add_nonneg(std::move(rows));
    }
    {
      std::vector<LinExpr> r1, r2;
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
          const double w = 1.0 / (ctx_.sc.sigma[i] * ctx_.sc.sigma[j]);
          LinExpr base;
          base.add(g0 + i * d + j, w);
          LinExpr e1 = base;
          e1.add(sym_at(o0, i, j), -1.0);
          r1.push_back(std::move(e1));
          LinExpr e2 = base;
          for (int r = 0; r < nrows; ++r) {
            const double lam = ctx_.system.rows[ctx_.rows[r]].lambda;
            if (lam != 0.0) e2.add(sym_at(h0[r], i, j), -lam);
          }
          r2.push_back(std::move(e2));
        }
      b.add_zero(std::move(r1));
      b.add_zero(std::move(r2));
    }
    // unit box on every matrix entry
    {
      std::vector<LinExpr> box;
      auto box_var = [&](int v) {
        box.push_back(LinExpr(1.0) - LinExpr::variable(v));
        box.push_back(LinExpr(1.0) + LinExpr::variable(v));
      };
      for (int i = 0; i < d * d; ++i) box_var(g0 + i);
      for (int i = 0; i < svec_len(d); ++i) box_var(o0 + i);
      for (int r = 0; r < nrows; ++r)
        for (int i = 0; i < svec_len(d); ++i) box_var(h0[r] + i);
      b.add_nonneg(std::move(box));
    }
    add_outer_membership(b, o0, d, ctx_.cones[k_], bset.cone);
    for (int r = 0; r < nrows; ++r)
      add_outer_membership(b, h0[r], d, ctx_.cones[k_], bset.cone);

    ConicProgram prog = b.build();
    // same objective layout but over the ray variables
    Vector c = Vector::Zero(prog.num_vars);
    for (std::size_t r = 0; r < ctx_.rows.size(); ++r) {
      const auto& row = ctx_.system.rows[ctx_.rows[r]];
      Vector tx = row.TA * x + row.Tt;
      for (int i = 0; i < d; ++i)
        if (tx[i] != 0.0) add_sym_base(c, h0[r], i, d - 1, tx[i], d);
      if (row.kappa != 0.0 && theta_scaled != 0.0)
        add_sym_base(c, h0[r], d - 1, d - 1, -row.kappa * theta_scaled, d);
    }
    prog.objective = -c;
    SolveResult res = pdro::solve(prog, bset.solver);
    Outcome out;
    out.status = res.status;
    if (res.ok()) {
      out.value = -res.objective;
      out.H.resize(nrows);
      for (int r = 0; r < nrows; ++r) {
        out.H[r].resize(d, d);
        int at = 0;
        for (int j = 0; j < d; ++j)
          for (int i = j; i < d; ++i) {
            out.H[r](i, j) = out.H[r](j, i) = res.x[h0[r] + at];
            ++at;
          }
      }
    }
    return out;
  }

 private:
  void add_sym(Vector& c, int base, int i, int j, double coef) const {
    add_sym_base(c, base, i, j, coef, ctx_.d);
  }
  static void add_sym_base(Vector& c, int base, int i, int j, double coef,
                           int d) {
    if (i < j) std::swap(i, j);
    c[base + j * d - j * (j - 1) / 2 + (i - j)] += coef;
  }

  std::vector<Matrix> extract_H(const Vector& x) const {
    const int d = ctx_.d;
    std::vector<Matrix> H(ctx_.rows.size());
    for (std::size_t r = 0; r < ctx_.rows.size(); ++r) {
      H[r].resize(d, d);
      int at = 0;
      for (int j = 0; j < d; ++j)
        for (int i = j; i < d; ++i) {
          H[r](i, j) = H[r](j, i) = x[h0_[r] + at];
          ++at;
        }
    }
    return H;
  }

  const BendersContext& ctx_;
  int k_;
  int g0_ = -1, o0_ = -1;
  std::vector<int> h0_;
  ConicProgram program_;
  mutable std::optional<SplittingSolver> solver_;
};

}  // namespace detail

/// The master program over (x, theta, chi^2 layer, s) with the accumulated
/// cuts; tractable linear/second-order rows only (mixed-integer when the
/// first stage is binary).
struct MasterOutcome {
  SolveStatus status;
  Vector x;
  double theta_scaled = 0.0;
  Vector s_scaled;
  double objective = kNaN;  // true units
  bool floor_active = false;
};

inline MasterOutcome solve_benders_master(const detail::BendersContext& ctx,
                                          const std::vector<CutPool>& pools,
                                          const BendersSettings& bset) {
  const int K = ctx.scheme->K();
  const int d = ctx.d;
  ProgramBuilder b;
  const int x0 = b.add_vars(ctx.prob->n1());
  for (int v = 0; v < ctx.prob->n1(); ++v) b.obj(x0 + v, ctx.prob->c[v]);
  if (!ctx.prob->binary.empty())
    for (int v = 0; v < ctx.prob->n1(); ++v)
      if (ctx.prob->binary[v]) b.mark_integer(x0 + v);
  for (const auto& fs : ctx.prob->first_stage) {
    std::vector<LinExpr> rows;
    for (int r = 0; r < fs.R.rows(); ++r) {
      LinExpr e(fs.r[r]);
      for (int v = 0; v < ctx.prob->n1(); ++v)
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
  int theta = -1;
  if (ctx.use_theta) {
    theta = b.add_var();
    b.obj(theta, ctx.sc.cost_scale);
    b.add_nonneg(LinExpr::variable(theta) + LinExpr(bset.floor));
  }
  auto layer = emit_chi2_dual_layer(b, ctx.scheme->p_hat, ctx.amb->gamma,
                                    ctx.prob->delta, ctx.sc.cost_scale);
  {
    std::vector<LinExpr> floors;
    for (int k = 0; k < K; ++k)
      floors.push_back(LinExpr::variable(layer.s0 + k) + LinExpr(bset.floor));
    b.add_nonneg(std::move(floors));
  }

  auto cut_expr = [&](const std::vector<Matrix>& H) {
    LinExpr e;
    for (std::size_t r = 0; r < ctx.rows.size(); ++r) {
      const auto& row = ctx.system.rows[ctx.rows[r]];
      const Vector he = H[r].col(d - 1);
      // T(x)' H e, affine in x
      e += LinExpr(row.Tt.dot(he));
      Vector xc = row.TA.transpose() * he;
      for (int v = 0; v < ctx.prob->n1(); ++v)
        if (xc[v] != 0.0) e.add(x0 + v, xc[v]);
      if (row.kappa != 0.0 && theta >= 0)
        e.add(theta, -row.kappa * H[r](d - 1, d - 1));
    }
    return e;
  };

  for (int k = 0; k < K; ++k) {
    for (const auto& H : pools[k].optimality)
      b.add_nonneg(LinExpr::variable(layer.s0 + k) - cut_expr(H));
    for (const auto& H : pools[k].feasibility) b.add_nonneg(-cut_expr(H));
  }

  ConicProgram prog = b.build();
  SolveResult res = prog.has_integers()
                        ? solve_mixed(prog, bset.master_solver)
                        : solve(prog, bset.master_solver);
  MasterOutcome out;
  out.status = res.status;
  if (res.status == SolveStatus::infeasible)
    throw SolverError(
        "decomposition master is infeasible: empty first stage or "
        "contradictory feasibility cuts");
  if (!res.ok()) return out;
  out.objective = res.objective;
  out.x = res.x.segment(x0, ctx.prob->n1());
  out.theta_scaled = theta >= 0 ? res.x[theta] : 0.0;
  out.s_scaled.resize(K);
  for (int k = 0; k < K; ++k) out.s_scaled[k] = res.x[layer.s0 + k];
  out.floor_active = false;
  if (theta >= 0 && out.theta_scaled < -0.999 * bset.floor)
    out.floor_active = true;
  for (int k = 0; k < K; ++k)
    if (out.s_scaled[k] < -0.999 * bset.floor) out.floor_active = true;
  return out;
}

/// Primal partition value Z_k(x, theta) under the paired inner cone, with
/// the rule coefficients; used for the final policy recovery and as the
/// strong-duality counterpart of the dual subproblem.
struct PartitionPrimal {
  SolveStatus status;
  double value = kNaN;  // true cost units
  Matrix Y, Q, B;
  double alpha = 0.0;
  Vector pi;
};

inline PartitionPrimal partition_primal(const detail::BendersContext& ctx,
                                        int k, const Vector& x,
                                        double theta_scaled, InnerCone level,
                                        const SolveSettings& settings) {
  const int d = ctx.d;
  const int n2 = ctx.prob->n2();
  ProgramBuilder b;
  const int s_epi = b.add_var();
  b.obj(s_epi, 1.0);
  const int y0 = b.add_vars(n2 * d);
  const int q0 = b.add_vars(svec_len(d));
  auto sym = [&](int base, int i, int j) {
    if (i < j) std::swap(i, j);
    return base + j * d - j * (j - 1) / 2 + (i - j);
  };
  SymExpr Q(d);
  for (int j = 0; j < d; ++j)
    for (int i = j; i < d; ++i) Q.at(i, j) = LinExpr::variable(sym(q0, i, j));
  auto moment = emit_moment_dual(b, Q, ctx.omega[k], ctx.amb->epsilon[k],
                                 ctx.cones[k], LinExpr::variable(s_epi),
                                 "partition", &ctx.sc.weights);
  std::vector<CopositiveRequirement> reqs;
  reqs.push_back(std::move(moment.requirement));
  std::vector<LinExpr> x_exprs;
  for (int v = 0; v < ctx.prob->n1(); ++v) x_exprs.push_back(LinExpr(x[v]));
  auto Yfun = [&](int n, int j) { return LinExpr::variable(y0 + n * d + j); };
  for (std::size_t r = 0; r < ctx.rows.size(); ++r) {
    const auto& row = ctx.system.rows[ctx.rows[r]];
    SymExpr dm = delta_matrix(row, x_exprs, Yfun, &Q);
    if (row.kappa != 0.0)
      dm.at(d - 1, d - 1) += LinExpr(row.kappa * theta_scaled);
    CopositiveRequirement req;
    req.expr = std::move(dm);
    req.cone = &ctx.cones[k];
    reqs.push_back(std::move(req));
  }
  for (const auto& req : reqs) discharge(b, req, level);
  SolveResult res = solve(b.build(), settings);
  PartitionPrimal out;
  out.status = res.status;
  if (!res.ok()) return out;
  const double cu = ctx.sc.cost_scale;
  const Vector& sg = ctx.sc.sigma;
  out.value = cu * res.objective;
  out.Y.resize(n2, d);
  for (int n = 0; n < n2; ++n)
    for (int j = 0; j < d; ++j) out.Y(n, j) = res.x[y0 + n * d + j] / sg[j];
  out.Q.resize(d, d);
  out.B.resize(d, d);
  for (int j = 0; j < d; ++j)
    for (int i = j; i < d; ++i) {
      out.Q(i, j) = out.Q(j, i) =
          cu * res.x[sym(q0, i, j)] / (sg[i] * sg[j]);
      out.B(i, j) = out.B(j, i) =
          cu * res.x[sym(moment.b0, i, j)] / (sg[i] * sg[j]);
    }
  out.alpha = cu * res.x[moment.alpha];
  out.pi.resize(ctx.rows.size());
  for (std::size_t r = 0; r < ctx.rows.size(); ++r)
    out.pi[r] = -ctx.system.rows[ctx.rows[r]].kappa * cu * theta_scaled;
  return out;
}

inline bool detail_is_duplicate(const std::vector<std::vector<Matrix>>& pool,
                                const std::vector<Matrix>& H, double tol) {
  for (const auto& stored : pool) {
    double dist = 0.0;
    for (std::size_t r = 0; r < H.size(); ++r)
      dist += (stored[r] - H[r]).squaredNorm();
    if (std::sqrt(dist) < tol) return true;
  }
  return false;
}

/// Algorithm: iterate master / subproblems, accumulate cuts, stop when
/// upper - lower <= tol * min(|upper|, |lower|).
inline BendersResult benders_solve(const TwoStageProblem& prob,
                                   const PartitionScheme& scheme,
                                   const AmbiguityParameters& amb,
                                   const BendersSettings& bset = {}) {
  detail::require(bset.tol > 0.0, "tolerance must be positive");
  BendersResult result;
  detail::BendersContext ctx;
  ctx.init(prob, scheme, amb);
  const int K = scheme.K();
  result.pools.assign(K, {});

  std::vector<std::unique_ptr<detail::Subproblem>> subs;
  subs.reserve(K);
  for (int k = 0; k < K; ++k)
    subs.push_back(std::make_unique<detail::Subproblem>(ctx, k, bset));

  double upper = kInf, lower = -kInf;
  Vector best_x;
  double best_theta_scaled = 0.0;
  bool converged = false;

  int iter = 0;
  for (; iter < bset.max_iters; ++iter) {
    BendersIterRow row;
    row.iter = iter;
    const auto it0 = std::chrono::steady_clock::now();

    MasterOutcome master = solve_benders_master(ctx, result.pools, bset);
    if (!(master.status == SolveStatus::optimal ||
          master.status == SolveStatus::inaccurate))
      throw SolverError(std::string("master solve failed: ") +
                        to_string(master.status));
    lower = std::max(lower, master.objective);
    result.floor_active = result.floor_active || master.floor_active;

    // subproblem fan-out
    std::vector<detail::Subproblem::Outcome> outs(K);
    {
      std::atomic<int> next{0};
      auto worker = [&] {
        for (int k = next.fetch_add(1); k < K; k = next.fetch_add(1))
          outs[k] = subs[k]->solve(master.x, master.theta_scaled, bset);
      };
      const int nthreads = std::max(1, std::min(bset.parallel, K));
      std::vector<std::thread> threads;
      for (int t = 0; t < nthreads - 1; ++t) threads.emplace_back(worker);
      worker();
      for (auto& t : threads) t.join();
    }

    bool any_unbounded = false;
    Vector zvals(K);
    for (int k = 0; k < K; ++k) {
      if (outs[k].status == SolveStatus::unbounded) {
        any_unbounded = true;
        zvals[k] = kInf;
      } else if (outs[k].status == SolveStatus::optimal ||
                 outs[k].status == SolveStatus::inaccurate) {
        zvals[k] = ctx.sc.cost_scale * outs[k].value;
      } else {
        throw SolverError("subproblem " + std::to_string(k) +
                          " failed: " + to_string(outs[k].status));
      }
    }
    row.subvalues = zvals;

    if (!any_unbounded) {
      // candidate upper bound: worst-case mixture of the partition values
      const double tail =
          chi2_worst_case(zvals, scheme.p_hat, amb.gamma, bset.master_solver) /
          prob.delta;
      const double jhat = prob.c.dot(master.x) +
                          ctx.sc.cost_scale * master.theta_scaled + tail;
      row.jhat = jhat;
      if (jhat < upper) {
        upper = jhat;
        best_x = master.x;
        best_theta_scaled = master.theta_scaled;
      }
    }

    row.lower = lower;
    row.upper = upper;

    // termination on the relative gap
    if (std::isfinite(upper) &&
        upper - lower <=
            bset.tol * std::min(std::abs(upper), std::abs(lower)) + 1e-9) {
      row.wall_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - it0)
                        .count();
      result.trace.push_back(row);
      converged = true;
      ++iter;
      break;
    }

    // cuts
    int added_opt = 0, added_feas = 0;
    for (int k = 0; k < K; ++k) {
      if (outs[k].status == SolveStatus::unbounded) {
        auto ray = subs[k]->feasibility_ray(master.x, master.theta_scaled, bset);
        if (!(ray.status == SolveStatus::optimal ||
              ray.status == SolveStatus::inaccurate))
          throw SolverError("feasibility ray solve failed on partition " +
                            std::to_string(k));
        if (ray.value <= bset.ray_tol)
          throw SolverError(
              "numerical stall: feasibility ray has nonpositive value " +
              std::to_string(ray.value) + " at iteration " +
              std::to_string(iter));
        if (!detail_is_duplicate(result.pools[k].feasibility, ray.H,
                                 bset.cut_dedup_tol)) {
          result.pools[k].feasibility.push_back(std::move(ray.H));
          ++added_feas;
        }
      } else {
        const double sk = master.s_scaled[k];
        if (outs[k].value > sk + 1e-9 * (1.0 + std::abs(sk))) {
          if (!detail_is_duplicate(result.pools[k].optimality, outs[k].H,
                                   bset.cut_dedup_tol)) {
            result.pools[k].optimality.push_back(std::move(outs[k].H));
            ++added_opt;
          }
        }
      }
    }
    row.opt_cuts_added = added_opt;
    row.feas_cuts_added = added_feas;
    row.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - it0)
                      .count();
    result.trace.push_back(row);

    if (added_opt + added_feas == 0 && std::isfinite(upper)) {
      // no progress possible; report the incumbent as-is
      break;
    }
  }

  result.iterations = iter;
  result.converged = converged;
  result.lower = lower;
  result.upper = upper;

  PdrSolution sol;
  sol.cone = paired_inner(bset.cone);
  sol.status = converged ? SolveStatus::optimal : SolveStatus::inaccurate;
  if (best_x.size() == 0) {
    sol.status = SolveStatus::numerical_failure;
    result.solution = sol;
    return result;
  }
  sol.x = best_x;
  sol.theta = ctx.sc.cost_scale * best_theta_scaled;
  sol.objective = upper;
  if (bset.recover_policy) {
    sol.rules.resize(K);
    sol.s.resize(K);
    for (int k = 0; k < K; ++k) {
      auto pp = partition_primal(ctx, k, best_x, best_theta_scaled,
                                 paired_inner(bset.cone), bset.solver);
      if (pp.status == SolveStatus::optimal ||
          pp.status == SolveStatus::inaccurate) {
        sol.rules[k].Y = pp.Y;
        sol.rules[k].Q = pp.Q;
        sol.rules[k].B = pp.B;
        sol.rules[k].alpha = pp.alpha;
        sol.rules[k].pi = pp.pi;
        sol.s[k] = pp.value;
      }
    }
  }
  result.solution = std::move(sol);
  return result;
}

}  // namespace pdro

#endif  // PDRO_BENDERS_HPP
