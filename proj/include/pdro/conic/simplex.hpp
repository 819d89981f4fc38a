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

#ifndef PDRO_CONIC_SIMPLEX_HPP
#define PDRO_CONIC_SIMPLEX_HPP

#include <chrono>
#include <vector>

#include "pdro/conic/program.hpp"
#include "pdro/core.hpp"

namespace pdro {

// Two-phase revised simplex with a dense basis inverse.  Exact feasibility
// verdicts on the small LPs this project generates (recourse evaluations,
// scenario programs, Voronoi range problems) matter more than raw speed, so
// the implementation favors plain full pricing with a Bland fallback over
// partial pricing tricks.
//
// Canonical input: min c.x  s.t.  G x + h = 0 (zero rows), G x + h >= 0
// (nonneg rows).  Free variables are split into positive/negative parts.
class SimplexSolver {
 public:
  SimplexSolver(const ConicProgram& p, const SolveSettings& s)
      : prog_(p), settings_(s) {}

  SolveResult solve() {
    const auto t0 = std::chrono::steady_clock::now();
    SolveResult res = run();
    res.wall_time_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    return res;
  }

 private:
  static constexpr double kPivotTol = 1e-9;

  const ConicProgram& prog_;
  const SolveSettings& settings_;

  int m_ = 0;                  // rows
  int n_ = 0;                  // structural variables
  std::vector<int> slack_row_;     // slack column -> row (nonneg rows)
  std::vector<int> row_slack_;     // row -> slack column or -1
  std::vector<double> row_sign_;   // +-1 applied so rhs >= 0
  Vector rhs_;                     // sign-adjusted -h
  Matrix binv_;
  Vector xb_;
  std::vector<int> basis_;
  long iters_ = 0;

  // logical column layout: [0,n) x+, [n,2n) x-, [2n,2n+#slack) slacks,
  // [2n+#slack, ...) artificials (one per row)
  int col_xminus(int j) const { return n_ + j; }
  int col_slack(int k) const { return 2 * n_ + k; }
  int col_art(int i) const { return 2 * n_ + (int)slack_row_.size() + i; }
  bool is_art(int col) const { return col >= col_art(0); }

  // dense column of the standard-form matrix
  void column(int col, Vector& out) const {
    out.setZero(m_);
    if (col < 2 * n_) {
      const int j = col < n_ ? col : col - n_;
      const double s = col < n_ ? 1.0 : -1.0;
      for (SpMat::InnerIterator it(prog_.G, j); it; ++it)
        out[it.row()] = s * row_sign_[it.row()] * it.value();
    } else if (col < col_art(0)) {
      const int row = slack_row_[col - 2 * n_];
      out[row] = -row_sign_[row];
    } else {
      out[col - col_art(0)] = 1.0;
    }
  }

  double cost(int col, bool phase1) const {
    if (phase1) return is_art(col) ? 1.0 : 0.0;
    if (col < n_) return prog_.objective[col];
    if (col < 2 * n_) return -prog_.objective[col - n_];
    return 0.0;
  }

  // reduced cost of `col` given simplex multipliers y
  double reduced_cost(int col, const Vector& y, bool phase1) const {
    double d = cost(col, phase1);
    if (col < 2 * n_) {
      const int j = col < n_ ? col : col - n_;
      const double s = col < n_ ? 1.0 : -1.0;
      double dot = 0.0;
      for (SpMat::InnerIterator it(prog_.G, j); it; ++it)
        dot += y[it.row()] * row_sign_[it.row()] * it.value();
      d -= s * dot;
    } else if (col < col_art(0)) {
      const int row = slack_row_[col - 2 * n_];
      d += y[row] * row_sign_[row];
    } else {
      d -= y[col - col_art(0)];
    }
    return d;
  }

  SolveResult run() {
    m_ = prog_.total_rows();
    n_ = prog_.num_vars;
    row_sign_.assign(m_, 1.0);
    row_slack_.assign(m_, -1);
    slack_row_.clear();
    {
      int r = 0;
      for (const auto& b : prog_.blocks) {
        for (int i = 0; i < b.rows; ++i, ++r)
          if (b.kind == ConeKind::nonneg) {
            row_slack_[r] = (int)slack_row_.size();
            slack_row_.push_back(r);
          }
      }
    }
    rhs_.resize(m_);
    for (int i = 0; i < m_; ++i) {
      double b = -prog_.h[i];
      if (b < 0.0) {
        row_sign_[i] = -1.0;
        b = -b;
      }
      rhs_[i] = b;
    }

    binv_ = Matrix::Identity(m_, m_);
    xb_ = rhs_;
    basis_.resize(m_);
    for (int i = 0; i < m_; ++i) basis_[i] = col_art(i);

    const double feas_eps = 1e-9 * (1.0 + rhs_.lpNorm<Eigen::Infinity>());

    // phase I
    if (!iterate(/*phase1=*/true)) return failure();
    double art_sum = 0.0;
    for (int i = 0; i < m_; ++i)
      if (is_art(basis_[i])) art_sum += xb_[i];
    if (art_sum > std::max(feas_eps, 1e-7)) {
      SolveResult res;
      res.status = SolveStatus::infeasible;
      res.iterations = iters_;
      return res;
    }

    // phase II
    bool unbounded = false;
    if (!iterate(/*phase1=*/false, &unbounded)) return failure();
    SolveResult res;
    if (unbounded) {
      res.status = SolveStatus::unbounded;
      res.iterations = iters_;
      return res;
    }

    res.status = SolveStatus::optimal;
    res.x.setZero(n_);
    for (int i = 0; i < m_; ++i) {
      const int c = basis_[i];
      if (c < n_)
        res.x[c] += xb_[i];
      else if (c < 2 * n_)
        res.x[c - n_] -= xb_[i];
    }
    res.objective = prog_.objective.dot(res.x) + prog_.objective_constant;

    // multipliers: y = Binv^T c_B, then undo the row sign flips
    Vector cb(m_);
    for (int i = 0; i < m_; ++i) cb[i] = cost(basis_[i], false);
    Vector y = binv_.transpose() * cb;
    Vector y0(m_);
    for (int i = 0; i < m_; ++i) y0[i] = row_sign_[i] * y[i];
    res.block_duals.clear();
    res.dual_objective = prog_.objective_constant;
    {
      int r = 0;
      for (const auto& b : prog_.blocks) {
        res.block_duals.push_back(y0.segment(r, b.rows));
        res.dual_objective -= prog_.h.segment(r, b.rows).dot(y0.segment(r, b.rows));
        r += b.rows;
      }
    }
    res.primal_residual = res.dual_residual = 0.0;
    res.gap = std::abs(res.objective - res.dual_objective) /
              (1.0 + std::abs(res.objective) + std::abs(res.dual_objective));
    res.iterations = iters_;
    return res;
  }

  SolveResult failure() {
    SolveResult res;
    res.status = SolveStatus::inaccurate;
    res.iterations = iters_;
    res.x.setZero(n_);
    for (int i = 0; i < m_; ++i) {
      const int c = basis_[i];
      if (c < n_)
        res.x[c] += xb_[i];
      else if (c < 2 * n_)
        res.x[c - n_] -= xb_[i];
    }
    res.objective = prog_.objective.dot(res.x) + prog_.objective_constant;
    return res;
  }

  // Runs pivots until optimal (returns true) or the iteration cap is hit
  // (returns false).  With phase1=false, *unbounded reports a feasible ray.
  bool iterate(bool phase1, bool* unbounded = nullptr) {
    const long cap = 200L * (m_ + n_) + 20000L;
    const int total_cols = col_art(m_ - 1) + 1;
    const int enterable = phase1 ? total_cols : col_art(0);
    Vector y(m_), cb(m_), d(m_);
    long stall = 0;
    double last_obj = kInf;

    for (long it = 0; it < cap; ++it, ++iters_) {
      for (int i = 0; i < m_; ++i) cb[i] = cost(basis_[i], phase1);
      y.noalias() = binv_.transpose() * cb;

      const double dj_tol = 1e-9 * (1.0 + cb.cwiseAbs().maxCoeff());
      const bool bland = stall > 2L * (m_ + 10);
      int enter = -1;
      double best = -dj_tol;
      for (int c = 0; c < enterable; ++c) {
        if (!phase1 && is_art(c)) continue;
        const double dj = reduced_cost(c, y, phase1);
        if (bland) {
          if (dj < -dj_tol) {
            enter = c;
            break;
          }
        } else if (dj < best) {
          best = dj;
          enter = c;
        }
      }
      if (enter < 0) return true;  // optimal for this phase

      Vector a(m_);
      column(enter, a);
      d.noalias() = binv_ * a;

      // ratio test; rows holding an artificial basic must not grow above 0
      int leave = -1;
      double step = kInf;
      for (int i = 0; i < m_; ++i) {
        double ratio;
        if (d[i] > kPivotTol)
          ratio = xb_[i] / d[i];
        else if (!phase1 && is_art(basis_[i]) && d[i] < -kPivotTol)
          ratio = 0.0;
        else
          continue;
        if (ratio < step - 1e-12 ||
            (ratio < step + 1e-12 && leave >= 0 &&
             (is_art(basis_[i]) && !is_art(basis_[leave])))) {
          step = ratio;
          leave = i;
        }
      }
      if (leave < 0) {
        if (phase1) return true;  // cannot happen: phase-I objective >= 0
        if (unbounded) *unbounded = true;
        return true;
      }

      // pivot
      const double piv = d[leave];
      binv_.row(leave) /= piv;
      xb_[leave] /= piv;
      for (int i = 0; i < m_; ++i) {
        if (i == leave) continue;
        const double f = d[i];
        if (f != 0.0) {
          binv_.row(i).noalias() -= f * binv_.row(leave);
          xb_[i] -= f * xb_[leave];
        }
      }
      for (int i = 0; i < m_; ++i)
        if (xb_[i] < 0.0 && xb_[i] > -1e-11) xb_[i] = 0.0;
      basis_[leave] = enter;

      double obj = 0.0;
      for (int i = 0; i < m_; ++i) obj += cost(basis_[i], phase1) * xb_[i];
      stall = (obj < last_obj - 1e-12) ? 0 : stall + 1;
      last_obj = obj;
    }
    return false;
  }
};

inline SolveResult solve_lp(const ConicProgram& p, const SolveSettings& s) {
  return SimplexSolver(p, s).solve();
}

}  // namespace pdro

#endif  // PDRO_CONIC_SIMPLEX_HPP
