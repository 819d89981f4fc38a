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

#ifndef PDRO_CONIC_SPLITTING_HPP
#define PDRO_CONIC_SPLITTING_HPP

#include <Eigen/SparseCholesky>

#include <chrono>
#include <cstdio>
#include <deque>
#include <vector>

#include "pdro/conic/program.hpp"
#include "pdro/core.hpp"

namespace pdro {

// First-order conic solver: ADMM on the homogeneous self-dual embedding of
//
//   (P) min c.x  s.t.  A x + s = b, s in K        (A = -G, b = h)
//   (D) min b.y  s.t.  A'y + c = 0, y in K*
//
// The embedding variables are u = (x, y, tau), v = (r, s, kappa) with the
// affine condition v = Q u and cone condition u in C = R^n x K* x R+,
// v in C* = {0}^n x K x R+.  One iteration:
//
//   u~ <- (I + Q)^{-1} (u + v)
//   u  <- Proj_C(alpha u~ + (1-alpha) u - v)
//   v  <- v - alpha u~ - (1-alpha) u + u
//
// The linear system reduces to a symmetric quasidefinite KKT solve
// [[I, A'], [A, -I]] factorized once (AMD-ordered sparse LDL^T), so repeated
// solves with a new objective reuse the factorization -- the decomposition
// subproblems rely on this.  Data is Ruiz-equilibrated with one scale per
// cone block; termination is measured on the unscaled problem.
//
// Stopping rule: primal/dual residuals at most feas_tol * (1 + norm of the
// relevant data vector) and duality gap at most gap_tol * (1 + |primal| +
// |dual objective|).  The "1 +" normalization keeps the spec's absolute
// defaults meaningful across the objective magnitudes seen here.
class SplittingSolver {
 public:
  SplittingSolver(const ConicProgram& p, const SolveSettings& settings)
      : settings_(settings) {
    p.validate();
    detail::require(!p.has_integers(),
                    "continuous solver called with integrality flags set");
    n_ = p.num_vars;
    m_ = p.total_rows();
    blocks_ = p.blocks;
    G_ = p.G;
    h_ = p.h;
    c0_ = p.objective;
    obj_const_ = p.objective_constant;
    equilibrate();
    factorize();
    set_objective(p.objective);
    reset_start();
  }

  /// Swap the objective vector; constraints, scaling and the KKT
  /// factorization are reused.  Any retained iterate is remapped so the next
  /// solve still warm-starts.
  void set_objective(const Vector& c) {
    detail::require(c.size() == n_, "objective length mismatch");
    c0_ = c;
    Vector ce = E_.cwiseProduct(c);
    const double old_sigma_c = sigma_c_;
    sigma_c_ = 1.0 / std::max(ce.norm(), 1e-6);
    c_ = sigma_c_ * ce;
    refresh_g();
    if (have_iterate_) rebuild_iterate(1.0, sigma_c_ / old_sigma_c);
  }

  /// Start the next solve from the previous solution (on by default when a
  /// solve already happened).
  void reset_start() {
    u_.setZero(n_ + m_ + 1);
    v_.setZero(n_ + m_ + 1);
    u_[n_ + m_] = 1.0;
    v_[n_ + m_] = 1.0;
    have_iterate_ = false;
  }

  SolveResult solve() {
    const auto t_start = std::chrono::steady_clock::now();
    SolveResult best;
    best.status = SolveStatus::numerical_failure;
    double best_score = kInf;

    // Douglas-Rachford recast: iterate on z, with u = Proj(2 resolvent(z) - z)
    // and v = z - u recovering the embedding pair.
    Vector u = u_, v = v_;
    if (have_iterate_) {
      const double tau = std::max(u[n_ + m_], 1e-6);
      u /= tau;
      v /= tau;
    }
    Vector z = u + v;

    const double alpha = settings_.relaxation;
    const int dim = n_ + m_ + 1;
    Vector ut(dim), refl(dim);
    AaState aa(settings_.acceleration ? settings_.aa_memory : 0, dim);

    auto dr_step = [&](const Vector& zin, Vector& uo, Vector& zo) {
      linear_solve(zin, ut);
      uo = 2.0 * ut - zin;
      project(uo);
      zo = zin + alpha * (uo - ut);
    };

    long iter = 0;
    for (; iter < settings_.max_iters; ++iter) {
      Vector zprev = z, znext;
      dr_step(z, u, znext);
      const double delta = (znext - z).norm() / (1.0 + z.norm());
      z = znext;
      v = z - u;

      if (aa.memory > 0) {
        aa.observe(zprev, znext, delta);
        Vector zacc;
        if (aa.propose(zacc)) {
          ++aa_proposed_;
          Vector ua, za;
          dr_step(zacc, ua, za);
          const double da = (za - zacc).norm() / (1.0 + zacc.norm());
          if (da < settings_.aa_safety * delta) {
            ++aa_accepted_;
            // the evaluation pair stays valid history for the same map
            aa.observe(zacc, za, da);
            z = za;
            u = ua;
            v = z - u;
          }
        }
      }

      // primal/dual norm balancing: the embedding converges poorly when the
      // scaled solution norms stray far from 1, and b/c rescaling is free
      // because the factorization depends only on A
      if (iter > 0 && iter % 500 == 0) {
        const double tau = u[n_ + m_];
        if (tau > 1e-10) {
          const double nx = std::max(u.head(n_).norm() / tau, 1e-10);
          const double ny = std::max(u.segment(n_, m_).norm() / tau, 1e-10);
          if (nx > 3.0 || nx < 1.0 / 3.0 || ny > 3.0 || ny < 1.0 / 3.0) {
            const double fx = std::clamp(1.0 / nx, 1e-8, 1e8);
            const double fy = std::clamp(1.0 / ny, 1e-8, 1e8);
            u_ = u;
            v_ = v;
            sigma_b_ *= fx;
            b_ *= fx;
            sigma_c_ *= fy;
            c_ *= fy;
            refresh_g();
            rebuild_iterate(fx, fy);
            u = u_;
            v = v_;
            z = u + v;
            aa.hard_reset();
          }
        }
      }

      if (iter % settings_.check_interval == 0 || delta < 1e-16) {
        Candidate cand = extract(u, v);
        const double score = cand.score();
        if (settings_.verbose && iter % (settings_.check_interval * 40) == 0) {
          const double tau = std::max(u[n_ + m_], 1e-300);
          std::fprintf(stderr,
                       "  it %6ld tau %9.2e pres %9.2e dres %9.2e gap %9.2e "
                       "step %9.2e |x| %9.2e |y| %9.2e\n",
                       iter, u[n_ + m_], cand.pres, cand.dres, cand.gap, delta,
                       u.head(n_).norm() / tau, u.segment(n_, m_).norm() / tau);
        }
        if (score < best_score) {
          best_score = score;
          store(cand, best);
          best.iterations = iter + 1;
        }
        if (cand.opt_ok(settings_)) {
          store(cand, best);
          best.status = SolveStatus::optimal;
          best.iterations = iter + 1;
          break;
        }
        if (cand.status != SolveStatus::optimal &&
            cand.status != SolveStatus::numerical_failure) {
          // certificate found
          best = SolveResult{};
          best.status = cand.status;
          best.iterations = iter + 1;
          break;
        }
        if (!z.allFinite()) {
          best = SolveResult{};
          best.status = SolveStatus::numerical_failure;
          best.iterations = iter + 1;
          break;
        }
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                          t_start)
                .count();
        if (elapsed > settings_.time_limit_sec) break;
      }
    }

    u_ = u;
    v_ = v;
    have_iterate_ = true;
    best.wall_time_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                      t_start)
            .count();
    return best;
  }

  /// (I+Q)^{-1} application, exposed for the algebra unit test.
  void linear_solve(const Vector& w, Vector& out) const {
    Vector rhs(n_ + m_);
    rhs.head(n_) = w.head(n_);
    rhs.tail(m_) = -w.segment(n_, m_);
    Vector t = kkt_.solve(rhs);
    const double wtau = w[n_ + m_];
    const double num = wtau + c_.dot(t.head(n_)) + b_.dot(t.tail(m_));
    const double tau = num / denom_;
    out.resize(n_ + m_ + 1);
    out.head(n_ + m_) = t - tau * g_;
    out[n_ + m_] = tau;
  }

  // scaled embedding data, exposed for tests
  const Vector& scaled_c() const { return c_; }
  const Vector& scaled_b() const { return b_; }
  const SpMat& scaled_A() const { return A_; }

 private:
  struct Candidate {
    SolveStatus status = SolveStatus::numerical_failure;
    Vector x, y, s;
    double pobj = kNaN, dobj = kNaN;
    double pres = kInf, dres = kInf, gap = kInf;

    double score() const { return std::max({pres, dres, gap}); }
    bool opt_ok(const SolveSettings& st) const {
      return status == SolveStatus::optimal && pres <= st.feas_tol &&
             dres <= st.feas_tol && gap <= st.gap_tol;
    }
  };

  void store(const Candidate& cand, SolveResult& res) const {
    res.status = SolveStatus::inaccurate;  // the solve loop upgrades on success
    res.x = cand.x;
    res.objective = cand.pobj + obj_const_;
    res.dual_objective = cand.dobj + obj_const_;
    res.primal_residual = cand.pres;
    res.dual_residual = cand.dres;
    res.gap = cand.gap;
    res.block_duals.clear();
    int r = 0;
    for (const auto& b : blocks_) {
      res.block_duals.push_back(cand.y.segment(r, b.rows));
      r += b.rows;
    }
  }

  // --- setup ------------------------------------------------------------

  // Ruiz-style equilibration, cone-aware: zero/nonneg rows scale freely,
  // second-order blocks take one uniform factor, and semidefinite blocks use
  // per-index congruence weights w_i w_j (scaling svec(M) entrywise by
  // w_i w_j is svec(W M W), which preserves the cone as a set).
  void equilibrate() {
    A_ = (-G_).eval();
    D_.setOnes(m_);
    E_.setOnes(n_);
    Vector rnorm(m_), cnorm(n_), rfac(m_);
    for (int sweep = 0; sweep < 15; ++sweep) {
      rnorm.setZero();
      cnorm.setZero();
      for (int j = 0; j < A_.outerSize(); ++j)
        for (SpMat::InnerIterator it(A_, j); it; ++it) {
          const double a = std::abs(it.value());
          rnorm[it.row()] = std::max(rnorm[it.row()], a);
          cnorm[j] = std::max(cnorm[j], a);
        }
      rfac.setOnes();
      bool done = true;
      int r = 0;
      for (const auto& blk : blocks_) {
        if (blk.kind == ConeKind::soc) {
          const double mx = rnorm.segment(r, blk.rows).maxCoeff();
          const double f =
              mx > 0 ? std::clamp(1.0 / std::sqrt(mx), 1e-4, 1e4) : 1.0;
          if (std::abs(f - 1.0) > 1e-3) done = false;
          rfac.segment(r, blk.rows).setConstant(f);
        } else if (blk.kind == ConeKind::psd) {
          const int side = blk.psd_side;
          Vector g = Vector::Zero(side);
          for (int k = 0; k < blk.rows; ++k) {
            auto [i, jj] = svec_coords(k, side);
            g[i] = std::max(g[i], rnorm[r + k]);
            g[jj] = std::max(g[jj], rnorm[r + k]);
          }
          Vector w(side);
          for (int i = 0; i < side; ++i)
            w[i] = g[i] > 0 ? std::clamp(std::pow(g[i], -0.25), 1e-2, 1e2)
                            : 1.0;
          for (int k = 0; k < blk.rows; ++k) {
            auto [i, jj] = svec_coords(k, side);
            const double f = w[i] * w[jj];
            if (std::abs(f - 1.0) > 1e-3) done = false;
            rfac[r + k] = f;
          }
        } else {
          for (int k = 0; k < blk.rows; ++k) {
            const double mx = rnorm[r + k];
            const double f =
                mx > 0 ? std::clamp(1.0 / std::sqrt(mx), 1e-4, 1e4) : 1.0;
            if (std::abs(f - 1.0) > 1e-3) done = false;
            rfac[r + k] = f;
          }
        }
        r += blk.rows;
      }
      D_ = D_.cwiseProduct(rfac);
      for (int j = 0; j < n_; ++j) {
        double f = cnorm[j] > 0 ? 1.0 / std::sqrt(cnorm[j]) : 1.0;
        f = std::clamp(f, 1e-4, 1e4);
        if (std::abs(f - 1.0) > 1e-3) done = false;
        E_[j] *= f;
      }
      A_ = D_.asDiagonal() * (-G_) * E_.asDiagonal();
      if (done) break;
    }
    Vector bh = D_.cwiseProduct(h_);
    sigma_b_ = 1.0 / std::max(bh.norm(), 1e-6);
    b_ = sigma_b_ * bh;
  }

  void factorize() {
    std::vector<Triplet> trip;
    trip.reserve(static_cast<std::size_t>(A_.nonZeros()) + n_ + m_);
    for (int i = 0; i < n_; ++i) trip.emplace_back(i, i, 1.0);
    for (int i = 0; i < m_; ++i) trip.emplace_back(n_ + i, n_ + i, -1.0);
    for (int j = 0; j < A_.outerSize(); ++j)
      for (SpMat::InnerIterator it(A_, j); it; ++it) {
        trip.emplace_back(n_ + it.row(), j, it.value());
        trip.emplace_back(j, n_ + it.row(), it.value());
      }
    SpMat K(n_ + m_, n_ + m_);
    K.setFromTriplets(trip.begin(), trip.end());
    kkt_.compute(K);
    if (kkt_.info() != Eigen::Success)
      throw SolverError("KKT factorization failed");
  }

  void refresh_g() {
    Vector rhs(n_ + m_);
    rhs.head(n_) = c_;
    rhs.tail(m_) = -b_;
    g_ = kkt_.solve(rhs);
    denom_ = 1.0 + c_.dot(g_.head(n_)) + b_.dot(g_.tail(m_));
    if (!(denom_ > 0.0) || !g_.allFinite())
      throw SolverError("degenerate embedding system");
  }

  // remap the stored iterate after the scaled b/c changed by (fx, fy)
  void rebuild_iterate(double fx, double fy) {
    const double tau = u_[n_ + m_];
    Vector x = u_.head(n_), y = u_.segment(n_, m_), s = v_.segment(n_, m_);
    if (tau > 1e-10) {
      x /= tau;
      y /= tau;
      s /= tau;
    }
    u_.head(n_) = fx * x;
    u_.segment(n_, m_) = fy * y;
    u_[n_ + m_] = 1.0;
    v_.setZero();
    v_.segment(n_, m_) = fx * s;
    have_iterate_ = true;
  }

  // --- iteration pieces ---------------------------------------------------

  // projection of u onto R^n x K* x R+
  void project(Vector& u) const {
    int r = 0;
    for (const auto& blk : blocks_) {
      auto seg = u.segment(n_ + r, blk.rows);
      switch (blk.kind) {
        case ConeKind::zero:
          break;  // dual of {0} is everything
        case ConeKind::nonneg:
          seg = seg.cwiseMax(0.0);
          break;
        case ConeKind::soc: {
          const int d = blk.rows;
          const double t = seg[d - 1];
          const double nz = seg.head(d - 1).norm();
          if (nz <= t) {
            // inside
          } else if (nz <= -t) {
            seg.setZero();
          } else {
            const double coef = 0.5 * (1.0 + t / nz);
            seg.head(d - 1) *= coef;
            seg[d - 1] = coef * nz;
          }
          break;
        }
        case ConeKind::psd: {
          const int side = blk.psd_side;
          Matrix M = smat(seg, side);
          Eigen::SelfAdjointEigenSolver<Matrix> es(M);
          Matrix P = es.eigenvectors() *
                     es.eigenvalues().cwiseMax(0.0).asDiagonal() *
                     es.eigenvectors().transpose();
          seg = svec(P, kInf);
          break;
        }
      }
      r += blk.rows;
    }
    u[n_ + m_] = std::max(u[n_ + m_], 0.0);
  }

  // recover unscaled candidate and residuals
  Candidate extract(const Vector& u, const Vector& v) const {
    Candidate cand;
    const double tau = u[n_ + m_];
    const Vector ux = u.head(n_);
    const Vector uy = u.segment(n_, m_);
    const Vector vs = v.segment(n_, m_);

    if (tau > 1e-12) {
      cand.x = E_.cwiseProduct(ux) / (sigma_b_ * tau);
      cand.y = D_.cwiseProduct(uy) / (sigma_c_ * tau);
      cand.s = vs.cwiseQuotient(D_) / (sigma_b_ * tau);
      cand.pobj = c0_.dot(cand.x);
      cand.dobj = -h_.dot(cand.y);
      // original-space residuals: A0 = -G, b0 = h
      const Vector pr = -(G_ * cand.x) + cand.s - h_;
      const Vector dr = -(G_.transpose() * cand.y) + c0_;
      cand.pres = pr.norm() / (1.0 + h_.norm());
      cand.dres = dr.norm() / (1.0 + c0_.norm());
      cand.gap = std::abs(cand.pobj - cand.dobj) /
                 (1.0 + std::abs(cand.pobj) + std::abs(cand.dobj));
      cand.status = SolveStatus::optimal;
    }

    // infeasibility certificates from the raw direction
    const Vector ycert = D_.cwiseProduct(uy);
    const double bty = h_.dot(ycert);
    if (bty < 0.0) {
      const Vector aty = -(G_.transpose() * ycert);
      if (aty.norm() * std::max(1.0, h_.norm()) <=
          -settings_.feas_tol * bty) {
        cand.status = SolveStatus::infeasible;
        return cand;
      }
    }
    const Vector xcert = E_.cwiseProduct(ux);
    const double ctx = c0_.dot(xcert);
    if (ctx < 0.0) {
      const Vector scert = vs.cwiseQuotient(D_);
      const Vector axs = -(G_ * xcert) + scert;
      if (axs.norm() * std::max(1.0, c0_.norm()) <=
          -settings_.feas_tol * ctx) {
        cand.status = SolveStatus::unbounded;
        return cand;
      }
    }
    return cand;
  }

  // --- Anderson acceleration ----------------------------------------------

  // Type-II acceleration on the Douglas-Rachford map z -> F(z), with the
  // caller providing safeguard evaluations.
  struct AaState {
    int memory;
    int dim;
    std::deque<Vector> zin, zout;
    double best_delta = kInf;
    long steps = 0;

    AaState(int mem, int d) : memory(mem), dim(d) {}

    void hard_reset() {
      zin.clear();
      zout.clear();
      best_delta = kInf;
      steps = 0;
    }

    void observe(const Vector& zi, const Vector& zo, double delta) {
      if (memory <= 0) return;
      zin.push_back(zi);
      zout.push_back(zo);
      if ((int)zin.size() > memory) {
        zin.pop_front();
        zout.pop_front();
      }
      ++steps;
      best_delta = std::min(best_delta, delta);
      if (delta > 20.0 * best_delta + 1e-16 && steps > 5) hard_reset();
    }

    bool propose(Vector& zacc) const {
      const int k = (int)zin.size();
      if (k < 3) return false;
      Matrix F(dim, k);
      for (int i = 0; i < k; ++i) F.col(i) = zout[i] - zin[i];
      Matrix dF = F.rightCols(k - 1) - F.leftCols(k - 1);
      Vector fk = F.col(k - 1);
      Matrix gram = dF.transpose() * dF;
      gram.diagonal().array() += 1e-12 * (1.0 + gram.trace());
      Vector theta = gram.ldlt().solve(dF.transpose() * fk);
      zacc = zout[k - 1];
      for (int i = 0; i < k - 1; ++i)
        zacc -= theta[i] * (zout[i + 1] - zout[i]);
      return zacc.allFinite();
    }
  };

  SolveSettings settings_;
  int n_ = 0, m_ = 0;
  std::vector<ConeBlock> blocks_;
  SpMat G_, A_;
  Vector h_, c0_;
  double obj_const_ = 0.0;
  Vector D_, E_;
  double sigma_b_ = 1.0, sigma_c_ = 1.0;
  Vector b_, c_;
  Eigen::SimplicialLDLT<SpMat> kkt_;
  Vector g_;
  double denom_ = 1.0;
  Vector u_, v_;
  bool have_iterate_ = false;

 public:
  long aa_proposed_ = 0, aa_accepted_ = 0;

 private:
};

}  // namespace pdro

#endif  // PDRO_CONIC_SPLITTING_HPP
