#include <catch2/catch.hpp>

#include "pdro/ambiguity.hpp"
#include "pdro/rng.hpp"
#include "support/oracles.hpp"

using namespace pdro;

TEST_CASE("theoretical epsilon formula") {
  // vanishing logarithm cases are exact
  REQUIRE(theoretical_epsilon(1.0, 1, 1, 1.0) == Approx(2.0).margin(1e-12));
  REQUIRE(theoretical_epsilon(1.0, 100, 1, 1.0) == Approx(0.2).margin(1e-12));
  // R=2, n=4, K=2, rho1 = 2 e^-2: ln(K/rho1) = 2, so (4/2)(2 + 2) = 8
  REQUIRE(theoretical_epsilon(2.0, 4, 2, 2.0 * std::exp(-2.0)) ==
          Approx(8.0).margin(1e-12));
  REQUIRE_THROWS_AS(theoretical_epsilon(1.0, 0, 1, 1.0), ValidationError);
  REQUIRE_THROWS_AS(theoretical_epsilon(1.0, 1, 1, 1.5), ValidationError);

  SECTION("monotonicity") {
    double prev = kInf;
    for (long n : {1L, 2L, 5L, 20L, 100L}) {
      const double e = theoretical_epsilon(1.5, n, 4, 0.1);
      REQUIRE(e < prev);
      prev = e;
    }
    REQUIRE(theoretical_epsilon(2.0, 10, 4, 0.1) >
            theoretical_epsilon(1.0, 10, 4, 0.1));
    REQUIRE(theoretical_epsilon(1.0, 10, 8, 0.1) >
            theoretical_epsilon(1.0, 10, 4, 0.1));
  }
}

TEST_CASE("theoretical gamma formula") {
  REQUIRE(theoretical_gamma(1, 1, 1.0) == Approx(0.0).margin(1e-12));
  // N=2, K=2, rho2=e^-1: (1 + 2*1 + 2)/2 = 2.5
  REQUIRE(theoretical_gamma(2, 2, std::exp(-1.0)) ==
          Approx(2.5).margin(1e-12));
  // N=10, K=1, rho2=e^-1: (0 + 0 + 2)/10 = 0.2
  REQUIRE(theoretical_gamma(10, 1, std::exp(-1.0)) ==
          Approx(0.2).margin(1e-12));
  // the tail-bound variant halves the middle term
  const double a = theoretical_gamma(2, 2, std::exp(-1.0), GammaVariant::calibrated);
  const double b = theoretical_gamma(2, 2, std::exp(-1.0), GammaVariant::tail_bound);
  REQUIRE(a - b == Approx(0.5).margin(1e-12));
  REQUIRE_THROWS_AS(theoretical_gamma(0, 1, 0.5), ValidationError);
  REQUIRE_THROWS_AS(theoretical_gamma(1, 1, 0.0), ValidationError);
}

TEST_CASE("chi2 worst case") {
  SolveSettings s;
  s.feas_tol = s.gap_tol = 1e-10;

  SECTION("gamma zero is the empirical value") {
    Vector p(3), phi(3);
    p << 0.5, 0.3, 0.2;
    phi << 1.0, -2.0, 0.7;
    REQUIRE(chi2_worst_case(phi, p, 0.0, s) == Approx(phi.dot(p)));
  }
  SECTION("all-ones payoff is one for any gamma") {
    Vector p(2);
    p << 0.5, 0.5;
    Vector phi = Vector::Ones(2);
    for (double g : {0.0, 0.05, 0.4, 3.0})
      REQUIRE(chi2_worst_case(phi, p, g, s) == Approx(1.0).margin(1e-7));
  }
  SECTION("bisection oracle for the two-atom case") {
    // max p1 s.t. chi2 distance <= 0.1 from (1/2,1/2): distance is
    // t^2/(1/4 - t^2) at p1 = 1/2 + t
    const double t = oracle::bisect_increasing(
        [](double t) { return t * t / (0.25 - t * t); }, 0.1, 0.0, 0.499);
    const double expected = 0.5 + t;
    REQUIRE(expected == Approx(0.65076).margin(5e-5));
    Vector p(2), phi(2);
    p << 0.5, 0.5;
    phi << 1.0, 0.0;
    REQUIRE(chi2_worst_case(phi, p, 0.1, s) ==
            Approx(expected).margin(1e-5));
  }
  SECTION("monotone in gamma with the right limit") {
    Rng rng(9);
    Vector p(4);
    p << 0.4, 0.3, 0.2, 0.1;
    Vector phi(4);
    for (int i = 0; i < 4; ++i) phi[i] = rng.normal();
    double prev = -kInf;
    for (double g : {0.0, 0.01, 0.05, 0.2, 1.0, 5.0, 50.0}) {
      const double v = chi2_worst_case(phi, p, g, s);
      REQUIRE(v >= prev - 1e-7);
      prev = v;
    }
    REQUIRE(prev <= phi.maxCoeff() + 1e-6);
  }
  SECTION("primal equals dual") {
    Rng rng(17);
    for (int rep = 0; rep < 25; ++rep) {
      const int K = 2 + (int)(rng.uniform() * 4);
      Vector p(K), phi(K);
      double tot = 0.0;
      for (int k = 0; k < K; ++k) {
        p[k] = rng.uniform(0.05, 1.0);
        tot += p[k];
        phi[k] = rng.normal();
      }
      p /= tot;
      const double g = rng.uniform(0.0, 1.0);
      const double vp = chi2_worst_case(phi, p, g, s);
      const double vd = chi2_dual_value(phi, p, g, s);
      REQUIRE(vp == Approx(vd).margin(2e-6));
    }
  }
  SECTION("bad p_hat rejected") {
    Vector p(2), phi(2);
    p << 0.6, 0.6;
    phi << 1, 1;
    REQUIRE_THROWS_AS(chi2_worst_case(phi, p, 0.1), ValidationError);
  }
}

namespace {

// single-point support in homogenized coordinates (S = 0)
SupportCone point_support() {
  SupportCone cone;
  cone.S = 0;
  cone.P = Matrix::Ones(1, 1);
  cone.R.resize(0, 1);
  return cone;
}

}  // namespace

TEST_CASE("moment dual on the single-point support") {
  // sup E[xi' q xi] over distributions on {1} is q itself regardless of the
  // Frobenius radius; the dual attains it at B = -q, alpha = q.
  SolveSettings st;
  st.feas_tol = st.gap_tol = 1e-10;
  auto cone = point_support();
  for (double q : {0.7, 2.0}) {
    for (double eps : {0.0, 0.5}) {
      ProgramBuilder b;
      int s = b.add_var();
      b.obj(s, 1.0);
      SymExpr Q(1);
      Q.at(0, 0) = LinExpr(q);
      Matrix omega = Matrix::Ones(1, 1);
      auto blk = emit_moment_dual(b, Q, omega, eps, cone, LinExpr::variable(s));
      // 1x1 copositivity on the ray nu >= 0 is plain nonnegativity
      b.add_nonneg(blk.requirement.expr.at(0, 0));
      auto res = solve(b.build(), st);
      REQUIRE(res.status == SolveStatus::optimal);
      REQUIRE(res.objective == Approx(q).margin(1e-6));
    }
  }
}

TEST_CASE("moment dual objective upper-bounds dirac points") {
  // weak duality of the moment problem: any feasible (alpha, B) evaluated at
  // the dual objective dominates xi' Q xi for every slice point xi whose
  // second moment sits inside the Frobenius ball
  Rng rng(41);
  const int S = 2;
  Vector lo = Vector::Zero(S), hi = Vector::Ones(S);
  auto cone = build_box_support(lo, hi);

  for (int rep = 0; rep < 10; ++rep) {
    // random symmetric Q, empirical moment matrix from a cloud of points
    Matrix Q(S + 1, S + 1);
    for (int i = 0; i <= S; ++i)
      for (int j = 0; j <= i; ++j) Q(i, j) = Q(j, i) = rng.normal();
    Matrix omega = Matrix::Zero(S + 1, S + 1);
    for (int n = 0; n < 30; ++n) {
      Vector z(S);
      for (int j = 0; j < S; ++j) z[j] = rng.uniform();
      Vector xi = cone.lift(z);
      omega += xi * xi.transpose();
    }
    omega /= 30.0;
    const double eps = rng.uniform(0.3, 1.2);

    // feasible dual points: B psd plus nonnegative alpha
    std::vector<std::pair<double, Matrix>> feas;
    feas.emplace_back(0.3, Matrix::Identity(S + 1, S + 1));
    {
      Vector zdir(S + 1);
      for (int j = 0; j <= S; ++j) zdir[j] = rng.normal();
      feas.emplace_back(0.0, (zdir * zdir.transpose()).eval());
    }
    for (const auto& [alpha, B] : feas) {
      const double dual_obj = alpha + (Q * omega).trace() + (B * omega).trace() +
                              eps * (Q.transpose() + B).norm();
      for (int trial = 0; trial < 1000; ++trial) {
        Vector z(S);
        for (int j = 0; j < S; ++j) z[j] = rng.uniform();
        Vector xi = cone.lift(z);
        if ((xi * xi.transpose() - omega).norm() > eps) continue;
        REQUIRE(dual_obj >= xi.dot(Q * xi) - 1e-9);
      }
    }
  }
}

TEST_CASE("chi2 dual layer collapse at gamma zero") {
  // with gamma = 0 the emitted layer weights the epigraph variables by the
  // empirical probabilities; solving min of the layer objective subject to
  // s_k >= phi_k must give phi . p_hat
  Vector p(3);
  p << 0.2, 0.5, 0.3;
  Vector phi(3);
  phi << 4.0, -1.0, 2.5;
  for (double gamma : {0.0, 0.25}) {
    ProgramBuilder b;
    auto layer = emit_chi2_dual_layer(b, p, gamma, 1.0);
    for (int k = 0; k < 3; ++k)
      b.add_nonneg(LinExpr::variable(layer.s0 + k) - LinExpr(phi[k]));
    SolveSettings st;
    st.feas_tol = st.gap_tol = 1e-10;
    auto res = solve(b.build(), st);
    REQUIRE(res.status == SolveStatus::optimal);
    const double expect = chi2_worst_case(phi, p, gamma, st);
    REQUIRE(res.objective == Approx(expect).margin(1e-6));
    REQUIRE(layer.collapsed == (gamma == 0.0));
  }
}
