#include <catch2/catch.hpp>

#include "pdro/reformulate.hpp"
#include "pdro/rng.hpp"
#include "support/instances.hpp"
#include "support/oracles.hpp"

using namespace pdro;
using testing_support::make_newsvendor;
using testing_support::scheme_for;
using testing_support::zero_ambiguity;

namespace {

SolveSettings precise() {
  SolveSettings s;
  s.feas_tol = s.gap_tol = 1e-9;
  return s;
}

SupportCone orthant2() {
  // S = 1: rows zeta >= 0 and nu >= 0
  SupportCone cone;
  cone.S = 1;
  cone.P = Matrix::Identity(2, 2);
  cone.R.resize(0, 2);
  return cone;
}

}  // namespace

TEST_CASE("extended system table") {
  Rng rng(3);
  auto nv = make_newsvendor(2, 0.1, rng);
  auto sys = extend_system(nv.problem);
  const int L = nv.problem.L();
  REQUIRE((int)sys.rows.size() == L + 2);
  for (int l = 0; l < L; ++l) {
    REQUIRE(sys.rows[l].W.isApprox(nv.problem.W[l]));
    REQUIRE(sys.rows[l].TA.isApprox(nv.problem.T[l].A));
    REQUIRE(sys.rows[l].lambda == 0.0);
    REQUIRE(sys.rows[l].kappa == 0.0);
  }
  REQUIRE(sys.rows[L].W.isZero());
  REQUIRE(sys.rows[L].TA.isZero());
  REQUIRE(sys.rows[L].lambda == 1.0);
  REQUIRE(sys.rows[L].kappa == 0.0);
  REQUIRE(sys.rows[L + 1].W.isApprox(-nv.problem.D));
  REQUIRE(sys.rows[L + 1].lambda == 1.0);
  REQUIRE(sys.rows[L + 1].kappa == 1.0);
}

TEST_CASE("delta matrix") {
  SECTION("all-zero inputs give the zero matrix") {
    ExtendedRow row;
    row.W = Matrix::Zero(1, 2);
    row.TA = Matrix::Zero(2, 1);
    row.Tt = Vector::Zero(2);
    std::vector<LinExpr> x = {LinExpr(0.0)};
    auto dm = delta_matrix(row, x, [](int, int) { return LinExpr(0.0); },
                           nullptr);
    Vector empty(0);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) REQUIRE(dm.value(empty)(i, j) == 0.0);
  }
  SECTION("scalar expansion") {
    // S = 0, N2 = 1, W = (2), Y = (3), T = (1), lambda = 0 -> (2*3 - 1) = 5
    ExtendedRow row;
    row.W = Matrix::Constant(1, 1, 2.0);
    row.TA = Matrix::Zero(1, 0);
    row.Tt = Vector::Constant(1, 1.0);
    std::vector<LinExpr> x;
    auto dm = delta_matrix(row, x, [](int, int) { return LinExpr(3.0); },
                           nullptr);
    Vector empty(0);
    REQUIRE(dm.value(empty)(0, 0) == Approx(5.0));
  }
  SECTION("symmetric and affine in its arguments") {
    Rng rng(5);
    auto nv = make_newsvendor(1, 0.2, rng);
    auto sys = extend_system(nv.problem);
    const int d = nv.problem.S() + 1;
    const int n2 = nv.problem.n2();
    // variables: x (1), Y (n2*d), Q (svec)
    const int nx = 1, nY = n2 * d, nQ = svec_len(d);
    std::vector<LinExpr> x = {LinExpr::variable(0)};
    auto Y = [&](int n, int j) { return LinExpr::variable(nx + n * d + j); };
    SymExpr Q(d);
    {
      int at = 0;
      for (int j = 0; j < d; ++j)
        for (int i = j; i < d; ++i) Q.at(i, j) = LinExpr::variable(nx + nY + at++);
    }
    for (std::size_t l = 0; l < sys.rows.size(); ++l) {
      auto dm = delta_matrix(sys.rows[l], x, Y, &Q);
      const int nvars = nx + nY + nQ;
      Vector p0(nvars), p1(nvars), dir(nvars);
      for (int v = 0; v < nvars; ++v) {
        p0[v] = rng.normal();
        dir[v] = rng.normal();
      }
      p1 = p0 + dir;
      Matrix at0 = dm.value(p0);
      Matrix at1 = dm.value(p1);
      Matrix athalf = dm.value(p0 + 0.5 * dir);
      REQUIRE((at0 - at0.transpose()).norm() < 1e-14);
      // affinity: midpoint value is the average of the endpoints, exactly
      REQUIRE((athalf - 0.5 * (at0 + at1)).norm() <
              1e-12 * (1.0 + at0.norm() + at1.norm()));
    }
  }
}

TEST_CASE("requirement counts per build mode") {
  Rng rng(7);
  auto nv = make_newsvendor(1, 0.25, rng);
  auto samples = testing_support::draw_newsvendor_samples(nv, 6, rng);
  const int K = 3;
  auto scheme = scheme_for(nv, samples, K);
  auto amb = zero_ambiguity(K);
  const int L = nv.problem.L();

  SECTION("full epigraph carries (L+3)K requirements") {
    PdrOptions opt;
    opt.mode = BuildMode::epigraph;
    auto art = build_pdr_cop(nv.problem, scheme, amb, opt);
    REQUIRE((int)art.requirements.size() == (L + 3) * K);
  }
  SECTION("delta = 1 drops the tau positivity row") {
    auto nv1 = nv;
    nv1.problem.delta = 1.0;
    auto art = build_pdr_cop(nv1.problem, scheme, amb, {});
    REQUIRE((int)art.requirements.size() == (L + 2) * K);
    REQUIRE(art.map.theta == -1);
  }
  SECTION("direct expectation eliminates the quadratic rule") {
    auto nv1 = nv;
    nv1.problem.delta = 1.0;
    PdrOptions opt;
    opt.mode = BuildMode::direct_expectation;
    auto art = build_pdr_cop(nv1.problem, scheme, amb, opt);
    REQUIRE((int)art.requirements.size() == (L + 1) * K);
    REQUIRE(art.map.parts[0].q0 == -1);
  }
  SECTION("delta = 0 rejected") {
    auto nv1 = nv;
    nv1.problem.delta = 0.0;
    REQUIRE_THROWS_AS(build_pdr_cop(nv1.problem, scheme, amb, {}),
                      ValidationError);
  }
}

TEST_CASE("inner cone membership certificates") {
  auto cone = orthant2();
  SECTION("identity on the orthant") {
    REQUIRE(ia_member(Matrix::Identity(2, 2), cone, InnerCone::ia0, precise()));
  }
  SECTION("pure off-diagonal on the orthant") {
    Matrix V(2, 2);
    V << 0, 1, 1, 0;
    REQUIRE(ia_member(V, cone, InnerCone::ia0, precise()));
  }
  SECTION("indefinite diagonal is refused, with a quadratic witness") {
    Matrix V(2, 2);
    V << -1, 0, 0, 0;
    Vector e1(2);
    e1 << 1, 0;
    REQUIRE(e1.dot(V * e1) == -1.0);  // copositivity witness
    REQUIRE_FALSE(ia_member(V, cone, InnerCone::ia0, precise()));
    REQUIRE_FALSE(ia_member(V, cone, InnerCone::ia1, precise()));
  }
  SECTION("level-1 accepts the all-ones polyhedral certificate") {
    Matrix ones = Matrix::Ones(2, 2);  // P' Sigma P with Sigma = 1 >= 0
    REQUIRE(ia_member(ones, cone, InnerCone::ia1, precise()));
  }
  SECTION("level-0 members lift to level 1") {
    Rng rng(11);
    int accepted = 0;
    for (int rep = 0; rep < 100; ++rep) {
      // draw a guaranteed level-0 member: U + (P' beta e' + e beta' P)/2
      Matrix A(2, 2);
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) A(i, j) = rng.normal();
      Matrix U = A * A.transpose();
      Vector beta(2);
      beta << rng.uniform(0.0, 2.0), rng.uniform(0.0, 2.0);
      Vector e2(2);
      e2 << 0, 1;
      Matrix V = U + 0.5 * (cone.P.transpose() * beta * e2.transpose() +
                            e2 * beta.transpose() * cone.P);
      REQUIRE(ia_member(V, cone, InnerCone::ia1, precise()));
      ++accepted;
    }
    REQUIRE(accepted == 100);
  }
}

TEST_CASE("soc quadratic matrix") {
  // ball cone ||zeta|| <= nu in S = 2: R = [I 0; 0 1] rows, M-hat must be
  // nu^2 - ||zeta||^2 in quadratic form
  SupportCone cone;
  cone.S = 2;
  cone.P = Matrix::Zero(1, 3);
  cone.P(0, 2) = 1.0;
  cone.R = Matrix::Identity(3, 3);
  Matrix M = soc_quadratic_matrix(cone);
  Matrix expect = Matrix::Zero(3, 3);
  expect(0, 0) = expect(1, 1) = -1.0;
  expect(2, 2) = 1.0;
  REQUIRE(M.isApprox(expect));
}

TEST_CASE("pdr solve on a trivial second stage") {
  // one partition, delta = 1, D = 0: the recourse is free, so the optimum is
  // the cheapest feasible first stage
  SupportCone support;
  {
    Vector lo(1), hi(1);
    lo << 0;
    hi << 1;
    support = build_box_support(lo, hi);
  }
  TwoStageProblem p;
  p.c = Vector::Constant(1, 2.0);
  p.delta = 1.0;
  p.support = support;
  p.D = Matrix::Zero(1, 2);
  {
    Matrix W = Matrix::Zero(1, 2);
    W(0, 1) = 1.0;  // y >= 0
    p.W.push_back(W);
    AffineMap m;
    m.A = Matrix::Zero(2, 1);
    m.t = Vector::Zero(2);
    p.T.push_back(m);
  }
  {
    FirstStageRows fs;
    fs.R = Matrix::Identity(1, 1);
    fs.r = Vector::Constant(1, -1.0);  // x >= 1
    p.first_stage.push_back(fs);
  }
  Matrix pts(1, 2);
  pts << 0.5, 1.0;
  Matrix samples(2, 1);
  samples << 0.2, 0.8;
  auto scheme = build_partition_scheme(support, pts, samples);
  auto sol = solve_pdr(p, scheme, zero_ambiguity(1), {}, precise());
  REQUIRE(sol.status == SolveStatus::optimal);
  REQUIRE(sol.objective == Approx(2.0).margin(1e-6));
  REQUIRE(sol.x[0] == Approx(1.0).margin(1e-6));
}

TEST_CASE("delta one collapse and gamma limits") {
  Rng rng(19);
  auto nv = make_newsvendor(1, 1.0, rng);
  auto samples = testing_support::draw_newsvendor_samples(nv, 5, rng);
  auto scheme = scheme_for(nv, samples, 2);
  auto amb = zero_ambiguity(2);
  amb.epsilon.setConstant(0.4);

  PdrOptions reduced;  // automatic: theta fixed at 0
  auto sol_reduced = solve_pdr(nv.problem, scheme, amb, reduced, precise());
  PdrOptions direct;
  direct.mode = BuildMode::direct_expectation;
  auto sol_direct = solve_pdr(nv.problem, scheme, amb, direct, precise());
  PdrOptions epi;
  epi.mode = BuildMode::epigraph;
  auto sol_epi = solve_pdr(nv.problem, scheme, amb, epi, precise());

  REQUIRE(sol_reduced.status == SolveStatus::optimal);
  REQUIRE(sol_direct.status == SolveStatus::optimal);
  REQUIRE(sol_epi.status == SolveStatus::optimal);
  REQUIRE(sol_reduced.objective ==
          Approx(sol_direct.objective).epsilon(1e-5).margin(1e-5));
  // keeping the tau >= 0 row at delta = 1 adds a positivity requirement on
  // the quadratic rule that the inner approximation can only certify through
  // an extra psd condition, so the full epigraph is (weakly) more
  // conservative than the reduced build
  REQUIRE(sol_epi.objective >=
          sol_direct.objective -
              1e-5 * std::max(1.0, std::abs(sol_direct.objective)));

  SECTION("tiny gamma approaches the collapsed build from above") {
    // worst case over the chi^2 ball perturbs the value by about
    // sqrt(gamma) times the spread of the partition values
    auto amb_eps = amb;
    amb_eps.gamma = 1e-12;
    auto sol_g = solve_pdr(nv.problem, scheme, amb_eps, reduced, precise());
    REQUIRE(sol_g.objective >= sol_reduced.objective - 1e-6);
    REQUIRE(sol_g.objective ==
            Approx(sol_reduced.objective)
                .epsilon(1e-3)
                .margin(1e-3 * std::abs(sol_reduced.objective)));
  }
}

TEST_CASE("cone ordering and policy soundness on a small instance") {
  Rng rng(23);
  auto nv = make_newsvendor(1, 0.2, rng);
  auto samples = testing_support::draw_newsvendor_samples(nv, 6, rng);
  const int K = 2;
  auto scheme = scheme_for(nv, samples, K);
  AmbiguityParameters amb = zero_ambiguity(K);
  amb.epsilon.setConstant(0.5);
  amb.gamma = 0.15;

  PdrOptions o0;
  o0.cone = InnerCone::ia0;
  auto s0 = solve_pdr(nv.problem, scheme, amb, o0, precise());
  PdrOptions o1;
  o1.cone = InnerCone::ia1;
  auto s1 = solve_pdr(nv.problem, scheme, amb, o1, precise());
  REQUIRE(s0.status == SolveStatus::optimal);
  REQUIRE(s1.status == SolveStatus::optimal);
  // inner cones nest, so the level-1 value cannot exceed level 0
  REQUIRE(s1.objective <=
          s0.objective + 1e-6 * std::max(1.0, std::abs(s0.objective)));

  // soundness: discharged requirements hold on sampled cone points
  auto art = build_pdr_cop(nv.problem, scheme, amb, o0);
  auto program = finish_pdr_program(art, o0.cone);
  auto res = solve(program, precise());
  REQUIRE(res.status == SolveStatus::optimal);
  const int d = nv.problem.S() + 1;
  for (const auto& req : art.requirements) {
    // requirement expressions live in the compilation's scaled basis
    Matrix V = req.expr.value(res.x);
    const double scale = 1.0 + V.norm();
    // rejection-sample points inside this partition cone
    int found = 0, attempts = 0;
    while (found < 200 && attempts < 20000) {
      ++attempts;
      Vector z(nv.problem.S());
      for (int i = 0; i < nv.M; ++i) z[i] = rng.uniform(0.0, nv.demand_hi[i]);
      for (int i = 0; i < nv.M; ++i)
        z[nv.M + i] = rng.uniform(0.0, nv.cost_hi[i]);
      Vector xi_scaled =
          art.scaling.sigma.cwiseInverse().cwiseProduct(req.cone->lift(z));
      xi_scaled[nv.problem.S()] = 1.0;
      if (!req.cone->contains(xi_scaled, 1e-9)) continue;
      ++found;
      REQUIRE(xi_scaled.dot(V * xi_scaled) >= -1e-6 * scale);
    }
    REQUIRE(found > 0);
  }

  // the linear rule satisfies every native row on sampled partition points,
  // and the quadratic rule dominates the epigraph terms
  auto sol = extract_pdr_solution(art, nv.problem, res, o0.cone);
  for (int k = 0; k < K; ++k) {
    int found = 0, attempts = 0;
    while (found < 300 && attempts < 30000) {
      ++attempts;
      Vector z(nv.problem.S());
      for (int i = 0; i < nv.M; ++i) z[i] = rng.uniform(0.0, nv.demand_hi[i]);
      for (int i = 0; i < nv.M; ++i)
        z[nv.M + i] = rng.uniform(0.0, nv.cost_hi[i]);
      Vector xi = scheme.cones[k].lift(z);
      if (!scheme.cones[k].contains(xi, 1e-9)) continue;
      ++found;
      Vector y = sol.rules[k].Y * xi;
      for (int l = 0; l < nv.problem.L(); ++l) {
        const double lhs = (nv.problem.T[l].A * sol.x + nv.problem.T[l].t).dot(xi);
        const double rhs = (nv.problem.W[l] * xi).dot(y);
        REQUIRE(rhs >= lhs - 1e-6 * (1.0 + std::abs(lhs)));
      }
      const double tau = xi.dot(sol.rules[k].Q * xi);
      const double dxy = (nv.problem.D * xi).dot(y);
      REQUIRE(tau >= std::max(dxy - sol.theta, 0.0) -
                         1e-6 * (1.0 + std::abs(dxy)));
    }
    REQUIRE(found > 0);
  }
}

TEST_CASE("conservatism against the in-sample evaluation") {
  // with both radii at zero the program value dominates the in-sample CVaR
  // of the exact second-stage values
  Rng rng(29);
  auto nv = make_newsvendor(1, 0.3, rng);
  auto samples = testing_support::draw_newsvendor_samples(nv, 8, rng);
  auto scheme = scheme_for(nv, samples, 3);
  auto amb = zero_ambiguity(3);
  auto sol = solve_pdr(nv.problem, scheme, amb, {}, precise());
  REQUIRE(sol.status == SolveStatus::optimal);
  std::vector<double> z;
  for (int i = 0; i < samples.rows(); ++i)
    z.push_back(nv.second_stage(sol.x, samples.row(i)));
  const double cvar = oracle::cvar_grid(z, nv.problem.delta);
  REQUIRE(sol.objective >= cvar - 1e-5 * std::max(1.0, std::abs(cvar)));
}

TEST_CASE("complete recourse certificate") {
  Rng rng(31);
  SECTION("newsvendor recourse is certified") {
    auto nv = make_newsvendor(2, 0.1, rng);
    auto cert = check_complete_recourse(nv.problem, InnerCone::ia0, 1e-6,
                                        precise());
    REQUIRE(cert.certified);
    // spot-check strict positivity of the certificate on slice samples
    for (int rep = 0; rep < 100; ++rep) {
      Vector z(nv.problem.S());
      for (int i = 0; i < nv.M; ++i) z[i] = rng.uniform(0.0, nv.demand_hi[i]);
      for (int i = 0; i < nv.M; ++i)
        z[nv.M + i] = rng.uniform(0.0, nv.cost_hi[i]);
      Vector xi = nv.problem.support.lift(z);
      for (int l = 0; l < nv.problem.L(); ++l)
        REQUIRE((nv.problem.W[l] * xi).dot(cert.Y * xi) > 0.0);
    }
  }
  SECTION("recourse the rule cannot influence is uncertified") {
    // constraint 0.y >= 1 on the slice: W = 0 so no Y helps
    SupportCone support;
    Vector lo(1), hi(1);
    lo << 0;
    hi << 1;
    support = build_box_support(lo, hi);
    TwoStageProblem p;
    p.c = Vector::Ones(1);
    p.delta = 1.0;
    p.support = support;
    p.D = Matrix::Zero(1, 2);
    Matrix W = Matrix::Zero(1, 2);
    p.W.push_back(W);
    AffineMap m;
    m.A = Matrix::Zero(2, 1);
    m.t = Vector::Zero(2);
    m.t[1] = 1.0;  // T(x).xi = nu
    p.T.push_back(m);
    auto cert = check_complete_recourse(p, InnerCone::ia0, 1e-6, precise());
    REQUIRE_FALSE(cert.certified);
  }
  SECTION("scaling W preserves the verdict") {
    auto nv = make_newsvendor(1, 0.1, rng);
    auto scaled = nv.problem;
    for (auto& W : scaled.W) W *= 10.0;
    auto c1 = check_complete_recourse(nv.problem, InnerCone::ia0, 1e-6,
                                      precise());
    auto c2 = check_complete_recourse(scaled, InnerCone::ia0, 1e-6, precise());
    REQUIRE(c1.certified == c2.certified);
  }
}
