#include <catch2/catch.hpp>

#include "pdro/conic/builder.hpp"
#include "pdro/conic/solve.hpp"
#include "pdro/rng.hpp"
#include "support/oracles.hpp"

using namespace pdro;

namespace {

SolveSettings tight() {
  SolveSettings s;
  s.feas_tol = 1e-9;
  s.gap_tol = 1e-9;
  return s;
}

}  // namespace

TEST_CASE("active bound lp") {
  ProgramBuilder b;
  int x = b.add_var();
  b.obj(x, 1.0);
  b.add_nonneg(LinExpr::variable(x) + LinExpr(-1.0));
  auto res = solve(b.build(), tight());
  REQUIRE(res.status == SolveStatus::optimal);
  REQUIRE(res.objective == Approx(1.0).margin(1e-8));
}

TEST_CASE("soc norm bound") {
  // min t s.t. ((3,4), t) in soc(3); oracle: Euclidean norm of (3,4)
  const double expected = std::hypot(3.0, 4.0);
  ProgramBuilder b;
  int t = b.add_var();
  b.obj(t, 1.0);
  b.add_soc({LinExpr(3.0), LinExpr(4.0), LinExpr::variable(t)});
  auto res = solve(b.build(), tight());
  REQUIRE(res.status == SolveStatus::optimal);
  REQUIRE(res.objective == Approx(expected).margin(1e-7));
}

TEST_CASE("psd trace with fixed off-diagonal") {
  // min tr(X), X psd(2), X12 = 1; oracle: min_{a>0} a + 1/a
  const double expected =
      oracle::minimize_scalar([](double a) { return a + 1.0 / a; }, 1e-3, 1e3);
  REQUIRE(expected == Approx(2.0).margin(1e-9));

  ProgramBuilder b;
  int x11 = b.add_var(), x22 = b.add_var();
  b.obj(x11, 1.0);
  b.obj(x22, 1.0);
  SymExpr X(2);
  X.at(0, 0) = LinExpr::variable(x11);
  X.at(1, 1) = LinExpr::variable(x22);
  X.at(1, 0) = LinExpr(1.0);
  b.add_psd(X);
  auto res = solve(b.build(), tight());
  REQUIRE(res.status == SolveStatus::optimal);
  REQUIRE(res.objective == Approx(expected).margin(1e-6));
  REQUIRE(res.x[0] == Approx(1.0).margin(1e-4));
  REQUIRE(res.x[1] == Approx(1.0).margin(1e-4));
}

TEST_CASE("embedding linear map identity") {
  // (I+Q) applied to the solver's linear_solve output must reproduce the rhs
  Rng rng(7);
  ProgramBuilder b;
  int n = 4;
  int v0 = b.add_vars(n);
  for (int j = 0; j < n; ++j) b.obj(v0 + j, rng.normal());
  std::vector<LinExpr> rows;
  for (int i = 0; i < 3; ++i) {
    LinExpr e(rng.normal());
    for (int j = 0; j < n; ++j) e.add(v0 + j, rng.normal());
    rows.push_back(e);
  }
  b.add_nonneg(rows);
  b.add_soc({LinExpr::variable(v0), LinExpr::variable(v0 + 1),
             LinExpr::variable(v0 + 2)});
  auto prog = b.build();
  SplittingSolver solver(prog, tight());

  const auto& A = solver.scaled_A();
  const auto& bb = solver.scaled_b();
  const auto& cc = solver.scaled_c();
  const int m = static_cast<int>(bb.size());
  Vector w(n + m + 1);
  for (int i = 0; i < w.size(); ++i) w[i] = rng.normal();
  Vector z;
  solver.linear_solve(w, z);
  // reconstruct (I+Q) z
  Vector zx = z.head(n), zy = z.segment(n, m);
  double zt = z[n + m];
  Vector r1 = zx + A.transpose() * zy + cc * zt;
  Vector r2 = -A * zx + zy + bb * zt;
  double r3 = -cc.dot(zx) - bb.dot(zy) + zt;
  REQUIRE((r1 - w.head(n)).norm() < 1e-9);
  REQUIRE((r2 - w.segment(n, m)).norm() < 1e-9);
  REQUIRE(std::abs(r3 - w[n + m]) < 1e-9);
}

TEST_CASE("infeasible and unbounded detection") {
  {
    ProgramBuilder b;
    int x = b.add_var();
    b.obj(x, 1.0);
    b.add_nonneg(LinExpr::variable(x) - LinExpr(1.0));   // x >= 1
    b.add_nonneg(-LinExpr::variable(x) - LinExpr(1.0));  // x <= -1
    REQUIRE(solve(b.build(), tight()).status == SolveStatus::infeasible);
  }
  {
    ProgramBuilder b;
    int x = b.add_var();
    b.obj(x, 1.0);
    b.add_nonneg(-LinExpr::variable(x) + LinExpr(1.0));  // x <= 1
    REQUIRE(solve(b.build(), tight()).status == SolveStatus::unbounded);
  }
  {
    // infeasible psd: X psd(1) with X11 = -1
    ProgramBuilder b;
    int x = b.add_var();
    b.obj(x, 0.0);
    SymExpr X(1);
    X.at(0, 0) = LinExpr(-1.0) + LinExpr::variable(x) * 0.0;
    b.add_psd(X);
    b.add_zero(LinExpr::variable(x));
    auto res = solve(b.build(), tight());
    REQUIRE(res.status == SolveStatus::infeasible);
  }
}

TEST_CASE("simplex agrees with splitting on lps") {
  Rng rng(11);
  for (int rep = 0; rep < 8; ++rep) {
    ProgramBuilder b;
    const int n = 5;
    int v0 = b.add_vars(n);
    for (int j = 0; j < n; ++j) b.obj(v0 + j, rng.uniform(0.2, 2.0));
    for (int j = 0; j < n; ++j) b.add_nonneg(LinExpr::variable(v0 + j));
    for (int i = 0; i < 3; ++i) {
      LinExpr e(-rng.uniform(0.5, 2.0));
      for (int j = 0; j < n; ++j) e.add(v0 + j, rng.uniform(0.1, 1.5));
      b.add_nonneg(e);
    }
    auto prog = b.build();
    auto lp = solve_lp(prog, tight());  // simplex route
    SplittingSolver adm(prog, tight());
    auto fo = adm.solve();  // splitting route
    REQUIRE(lp.status == SolveStatus::optimal);
    REQUIRE(fo.status == SolveStatus::optimal);
    REQUIRE(lp.objective ==
            Approx(fo.objective).epsilon(1e-6).margin(1e-6));
  }
}

TEST_CASE("weak duality on reported values") {
  Rng rng(13);
  for (int rep = 0; rep < 6; ++rep) {
    ProgramBuilder b;
    const int n = 4;
    int v0 = b.add_vars(n);
    for (int j = 0; j < n; ++j) b.obj(v0 + j, rng.uniform(-1.0, 2.0));
    for (int j = 0; j < n; ++j) {
      b.add_nonneg(LinExpr::variable(v0 + j) + LinExpr(1.0));
      b.add_nonneg(LinExpr(1.0) - LinExpr::variable(v0 + j));
    }
    b.add_soc({LinExpr::variable(v0), LinExpr::variable(v0 + 1),
               LinExpr(1.5)});
    auto res = solve(b.build(), tight());
    REQUIRE(res.status == SolveStatus::optimal);
    REQUIRE(res.objective >= res.dual_objective - 1e-6);
  }
}

TEST_CASE("determinism of repeated solves") {
  ProgramBuilder b;
  int x = b.add_var(), y = b.add_var();
  b.obj(x, 1.0);
  b.obj(y, 2.0);
  b.add_soc({LinExpr::variable(x), LinExpr::variable(y),
             LinExpr::variable(x) * 0.5 + LinExpr(2.0)});
  b.add_nonneg(LinExpr::variable(x) + LinExpr::variable(y) - LinExpr(0.5));
  auto prog = b.build();
  auto r1 = solve(prog, tight());
  auto r2 = solve(prog, tight());
  REQUIRE(r1.status == SolveStatus::optimal);
  REQUIRE(std::abs(r1.objective - r2.objective) <=
          1e-7 * std::max(1.0, std::abs(r1.objective)));
}

TEST_CASE("psd vectorization") {
  Matrix I2 = Matrix::Identity(2, 2);
  Vector v = svec(I2);
  REQUIRE(v.size() == 3);
  REQUIRE(v[0] == Approx(1.0));
  REQUIRE(v[1] == Approx(0.0));
  REQUIRE(v[2] == Approx(1.0));
  REQUIRE(v.dot(v) == Approx(2.0));  // tr(I*I)

  Matrix A(2, 2), B(2, 2);
  A << 0, 1, 1, 0;
  B << 0, 1, 1, 0;
  REQUIRE(svec(A).dot(svec(B)) == Approx((A * B).trace()));

  REQUIRE(svec(Matrix::Zero(3, 3)).norm() == 0.0);

  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const int n = 1 + (int)(rng.uniform() * 6);
    Matrix M(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j <= i; ++j) M(i, j) = M(j, i) = rng.normal();
    REQUIRE((smat(svec(M), n) - M).norm() < 1e-12);
    Matrix N(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j <= i; ++j) N(i, j) = N(j, i) = rng.normal();
    REQUIRE(svec(M).dot(svec(N)) == Approx((M * N).trace()).margin(1e-10));
  }

  Matrix bad(2, 2);
  bad << 1, 2, 3, 4;
  REQUIRE_THROWS_AS(svec(bad), ValidationError);
}

TEST_CASE("mixed integer basics") {
  SECTION("rounding forced") {
    ProgramBuilder b;
    int x = b.add_var();
    b.obj(x, 1.0);
    b.add_nonneg(LinExpr::variable(x) - LinExpr(0.3));
    b.add_nonneg(LinExpr(1.0) - LinExpr::variable(x));
    b.add_nonneg(LinExpr::variable(x));
    b.mark_integer(x);
    auto res = solve_mixed(b.build(), tight());
    REQUIRE(res.status == SolveStatus::optimal);
    REQUIRE(res.objective == Approx(1.0).margin(1e-6));
  }
  SECTION("two binary cover") {
    const double expected = oracle::enumerate_binary(
        {3.0, 4.0}, [](const std::vector<int>& x) { return x[0] + x[1] >= 1; });
    REQUIRE(expected == 3.0);
    ProgramBuilder b;
    int x1 = b.add_var(), x2 = b.add_var();
    b.obj(x1, 3.0);
    b.obj(x2, 4.0);
    for (int v : {x1, x2}) {
      b.add_nonneg(LinExpr::variable(v));
      b.add_nonneg(LinExpr(1.0) - LinExpr::variable(v));
      b.mark_integer(v);
    }
    b.add_nonneg(LinExpr::variable(x1) + LinExpr::variable(x2) - LinExpr(1.0));
    auto res = solve_mixed(b.build(), tight());
    REQUIRE(res.status == SolveStatus::optimal);
    REQUIRE(res.objective == Approx(expected).margin(1e-6));
  }
  SECTION("cheaper facility pattern") {
    // two facilities, no cuts yet: open the cheaper one
    const std::vector<double> f = {7.0, 5.0};
    const double expected = oracle::enumerate_binary(
        f, [](const std::vector<int>& x) { return x[0] + x[1] >= 1; });
    REQUIRE(expected == 5.0);
    ProgramBuilder b;
    int x1 = b.add_var(), x2 = b.add_var();
    b.obj(x1, f[0]);
    b.obj(x2, f[1]);
    for (int v : {x1, x2}) {
      b.add_nonneg(LinExpr::variable(v));
      b.add_nonneg(LinExpr(1.0) - LinExpr::variable(v));
      b.mark_integer(v);
    }
    b.add_nonneg(LinExpr::variable(x1) + LinExpr::variable(x2) - LinExpr(1.0));
    auto res = solve_mixed(b.build(), tight());
    REQUIRE(res.status == SolveStatus::optimal);
    REQUIRE(res.objective == Approx(expected).margin(1e-6));
    REQUIRE(res.x[1] == Approx(1.0).margin(1e-6));
  }
  SECTION("integrality on psd variable rejected") {
    ProgramBuilder b;
    int x = b.add_var();
    b.obj(x, 1.0);
    SymExpr X(1);
    X.at(0, 0) = LinExpr::variable(x);
    b.add_psd(X);
    b.mark_integer(x);
    REQUIRE_THROWS_AS(solve_mixed(b.build(), tight()), ValidationError);
  }
}

TEST_CASE("program validation") {
  ProgramBuilder b;
  int x = b.add_var();
  b.obj(x, 1.0);
  b.add_nonneg(LinExpr::variable(x));
  auto p = b.build();
  REQUIRE_NOTHROW(p.validate());
  p.blocks[0].rows = 2;  // corrupt
  REQUIRE_THROWS_AS(p.validate(), ValidationError);
}

TEST_CASE("warm started objective swap") {
  // same constraints, two objectives; second solve reuses the factorization
  ProgramBuilder b;
  int x = b.add_var(), y = b.add_var();
  b.obj(x, 1.0);
  b.add_soc({LinExpr::variable(x), LinExpr::variable(y), LinExpr(1.0)});
  b.add_nonneg(LinExpr::variable(x) + LinExpr(1.0));
  auto prog = b.build();
  SplittingSolver solver(prog, tight());
  auto r1 = solver.solve();
  REQUIRE(r1.status == SolveStatus::optimal);
  REQUIRE(r1.objective == Approx(-1.0).margin(1e-7));
  Vector c2(2);
  c2 << 0.0, 1.0;
  solver.set_objective(c2);
  auto r2 = solver.solve();
  REQUIRE(r2.status == SolveStatus::optimal);
  REQUIRE(r2.objective == Approx(-1.0).margin(1e-7));
}
