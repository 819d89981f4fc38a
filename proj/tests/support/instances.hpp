// Hand-rolled test instances, built independently of the production
// generators so they can serve as structural oracles.
#ifndef PDRO_TESTS_INSTANCES_HPP
#define PDRO_TESTS_INSTANCES_HPP

#include <algorithm>
#include <cmath>

#include "pdro/reformulate.hpp"
#include "pdro/rng.hpp"

namespace testing_support {

using namespace pdro;

// Multi-item newsvendor: order x_i <= budget, uncertain demands xi and
// stockout costs s, recourse y1 (excess) / y2 (shortfall).  zeta stacks
// (xi_1..xi_M, s_1..s_M).
struct Newsvendor {
  TwoStageProblem problem;
  Vector demand_hi, cost_hi, holding;
  double budget;
  int M;

  // exact second-stage value, bypassing any solver
  double second_stage(const Vector& x, const Vector& zeta) const {
    double z = 0.0;
    for (int i = 0; i < M; ++i) {
      z += holding[i] * std::max(x[i] - zeta[i], 0.0);
      z += zeta[M + i] * std::max(zeta[i] - x[i], 0.0);
    }
    return z;
  }
};

inline Newsvendor make_newsvendor(int M, double delta, Rng& rng,
                                  double demand_hi_base = 10.0,
                                  double cost_hi_base = 50.0) {
  Newsvendor nv;
  nv.M = M;
  const int S = 2 * M;
  const int d = S + 1;
  const int n2 = 2 * M;
  nv.demand_hi = Vector::Constant(M, demand_hi_base * rng.uniform(0.8, 1.2));
  nv.cost_hi = Vector::Constant(M, cost_hi_base * rng.uniform(0.8, 1.2));
  nv.holding.resize(M);
  for (int i = 0; i < M; ++i) nv.holding[i] = rng.uniform(4.0, 9.0);
  nv.budget = 0.6 * nv.demand_hi.sum();

  TwoStageProblem& p = nv.problem;
  p.c = Vector::Zero(M);
  p.delta = delta;
  Vector lo = Vector::Zero(S), hi(S);
  hi.head(M) = nv.demand_hi;
  hi.tail(M) = nv.cost_hi;
  p.support = build_box_support(lo, hi);
  p.D = Matrix::Zero(n2, d);
  for (int i = 0; i < M; ++i) {
    p.D(i, S) = nv.holding[i];  // g_i * nu on y1_i
    p.D(M + i, M + i) = 1.0;    // s_i on y2_i
  }
  auto zero_map = [&] {
    AffineMap m;
    m.A = Matrix::Zero(d, M);
    m.t = Vector::Zero(d);
    return m;
  };
  for (int i = 0; i < M; ++i) {  // y1_i >= 0
    Matrix W = Matrix::Zero(n2, d);
    W(i, S) = 1.0;
    p.W.push_back(W);
    p.T.push_back(zero_map());
  }
  for (int i = 0; i < M; ++i) {  // y1_i >= x_i - xi_i
    Matrix W = Matrix::Zero(n2, d);
    W(i, S) = 1.0;
    p.W.push_back(W);
    AffineMap m = zero_map();
    m.A(S, i) = 1.0;
    m.t[i] = -1.0;
    p.T.push_back(m);
  }
  for (int i = 0; i < M; ++i) {  // y2_i >= 0
    Matrix W = Matrix::Zero(n2, d);
    W(M + i, S) = 1.0;
    p.W.push_back(W);
    p.T.push_back(zero_map());
  }
  for (int i = 0; i < M; ++i) {  // y2_i >= xi_i - x_i
    Matrix W = Matrix::Zero(n2, d);
    W(M + i, S) = 1.0;
    p.W.push_back(W);
    AffineMap m = zero_map();
    m.A(S, i) = -1.0;
    m.t[i] = 1.0;
    p.T.push_back(m);
  }
  {
    FirstStageRows nn;
    nn.R = Matrix::Identity(M, M);
    nn.r = Vector::Zero(M);
    nn.kind = ConeKind::nonneg;
    p.first_stage.push_back(nn);
    FirstStageRows cap;
    cap.R = -Matrix::Ones(1, M);
    cap.r = Vector::Constant(1, nv.budget);
    cap.kind = ConeKind::nonneg;
    p.first_stage.push_back(cap);
  }
  return nv;
}

inline Matrix draw_newsvendor_samples(const Newsvendor& nv, int N, Rng& rng) {
  const int S = 2 * nv.M;
  Matrix samples(N, S);
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < nv.M; ++j)
      samples(i, j) =
          nv.demand_hi[j] * std::min(1.0, std::abs(rng.normal(0.35, 0.25)));
    for (int j = 0; j < nv.M; ++j)
      samples(i, nv.M + j) =
          nv.cost_hi[j] * std::min(1.0, std::abs(rng.normal(0.4, 0.3)));
  }
  return samples;
}

inline PartitionScheme scheme_for(const Newsvendor& nv, const Matrix& samples,
                                  int K) {
  Vector lo = Vector::Zero(2 * nv.M), hi(2 * nv.M);
  hi.head(nv.M) = nv.demand_hi;
  hi.tail(nv.M) = nv.cost_hi;
  auto pts = halton_constructors(K, lo, hi);
  return build_partition_scheme(nv.problem.support, pts, samples);
}

inline AmbiguityParameters zero_ambiguity(int K) {
  AmbiguityParameters amb;
  amb.epsilon = Vector::Zero(K);
  amb.gamma = 0.0;
  amb.provenance = AmbiguityProvenance::manual;
  return amb;
}

}  // namespace testing_support

#endif  // PDRO_TESTS_INSTANCES_HPP
