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

#ifndef PDRO_CONIC_SOLVE_HPP
#define PDRO_CONIC_SOLVE_HPP

#include <cmath>
#include <map>
#include <queue>
#include <utility>
#include <vector>

#include "pdro/conic/builder.hpp"
#include "pdro/conic/program.hpp"
#include "pdro/conic/simplex.hpp"
#include "pdro/conic/splitting.hpp"

namespace pdro {

/// Solves a continuous conic program.  Pure LPs route to the simplex,
/// anything with second-order or semidefinite blocks to the splitting
/// solver.  Reentrant; distinct programs may be solved concurrently.
inline SolveResult solve(const ConicProgram& p,
                         const SolveSettings& s = SolveSettings{}) {
  p.validate();
  detail::require(!p.has_integers(),
                  "program has integrality flags; use solve_mixed");
  if (p.lp_only()) return solve_lp(p, s);
  SplittingSolver solver(p, s);
  return solver.solve();
}

namespace detail {

struct BnbNode {
  double bound;
  std::map<int, std::pair<double, double>> var_bounds;  // var -> [lo, hi]
  bool operator<(const BnbNode& o) const { return bound > o.bound; }  // min-heap
};

inline ConicProgram with_bounds(
    const ConicProgram& base,
    const std::map<int, std::pair<double, double>>& vb) {
  ConicProgram p = base;
  p.integrality.clear();
  std::vector<Triplet> trip;
  std::vector<double> hrows;
  int r = 0;
  for (const auto& [var, lohi] : vb) {
    if (std::isfinite(lohi.first)) {
      trip.emplace_back(r, var, 1.0);
      hrows.push_back(-lohi.first);  // x - lo >= 0
      ++r;
    }
    if (std::isfinite(lohi.second)) {
      trip.emplace_back(r, var, -1.0);
      hrows.push_back(lohi.second);  // hi - x >= 0
      ++r;
    }
  }
  if (r == 0) return p;
  Vector h = Eigen::Map<const Vector>(hrows.data(), r);
  SpMat G(base.G.rows() + r, base.num_vars);
  // stack rows
  std::vector<Triplet> all;
  all.reserve(base.G.nonZeros() + trip.size());
  for (int j = 0; j < base.G.outerSize(); ++j)
    for (SpMat::InnerIterator it(base.G, j); it; ++it)
      all.emplace_back(it.row(), j, it.value());
  for (const auto& t : trip)
    all.emplace_back(base.G.rows() + t.row(), t.col(), t.value());
  G.setFromTriplets(all.begin(), all.end());
  p.G = std::move(G);
  p.h.resize(base.h.size() + r);
  p.h.head(base.h.size()) = base.h;
  p.h.tail(r) = h;
  ConeBlock blk;
  blk.kind = ConeKind::nonneg;
  blk.rows = r;
  p.blocks.push_back(blk);
  return p;
}

}  // namespace detail

/// Best-first branch-and-bound over the continuous solver.  Intended for the
/// small binary first stages that show up in the facility-location master;
/// integrality is rejected on variables that enter semidefinite rows.
inline SolveResult solve_mixed(const ConicProgram& p,
                               const SolveSettings& s = SolveSettings{}) {
  p.validate();
  if (!p.has_integers()) return solve(p, s);

  // precondition: flagged variables stay out of psd blocks
  {
    std::vector<std::pair<int, int>> psd_ranges;
    int r = 0;
    for (const auto& b : p.blocks) {
      if (b.kind == ConeKind::psd) psd_ranges.emplace_back(r, r + b.rows);
      r += b.rows;
    }
    for (int j = 0; j < p.num_vars; ++j) {
      if (!p.integrality[j]) continue;
      for (SpMat::InnerIterator it(p.G, j); it; ++it)
        for (const auto& [lo, hi] : psd_ranges)
          detail::require(it.row() < lo || it.row() >= hi,
                          "integral variable enters a psd block");
    }
  }

  const double int_tol = 1e-6;
  std::vector<int> int_vars;
  for (int j = 0; j < p.num_vars; ++j)
    if (p.integrality[j]) int_vars.push_back(j);

  auto relax_solve = [&](const std::map<int, std::pair<double, double>>& vb)
      -> SolveResult {
    ConicProgram node = detail::with_bounds(p, vb);
    return solve(node, s);
  };

  SolveResult root = relax_solve({});
  if (root.status == SolveStatus::infeasible ||
      root.status == SolveStatus::unbounded ||
      root.status == SolveStatus::numerical_failure)
    return root;

  std::priority_queue<detail::BnbNode> open;
  open.push({root.objective, {}});
  SolveResult incumbent;
  incumbent.status = SolveStatus::infeasible;
  double incumbent_obj = kInf;
  long nodes = 0;
  bool limit_hit = false;

  while (!open.empty()) {
    detail::BnbNode node = open.top();
    open.pop();
    if (node.bound >= incumbent_obj - s.mip_gap * std::max(1.0, std::abs(incumbent_obj)))
      continue;
    if (++nodes > s.mip_node_limit) {
      limit_hit = true;
      break;
    }
    SolveResult rel = relax_solve(node.var_bounds);
    if (rel.status == SolveStatus::infeasible) continue;
    if (!rel.ok()) {
      if (rel.status == SolveStatus::unbounded) return rel;
      continue;  // numerical failure on a node: drop it
    }
    if (rel.objective >= incumbent_obj - s.mip_gap * std::max(1.0, std::abs(incumbent_obj)))
      continue;

    int branch_var = -1;
    double worst_frac = int_tol;
    for (int j : int_vars) {
      const double f = std::abs(rel.x[j] - std::round(rel.x[j]));
      if (f > worst_frac) {
        worst_frac = f;
        branch_var = j;
      }
    }
    if (branch_var < 0) {
      if (rel.objective < incumbent_obj) {
        incumbent = rel;
        incumbent_obj = rel.objective;
        for (int j : int_vars) incumbent.x[j] = std::round(incumbent.x[j]);
      }
      continue;
    }

    const double xf = rel.x[branch_var];
    auto down = node.var_bounds;
    if (!down.count(branch_var)) down[branch_var] = {-kInf, kInf};
    down[branch_var].second = std::floor(xf);
    if (down[branch_var].first <= down[branch_var].second)
      open.push({rel.objective, down});
    auto up = node.var_bounds;
    if (!up.count(branch_var)) up[branch_var] = {-kInf, kInf};
    up[branch_var].first = std::ceil(xf);
    if (up[branch_var].first <= up[branch_var].second)
      open.push({rel.objective, up});
  }

  if (incumbent_obj < kInf) {
    incumbent.status = limit_hit ? SolveStatus::inaccurate : SolveStatus::optimal;
    return incumbent;
  }
  if (limit_hit) {
    SolveResult res;
    res.status = SolveStatus::inaccurate;
    return res;
  }
  SolveResult res;
  res.status = SolveStatus::infeasible;
  return res;
}

}  // namespace pdro

#endif  // PDRO_CONIC_SOLVE_HPP
