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

#ifndef PDRO_CONIC_PROGRAM_HPP
#define PDRO_CONIC_PROGRAM_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pdro/core.hpp"

namespace pdro {

/// Cone taxonomy for constraint blocks.  A block of rows r(x) = G x + h must
/// satisfy r(x) in K:
///   zero     : r = 0
///   nonneg   : r >= 0 componentwise
///   soc(d)   : ||(r_1,..,r_{d-1})|| <= r_d   (norm part first, bound last)
///   psd(n)   : smat(r) positive semidefinite, r the scaled lower-triangular
///              vectorization with n(n+1)/2 rows
enum class ConeKind : std::uint8_t { zero, nonneg, soc, psd };

inline const char* to_string(ConeKind k) {
  switch (k) {
    case ConeKind::zero: return "zero";
    case ConeKind::nonneg: return "nonneg";
    case ConeKind::soc: return "soc";
    case ConeKind::psd: return "psd";
  }
  return "?";
}

struct ConeBlock {
  ConeKind kind = ConeKind::zero;
  int rows = 0;      // number of rows occupied by the block
  int psd_side = 0;  // matrix side n for psd blocks, 0 otherwise
};

inline int svec_len(int n) { return n * (n + 1) / 2; }

/// Scaled lower-triangular vectorization: columns of the lower triangle in
/// order (0,0),(1,0),..,(n-1,0),(1,1),..  Off-diagonal entries carry sqrt(2)
/// so that svec(A) . svec(B) = tr(AB) and Euclidean projection commutes with
/// the matrix-space projection.
inline Vector svec(const Matrix& A, double sym_tol = 1e-10) {
  const int n = static_cast<int>(A.rows());
  detail::require(A.cols() == n, "svec: matrix must be square");
  const double scale = A.norm();
  detail::require((A - A.transpose()).norm() <= sym_tol * std::max(1.0, scale),
                  "svec: matrix is not symmetric within tolerance");
  Vector v(svec_len(n));
  const double rt2 = std::sqrt(2.0);
  int k = 0;
  for (int j = 0; j < n; ++j) {
    v[k++] = A(j, j);
    for (int i = j + 1; i < n; ++i) v[k++] = rt2 * 0.5 * (A(i, j) + A(j, i));
  }
  return v;
}

/// Inverse of svec.
inline Matrix smat(const Vector& v, int n) {
  detail::require(static_cast<int>(v.size()) == svec_len(n),
                  "smat: vector length does not match matrix side");
  Matrix A(n, n);
  const double inv_rt2 = 1.0 / std::sqrt(2.0);
  int k = 0;
  for (int j = 0; j < n; ++j) {
    A(j, j) = v[k++];
    for (int i = j + 1; i < n; ++i) {
      A(i, j) = A(j, i) = inv_rt2 * v[k++];
    }
  }
  return A;
}

/// Row/column index of svec slot k within side n (lower triangle, i >= j).
inline std::pair<int, int> svec_coords(int k, int n) {
  int j = 0;
  int remaining = k;
  while (remaining >= n - j) {
    remaining -= n - j;
    ++j;
  }
  return {j + remaining, j};
}

/// Solver-agnostic conic program in the canonical form
///
///   minimize    objective . x  (+ objective_constant)
///   subject to  G x + h in K   (blockwise, per `blocks`)
///
/// All paper-side programs, including maximizations, are normalized into this
/// form at construction time.  Instances are immutable values once built and
/// safe to share across threads.
struct ConicProgram {
  int num_vars = 0;
  Vector objective;           // size num_vars
  double objective_constant = 0.0;
  SpMat G;                    // total_rows x num_vars
  Vector h;                   // total_rows
  std::vector<ConeBlock> blocks;
  std::vector<std::uint8_t> integrality;  // empty, or one flag per variable

  int total_rows() const { return static_cast<int>(h.size()); }

  bool has_integers() const {
    for (auto f : integrality)
      if (f) return true;
    return false;
  }

  bool lp_only() const {
    for (const auto& b : blocks)
      if (b.kind == ConeKind::soc || b.kind == ConeKind::psd) return false;
    return true;
  }

  /// Checks the structural invariants; throws ValidationError on violation.
  void validate() const {
    detail::require(num_vars >= 1, "program has no variables");
    detail::require(static_cast<int>(objective.size()) == num_vars,
                    "objective length mismatch");
    detail::require(G.cols() == num_vars, "constraint row width != num_vars");
    detail::require(G.rows() == h.size(), "offset length mismatch");
    detail::require(integrality.empty() ||
                        static_cast<int>(integrality.size()) == num_vars,
                    "integrality mask length mismatch");
    int rows = 0;
    for (const auto& b : blocks) {
      detail::require(b.rows >= 1, "empty cone block");
      switch (b.kind) {
        case ConeKind::soc:
          detail::require(b.rows >= 2, "second-order block needs >= 2 rows");
          break;
        case ConeKind::psd:
          detail::require(b.psd_side >= 1 && b.rows == svec_len(b.psd_side),
                          "psd block must have n(n+1)/2 rows");
          break;
        default:
          break;
      }
      rows += b.rows;
    }
    detail::require(rows == total_rows(), "cone blocks do not tile the rows");
    detail::require(h.allFinite() && objective.allFinite(),
                    "non-finite program data");
  }
};

enum class SolveStatus : std::uint8_t {
  optimal,
  infeasible,
  unbounded,
  inaccurate,
  numerical_failure,
};

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::unbounded: return "unbounded";
    case SolveStatus::inaccurate: return "inaccurate";
    case SolveStatus::numerical_failure: return "numerical-failure";
  }
  return "?";
}

struct SolveResult {
  SolveStatus status = SolveStatus::numerical_failure;
  Vector x;                                // primal point (empty if none)
  std::vector<Vector> block_duals;         // dual vector per cone block
  double objective = kNaN;                 // finite iff optimal/inaccurate
  double dual_objective = kNaN;
  double primal_residual = kNaN;           // diagnostics, relative
  double dual_residual = kNaN;
  double gap = kNaN;
  double wall_time_sec = 0.0;
  long iterations = 0;

  bool ok() const {
    return status == SolveStatus::optimal || status == SolveStatus::inaccurate;
  }
};

struct SolveSettings {
  double feas_tol = 1e-8;   // primal/dual residual target, (1+norm)-relative
  double gap_tol = 1e-8;    // duality gap target, (1+|obj|)-relative
  double time_limit_sec = 600.0;
  long max_iters = 200000;          // splitting-method iteration cap
  double mip_gap = 1e-4;            // relative branch-and-bound gap
  long mip_node_limit = 200000;
  double sym_tol = 1e-10;
  bool acceleration = true;         // Anderson acceleration of the iteration
  int aa_memory = 10;
  double aa_safety = 1.0;           // accept factor vs the plain step size
  double relaxation = 1.5;          // Douglas-Rachford relaxation in (0, 2)
  int check_interval = 25;
  bool verbose = false;
};

}  // namespace pdro

#endif  // PDRO_CONIC_PROGRAM_HPP
