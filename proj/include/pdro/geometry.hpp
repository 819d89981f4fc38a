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

#ifndef PDRO_GEOMETRY_HPP
#define PDRO_GEOMETRY_HPP

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pdro/conic/builder.hpp"
#include "pdro/conic/solve.hpp"
#include "pdro/core.hpp"

namespace pdro {

// Uncertainty lives in homogenized coordinates xi = (zeta, nu): the support
// set is the slice nu = 1 of a closed convex cone K in R^{S+1}, so affine
// and quadratic functions of the primitive parameters become linear and
// quadratic forms in xi.

/// Cone K = { xi : P xi >= 0, R xi in SOC(S_r) } in R^{S+1}.  P always
/// contains the homogenization ray row nu >= 0 (required for the inner
/// approximation hierarchy to nest).
struct SupportCone {
  int S = 0;       // primitive dimension; xi lives in R^{S+1}
  Matrix P;        // S_p x (S+1)
  Matrix R;        // S_r x (S+1), possibly 0 x (S+1)

  int dim() const { return S + 1; }
  int num_poly() const { return static_cast<int>(P.rows()); }
  int num_soc() const { return static_cast<int>(R.rows()); }
  bool has_soc() const { return R.rows() > 0; }

  void validate() const {
    detail::require(S >= 0, "support cone: negative dimension");
    detail::require(P.cols() == S + 1, "support cone: P has wrong width");
    detail::require(R.rows() == 0 || R.cols() == S + 1,
                    "support cone: R has wrong width");
    detail::require(P.rows() >= 1, "support cone: no polyhedral rows");
  }

  /// Lift a primitive point to the slice.
  Vector lift(const Vector& zeta) const {
    detail::require(zeta.size() == S, "point has wrong dimension");
    Vector xi(S + 1);
    xi.head(S) = zeta;
    xi[S] = 1.0;
    return xi;
  }

  /// Index of the most violated row for a homogenized point, or -1 if the
  /// point satisfies every row within tol.
  int violated_row(const Vector& xi, double tol) const {
    int worst = -1;
    double worst_viol = tol;
    Vector pv = P * xi;
    for (int i = 0; i < pv.size(); ++i)
      if (-pv[i] > worst_viol) {
        worst_viol = -pv[i];
        worst = i;
      }
    if (has_soc()) {
      Vector rv = R * xi;
      const double viol =
          rv.head(rv.size() - 1).norm() - rv[rv.size() - 1];
      if (viol > worst_viol) worst = num_poly();  // report as soc row
    }
    return worst;
  }

  bool contains(const Vector& xi, double tol = 1e-9) const {
    return violated_row(xi, tol) < 0;
  }

  /// min/max of coordinate i over the slice nu = 1; throws if the slice is
  /// unbounded in that direction (the support must be compact).
  std::pair<double, double> coordinate_range(int i,
                                             const SolveSettings& s = {}) const {
    detail::require(i >= 0 && i < S, "coordinate index out of range");
    double lo = 0.0, hi = 0.0;
    for (int sense = 0; sense < 2; ++sense) {
      ProgramBuilder b;
      int z0 = b.add_vars(S + 1);
      b.obj(z0 + i, sense == 0 ? 1.0 : -1.0);
      std::vector<LinExpr> rows;
      for (int r = 0; r < num_poly(); ++r) {
        LinExpr e;
        for (int j = 0; j <= S; ++j) e.add(z0 + j, P(r, j));
        rows.push_back(e);
      }
      b.add_nonneg(rows);
      if (has_soc()) {
        std::vector<LinExpr> soc;
        for (int r = 0; r < num_soc(); ++r) {
          LinExpr e;
          for (int j = 0; j <= S; ++j) e.add(z0 + j, R(r, j));
          soc.push_back(e);
        }
        b.add_soc(soc);
      }
      b.add_zero(LinExpr::variable(z0 + S) - LinExpr(1.0));
      auto res = solve(b.build(), s);
      if (res.status == SolveStatus::unbounded)
        throw ValidationError("support slice unbounded in coordinate " +
                              std::to_string(i));
      if (!res.ok())
        throw SolverError("coordinate range solve failed: " +
                          std::string(to_string(res.status)));
      (sense == 0 ? lo : hi) = (sense == 0 ? 1.0 : -1.0) * res.objective;
    }
    return {lo, hi};
  }

  /// Compactness + nonemptiness check per the support assumptions: every
  /// coordinate admits a bounded min/max over the slice.
  void verify_compact(const SolveSettings& s = {}) const {
    for (int i = 0; i < S; ++i) coordinate_range(i, s);
  }
};

/// Box support: lower_i * nu <= zeta_i <= upper_i * nu.  Rows 0..S-1 are the
/// lower bounds, rows S..2S-1 the upper bounds, and the final row is the
/// homogenization ray nu >= 0.
inline SupportCone build_box_support(const Vector& lower, const Vector& upper) {
  const int S = static_cast<int>(lower.size());
  detail::require(upper.size() == S, "box support: bound lengths differ");
  for (int i = 0; i < S; ++i)
    detail::require(lower[i] < upper[i],
                    "box support: need lower < upper in coordinate " +
                        std::to_string(i));
  SupportCone cone;
  cone.S = S;
  cone.P = Matrix::Zero(2 * S + 1, S + 1);
  for (int i = 0; i < S; ++i) {
    cone.P(i, i) = 1.0;           // zeta_i - lower_i nu >= 0
    cone.P(i, S) = -lower[i];
    cone.P(S + i, i) = -1.0;      // upper_i nu - zeta_i >= 0
    cone.P(S + i, S) = upper[i];
  }
  cone.P(2 * S, S) = 1.0;
  cone.R.resize(0, S + 1);
  return cone;
}

/// Voronoi partition of the support.  Cone k appends, for every i != k, the
/// homogenized bisector row
///     (xi_i'.xi_i' - xi_k'.xi_k') nu - 2 (xi_i' - xi_k') . xi >= 0,
/// which coincides with "closer to constructor k than to i" on the slice.
inline std::vector<SupportCone> build_voronoi_cones(const SupportCone& base,
                                                    const Matrix& points) {
  base.validate();
  const int K = static_cast<int>(points.rows());
  detail::require(K >= 1, "need at least one constructor point");
  detail::require(points.cols() == base.dim(),
                  "constructor points must be homogenized");
  for (int k = 0; k < K; ++k)
    detail::require(std::abs(points(k, base.S) - 1.0) < 1e-12,
                    "constructor point off the slice nu = 1");

  std::vector<SupportCone> cones(K);
  for (int k = 0; k < K; ++k) {
    SupportCone ck = base;
    ck.P.conservativeResize(base.num_poly() + K - 1, base.dim());
    int r = base.num_poly();
    for (int i = 0; i < K; ++i) {
      if (i == k) continue;
      Vector row = -2.0 * (points.row(i) - points.row(k)).transpose();
      row[base.S] += points.row(i).squaredNorm() - points.row(k).squaredNorm();
      detail::require(row.norm() > 1e-12,
                      "duplicate constructor points " + std::to_string(i) +
                          " and " + std::to_string(k));
      ck.P.row(r++) = row;
    }
    cones[k] = std::move(ck);
  }
  return cones;
}

/// Voronoi partition plus the empirical statistics the ambiguity set needs.
struct PartitionScheme {
  Matrix points;                    // K x (S+1), constructor points, nu = 1
  std::vector<SupportCone> cones;   // K partition cones
  std::vector<std::vector<int>> index_sets;  // I_k over the sample indices
  Vector p_hat;                     // empirical partition probabilities
  std::vector<Matrix> omega_hat;    // empirical second moments, (S+1)^2
  Vector radius;                    // R_k (0 for empty partitions)

  int K() const { return static_cast<int>(cones.size()); }
  int S() const { return cones.empty() ? 0 : cones.front().S; }
};

/// Upper bound on max_{xi in slice(cone)} || xi - center ||_2 via
/// per-coordinate range programs: sqrt(sum_i max(|hi_i - c_i|, |lo_i - c_i|)^2).
/// The exact maximization is nonconvex; the bound inherits compactness
/// verification from coordinate_range.
inline double max_radius(const SupportCone& cone, const Vector& center,
                         const SolveSettings& s = {}) {
  detail::require(center.size() == cone.dim(), "center has wrong dimension");
  detail::require(std::abs(center[cone.S] - 1.0) < 1e-9,
                  "center must lie on the slice nu = 1");
  double sq = 0.0;
  for (int i = 0; i < cone.S; ++i) {
    auto [lo, hi] = cone.coordinate_range(i, s);
    const double d = std::max(std::abs(hi - center[i]), std::abs(lo - center[i]));
    sq += d * d;
  }
  return std::sqrt(sq);
}

/// Assigns samples (rows of `samples`, primitive coordinates) to partitions
/// by nearest constructor point, ties to the lowest index, and fills in the
/// empirical statistics.  Samples outside the base support are a hard error.
inline void assign_samples(const Matrix& samples, const SupportCone& base,
                           PartitionScheme& scheme, double feas_tol = 1e-7,
                           const SolveSettings& solver = {}) {
  const int N = static_cast<int>(samples.rows());
  const int K = scheme.K();
  const int S = base.S;
  detail::require(samples.cols() == S, "samples have wrong dimension");
  detail::require(N >= 1, "no samples");

  scheme.index_sets.assign(K, {});
  scheme.p_hat = Vector::Zero(K);
  scheme.omega_hat.assign(K, Matrix::Zero(S + 1, S + 1));
  scheme.radius = Vector::Zero(K);

  for (int i = 0; i < N; ++i) {
    Vector xi = base.lift(samples.row(i));
    const int bad = base.violated_row(xi, feas_tol);
    if (bad >= 0)
      throw ValidationError(
          "sample " + std::to_string(i) + " violates support row " +
          std::to_string(bad) +
          (bad == base.num_poly() ? " (second-order)" : ""));
    int arg = 0;
    double best = (xi - scheme.points.row(0).transpose()).squaredNorm();
    for (int k = 1; k < K; ++k) {
      const double d = (xi - scheme.points.row(k).transpose()).squaredNorm();
      if (d < best) {
        best = d;
        arg = k;
      }
    }
    scheme.index_sets[arg].push_back(i);
  }

  for (int k = 0; k < K; ++k) {
    const auto& idx = scheme.index_sets[k];
    scheme.p_hat[k] = static_cast<double>(idx.size()) / N;
    if (idx.empty()) {
      // keep the program well-posed without inventing moment information
      scheme.omega_hat[k](S, S) = 1.0;
      scheme.radius[k] = 0.0;
      continue;
    }
    Vector mean = Vector::Zero(S + 1);
    for (int i : idx) {
      Vector xi = base.lift(samples.row(i));
      scheme.omega_hat[k] += xi * xi.transpose();
      mean += xi;
    }
    scheme.omega_hat[k] /= static_cast<double>(idx.size());
    mean /= static_cast<double>(idx.size());
    scheme.radius[k] = max_radius(scheme.cones[k], mean, solver);
  }
}

/// Builds the full scheme from constructor points and samples.
inline PartitionScheme build_partition_scheme(const SupportCone& base,
                                              const Matrix& points,
                                              const Matrix& samples,
                                              double feas_tol = 1e-7,
                                              const SolveSettings& solver = {}) {
  PartitionScheme scheme;
  scheme.points = points;
  scheme.cones = build_voronoi_cones(base, points);
  assign_samples(samples, base, scheme, feas_tol, solver);
  return scheme;
}

// --- constructor point policies -------------------------------------------

namespace detail {

inline double radical_inverse(int base, long i) {
  double f = 1.0, r = 0.0;
  while (i > 0) {
    f /= base;
    r += f * (i % base);
    i /= base;
  }
  return r;
}

inline const int kPrimes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29, 31, 37,
                              41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
                              97, 101, 103, 107, 109, 113, 127, 131, 137, 139,
                              149, 151, 157, 163, 167, 173, 179, 181, 191, 193,
                              197, 199, 211, 223, 227, 229, 233, 239, 241, 251,
                              257, 263, 269, 271, 277, 281};

}  // namespace detail

/// K quasi-uniform Halton points over the box [lower, upper], homogenized.
/// Independent of any sample draw by construction.
inline Matrix halton_constructors(int K, const Vector& lower,
                                  const Vector& upper) {
  const int S = static_cast<int>(lower.size());
  detail::require(S <= 60, "halton grid limited to 60 dimensions");
  Matrix pts(K, S + 1);
  for (int k = 0; k < K; ++k) {
    for (int j = 0; j < S; ++j) {
      const double u = detail::radical_inverse(detail::kPrimes[j], k + 1);
      pts(k, j) = lower[j] + (upper[j] - lower[j]) * u;
    }
    pts(k, S) = 1.0;
  }
  return pts;
}

/// First K pairwise-distinct samples, homogenized (reproduces the K = N
/// experiment setups).  Throws if fewer than K distinct samples exist.
inline Matrix from_sample_constructors(int K, const Matrix& samples) {
  const int N = static_cast<int>(samples.rows());
  detail::require(K <= N, "cannot take more constructor points than samples");
  Matrix pts(K, samples.cols() + 1);
  int got = 0;
  for (int i = 0; i < N && got < K; ++i) {
    bool dup = false;
    for (int k = 0; k < got && !dup; ++k)
      dup = (pts.row(k).head(samples.cols()).transpose() -
             samples.row(i).transpose())
                .norm() < 1e-12;
    if (dup) continue;
    pts.row(got).head(samples.cols()) = samples.row(i);
    pts(got, samples.cols()) = 1.0;
    ++got;
  }
  detail::require(got == K, "samples contain fewer than K distinct points");
  return pts;
}

// --- I/O -------------------------------------------------------------------

/// CSV with one row per sample and S comma-separated columns.
inline Matrix read_samples_csv(std::istream& is, int S) {
  std::vector<double> vals;
  std::string line;
  int rows = 0;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string cell;
    int cols = 0;
    while (std::getline(ss, cell, ',')) {
      vals.push_back(std::stod(cell));
      ++cols;
    }
    detail::require(cols == S, "sample row " + std::to_string(rows) + " has " +
                                   std::to_string(cols) + " columns, expected " +
                                   std::to_string(S));
    ++rows;
  }
  Matrix M(rows, S);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < S; ++j) M(i, j) = vals[i * S + j];
  return M;
}

inline Matrix read_samples_csv_file(const std::string& path, int S) {
  std::ifstream f(path);
  detail::require(f.good(), "cannot open " + path);
  return read_samples_csv(f, S);
}

inline void write_samples_csv(const Matrix& samples, std::ostream& os) {
  for (int i = 0; i < samples.rows(); ++i) {
    for (int j = 0; j < samples.cols(); ++j)
      os << (j ? "," : "") << samples(i, j);
    os << "\n";
  }
}

/// Structured-text serialization of a scheme for reproducibility.
inline void write_partition_scheme(const PartitionScheme& s, std::ostream& os) {
  os.precision(17);
  os << "partition-scheme\n";
  os << "K " << s.K() << "\nS " << s.S() << "\n";
  auto dump = [&os](const char* tag, const Matrix& M) {
    os << tag << " " << M.rows() << " " << M.cols() << "\n";
    for (int i = 0; i < M.rows(); ++i) {
      for (int j = 0; j < M.cols(); ++j) os << (j ? " " : "") << M(i, j);
      os << "\n";
    }
  };
  dump("points", s.points);
  for (int k = 0; k < s.K(); ++k) {
    dump("P", s.cones[k].P);
    dump("R", s.cones[k].R);
    os << "I";
    for (int i : s.index_sets[k]) os << " " << i;
    os << "\n";
    dump("omega", s.omega_hat[k]);
    os << "radius " << s.radius[k] << "\n";
  }
  os << "p_hat";
  for (int k = 0; k < s.K(); ++k) os << " " << s.p_hat[k];
  os << "\n";
}

inline PartitionScheme read_partition_scheme(std::istream& is) {
  std::string tag;
  is >> tag;
  detail::require(tag == "partition-scheme", "bad scheme file header");
  int K, S;
  is >> tag >> K >> tag >> S;
  auto read_mat = [&is](const char* want) {
    std::string t;
    int r, c;
    is >> t >> r >> c;
    detail::require(t == want, std::string("expected ") + want);
    Matrix M(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) is >> M(i, j);
    return M;
  };
  PartitionScheme s;
  s.points = read_mat("points");
  s.cones.resize(K);
  s.index_sets.resize(K);
  s.omega_hat.resize(K);
  s.radius.resize(K);
  for (int k = 0; k < K; ++k) {
    s.cones[k].S = S;
    s.cones[k].P = read_mat("P");
    s.cones[k].R = read_mat("R");
    std::string line;
    std::getline(is, line);  // consume eol
    std::getline(is, line);
    std::istringstream ss(line);
    ss >> tag;
    int idx;
    while (ss >> idx) s.index_sets[k].push_back(idx);
    s.omega_hat[k] = read_mat("omega");
    is >> tag >> s.radius[k];
  }
  is >> tag;
  s.p_hat.resize(K);
  for (int k = 0; k < K; ++k) is >> s.p_hat[k];
  return s;
}

}  // namespace pdro

#endif  // PDRO_GEOMETRY_HPP
