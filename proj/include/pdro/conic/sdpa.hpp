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

#ifndef PDRO_CONIC_SDPA_HPP
#define PDRO_CONIC_SDPA_HPP

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pdro/conic/program.hpp"
#include "pdro/core.hpp"

namespace pdro {

// Plain-text exchange format for cross-checking programs against external
// solvers.  Programs whose blocks are only zero / nonneg / psd map onto
// standard sparse SDPA (.dat-s): decision variables become the SDPA y
// vector, each psd block a matrix block, nonneg rows a diagonal block and
// zero rows a +/- pair inside a second diagonal block, so that
//
//     F(y) = sum_i y_i F_i - F0 >= 0 (blockwise),  minimize c.y
//
// matches G x + h in K with F_i = mat(G e_i), F0 = -mat(h).  Second-order
// blocks do not exist in SDPA; they are written to a trailing sidecar
// section of '*SOC'-prefixed lines (SDPA ignores nothing mid-file, so a file
// with a sidecar is only meant for this reader, as documented in README).
//
// Sidecar grammar, one block per group:
//   *SOC <dim>
//   *ENT <var-or-0> <row-in-block (1-based)> <value>     (var 0 = offset h)

namespace sdpa_detail {

struct BlockMap {
  int sdpa_block;  // 1-based SDPA block id, 0 if SOC (sidecar)
  int offset;      // row offset inside the SDPA block (diag blocks)
};

}  // namespace sdpa_detail

inline void write_sdpa(const ConicProgram& p, std::ostream& os) {
  p.validate();
  int n_nonneg = 0, n_zero = 0, n_soc = 0;
  std::vector<int> psd_sides;
  for (const auto& b : p.blocks) {
    switch (b.kind) {
      case ConeKind::nonneg: n_nonneg += b.rows; break;
      case ConeKind::zero: n_zero += b.rows; break;
      case ConeKind::soc: ++n_soc; break;
      case ConeKind::psd: psd_sides.push_back(b.psd_side); break;
    }
  }

  std::vector<int> block_sizes;
  for (int s : psd_sides) block_sizes.push_back(s);
  const int diag_len = n_nonneg + 2 * n_zero;
  if (diag_len > 0) block_sizes.push_back(-diag_len);

  os << "\"conic program export; objective constant "
     << p.objective_constant << "\n";
  os << p.num_vars << " = mDIM\n";
  os << block_sizes.size() << " = nBLOCK\n";
  for (std::size_t i = 0; i < block_sizes.size(); ++i)
    os << block_sizes[i] << (i + 1 < block_sizes.size() ? " " : "");
  os << "\n";
  for (int j = 0; j < p.num_vars; ++j)
    os << p.objective[j] << (j + 1 < p.num_vars ? " " : "");
  os << "\n";

  char buf[128];
  auto emit = [&](int matno, int blk, int i, int j, double v) {
    if (v == 0.0) return;
    std::snprintf(buf, sizeof buf, "%d %d %d %d %.17g\n", matno, blk, i, j, v);
    os << buf;
  };

  // row -> SDPA placement
  const int diag_block = static_cast<int>(psd_sides.size()) + 1;
  const double inv_rt2 = 1.0 / std::sqrt(2.0);
  struct RowPlace {
    int kind;  // 0 psd, 1 nonneg, 2 zero, 3 soc
    int blk, i, j;
    double scale;
  };
  std::vector<RowPlace> place(p.total_rows());
  {
    int r = 0, psd_id = 0, diag_at = 0;
    for (const auto& b : p.blocks) {
      if (b.kind == ConeKind::psd) {
        ++psd_id;
        for (int k = 0; k < b.rows; ++k) {
          auto [i, j] = svec_coords(k, b.psd_side);
          place[r + k] = {0, psd_id, j + 1, i + 1, i == j ? 1.0 : inv_rt2};
        }
      } else if (b.kind == ConeKind::nonneg) {
        for (int k = 0; k < b.rows; ++k)
          place[r + k] = {1, diag_block, diag_at + k + 1, diag_at + k + 1, 1.0};
        diag_at += b.rows;
      } else if (b.kind == ConeKind::zero) {
        for (int k = 0; k < b.rows; ++k)
          place[r + k] = {2, diag_block, diag_at + 2 * k + 1,
                          diag_at + 2 * k + 1, 1.0};
        diag_at += 2 * b.rows;
      } else {
        place[r] = {3, 0, 0, 0, 1.0};  // handled by the sidecar
      }
      r += b.rows;
    }
  }

  auto emit_row = [&](int matno, int row, double coef) {
    const RowPlace& pl = place[row];
    if (pl.kind == 0) {
      emit(matno, pl.blk, pl.i, pl.j, coef * pl.scale);
    } else if (pl.kind == 1) {
      emit(matno, pl.blk, pl.i, pl.j, coef);
    } else if (pl.kind == 2) {
      emit(matno, pl.blk, pl.i, pl.j, coef);
      emit(matno, pl.blk, pl.i + 1, pl.j + 1, -coef);
    }
  };

  // F0 = -mat(h)
  {
    int r = 0;
    for (const auto& b : p.blocks) {
      if (b.kind != ConeKind::soc)
        for (int k = 0; k < b.rows; ++k)
          if (p.h[r + k] != 0.0) emit_row(0, r + k, -p.h[r + k]);
      r += b.rows;
    }
  }
  // F_i = mat(G e_i)
  for (int j = 0; j < p.num_vars; ++j)
    for (SpMat::InnerIterator it(p.G, j); it; ++it)
      if (place[it.row()].kind != 3) emit_row(j + 1, it.row(), it.value());

  // sidecar for second-order blocks
  if (n_soc > 0) {
    int r = 0;
    for (const auto& b : p.blocks) {
      if (b.kind == ConeKind::soc) {
        os << "*SOC " << b.rows << "\n";
        for (int k = 0; k < b.rows; ++k) {
          if (p.h[r + k] != 0.0) {
            std::snprintf(buf, sizeof buf, "*ENT 0 %d %.17g\n", k + 1,
                          p.h[r + k]);
            os << buf;
          }
        }
        for (int j = 0; j < p.num_vars; ++j)
          for (SpMat::InnerIterator it(p.G, j); it; ++it)
            if (it.row() >= r && it.row() < r + b.rows) {
              std::snprintf(buf, sizeof buf, "*ENT %d %d %.17g\n", j + 1,
                            (int)(it.row() - r) + 1, it.value());
              os << buf;
            }
      }
      r += b.rows;
    }
  }
}

inline void write_sdpa_file(const ConicProgram& p, const std::string& path) {
  std::ofstream f(path);
  detail::require(f.good(), "cannot open " + path + " for writing");
  write_sdpa(p, f);
}

/// Reads a file produced by write_sdpa (standard .dat-s, plus the optional
/// sidecar).  Zero-cone rows that were split into +/- diagonal pairs are
/// folded back together.
inline ConicProgram read_sdpa(std::istream& is) {
  std::string line;
  double obj_const = 0.0;
  // comment lines
  while (true) {
    if (!std::getline(is, line)) throw ValidationError("sdpa: empty file");
    if (line.empty()) continue;
    if (line[0] == '"' || line[0] == '*') {
      auto at = line.find("objective constant");
      if (at != std::string::npos)
        obj_const = std::stod(line.substr(at + 18));
      continue;
    }
    break;
  }
  auto strip = [](std::string s) {
    for (char& c : s)
      if (c == ',' || c == '(' || c == ')' || c == '{' || c == '}') c = ' ';
    return s;
  };
  int m = std::stoi(line);
  std::getline(is, line);
  int nblock = std::stoi(line);
  std::getline(is, line);
  std::vector<int> sizes;
  {
    std::istringstream ss(strip(line));
    int v;
    while (ss >> v) sizes.push_back(v);
  }
  detail::require((int)sizes.size() == nblock, "sdpa: block count mismatch");
  std::getline(is, line);
  Vector c(m);
  {
    std::istringstream ss(strip(line));
    for (int i = 0; i < m; ++i) ss >> c[i];
  }

  // dense per-block storage of F0..Fm (files here are small)
  std::vector<std::vector<Matrix>> F(m + 1);
  for (int k = 0; k <= m; ++k)
    for (int b = 0; b < nblock; ++b)
      F[k].push_back(Matrix::Zero(std::abs(sizes[b]), std::abs(sizes[b])));

  struct SocBlock {
    int dim;
    std::vector<std::tuple<int, int, double>> ents;  // (var, row, value)
  };
  std::vector<SocBlock> socs;

  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line.rfind("*SOC ", 0) == 0) {
      socs.push_back({std::stoi(line.substr(5)), {}});
      continue;
    }
    if (line.rfind("*ENT ", 0) == 0) {
      std::istringstream ss(line.substr(5));
      int var, row;
      double val;
      ss >> var >> row >> val;
      detail::require(!socs.empty(), "sdpa: sidecar entry before *SOC");
      socs.back().ents.emplace_back(var, row, val);
      continue;
    }
    if (line[0] == '*' || line[0] == '"') continue;
    std::istringstream ss(strip(line));
    int matno, blk, i, j;
    double val;
    if (!(ss >> matno >> blk >> i >> j >> val)) continue;
    auto& M = F.at(matno).at(blk - 1);
    M(i - 1, j - 1) = val;
    M(j - 1, i - 1) = val;
  }

  ConicProgram p;
  p.num_vars = m;
  p.objective = c;
  p.objective_constant = obj_const;
  std::vector<Triplet> trip;
  std::vector<double> h;
  int row = 0;
  for (int b = 0; b < nblock; ++b) {
    if (sizes[b] > 0) {
      const int n = sizes[b];
      ConeBlock blk;
      blk.kind = ConeKind::psd;
      blk.psd_side = n;
      blk.rows = svec_len(n);
      for (int k = 0; k < blk.rows; ++k) {
        auto [i, jj] = svec_coords(k, n);
        const double sc = (i == jj) ? 1.0 : std::sqrt(2.0);
        h.push_back(-F[0][b](i, jj) * sc);
        for (int v = 1; v <= m; ++v)
          if (F[v][b](i, jj) != 0.0)
            trip.emplace_back(row + k, v - 1, F[v][b](i, jj) * sc);
      }
      row += blk.rows;
      p.blocks.push_back(blk);
    } else {
      // diagonal block: fold +/- pairs back into zero rows where they match
      const int n = -sizes[b];
      int k = 0;
      while (k < n) {
        bool zero_pair = false;
        if (k + 1 < n) {
          zero_pair = (F[0][b](k, k) == -F[0][b](k + 1, k + 1));
          for (int v = 1; v <= m && zero_pair; ++v)
            zero_pair = (F[v][b](k, k) == -F[v][b](k + 1, k + 1));
          if (zero_pair) {
            bool any = F[0][b](k, k) != 0.0;
            for (int v = 1; v <= m && !any; ++v) any = F[v][b](k, k) != 0.0;
            zero_pair = any;
          }
        }
        ConeBlock blk;
        blk.rows = 1;
        blk.kind = zero_pair ? ConeKind::zero : ConeKind::nonneg;
        h.push_back(-F[0][b](k, k));
        for (int v = 1; v <= m; ++v)
          if (F[v][b](k, k) != 0.0)
            trip.emplace_back(row, v - 1, F[v][b](k, k));
        ++row;
        p.blocks.push_back(blk);
        k += zero_pair ? 2 : 1;
      }
    }
  }
  for (const auto& sb : socs) {
    ConeBlock blk;
    blk.kind = ConeKind::soc;
    blk.rows = sb.dim;
    for (int k = 0; k < sb.dim; ++k) h.push_back(0.0);
    for (const auto& [var, r, val] : sb.ents) {
      if (var == 0)
        h[row + r - 1] = val;
      else
        trip.emplace_back(row + r - 1, var - 1, val);
    }
    row += sb.dim;
    p.blocks.push_back(blk);
  }

  p.G.resize(row, m);
  p.G.setFromTriplets(trip.begin(), trip.end());
  p.h = Eigen::Map<const Vector>(h.data(), row);
  p.validate();
  return p;
}

inline ConicProgram read_sdpa_file(const std::string& path) {
  std::ifstream f(path);
  detail::require(f.good(), "cannot open " + path);
  return read_sdpa(f);
}

}  // namespace pdro

#endif  // PDRO_CONIC_SDPA_HPP
