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

#ifndef PDRO_CONIC_BUILDER_HPP
#define PDRO_CONIC_BUILDER_HPP

#include <algorithm>
#include <utility>
#include <vector>

#include "pdro/conic/program.hpp"
#include "pdro/core.hpp"

namespace pdro {

/// Sparse affine expression sum_i coef_i * x_{var_i} + constant.  Terms may
/// repeat; they are merged when the expression is emitted into a program.
struct LinExpr {
  std::vector<std::pair<int, double>> terms;
  double constant = 0.0;

  LinExpr() = default;
  /*implicit*/ LinExpr(double c) : constant(c) {}

  static LinExpr variable(int var, double coef = 1.0) {
    LinExpr e;
    e.terms.emplace_back(var, coef);
    return e;
  }

  LinExpr& add(int var, double coef) {
    if (coef != 0.0) terms.emplace_back(var, coef);
    return *this;
  }

  LinExpr& operator+=(const LinExpr& o) {
    terms.insert(terms.end(), o.terms.begin(), o.terms.end());
    constant += o.constant;
    return *this;
  }

  LinExpr& operator-=(const LinExpr& o) {
    for (const auto& [v, c] : o.terms) terms.emplace_back(v, -c);
    constant -= o.constant;
    return *this;
  }

  LinExpr& operator*=(double s) {
    for (auto& [v, c] : terms) c *= s;
    constant *= s;
    return *this;
  }

  friend LinExpr operator+(LinExpr a, const LinExpr& b) { return a += b; }
  friend LinExpr operator-(LinExpr a, const LinExpr& b) { return a -= b; }
  friend LinExpr operator*(LinExpr a, double s) { return a *= s; }
  friend LinExpr operator*(double s, LinExpr a) { return a *= s; }
  friend LinExpr operator-(LinExpr a) { return a *= -1.0; }

  /// Merges duplicate variables and drops zeros.
  void compress() {
    std::sort(terms.begin(), terms.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::size_t out = 0;
    for (std::size_t i = 0; i < terms.size();) {
      int var = terms[i].first;
      double c = 0.0;
      while (i < terms.size() && terms[i].first == var) c += terms[i++].second;
      if (c != 0.0) terms[out++] = {var, c};
    }
    terms.resize(out);
  }

  double value(const Vector& x) const {
    double v = constant;
    for (const auto& [var, c] : terms) v += c * x[var];
    return v;
  }
};

/// Symmetric matrix of affine expressions, stored as the lower triangle in
/// svec order.  side() x side().
class SymExpr {
 public:
  SymExpr() = default;
  explicit SymExpr(int n) : n_(n), e_(svec_len(n)) {}

  int side() const { return n_; }

  LinExpr& at(int i, int j) { return e_[index(i, j)]; }
  const LinExpr& at(int i, int j) const { return e_[index(i, j)]; }

  SymExpr& operator+=(const SymExpr& o) {
    detail::require(o.n_ == n_, "SymExpr size mismatch");
    for (std::size_t k = 0; k < e_.size(); ++k) e_[k] += o.e_[k];
    return *this;
  }

  SymExpr& add_constant(const Matrix& A, double scale = 1.0) {
    detail::require(A.rows() == n_ && A.cols() == n_, "SymExpr size mismatch");
    for (int j = 0; j < n_; ++j)
      for (int i = j; i < n_; ++i)
        at(i, j).constant += scale * 0.5 * (A(i, j) + A(j, i));
    return *this;
  }

  Matrix value(const Vector& x) const {
    Matrix A(n_, n_);
    for (int j = 0; j < n_; ++j)
      for (int i = j; i < n_; ++i) A(i, j) = A(j, i) = at(i, j).value(x);
    return A;
  }

 private:
  int index(int i, int j) const {
    if (i < j) std::swap(i, j);
    // column j holds n-j entries starting at offset j*n - j(j-1)/2
    return j * n_ - j * (j - 1) / 2 + (i - j);
  }

  int n_ = 0;
  std::vector<LinExpr> e_;
};

/// Incremental front end that assembles a ConicProgram.  Construction order
/// of blocks is preserved, which keeps emitted programs reproducible.
class ProgramBuilder {
 public:
  int add_var() {
    obj_.push_back(0.0);
    return num_vars_++;
  }

  int add_vars(int k) {
    int first = num_vars_;
    num_vars_ += k;
    obj_.resize(num_vars_, 0.0);
    return first;
  }

  int num_vars() const { return num_vars_; }

  void obj(int var, double coef) { obj_.at(var) += coef; }
  void obj(const LinExpr& e) {
    for (const auto& [v, c] : e.terms) obj_.at(v) += c;
    obj_constant_ += e.constant;
  }

  void mark_integer(int var) {
    integer_.resize(std::max<std::size_t>(integer_.size(), num_vars_), 0);
    integer_.at(var) = 1;
  }

  /// expr = 0
  void add_zero(std::vector<LinExpr> rows) {
    push_block(ConeKind::zero, std::move(rows), 0);
  }
  void add_zero(LinExpr row) { add_zero(std::vector<LinExpr>{std::move(row)}); }

  /// expr >= 0
  void add_nonneg(std::vector<LinExpr> rows) {
    push_block(ConeKind::nonneg, std::move(rows), 0);
  }
  void add_nonneg(LinExpr row) {
    add_nonneg(std::vector<LinExpr>{std::move(row)});
  }

  /// ||(rows_1..rows_{d-1})|| <= rows_d
  void add_soc(std::vector<LinExpr> rows) {
    detail::require(rows.size() >= 2, "second-order block needs >= 2 rows");
    push_block(ConeKind::soc, std::move(rows), 0);
  }

  /// smat(rows) PSD; emits the scaled lower-triangular vectorization.
  void add_psd(const SymExpr& m) {
    const int n = m.side();
    std::vector<LinExpr> rows;
    rows.reserve(svec_len(n));
    const double rt2 = std::sqrt(2.0);
    for (int j = 0; j < n; ++j) {
      rows.push_back(m.at(j, j));
      for (int i = j + 1; i < n; ++i) rows.push_back(m.at(i, j) * rt2);
    }
    push_block(ConeKind::psd, std::move(rows), n);
  }

  ConicProgram build() const {
    ConicProgram p;
    p.num_vars = num_vars_;
    p.objective = Eigen::Map<const Vector>(obj_.data(), num_vars_);
    p.objective_constant = obj_constant_;
    p.blocks = blocks_;
    p.h.resize(total_rows_);
    std::vector<Triplet> trip;
    trip.reserve(nnz_estimate_);
    int r = 0;
    for (const auto& rows : block_rows_) {
      for (const auto& e : rows) {
        LinExpr c = e;
        c.compress();
        p.h[r] = c.constant;
        for (const auto& [v, coef] : c.terms) {
          detail::require(v >= 0 && v < num_vars_, "expression names unknown variable");
          trip.emplace_back(r, v, coef);
        }
        ++r;
      }
    }
    p.G.resize(total_rows_, num_vars_);
    p.G.setFromTriplets(trip.begin(), trip.end());
    if (!integer_.empty()) {
      p.integrality = integer_;
      p.integrality.resize(num_vars_, 0);
    }
    p.validate();
    return p;
  }

 private:
  void push_block(ConeKind kind, std::vector<LinExpr> rows, int psd_side) {
    detail::require(!rows.empty(), "empty cone block");
    ConeBlock b;
    b.kind = kind;
    b.rows = static_cast<int>(rows.size());
    b.psd_side = psd_side;
    total_rows_ += b.rows;
    for (const auto& e : rows) nnz_estimate_ += e.terms.size();
    blocks_.push_back(b);
    block_rows_.push_back(std::move(rows));
  }

  int num_vars_ = 0;
  std::vector<double> obj_;
  double obj_constant_ = 0.0;
  std::vector<ConeBlock> blocks_;
  std::vector<std::vector<LinExpr>> block_rows_;
  std::vector<std::uint8_t> integer_;
  int total_rows_ = 0;
  std::size_t nnz_estimate_ = 0;
};

}  // namespace pdro

#endif  // PDRO_CONIC_BUILDER_HPP
