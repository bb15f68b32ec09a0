#pragma once

// Dense two-phase simplex for small linear programs:
//
//   maximize  c.x   subject to  A x <= b,  lower <= x <= upper.
//
// Bland's rule throughout, so degenerate pivots cannot cycle.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "robust/errors.hpp"
#include "robust/tensor.hpp"

namespace robust::lp {

inline constexpr double kPivotTolerance = 1e-9;

struct LinearProgram {
  Vec objective;              // maximized
  std::vector<Vec> rows;      // A
  std::vector<double> rhs;    // b
  Vec lower;
  Vec upper;

  explicit LinearProgram(Vec lo, Vec hi) : objective(lo.size()), lower(std::move(lo)), upper(std::move(hi)) {
    lower.require_same_size(upper, "linear program bounds");
    for (std::size_t i = 0; i < lower.size(); ++i) {
      if (lower[i] > upper[i]) throw InvalidArgument("linear program: lower > upper");
    }
  }

  std::size_t dim() const noexcept { return lower.size(); }

  void add_le(Vec a, double b) {
    a.require_same_size(lower, "linear program row");
    rows.push_back(std::move(a));
    rhs.push_back(b);
  }
};

enum class Status { Optimal, Infeasible, Unbounded };

struct Solution {
  Status status = Status::Infeasible;
  Vec x;
  double value = -std::numeric_limits<double>::infinity();
  std::size_t pivots = 0;
};

namespace detail {

class Tableau {
 public:
  Tableau(std::size_t rows, std::size_t cols) : cols_(cols), t_(rows, std::vector<double>(cols + 1, 0.0)) {}

  double& at(std::size_t r, std::size_t c) { return t_[r][c]; }
  double& rhs(std::size_t r) { return t_[r][cols_]; }
  std::size_t rows() const { return t_.size(); }
  std::size_t cols() const { return cols_; }

  void pivot(std::size_t pr, std::size_t pc, std::vector<double>& obj, double& obj_const) {
    auto& prow = t_[pr];
    const double inv = 1.0 / prow[pc];
    for (double& v : prow) v *= inv;
    prow[pc] = 1.0;
    for (std::size_t r = 0; r < t_.size(); ++r) {
      if (r == pr) continue;
      const double f = t_[r][pc];
      if (f == 0.0) continue;
      for (std::size_t c = 0; c <= cols_; ++c) t_[r][c] -= f * prow[c];
      t_[r][pc] = 0.0;
    }
    const double f = obj[pc];
    if (f != 0.0) {
      for (std::size_t c = 0; c < cols_; ++c) obj[c] -= f * prow[c];
      obj[pc] = 0.0;
      obj_const += f * prow[cols_];
    }
  }

 private:
  std::size_t cols_;
  std::vector<std::vector<double>> t_;
};

/// Maximizes obj_const + obj . x_nonbasic. `allowed` masks entering columns.
/// Returns false if unbounded.
inline bool run_simplex(Tableau& t, std::vector<std::size_t>& basis, std::vector<double>& obj, double& obj_const,
                        const std::vector<bool>& allowed, std::size_t& pivots) {
  const std::size_t max_pivots = 50 * (t.rows() + t.cols()) + 1000;
  while (pivots < max_pivots) {
    std::size_t enter = t.cols();
    for (std::size_t c = 0; c < t.cols(); ++c) {
      if (allowed[c] && obj[c] > kPivotTolerance) {
        enter = c;
        break;
      }
    }
    if (enter == t.cols()) return true;
    std::size_t leave = t.rows();
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < t.rows(); ++r) {
      const double a = t.at(r, enter);
      if (a <= kPivotTolerance) continue;
      const double ratio = t.rhs(r) / a;
      if (leave == t.rows() || ratio < best - 1e-12 || (std::abs(ratio - best) <= 1e-12 && basis[r] < basis[leave])) {
        best = ratio;
        leave = r;
      }
    }
    if (leave == t.rows()) return false;
    t.pivot(leave, enter, obj, obj_const);
    basis[leave] = enter;
    ++pivots;
  }
  throw Error("simplex: pivot limit exceeded");
}

}  // namespace detail

inline Solution solve(const LinearProgram& lp) {
  const std::size_t n = lp.dim();
  // y = x - lower >= 0; rows: A y <= b - A lower, and y_i <= upper_i - lower_i.
  std::vector<Vec> rows;
  std::vector<double> rhs;
  for (std::size_t r = 0; r < lp.rows.size(); ++r) {
    rows.push_back(lp.rows[r]);
    rhs.push_back(lp.rhs[r] - dot(lp.rows[r].span(), lp.lower.span()));
  }
  for (std::size_t i = 0; i < n; ++i) {
    Vec e(n);
    e[i] = 1.0;
    rows.push_back(std::move(e));
    rhs.push_back(lp.upper[i] - lp.lower[i]);
  }
  const std::size_t m = rows.size();
  std::size_t artificials = 0;
  for (double b : rhs) artificials += b < 0.0 ? 1 : 0;

  const std::size_t cols = n + m + artificials;
  detail::Tableau t(m, cols);
  std::vector<std::size_t> basis(m);
  std::vector<bool> is_artificial(cols, false);
  std::size_t next_art = n + m;
  for (std::size_t r = 0; r < m; ++r) {
    const double s = rhs[r] < 0.0 ? -1.0 : 1.0;
    for (std::size_t c = 0; c < n; ++c) t.at(r, c) = s * rows[r][c];
    t.at(r, n + r) = s;
    t.rhs(r) = s * rhs[r];
    if (s < 0.0) {
      t.at(r, next_art) = 1.0;
      is_artificial[next_art] = true;
      basis[r] = next_art++;
    } else {
      basis[r] = n + r;
    }
  }

  Solution sol;
  std::vector<double> obj(cols, 0.0);
  double obj_const = 0.0;
  if (artificials > 0) {
    for (std::size_t r = 0; r < m; ++r) {
      if (!is_artificial[basis[r]]) continue;
      for (std::size_t c = 0; c < cols; ++c) {
        if (!is_artificial[c]) obj[c] += t.at(r, c);
      }
      obj_const -= t.rhs(r);
    }
    std::vector<bool> allowed(cols, true);
    detail::run_simplex(t, basis, obj, obj_const, allowed, sol.pivots);
    if (obj_const < -kPivotTolerance) return sol;  // infeasible
    // drive remaining (zero-valued) artificials out of the basis
    for (std::size_t r = 0; r < m; ++r) {
      if (!is_artificial[basis[r]]) continue;
      for (std::size_t c = 0; c < cols; ++c) {
        if (!is_artificial[c] && std::abs(t.at(r, c)) > kPivotTolerance) {
          std::vector<double> dummy(cols, 0.0);
          double dummy_const = 0.0;
          t.pivot(r, c, dummy, dummy_const);
          basis[r] = c;
          ++sol.pivots;
          break;
        }
      }
    }
  }

  std::fill(obj.begin(), obj.end(), 0.0);
  obj_const = dot(lp.objective.span(), lp.lower.span());
  for (std::size_t c = 0; c < n; ++c) obj[c] = lp.objective[c];
  for (std::size_t r = 0; r < m; ++r) {
    const std::size_t b = basis[r];
    const double cb = b < n ? lp.objective[b] : 0.0;
    if (cb == 0.0) continue;
    for (std::size_t c = 0; c < cols; ++c) obj[c] -= cb * t.at(r, c);
    obj[b] = 0.0;
    obj_const += cb * t.rhs(r);
  }
  std::vector<bool> allowed(cols, true);
  for (std::size_t c = 0; c < cols; ++c) allowed[c] = !is_artificial[c];
  for (std::size_t r = 0; r < m; ++r) {
    if (is_artificial[basis[r]]) allowed[basis[r]] = false;
  }
  if (!detail::run_simplex(t, basis, obj, obj_const, allowed, sol.pivots)) {
    sol.status = Status::Unbounded;
    return sol;
  }

  sol.status = Status::Optimal;
  sol.x = lp.lower;
  for (std::size_t r = 0; r < m; ++r) {
    if (basis[r] < n) sol.x[basis[r]] += t.rhs(r);
  }
  for (std::size_t i = 0; i < n; ++i) sol.x[i] = std::clamp(sol.x[i], lp.lower[i], lp.upper[i]);
  sol.value = dot(lp.objective.span(), sol.x.span());
  return sol;
}

}  // namespace robust::lp
