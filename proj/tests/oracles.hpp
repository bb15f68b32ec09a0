#pragma once

// Test-only reference computations, written independently of the library
// code paths they check: central finite differences, closed-form linear
// margins, brute-force LP vertex enumeration.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "robust/network.hpp"
#include "robust/tensor.hpp"

namespace oracle {

using robust::Vec;

inline Vec central_difference(const std::function<double(const Vec&)>& f, const Vec& x, double h) {
  Vec g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    Vec p = x, m = x;
    p[i] += h;
    m[i] -= h;
    g[i] = (f(p) - f(m)) / (2.0 * h);
  }
  return g;
}

inline double relative_error(const Vec& a, const Vec& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
  return std::sqrt(diff) / scale;
}

/// Binary classifier with logits (0, w.x + b): class 1 iff w.x + b > 0.
inline robust::Network linear_binary(const Vec& w, double b) {
  std::vector<double> weights(2 * w.size(), 0.0);
  std::copy(w.begin(), w.end(), weights.begin() + static_cast<long>(w.size()));
  return robust::Network({robust::Layer(robust::Mat(2, w.size(), weights), Vec{0.0, b},
                                        robust::Activation::Identity)});
}

struct LinearCase {
  Vec w;
  double b = 0.0;
  Vec x;
  double margin = 0.0;  // w.x + b
};

/// Random w, x in [0.3, 0.7]^d, and b chosen so that the L2 distance to the
/// decision boundary is `dist` (signed by a coin flip). The box never binds
/// for perturbations smaller than 0.3.
inline LinearCase random_linear_case(robust::Rng& rng, std::size_t d, double dist) {
  LinearCase c;
  c.w = Vec(d);
  for (double& v : c.w) v = rng.normal();
  c.x = Vec(d);
  for (double& v : c.x) v = rng.uniform(0.3, 0.7);
  double wx = 0.0, wn = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    wx += c.w[i] * c.x[i];
    wn += c.w[i] * c.w[i];
  }
  const double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
  c.b = side * dist * std::sqrt(wn) - wx;
  c.margin = wx + c.b;
  return c;
}

inline double l1(const Vec& v) {
  double s = 0.0;
  for (double a : v) s += std::abs(a);
  return s;
}

inline double l2(const Vec& v) {
  double s = 0.0;
  for (double a : v) s += a * a;
  return std::sqrt(s);
}

/// Dense Gaussian elimination with partial pivoting; nullopt if singular.
inline std::optional<Vec> solve_square(std::vector<Vec> a, Vec b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    }
    if (std::abs(a[piv][c]) < 1e-10) return std::nullopt;
    std::swap(a[piv], a[c]);
    std::swap(b[piv], b[c]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  Vec x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = b[i] / a[i][i];
  return x;
}

/// max c.x over {A x <= b, lo <= x <= hi} by enumerating every vertex
/// (each choice of n tight constraints). nullopt if infeasible. Only for
/// tiny problems.
inline std::optional<double> brute_force_lp(const Vec& c, const std::vector<Vec>& rows, const std::vector<double>& rhs,
                                            const Vec& lo, const Vec& hi) {
  const std::size_t n = c.size();
  std::vector<Vec> all = rows;
  std::vector<double> all_b = rhs;
  for (std::size_t i = 0; i < n; ++i) {
    Vec e(n), m(n);
    e[i] = 1.0;
    m[i] = -1.0;
    all.push_back(e);
    all_b.push_back(hi[i]);
    all.push_back(m);
    all_b.push_back(-lo[i]);
  }
  const std::size_t m = all.size();
  std::optional<double> best;
  std::vector<std::size_t> pick(n);
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t start, std::size_t depth) {
    if (depth == n) {
      std::vector<Vec> a;
      Vec b(n);
      for (std::size_t k = 0; k < n; ++k) {
        a.push_back(all[pick[k]]);
        b[k] = all_b[pick[k]];
      }
      auto x = solve_square(a, b);
      if (!x) return;
      for (std::size_t r = 0; r < m; ++r) {
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k) s += all[r][k] * (*x)[k];
        if (s > all_b[r] + 1e-7) return;
      }
      double v = 0.0;
      for (std::size_t k = 0; k < n; ++k) v += c[k] * (*x)[k];
      if (!best || v > *best) best = v;
      return;
    }
    for (std::size_t r = start; r < m; ++r) {
      pick[depth] = r;
      rec(r + 1, depth + 1);
    }
  };
  rec(0, 0);
  return best;
}

}  // namespace oracle
