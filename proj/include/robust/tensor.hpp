#pragma once

// Dense vectors and matrices, norms, projections and a counter-based RNG.
// Scalars are double throughout.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "robust/errors.hpp"

namespace robust {

class Vec {
 public:
  Vec() = default;
  explicit Vec(std::size_t n, double fill = 0.0) : data_(n, fill) {}
  Vec(std::initializer_list<double> values) : data_(values) {}
  explicit Vec(std::vector<double> values) : data_(std::move(values)) {}
  explicit Vec(std::span<const double> values) : data_(values.begin(), values.end()) {}

  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  std::span<const double> span() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  Vec& operator+=(const Vec& other) {
    require_same_size(other, "+=");
    for (std::size_t i = 0; i < size(); ++i) data_[i] += other.data_[i];
    return *this;
  }
  Vec& operator-=(const Vec& other) {
    require_same_size(other, "-=");
    for (std::size_t i = 0; i < size(); ++i) data_[i] -= other.data_[i];
    return *this;
  }
  Vec& operator*=(double s) noexcept {
    for (double& v : data_) v *= s;
    return *this;
  }

  friend Vec operator+(Vec a, const Vec& b) { return a += b; }
  friend Vec operator-(Vec a, const Vec& b) { return a -= b; }
  friend Vec operator*(Vec a, double s) { return a *= s; }
  friend Vec operator*(double s, Vec a) { return a *= s; }
  friend bool operator==(const Vec&, const Vec&) = default;

  void require_same_size(const Vec& other, const char* op) const {
    if (other.size() != size()) {
      throw DimensionError(std::string("vector ") + op + ": sizes " + std::to_string(size()) +
                           " and " + std::to_string(other.size()));
    }
  }

 private:
  std::vector<double> data_;
};

/// Row-major dense matrix.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {
    if (rows == 0 || cols == 0) throw DimensionError("matrix with zero rows or columns");
  }
  Mat(std::size_t rows, std::size_t cols, std::vector<double> row_major)
      : rows_(rows), cols_(cols), data_(std::move(row_major)) {
    if (rows == 0 || cols == 0) throw DimensionError("matrix with zero rows or columns");
    if (data_.size() != rows * cols) {
      throw DimensionError("matrix entries " + std::to_string(data_.size()) + " != " +
                           std::to_string(rows) + "x" + std::to_string(cols));
    }
  }

  static Mat identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
  std::span<const double> row(std::size_t r) const noexcept {
    return std::span<const double>(data_).subspan(r * cols_, cols_);
  }
  const std::vector<double>& values() const noexcept { return data_; }
  std::vector<double>& values() noexcept { return data_; }

  friend bool operator==(const Mat&, const Mat&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("dot: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline Vec matvec(const Mat& m, const Vec& x) {
  if (m.cols() != x.size()) {
    throw DimensionError("matvec: matrix has " + std::to_string(m.cols()) + " columns, vector " +
                         std::to_string(x.size()));
  }
  Vec out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = dot(m.row(r), x.span());
  return out;
}

/// m^T * y
inline Vec matvec_transposed(const Mat& m, const Vec& y) {
  if (m.rows() != y.size()) throw DimensionError("matvec_transposed: size mismatch");
  Vec out(m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double yr = y[r];
    if (yr == 0.0) continue;
    for (std::size_t c = 0; c < m.cols(); ++c) out[c] += m(r, c) * yr;
  }
  return out;
}

inline bool all_finite(const Vec& v) {
  return std::all_of(v.begin(), v.end(), [](double d) { return std::isfinite(d); });
}

enum class Norm { L0, L1, L2, Linf };

inline constexpr double kL0Threshold = 1e-12;

inline std::string_view to_string(Norm p) {
  switch (p) {
    case Norm::L0: return "l0";
    case Norm::L1: return "l1";
    case Norm::L2: return "l2";
    case Norm::Linf: return "linf";
  }
  return "?";
}

inline double norm(const Vec& v, Norm p) {
  if (v.empty()) throw DimensionError("norm of empty vector");
  double acc = 0.0;
  switch (p) {
    case Norm::L0:
      for (double d : v) acc += std::abs(d) > kL0Threshold ? 1.0 : 0.0;
      return acc;
    case Norm::L1:
      for (double d : v) acc += std::abs(d);
      return acc;
    case Norm::L2: {
      // scaled to avoid overflow on extreme entries
      double scale = 0.0;
      for (double d : v) scale = std::max(scale, std::abs(d));
      if (scale == 0.0) return 0.0;
      for (double d : v) acc += (d / scale) * (d / scale);
      return scale * std::sqrt(acc);
    }
    case Norm::Linf:
      for (double d : v) acc = std::max(acc, std::abs(d));
      return acc;
  }
  return acc;
}

inline double distance(const Vec& a, const Vec& b, Norm p) { return norm(b - a, p); }

inline Vec project_box(const Vec& x, double lo, double hi) {
  if (lo > hi) throw InvalidArgument("project_box: lo > hi");
  Vec out = x;
  for (double& d : out) d = std::clamp(d, lo, hi);
  return out;
}

/// c + d, nudged toward c until |(c + d) - c| <= eps holds as computed.
/// Rounding in c + d can otherwise land one ulp outside the ball.
inline double offset_within(double c, double d, double eps) {
  double v = c + d;
  while (std::abs(v - c) > eps) v = std::nextafter(v, c);
  return v;
}

inline Vec project_linf_ball(const Vec& x, const Vec& center, double eps) {
  x.require_same_size(center, "project_linf_ball");
  if (eps < 0.0) throw InvalidArgument("project_linf_ball: negative radius");
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = offset_within(center[i], std::clamp(x[i] - center[i], -eps, eps), eps);
  }
  return out;
}

/// Euclidean projection onto the L2 ball of radius eps around center.
inline Vec project_l2_ball(const Vec& x, const Vec& center, double eps) {
  x.require_same_size(center, "project_l2_ball");
  if (eps < 0.0) throw InvalidArgument("project_l2_ball: negative radius");
  Vec r = x - center;
  const double n = norm(r, Norm::L2);
  if (n <= eps) return x;
  double s = eps / n;
  Vec out = center + r * s;
  while (norm(out - center, Norm::L2) > eps) {
    s *= 1.0 - 1e-15;
    out = center + r * s;
  }
  return out;
}

/// sign(0) = 0
inline Vec sign(const Vec& v) {
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] > 0.0 ? 1.0 : (v[i] < 0.0 ? -1.0 : 0.0);
  return out;
}

/// Counter-based generator: draw k is splitmix64(seed + k * golden), so a
/// stream is fully determined by (seed, counter).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) noexcept : seed_(seed) {}

  Rng(const Rng&) = delete;
  Rng& operator=(const Rng&) = delete;
  Rng(Rng&&) noexcept = default;
  Rng& operator=(Rng&&) noexcept = default;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept {
    std::uint64_t z = seed_ + (++counter_) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept {
    if (lo == hi) return lo;
    return lo + (hi - lo) * uniform();
  }

  double normal() noexcept {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform index in [0, n); n must be positive.
  std::size_t index(std::size_t n) noexcept {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
  }

  /// Independent child stream; the parent advances by one draw.
  Rng split() noexcept { return Rng(next_u64()); }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

inline Vec sample_uniform(Rng& rng, const Vec& lo, const Vec& hi) {
  lo.require_same_size(hi, "sample_uniform");
  Vec out(lo.size());
  for (std::size_t i = 0; i < lo.size(); ++i) {
    if (lo[i] > hi[i]) throw InvalidArgument("sample_uniform: lo > hi at coordinate " + std::to_string(i));
    out[i] = rng.uniform(lo[i], hi[i]);
  }
  return out;
}

}  // namespace robust
