#pragma once

// Parametric input transforms for expectation-over-transformation. Every
// sampled transform clamps its output to [0, 1], so the unit box maps into
// itself.

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "robust/errors.hpp"
#include "robust/tensor.hpp"

namespace robust {

struct IdentityTransform {
  friend bool operator==(const IdentityTransform&, const IdentityTransform&) = default;
};

/// x -> clamp(gamma * x), gamma ~ U[lo, hi]
struct Brightness {
  double lo = 0.8;
  double hi = 1.2;
  friend bool operator==(const Brightness&, const Brightness&) = default;
};

/// x -> clamp(x + n), n_i ~ U[-radius, radius]
struct UniformNoise {
  double radius = 0.05;
  friend bool operator==(const UniformNoise&, const UniformNoise&) = default;
};

/// Integer translation of a row-major width x height grid, zero fill.
struct GridShift {
  std::size_t width = 0;
  std::size_t height = 0;
  int max_shift = 1;
  friend bool operator==(const GridShift&, const GridShift&) = default;
};

using TransformKind = std::variant<IdentityTransform, Brightness, UniformNoise, GridShift>;

/// One concrete draw t from a family.
class SampledTransform {
 public:
  static SampledTransform identity() { return SampledTransform(IdentityTransform{}); }

  static SampledTransform draw(const TransformKind& kind, std::size_t dim, Rng& rng) {
    SampledTransform t(kind);
    if (const auto* b = std::get_if<Brightness>(&kind)) {
      t.gamma_ = rng.uniform(b->lo, b->hi);
    } else if (const auto* n = std::get_if<UniformNoise>(&kind)) {
      t.noise_ = Vec(dim);
      for (double& v : t.noise_) v = rng.uniform(-n->radius, n->radius);
    } else if (const auto* s = std::get_if<GridShift>(&kind)) {
      if (s->width * s->height != dim) throw DimensionError("grid shift: width*height != input dim");
      const auto span = static_cast<std::size_t>(2 * s->max_shift + 1);
      t.dx_ = static_cast<int>(rng.index(span)) - s->max_shift;
      t.dy_ = static_cast<int>(rng.index(span)) - s->max_shift;
    }
    return t;
  }

  Vec apply(const Vec& x) const {
    Vec raw = raw_apply(x);
    for (double& v : raw) v = std::clamp(v, 0.0, 1.0);
    return raw;
  }

  /// Vector-Jacobian product: J_t(x)^T g.
  Vec vjp(const Vec& x, const Vec& g) const {
    x.require_same_size(g, "transform vjp");
    const Vec raw = raw_apply(x);
    Vec masked = g;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (raw[i] < 0.0 || raw[i] > 1.0) masked[i] = 0.0;
    }
    if (std::holds_alternative<Brightness>(kind_)) return masked * gamma_;
    if (const auto* s = std::get_if<GridShift>(&kind_)) return shift(masked, *s, -dx_, -dy_);
    return masked;
  }

  double gamma() const noexcept { return gamma_; }

 private:
  explicit SampledTransform(TransformKind kind) : kind_(std::move(kind)) {}

  Vec raw_apply(const Vec& x) const {
    if (std::holds_alternative<Brightness>(kind_)) return x * gamma_;
    if (std::holds_alternative<UniformNoise>(kind_)) return x + noise_;
    if (const auto* s = std::get_if<GridShift>(&kind_)) {
      if (s->width * s->height != x.size()) throw DimensionError("grid shift: width*height != input dim");
      return shift(x, *s, dx_, dy_);
    }
    return x;
  }

  static Vec shift(const Vec& x, const GridShift& s, int dx, int dy) {
    Vec out(x.size());
    const auto w = static_cast<int>(s.width);
    const auto h = static_cast<int>(s.height);
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const int sr = r - dy;
        const int sc = c - dx;
        if (sr < 0 || sr >= h || sc < 0 || sc >= w) continue;
        out[static_cast<std::size_t>(r * w + c)] = x[static_cast<std::size_t>(sr * w + sc)];
      }
    }
    return out;
  }

  TransformKind kind_;
  double gamma_ = 1.0;
  Vec noise_;
  int dx_ = 0;
  int dy_ = 0;
};

inline constexpr std::size_t kDefaultTransformSamples = 64;

/// A distribution over transforms: each draw picks one kind uniformly and
/// then samples its parameters. `samples` and `seed` fix the Monte Carlo
/// sample used wherever an expectation over the family is estimated.
class TransformFamily {
 public:
  TransformFamily() : kinds_{IdentityTransform{}} {}
  TransformFamily(std::vector<TransformKind> kinds, std::size_t samples, std::uint64_t seed)
      : kinds_(std::move(kinds)), samples_(samples), seed_(seed) {
    if (kinds_.empty()) throw InvalidArgument("transform family is empty");
    if (samples_ == 0) throw InvalidArgument("transform family needs at least one sample");
    for (const auto& k : kinds_) {
      if (const auto* b = std::get_if<Brightness>(&k); b && (b->lo > b->hi || b->lo < 0.0)) {
        throw InvalidArgument("brightness range must satisfy 0 <= lo <= hi");
      }
      if (const auto* n = std::get_if<UniformNoise>(&k); n && n->radius < 0.0) {
        throw InvalidArgument("noise radius must be non-negative");
      }
      if (const auto* s = std::get_if<GridShift>(&k); s && (s->max_shift < 0 || s->width * s->height == 0)) {
        throw InvalidArgument("grid shift needs a non-empty grid and max_shift >= 0");
      }
    }
  }

  static TransformFamily identity(std::size_t samples = 1, std::uint64_t seed = 0) {
    return TransformFamily({IdentityTransform{}}, samples, seed);
  }

  const std::vector<TransformKind>& kinds() const noexcept { return kinds_; }
  std::size_t samples() const noexcept { return samples_; }
  std::uint64_t seed() const noexcept { return seed_; }

  TransformFamily with_sampling(std::size_t samples, std::uint64_t seed) const {
    return TransformFamily(kinds_, samples, seed);
  }

  SampledTransform draw(std::size_t dim, Rng& rng) const {
    const auto& kind = kinds_[kinds_.size() == 1 ? 0 : rng.index(kinds_.size())];
    return SampledTransform::draw(kind, dim, rng);
  }

  std::vector<SampledTransform> draw(std::size_t dim, std::size_t count, Rng& rng) const {
    std::vector<SampledTransform> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(draw(dim, rng));
    return out;
  }

  /// The family's own fixed-seed sample.
  std::vector<SampledTransform> fixed_sample(std::size_t dim) const {
    Rng rng(seed_);
    return draw(dim, samples_, rng);
  }

  friend bool operator==(const TransformFamily&, const TransformFamily&) = default;

 private:
  std::vector<TransformKind> kinds_;
  std::size_t samples_ = 1;
  std::uint64_t seed_ = 0;
};

}  // namespace robust
