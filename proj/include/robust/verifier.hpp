#pragma once

// Local robustness certification over the Linf ball intersected with the
// input box: interval bound propagation (sound, incomplete), exact
// activation-pattern enumeration for small ReLU networks, a grid
// falsifier, and certified-radius search.

#include <algorithm>
#include <cmath>
#include <tuple>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "robust/errors.hpp"
#include "robust/lp.hpp"
#include "robust/network.hpp"
#include "robust/spec.hpp"
#include "robust/tensor.hpp"

namespace robust {

enum class CertStatus { Robust, Falsified, Unknown };

inline std::string_view to_string(CertStatus s) {
  switch (s) {
    case CertStatus::Robust: return "robust";
    case CertStatus::Falsified: return "falsified";
    case CertStatus::Unknown: return "unknown";
  }
  return "?";
}

struct Certificate {
  CertStatus status = CertStatus::Unknown;
  std::optional<Vec> witness;
  double eps = 0.0;
  std::string method;
  std::size_t patterns = 0;
  std::size_t grid_points = 0;
  std::size_t propagations = 0;
  std::string diagnostic;

  static Certificate robust(std::string method, double eps) {
    Certificate c;
    c.status = CertStatus::Robust;
    c.method = std::move(method);
    c.eps = eps;
    return c;
  }

  static Certificate unknown(std::string method, double eps, std::string diagnostic = {}) {
    Certificate c;
    c.status = CertStatus::Unknown;
    c.method = std::move(method);
    c.eps = eps;
    c.diagnostic = std::move(diagnostic);
    return c;
  }

  /// Re-checks the witness: inside the ball and the box, label differs from f(x).
  static Certificate falsified(std::string method, const Network& net, const Vec& x, double eps, Vec witness,
                               const BoxSet& box = {}) {
    if (distance(x, witness, Norm::Linf) > eps || !check_admissible(box, witness) ||
        predict(net, witness) == predict(net, x)) {
      throw Error("falsification witness failed re-verification");
    }
    Certificate c;
    c.status = CertStatus::Falsified;
    c.method = std::move(method);
    c.eps = eps;
    c.witness = std::move(witness);
    return c;
  }
};

/// Index 0 holds the input box; index k >= 1 the pre-activation bounds of layer k-1.
struct LayerBounds {
  std::vector<Vec> lower;
  std::vector<Vec> upper;
};

namespace detail {

inline void require_piecewise_linear(const Network& net) {
  for (std::size_t k = 0; k < net.layers().size(); ++k) {
    const Activation a = net.layers()[k].activation;
    if (a != Activation::ReLU && a != Activation::Identity) {
      throw UnsupportedActivation("layer " + std::to_string(k) + " uses '" + std::string(to_string(a)) +
                                  "'; only relu and identity are supported");
    }
  }
}

inline std::pair<Vec, Vec> affine_interval(const Layer& layer, const Vec& lo, const Vec& hi) {
  Vec out_lo = layer.bias;
  Vec out_hi = layer.bias;
  for (std::size_t r = 0; r < layer.outputs(); ++r) {
    for (std::size_t c = 0; c < layer.inputs(); ++c) {
      const double w = layer.weights(r, c);
      if (w >= 0.0) {
        out_lo[r] += w * lo[c];
        out_hi[r] += w * hi[c];
      } else {
        out_lo[r] += w * hi[c];
        out_hi[r] += w * lo[c];
      }
    }
  }
  return {out_lo, out_hi};
}

inline Vec activate_all(Activation a, Vec v) {
  for (double& d : v) d = activate(a, d);
  return v;
}

}  // namespace detail

inline LayerBounds ibp_bounds(const Network& net, const Vec& lo, const Vec& hi) {
  detail::require_piecewise_linear(net);
  require_input(net, lo);
  lo.require_same_size(hi, "ibp_bounds");
  for (std::size_t i = 0; i < lo.size(); ++i) {
    if (lo[i] > hi[i]) throw InvalidArgument("ibp_bounds: empty input interval");
  }
  LayerBounds b;
  b.lower.push_back(lo);
  b.upper.push_back(hi);
  Vec a_lo = lo;
  Vec a_hi = hi;
  for (const Layer& layer : net.layers()) {
    auto [z_lo, z_hi] = detail::affine_interval(layer, a_lo, a_hi);
    a_lo = detail::activate_all(layer.activation, z_lo);
    a_hi = detail::activate_all(layer.activation, z_hi);
    b.lower.push_back(std::move(z_lo));
    b.upper.push_back(std::move(z_hi));
  }
  return b;
}

/// The Linf ball around x clipped to the box.
inline std::pair<Vec, Vec> ball_in_box(const Vec& x, double eps, const BoxSet& box) {
  Vec lo(x.size()), hi(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    lo[i] = std::max(box.lo, offset_within(x[i], -eps, eps));
    hi[i] = std::min(box.hi, offset_within(x[i], eps, eps));
  }
  return {lo, hi};
}

/// Robust when, over the ball, the true-class logit provably beats every
/// rival. With an identity output layer the last affine map is folded into
/// each logit difference before taking interval bounds. Never Falsified.
inline Certificate certify_ibp(const Network& net, const Vec& x, double eps, const BoxSet& box = {}) {
  if (!(eps >= 0.0)) throw InvalidArgument("certify_ibp: eps must be non-negative");
  require_input(net, x);
  const Label y = predict(net, x);
  auto [lo, hi] = ball_in_box(x, eps, box);
  const LayerBounds b = ibp_bounds(net, lo, hi);
  const std::size_t L = net.layers().size();
  const Layer& out = net.layers().back();

  Certificate cert = Certificate::robust("ibp", eps);
  cert.propagations = 1;
  for (Label k = 0; k < net.num_classes(); ++k) {
    if (k == y) continue;
    double worst = 0.0;  // upper bound on logit_k - logit_y
    if (out.activation == Activation::Identity) {
      const Vec a_lo = detail::activate_all(L >= 2 ? net.layers()[L - 2].activation : Activation::Identity,
                                            b.lower[L - 1]);
      const Vec a_hi = detail::activate_all(L >= 2 ? net.layers()[L - 2].activation : Activation::Identity,
                                            b.upper[L - 1]);
      worst = out.bias[k] - out.bias[y];
      for (std::size_t c = 0; c < out.inputs(); ++c) {
        const double d = out.weights(k, c) - out.weights(y, c);
        worst += d >= 0.0 ? d * a_hi[c] : d * a_lo[c];
      }
    } else {
      worst = activate(out.activation, b.upper[L][k]) - activate(out.activation, b.lower[L][y]);
    }
    // a tie resolves toward the lower index, so k < y needs strict separation
    const bool safe = k < y ? worst < 0.0 : worst <= 0.0;
    if (!safe) {
      return Certificate::unknown("ibp", eps, "interval bounds do not separate class " + std::to_string(y) +
                                                  " from class " + std::to_string(k));
    }
  }
  return cert;
}

struct EnumerationOptions {
  std::size_t max_hidden_units = 16;
  BoxSet box;
};

namespace detail {

/// Depth-first search over activation patterns of the unstable ReLUs.
class PatternSearch {
 public:
  PatternSearch(const Network& net, const Vec& x, double eps, const BoxSet& box)
      : net_(net), x_(x), eps_(eps), box_(box), y_(predict(net, x)) {
    std::tie(lo_, hi_) = ball_in_box(x, eps, box);
    bounds_ = ibp_bounds(net, lo_, hi_);
  }

  Certificate run() {
    // Affine map of the current layer input: rows of A (dim x n) and offset c.
    const std::size_t n = x_.size();
    std::vector<Vec> a;
    for (std::size_t i = 0; i < n; ++i) {
      Vec e(n);
      e[i] = 1.0;
      a.push_back(std::move(e));
    }
    Vec c(n);
    lp::LinearProgram region(lo_, hi_);
    visit_layer(0, std::move(a), std::move(c), region);
    if (falsified_) {
      Certificate cert = Certificate::falsified("enumeration", net_, x_, eps_, *witness_, box_);
      cert.patterns = patterns_;
      return cert;
    }
    if (inconclusive_) {
      Certificate cert = Certificate::unknown("enumeration", eps_, "numerically inconclusive region");
      cert.patterns = patterns_;
      return cert;
    }
    Certificate cert = Certificate::robust("enumeration", eps_);
    cert.patterns = patterns_;
    return cert;
  }

 private:
  struct Affine {
    std::vector<Vec> rows;  // pre-activation as rows . x + offset
    Vec offset;
  };

  Affine compose(const Layer& layer, const std::vector<Vec>& a, const Vec& c) const {
    const std::size_t n = x_.size();
    Affine z{std::vector<Vec>(layer.outputs(), Vec(n)), layer.bias};
    for (std::size_t r = 0; r < layer.outputs(); ++r) {
      for (std::size_t j = 0; j < layer.inputs(); ++j) {
        const double w = layer.weights(r, j);
        if (w == 0.0) continue;
        for (std::size_t i = 0; i < n; ++i) z.rows[r][i] += w * a[j][i];
        z.offset[r] += w * c[j];
      }
    }
    return z;
  }

  void visit_layer(std::size_t k, std::vector<Vec> a, Vec c, const lp::LinearProgram& region) {
    if (falsified_) return;
    const auto& layers = net_.layers();
    Affine z = compose(layers[k], a, c);
    if (k + 1 == layers.size()) {
      check_leaf(z, region);
      return;
    }
    std::vector<bool> active(layers[k].outputs(), true);
    branch_unit(k, 0, z, active, region);
  }

  void branch_unit(std::size_t k, std::size_t unit, const Affine& z, std::vector<bool>& active,
                   const lp::LinearProgram& region) {
    if (falsified_) return;
    const Layer& layer = net_.layers()[k];
    if (unit == layer.outputs()) {
      std::vector<Vec> a = z.rows;
      Vec c = z.offset;
      if (layer.activation == Activation::ReLU) {
        for (std::size_t r = 0; r < a.size(); ++r) {
          if (!active[r]) {
            a[r] = Vec(x_.size());
            c[r] = 0.0;
          }
        }
      }
      visit_layer(k + 1, std::move(a), std::move(c), region);
      return;
    }
    if (layer.activation != Activation::ReLU) {
      branch_unit(k, unit + 1, z, active, region);
      return;
    }
    const double lower = bounds_.lower[k + 1][unit];
    const double upper = bounds_.upper[k + 1][unit];
    if (lower >= 0.0) {
      active[unit] = true;
      branch_unit(k, unit + 1, z, active, region);
      return;
    }
    if (upper <= 0.0) {
      active[unit] = false;
      branch_unit(k, unit + 1, z, active, region);
      return;
    }
    for (bool on : {true, false}) {
      lp::LinearProgram next = region;
      if (on) next.add_le(z.rows[unit] * -1.0, z.offset[unit]);  // z >= 0
      else next.add_le(z.rows[unit], -z.offset[unit]);           // z <= 0
      if (lp::solve(next).status != lp::Status::Optimal) continue;
      active[unit] = on;
      branch_unit(k, unit + 1, z, active, next);
      if (falsified_) return;
    }
  }

  void check_leaf(const Affine& logits, const lp::LinearProgram& region) {
    ++patterns_;
    for (Label k = 0; k < net_.num_classes(); ++k) {
      if (k == y_) continue;
      lp::LinearProgram prog = region;
      prog.objective = logits.rows[k] - logits.rows[y_];
      const double offset = logits.offset[k] - logits.offset[y_];
      const lp::Solution sol = lp::solve(prog);
      if (sol.status != lp::Status::Optimal) continue;  // empty region
      const double margin = sol.value + offset;
      if (margin < 0.0 || (margin == 0.0 && k > y_)) continue;
      Vec w = project_box(project_linf_ball(sol.x, x_, eps_), box_.lo, box_.hi);
      if (predict(net_, w) != y_) {
        falsified_ = true;
        witness_ = std::move(w);
        return;
      }
      inconclusive_ = true;  // LP and forward pass disagree at a near-zero margin
    }
  }

  const Network& net_;
  const Vec& x_;
  double eps_;
  BoxSet box_;
  Label y_;
  Vec lo_, hi_;
  LayerBounds bounds_;
  std::size_t patterns_ = 0;
  bool falsified_ = false;
  bool inconclusive_ = false;
  std::optional<Vec> witness_;
};

}  // namespace detail

/// Exact decision of label invariance over the ball for ReLU networks: on
/// each reachable activation pattern the network is affine, and the largest
/// rival-minus-true logit over the pattern's polytope is found by LP.
/// Returns Robust or Falsified; Unknown only past the unit budget or when a
/// margin sits within the LP tolerance of zero.
inline Certificate certify_enumeration(const Network& net, const Vec& x, double eps,
                                       const EnumerationOptions& opts = {}) {
  if (!(eps >= 0.0)) throw InvalidArgument("certify_enumeration: eps must be non-negative");
  require_input(net, x);
  detail::require_piecewise_linear(net);
  if (net.layers().back().activation != Activation::Identity) {
    throw UnsupportedActivation("certify_enumeration: the output layer must be identity");
  }
  if (net.hidden_units() > opts.max_hidden_units) {
    return Certificate::unknown("enumeration", eps,
                                "network has " + std::to_string(net.hidden_units()) +
                                    " hidden units, enumeration budget is " +
                                    std::to_string(opts.max_hidden_units));
  }
  return detail::PatternSearch(net, x, eps, opts.box).run();
}

struct GridOptions {
  std::size_t max_points = 4'000'000;
  BoxSet box;
};

/// Exhaustive evaluation on a regular grid over the ball (plus its
/// boundary); the first label change in lexicographic order is returned as
/// Falsified. A clean pass is Unknown, not Robust.
inline Certificate grid_falsify(const Network& net, const Vec& x, double eps, double resolution,
                                const GridOptions& opts = {}) {
  if (!(resolution > 0.0)) throw InvalidArgument("grid_falsify: resolution must be positive");
  if (!(eps >= 0.0)) throw InvalidArgument("grid_falsify: eps must be non-negative");
  require_input(net, x);
  auto [lo, hi] = ball_in_box(x, eps, opts.box);
  std::vector<std::vector<double>> axes(x.size());
  double total = 1.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto& axis = axes[i];
    const auto steps = static_cast<long>(std::floor(eps / resolution + 1e-9));
    for (long s = -steps; s <= steps; ++s) {
      const double v = x[i] + static_cast<double>(s) * resolution;
      if (v >= lo[i] && v <= hi[i]) axis.push_back(v);
    }
    axis.push_back(lo[i]);
    axis.push_back(hi[i]);
    std::sort(axis.begin(), axis.end());
    axis.erase(std::unique(axis.begin(), axis.end()), axis.end());
    total *= static_cast<double>(axis.size());
  }
  if (total > static_cast<double>(opts.max_points)) {
    throw BudgetExceeded("grid_falsify: " + std::to_string(static_cast<long long>(total)) +
                         " grid points exceed the budget of " + std::to_string(opts.max_points));
  }
  const Label y = predict(net, x);
  std::vector<std::size_t> idx(x.size(), 0);
  Vec point(x.size());
  std::size_t visited = 0;
  while (true) {
    for (std::size_t i = 0; i < x.size(); ++i) point[i] = axes[i][idx[i]];
    ++visited;
    if (predict(net, point) != y) {
      Certificate c = Certificate::falsified("grid", net, x, eps, point, opts.box);
      c.grid_points = visited;
      return c;
    }
    std::size_t d = x.size();
    while (d > 0) {
      --d;
      if (++idx[d] < axes[d].size()) break;
      idx[d] = 0;
      if (d == 0) {
        Certificate c = Certificate::unknown("grid", eps, "no counterexample on the grid");
        c.grid_points = visited;
        return c;
      }
    }
  }
}

enum class CertifyMethod { Ibp, Enumeration };

/// Largest eps (to `resolution`) at which `method` returns Robust, found by
/// bisection on [0, box width]. A lower bound on the true robust radius.
inline double certified_radius(const Network& net, const Vec& x, CertifyMethod method, double resolution = 1e-3,
                               const BoxSet& box = {}) {
  if (!(resolution > 0.0)) throw InvalidArgument("certified_radius: resolution must be positive");
  auto robust_at = [&](double eps) {
    const Certificate c = method == CertifyMethod::Ibp ? certify_ibp(net, x, eps, box)
                                                       : certify_enumeration(net, x, eps, EnumerationOptions{16, box});
    return c.status == CertStatus::Robust;
  };
  double lo = 0.0;
  double hi = box.hi - box.lo;
  if (!robust_at(lo)) return 0.0;
  if (robust_at(hi)) return hi;
  while (hi - lo > resolution) {
    const double mid = 0.5 * (lo + hi);
    if (robust_at(mid)) lo = mid;
    else hi = mid;
  }
  return lo;
}

}  // namespace robust
