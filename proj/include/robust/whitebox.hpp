#pragma once

// Gradient-based attacks: FGSM, PGD, DeepFool, penalty-method minimum
// perturbation, expectation over transformation, coverage search, and a
// mode-aware dispatcher that solves a RobustnessProblem with one of them.

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>

#include "robust/errors.hpp"
#include "robust/network.hpp"
#include "robust/spec.hpp"
#include "robust/tensor.hpp"
#include "robust/transform.hpp"

namespace robust {

struct AttackBudget {
  double eps = 0.0;
  std::size_t steps = 1;
  double step_size = 1.0;

  AttackBudget() = default;
  AttackBudget(double eps_, std::size_t steps_, double step_size_) : eps(eps_), steps(steps_), step_size(step_size_) {
    if (!(eps >= 0.0)) throw InvalidArgument("attack budget: eps must be non-negative");
    if (!(step_size > 0.0)) throw InvalidArgument("attack budget: step size must be positive");
  }

  /// step_size = 2.5 * eps / steps
  static AttackBudget with_default_step(double eps, std::size_t steps) {
    const double s = eps > 0.0 ? 2.5 * eps / static_cast<double>(std::max<std::size_t>(steps, 1)) : 1.0;
    return AttackBudget(eps, steps, s);
  }
};

struct AttackResult {
  RobustnessProblem problem;
  Vec x_star;
  Verdict verdict;
  double mu_value = 0.0;
  /// Cross-entropy at x_star against the attacked label (f(x) when
  /// untargeted, the target class otherwise).
  double loss_value = 0.0;
  /// The attack's own objective at x_star: loss, mean target log-probability,
  /// coverage, or perturbation norm for the minimum-norm attacks.
  double objective = 0.0;
  std::size_t iterations = 0;
  std::size_t gradient_evals = 0;
  std::size_t queries = 0;

  bool success() const noexcept { return verdict.overall; }
};

namespace detail {

inline RobustnessProblem make_problem(const Vec& x, const BoxSet& box, QuantFunction mu, double alpha,
                                      TargetBehavior target, Mode mode) {
  return RobustnessProblem{x, box, DistanceConstraint(std::move(mu), alpha), std::move(target), mode};
}

inline AttackResult finish(RobustnessProblem problem, const Network& net, Vec x_star, Label loss_label,
                           double objective, std::size_t iterations, std::size_t gradient_evals) {
  AttackResult r;
  r.verdict = evaluate(problem, net, x_star);
  r.mu_value = r.verdict.mu_value;
  r.loss_value = loss(net, x_star, loss_label);
  r.objective = objective;
  r.iterations = iterations;
  r.gradient_evals = gradient_evals;
  r.problem = std::move(problem);
  r.x_star = std::move(x_star);
  return r;
}

inline void require_unit_interval(const Vec& x, const BoxSet& box) {
  if (!check_admissible(box, x)) throw InvalidArgument("attack anchor lies outside the admissible box");
}

/// Intersection of the Linf ball with the box, as per-coordinate bounds.
inline std::pair<Vec, Vec> ball_box_bounds(const Vec& x, double eps, const BoxSet& box) {
  Vec lo(x.size()), hi(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    lo[i] = std::max(box.lo, offset_within(x[i], -eps, eps));
    hi[i] = std::min(box.hi, offset_within(x[i], eps, eps));
  }
  return {lo, hi};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// FGSM

/// x* = clip(x + eps * sign(grad_x L(x, y))). One gradient evaluation.
inline AttackResult fgsm(const Network& net, const Vec& x, Label y, double eps, const BoxSet& box = {}) {
  if (!(eps >= 0.0)) throw InvalidArgument("fgsm: eps must be non-negative");
  const Vec g = grad_input(net, x, y);
  Vec x_star = project_box(project_linf_ball(x + sign(g) * eps, x, eps), box.lo, box.hi);
  auto problem = detail::make_problem(x, box, LpDistance{Norm::Linf}, eps, Untargeted{}, Mode::Decision);
  const double l = loss(net, x_star, y);
  return detail::finish(std::move(problem), net, std::move(x_star), y, l, 1, 1);
}

// ---------------------------------------------------------------------------
// PGD

struct PgdOptions {
  bool random_start = true;
  std::uint64_t seed = 0;
  /// Descend toward this class instead of ascending the loss of y.
  std::optional<Label> target;
  BoxSet box;
  std::function<void(const Vec&)> on_iterate;
};

/// Projected sign-gradient iterations inside the Linf ball and the box;
/// returns the best iterate (max loss of y, or min loss of the target).
inline AttackResult pgd(const Network& net, const Vec& x, Label y, const AttackBudget& budget,
                        const PgdOptions& opts = {}) {
  if (budget.steps == 0) throw InvalidArgument("pgd: needs at least one step");
  require_class(net, y);
  if (opts.target) require_class(net, *opts.target);
  const BoxSet& box = opts.box;
  const Label attacked = opts.target.value_or(y);
  const double direction = opts.target ? -1.0 : 1.0;

  Vec current = x;
  if (opts.random_start && budget.eps > 0.0) {
    Rng rng(opts.seed);
    auto [lo, hi] = detail::ball_box_bounds(x, budget.eps, box);
    current = sample_uniform(rng, lo, hi);
  }

  Vec best;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < budget.steps; ++k) {
    const Vec g = grad_input(net, current, attacked);
    current = project_box(project_linf_ball(current + sign(g) * (direction * budget.step_size), x, budget.eps),
                          box.lo, box.hi);
    if (opts.on_iterate) opts.on_iterate(current);
    const double score = direction * loss(net, current, attacked);
    if (score > best_score) {
      best_score = score;
      best = current;
    }
  }
  TargetBehavior target = Untargeted{};
  if (opts.target) target = Targeted{*opts.target};
  auto problem = detail::make_problem(x, box, LpDistance{Norm::Linf}, budget.eps, target, Mode::Decision);
  return detail::finish(std::move(problem), net, std::move(best), attacked, direction * best_score, budget.steps,
                        budget.steps);
}

// ---------------------------------------------------------------------------
// DeepFool

struct DeepFoolOptions {
  std::size_t max_iter = 50;
  double overshoot = 0.02;
  /// When set and different from f(x), x is already misclassified and is
  /// returned as-is.
  std::optional<Label> reference_label;
  BoxSet box;
};

/// Iterated step to the nearest linearized decision boundary (L2 geometry).
/// The result's problem is {box, L2 <= achieved norm, untargeted}.
inline AttackResult deepfool(const Network& net, const Vec& x, const DeepFoolOptions& opts = {}) {
  const Prediction p0 = forward(net, x);
  const Label k0 = p0.label;
  for (Label k = 0; k < p0.logits.size(); ++k) {
    if (k != k0 && p0.logits[k] == p0.logits[k0]) {
      throw AmbiguousLabel("deepfool: classes " + std::to_string(k0) + " and " + std::to_string(k) +
                           " tie at the anchor");
    }
  }
  const std::size_t classes = net.num_classes();
  auto problem_for = [&](const Vec& x_star) {
    return detail::make_problem(x, opts.box, LpDistance{Norm::L2}, distance(x, x_star, Norm::L2), Untargeted{},
                                Mode::MinimizeAlpha);
  };

  if (opts.reference_label && *opts.reference_label != k0) {
    return detail::finish(problem_for(x), net, x, k0, 0.0, 0, 0);
  }

  Vec r_total(x.size());
  Vec current = x;
  std::size_t iter = 0;
  std::size_t grads = 0;
  while (predict(net, current) == k0 && iter < opts.max_iter) {
    const Vec logits = trace(net, current).logits();
    double best_ratio = std::numeric_limits<double>::infinity();
    Vec best_w;
    double best_f = 0.0;
    for (Label k = 0; k < classes; ++k) {
      if (k == k0) continue;
      Vec coeff(classes);
      coeff[k] = 1.0;
      coeff[k0] = -1.0;
      Vec w = grad_logit_combination(net, current, coeff);
      ++grads;
      const double wn = norm(w, Norm::L2);
      if (wn == 0.0) continue;
      const double f = logits[k] - logits[k0];
      const double ratio = std::abs(f) / wn;
      if (ratio < best_ratio) {
        best_ratio = ratio;
        best_w = std::move(w);
        best_f = f;
      }
    }
    if (best_w.empty()) break;  // locally flat in every direction
    const double wn = norm(best_w, Norm::L2);
    r_total += best_w * (std::abs(best_f) / (wn * wn));
    current = project_box(x + r_total * (1.0 + opts.overshoot), opts.box.lo, opts.box.hi);
    ++iter;
  }
  auto problem = problem_for(current);
  const double r_norm = problem.distance.alpha;
  return detail::finish(std::move(problem), net, std::move(current), k0, r_norm, iter, grads);
}

// ---------------------------------------------------------------------------
// Minimum-norm targeted perturbation (penalty method)

struct PenaltySchedule {
  double c_lo = 1e-3;
  double c_hi = 1e3;
  std::size_t rounds = 10;
  std::size_t inner_steps = 200;
  BoxSet box;
};

namespace detail {

/// min_r c*|r|^2 + CE(x + r, target) subject to x + r in box, by projected
/// gradient descent with backtracking.
inline Vec minimize_penalty(const Network& net, const Vec& x, Label target, double c, const PenaltySchedule& s,
                            std::size_t& grads) {
  auto objective = [&](const Vec& r) {
    const double n = norm(r, Norm::L2);
    return c * n * n + loss(net, x + r, target);
  };
  Vec r(x.size());
  double f = objective(r);
  double step = 1.0;
  for (std::size_t it = 0; it < s.inner_steps; ++it) {
    Vec g = grad_input(net, x + r, target) + r * (2.0 * c);
    ++grads;
    bool moved = false;
    for (int backtrack = 0; backtrack < 60; ++backtrack) {
      const Vec cand = project_box(x + r - g * step, s.box.lo, s.box.hi) - x;
      const Vec d = cand - r;
      const double dn = norm(d, Norm::L2);
      if (dn == 0.0) break;
      const double fc = objective(cand);
      if (fc <= f + dot(g.span(), d.span()) + dn * dn / (2.0 * step)) {
        moved = dn > 1e-12;
        r = cand;
        f = fc;
        step *= 1.5;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }
  return r;
}

}  // namespace detail

/// Smallest-L2 perturbation reaching `target`, by bisection (in log space)
/// over the penalty weight c. The result's problem is
/// {box, L2 <= achieved norm, targeted}; success is false if no c worked.
inline AttackResult min_perturbation_targeted(const Network& net, const Vec& x, Label target,
                                              const PenaltySchedule& schedule = {}) {
  require_class(net, target);
  if (predict(net, x) == target) {
    throw InvalidArgument("min_perturbation_targeted: anchor is already classified as the target");
  }
  if (!(schedule.c_lo > 0.0 && schedule.c_lo <= schedule.c_hi)) {
    throw InvalidArgument("min_perturbation_targeted: need 0 < c_lo <= c_hi");
  }
  std::size_t grads = 0;
  double log_lo = std::log(schedule.c_lo);
  double log_hi = std::log(schedule.c_hi);
  std::optional<Vec> best;
  double best_norm = std::numeric_limits<double>::infinity();
  Vec fallback = x;
  std::size_t runs = 0;
  // round 0 probes the weakest penalty; the remaining rounds bisect
  for (std::size_t round = 0; round <= schedule.rounds; ++round) {
    ++runs;
    const double log_c = round == 0 ? log_lo : 0.5 * (log_lo + log_hi);
    const Vec r = detail::minimize_penalty(net, x, target, std::exp(log_c), schedule, grads);
    const Vec cand = x + r;
    if (predict(net, cand) == target) {
      const double n = norm(r, Norm::L2);
      if (n < best_norm) {
        best_norm = n;
        best = cand;
      }
      log_lo = log_c;
    } else {
      if (round == 0) {
        fallback = cand;
        break;  // even the weakest penalty fails
      }
      log_hi = log_c;
    }
  }
  Vec x_star = best ? *best : fallback;
  const double n = distance(x, x_star, Norm::L2);
  auto problem = detail::make_problem(x, schedule.box, LpDistance{Norm::L2}, n, Targeted{target},
                                      Mode::MinimizeAlpha);
  return detail::finish(std::move(problem), net, std::move(x_star), target, n, runs, grads);
}

// ---------------------------------------------------------------------------
// Plain L2-bounded targeted attack and EOT

namespace detail {

/// Largest s in [0, 1] (found by bisection) with mu(x + s (cand - x)) <= eps.
template <class Mu>
Vec rescale_toward(const Vec& x, const Vec& cand, double eps, const Mu& mu) {
  const double m = mu(cand);
  if (m <= eps) return cand;
  const Vec r = cand - x;
  double s = eps / m;
  Vec scaled = x + r * s;
  if (mu(scaled) <= eps) return scaled;
  double lo = 0.0, hi = s;
  for (int i = 0; i < 60; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mu(x + r * mid) <= eps) lo = mid;
    else hi = mid;
  }
  return x + r * lo;
}

inline Vec normalized(const Vec& g) {
  const double n = norm(g, Norm::L2);
  return n > 0.0 ? g * (1.0 / n) : g;
}

}  // namespace detail

/// Normalized gradient ascent on log P(target | x') inside the L2 ball and
/// the box; returns the iterate with the highest target log-probability.
inline AttackResult targeted_l2(const Network& net, const Vec& x, Label target, const AttackBudget& budget,
                                const BoxSet& box = {}) {
  require_class(net, target);
  auto log_p = [&](const Vec& v) { return log_softmax_at(trace(net, v).logits(), target); };
  Vec current = x;
  Vec best = x;
  double best_obj = log_p(x);
  std::size_t grads = 0;
  for (std::size_t k = 0; k < budget.steps; ++k) {
    const Vec g = grad_input(net, current, target) * -1.0;
    ++grads;
    Vec next = project_box(current + detail::normalized(g) * budget.step_size, box.lo, box.hi);
    current = detail::rescale_toward(x, next, budget.eps, [&](const Vec& v) { return distance(x, v, Norm::L2); });
    const double obj = log_p(current);
    if (obj > best_obj) {
      best_obj = obj;
      best = current;
    }
  }
  auto problem = detail::make_problem(x, box, LpDistance{Norm::L2}, budget.eps, Targeted{target}, Mode::Decision);
  return detail::finish(std::move(problem), net, std::move(best), target, best_obj, budget.steps, grads);
}

struct EotOptions {
  BoxSet box;
  /// Family for the expected-distance constraint; defaults to the attack family.
  std::optional<TransformFamily> constraint_family;
};

/// Maximizes the Monte Carlo estimate of E_t[log P(target | t(x'))] subject to
/// E_t[||t(x') - t(x)||_2] <= eps. Each step draws family.samples() fresh
/// transforms from a stream seeded by family.seed(); iterates violating the
/// constraint are rescaled radially toward x.
inline AttackResult eot_attack(const Network& net, const Vec& x, Label target, const TransformFamily& family,
                               const AttackBudget& budget, const EotOptions& opts = {}) {
  require_class(net, target);
  require_input(net, x);
  const ExpectedTransformedDistance mu{opts.constraint_family.value_or(family), Norm::L2};
  const ExpectedTargetLogProbAtLeast objective_spec{target, 0.0, family};
  auto constraint = [&](const Vec& v) { return expected_transformed_distance(mu, x, v).mean; };
  auto objective = [&](const Vec& v) { return expected_target_log_prob(net, objective_spec, v); };

  Rng rng(family.seed());
  Vec current = x;
  Vec best = x;
  double best_obj = objective(x);
  std::size_t grads = 0;
  for (std::size_t k = 0; k < budget.steps; ++k) {
    // running mean, so identical draws reproduce the single-draw gradient bit for bit
    Vec g(x.size());
    std::size_t drawn = 0;
    for (const SampledTransform& t : family.draw(x.size(), family.samples(), rng)) {
      const Vec v = t.vjp(current, grad_input(net, t.apply(current), target) * -1.0);
      ++drawn;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += (v[i] - g[i]) / static_cast<double>(drawn);
      ++grads;
    }
    Vec next = project_box(current + detail::normalized(g) * budget.step_size, opts.box.lo, opts.box.hi);
    current = detail::rescale_toward(x, next, budget.eps, constraint);
    const double obj = objective(current);
    if (obj > best_obj) {
      best_obj = obj;
      best = current;
    }
  }
  auto problem = detail::make_problem(x, opts.box, mu, budget.eps, Targeted{target}, Mode::Decision);
  return detail::finish(std::move(problem), net, std::move(best), target, best_obj, budget.steps, grads);
}

// ---------------------------------------------------------------------------
// Coverage search

struct CoverageSearchOptions {
  std::size_t samples = 64;
  double threshold = 0.0;
  std::uint64_t seed = 0;
  BoxSet box;
};

/// Random search for maximal single-input neuron coverage inside the Linf
/// ball and the box. The anchor itself is the first candidate.
inline AttackResult coverage_search(const Network& net, const Vec& x, double eps,
                                    const CoverageSearchOptions& opts = {}) {
  require_input(net, x);
  Rng rng(opts.seed);
  auto [lo, hi] = detail::ball_box_bounds(x, eps, opts.box);
  Vec best = x;
  double best_cov = neuron_coverage(net, x, opts.threshold);
  for (std::size_t i = 0; i < opts.samples; ++i) {
    Vec cand = sample_uniform(rng, lo, hi);
    const double c = neuron_coverage(net, cand, opts.threshold);
    if (c > best_cov) {
      best_cov = c;
      best = std::move(cand);
    }
  }
  auto problem = detail::make_problem(x, opts.box, LpDistance{Norm::Linf}, eps,
                                      CoverageAtLeast{best_cov, opts.threshold}, Mode::MaximizeBeta);
  const Label y = predict(net, x);
  return detail::finish(std::move(problem), net, std::move(best), y, best_cov, opts.samples, 0);
}

/// Coverage search over the fixed-sample orbit {t(x)} of a transform family.
inline AttackResult coverage_search_orbit(const Network& net, const TransformOrbit& orbit, double threshold) {
  const Vec& x = orbit.base;
  Vec best;
  double best_cov = -1.0;
  for (const SampledTransform& t : orbit.family.fixed_sample(x.size())) {
    Vec cand = t.apply(x);
    const double c = neuron_coverage(net, cand, threshold);
    if (c > best_cov) {
      best_cov = c;
      best = std::move(cand);
    }
  }
  RobustnessProblem problem{x, orbit, DistanceConstraint(LpDistance{Norm::Linf}, 1.0),
                            CoverageAtLeast{best_cov, threshold}, Mode::MaximizeBeta};
  problem.distance.alpha = distance(x, best, Norm::Linf);
  const Label y = predict(net, x);
  return detail::finish(std::move(problem), net, std::move(best), y, best_cov, orbit.family.samples(), 0);
}

// ---------------------------------------------------------------------------
// Dispatcher

enum class Method { Fgsm, Pgd, DeepFool, MinPerturbation, Eot, CoverageSearch };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::Fgsm: return "fgsm";
    case Method::Pgd: return "pgd";
    case Method::DeepFool: return "deepfool";
    case Method::MinPerturbation: return "min-pert";
    case Method::Eot: return "eot";
    case Method::CoverageSearch: return "coverage";
  }
  return "?";
}

inline std::optional<Method> parse_method(std::string_view name) {
  for (Method m : {Method::Fgsm, Method::Pgd, Method::DeepFool, Method::MinPerturbation, Method::Eot,
                   Method::CoverageSearch}) {
    if (to_string(m) == name) return m;
  }
  return std::nullopt;
}

struct SolveOptions {
  std::size_t steps = 20;
  std::optional<double> step_size;  // default: 2.5 * eps / steps (PGD), 2.5 * eps / steps (EOT)
  std::size_t samples = kDefaultTransformSamples;
  std::uint64_t seed = 0;
  double alpha_resolution = 1e-3;
  bool random_start = true;
  DeepFoolOptions deepfool;
  PenaltySchedule penalty;
};

namespace detail {

inline bool is_lp(const QuantFunction& mu, Norm p) {
  const auto* lp = std::get_if<LpDistance>(&mu);
  return lp != nullptr && lp->p == p;
}

inline void check_compatible(const RobustnessProblem& problem, Method method) {
  auto fail = [&](const std::string& why) {
    throw IncompatibleMethod("method '" + std::string(to_string(method)) + "' cannot solve this problem: " + why);
  };
  const auto& tb = problem.target;
  const auto& mu = problem.distance.mu;
  if (problem.distance.relation != Relation::AtMost) fail("only '<=' distance constraints are supported");
  const bool orbit = std::holds_alternative<TransformOrbit>(problem.admissible);
  if (!std::holds_alternative<BoxSet>(problem.admissible) && !(orbit && method == Method::CoverageSearch)) {
    fail("admissible set must be a box");
  }
  const bool label_change = std::holds_alternative<Untargeted>(tb) || std::holds_alternative<InvarianceViolation>(tb);
  switch (method) {
    case Method::Fgsm:
      if (!is_lp(mu, Norm::Linf)) fail("needs an linf distance");
      if (!label_change && !std::holds_alternative<LossAtLeast>(tb)) fail("needs an untargeted or loss target");
      break;
    case Method::Pgd:
      if (!is_lp(mu, Norm::Linf)) fail("needs an linf distance");
      if (!label_change && !std::holds_alternative<LossAtLeast>(tb) && !std::holds_alternative<Targeted>(tb)) {
        fail("needs an untargeted, targeted or loss target");
      }
      break;
    case Method::DeepFool:
      if (!is_lp(mu, Norm::L2)) fail("needs an l2 distance");
      if (!label_change) fail("needs an untargeted target");
      break;
    case Method::MinPerturbation:
      if (!is_lp(mu, Norm::L2)) fail("needs an l2 distance");
      if (!std::holds_alternative<Targeted>(tb)) fail("needs a targeted target");
      break;
    case Method::Eot:
      if (!is_lp(mu, Norm::L2) && !std::holds_alternative<ExpectedTransformedDistance>(mu)) {
        fail("needs an l2 or expected-transformed distance");
      }
      if (!std::holds_alternative<Targeted>(tb) && !std::holds_alternative<ExpectedTargetLogProbAtLeast>(tb)) {
        fail("needs a targeted or expected-log-probability target");
      }
      break;
    case Method::CoverageSearch:
      if (!orbit && !is_lp(mu, Norm::Linf)) fail("needs an linf distance");
      if (!std::holds_alternative<CoverageAtLeast>(tb)) fail("needs a coverage target");
      break;
  }
  if (problem.mode == Mode::MaximizeBeta && !std::holds_alternative<LossAtLeast>(tb) &&
      !std::holds_alternative<ExpectedTargetLogProbAtLeast>(tb) && !std::holds_alternative<CoverageAtLeast>(tb)) {
    fail("max-beta needs a quantitative target (loss, log-probability or coverage)");
  }
}

inline double diameter(const QuantFunction& mu, const BoxSet& box, std::size_t dim) {
  const double w = box.hi - box.lo;
  const double d = static_cast<double>(dim);
  if (const auto* lp = std::get_if<LpDistance>(&mu)) {
    switch (lp->p) {
      case Norm::L0: return d;
      case Norm::L1: return w * d;
      case Norm::L2: return w * std::sqrt(d);
      case Norm::Linf: return w;
    }
  }
  return w * std::sqrt(d);
}

}  // namespace detail

/// Runs `method` on `problem` according to its mode:
///  - Decision: one run at eps = alpha;
///  - MinimizeAlpha: bisection on alpha (or the attack's own minimum for
///    DeepFool / min-pert), returning the smallest successful alpha;
///  - MaximizeBeta: one run at eps = alpha, with beta set to the achieved value.
/// The returned result's problem is the input problem with alpha/beta
/// updated as above, and its verdict is evaluate() of that problem.
inline AttackResult solve(const RobustnessProblem& problem, const Network& net, Method method,
                          const SolveOptions& opts = {}) {
  detail::check_compatible(problem, method);
  require_input(net, problem.x);
  const Vec& x = problem.x;
  const Label y = predict(net, x);
  const BoxSet box = std::holds_alternative<BoxSet>(problem.admissible) ? std::get<BoxSet>(problem.admissible)
                                                                         : BoxSet{};
  if (std::holds_alternative<BoxSet>(problem.admissible)) detail::require_unit_interval(x, box);
  const auto* targeted = std::get_if<Targeted>(&problem.target);
  const auto* eot_target = std::get_if<ExpectedTargetLogProbAtLeast>(&problem.target);

  auto budget_for = [&](double eps) {
    if (opts.step_size) return AttackBudget(eps, opts.steps, *opts.step_size);
    return AttackBudget::with_default_step(eps, opts.steps);
  };

  auto run = [&](double eps) -> AttackResult {
    switch (method) {
      case Method::Fgsm: return fgsm(net, x, y, eps, box);
      case Method::Pgd: {
        PgdOptions po;
        po.random_start = opts.random_start;
        po.seed = opts.seed;
        po.box = box;
        if (targeted) po.target = targeted->target;
        return pgd(net, x, y, budget_for(eps), po);
      }
      case Method::DeepFool: {
        DeepFoolOptions d = opts.deepfool;
        d.box = box;
        return deepfool(net, x, d);
      }
      case Method::MinPerturbation: {
        PenaltySchedule s = opts.penalty;
        s.box = box;
        return min_perturbation_targeted(net, x, targeted->target, s);
      }
      case Method::Eot: {
        const Label t = targeted ? targeted->target : eot_target->target;
        std::optional<TransformFamily> constraint_family;
        if (const auto* m = std::get_if<ExpectedTransformedDistance>(&problem.distance.mu)) {
          constraint_family = m->family;
        } else {
          constraint_family = TransformFamily::identity();
        }
        TransformFamily family = eot_target ? eot_target->family
                                            : constraint_family->with_sampling(opts.samples, opts.seed);
        EotOptions eo{box, constraint_family};
        return eot_attack(net, x, t, family, budget_for(eps), eo);
      }
      case Method::CoverageSearch: {
        const auto& cov = std::get<CoverageAtLeast>(problem.target);
        if (const auto* orbit = std::get_if<TransformOrbit>(&problem.admissible)) {
          return coverage_search_orbit(net, *orbit, cov.threshold);
        }
        return coverage_search(net, x, eps, CoverageSearchOptions{opts.samples, cov.threshold, opts.seed, box});
      }
    }
    throw IncompatibleMethod("unknown method");
  };

  auto rebind = [&](AttackResult r, RobustnessProblem p) {
    r.verdict = evaluate(p, net, r.x_star);
    r.mu_value = r.verdict.mu_value;
    r.problem = std::move(p);
    return r;
  };

  RobustnessProblem out = problem;
  switch (problem.mode) {
    case Mode::Decision:
      return rebind(run(problem.distance.alpha), out);

    case Mode::MaximizeBeta: {
      AttackResult r = run(problem.distance.alpha);
      std::visit(
          [&](auto& t) {
            using T = std::decay_t<decltype(t)>;
            if constexpr (std::is_same_v<T, LossAtLeast>) {
              t.beta = r.loss_value;
            } else if constexpr (std::is_same_v<T, ExpectedTargetLogProbAtLeast>) {
              t.beta = expected_target_log_prob(net, t, r.x_star);
            } else if constexpr (std::is_same_v<T, CoverageAtLeast>) {
              t.beta = neuron_coverage(net, r.x_star, t.threshold);
            }
          },
          out.target);
      if (method == Method::CoverageSearch && std::holds_alternative<TransformOrbit>(out.admissible)) {
        out.distance.alpha = r.problem.distance.alpha;
      }
      return rebind(std::move(r), out);
    }

    case Mode::MinimizeAlpha: {
      if (method == Method::DeepFool || method == Method::MinPerturbation) {
        AttackResult r = run(0.0);
        out.distance.alpha = r.mu_value;
        return rebind(std::move(r), out);
      }
      double hi = detail::diameter(problem.distance.mu, box, x.size());
      AttackResult at_hi = rebind(run(hi), [&] {
        RobustnessProblem p = out;
        p.distance.alpha = hi;
        return p;
      }());
      std::size_t iterations = at_hi.iterations;
      std::size_t grads = at_hi.gradient_evals;
      if (!at_hi.success()) return at_hi;
      double lo = 0.0;
      while (hi - lo > 0.5 * opts.alpha_resolution) {
        const double mid = 0.5 * (lo + hi);
        RobustnessProblem p = out;
        p.distance.alpha = mid;
        AttackResult r = rebind(run(mid), std::move(p));
        iterations += r.iterations;
        grads += r.gradient_evals;
        if (r.success()) {
          hi = mid;
          at_hi = std::move(r);
        } else {
          lo = mid;
        }
      }
      at_hi.iterations = iterations;
      at_hi.gradient_evals = grads;
      return at_hi;
    }
  }
  throw IncompatibleMethod("unknown mode");
}

}  // namespace robust
