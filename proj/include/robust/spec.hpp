#pragma once

// Robustness problems as (admissible set, distance constraint, target
// behaviour) triples plus an optimization mode, the predicates that decide
// each constraint, and a small line-oriented text format for them.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "robust/errors.hpp"
#include "robust/network.hpp"
#include "robust/tensor.hpp"
#include "robust/transform.hpp"

namespace robust {

// ---------------------------------------------------------------------------
// Admissible sets

struct BoxSet {
  double lo = 0.0;
  double hi = 1.0;

  BoxSet() = default;
  BoxSet(double lo_, double hi_) : lo(lo_), hi(hi_) {
    if (lo > hi) throw InvalidArgument("box with lo > hi");
  }
  friend bool operator==(const BoxSet&, const BoxSet&) = default;
};

inline constexpr double kMembershipTolerance = 1e-12;

struct FiniteSet {
  std::vector<Vec> points;
  std::string source;  // file it was loaded from, if any

  FiniteSet(std::vector<Vec> pts, std::string src = {}) : points(std::move(pts)), source(std::move(src)) {
    if (points.empty()) throw InvalidArgument("finite admissible set is empty");
  }
  friend bool operator==(const FiniteSet&, const FiniteSet&) = default;
};

/// {t(base) : t drawn from family}. Membership is decided against the
/// family's fixed-seed draws, i.e. cand must have been produced by one of
/// the registered transform applications.
struct TransformOrbit {
  Vec base;
  TransformFamily family;
  friend bool operator==(const TransformOrbit&, const TransformOrbit&) = default;
};

using AdmissibleSet = std::variant<BoxSet, FiniteSet, TransformOrbit>;

// ---------------------------------------------------------------------------
// Quantitative functions and the distance constraint

struct LpDistance {
  Norm p = Norm::L2;
  friend bool operator==(const LpDistance&, const LpDistance&) = default;
};

/// Monte Carlo estimate of E_t[ d(t(cand), t(x)) ] over the family's fixed sample.
struct ExpectedTransformedDistance {
  TransformFamily family;
  Norm inner = Norm::L2;
  friend bool operator==(const ExpectedTransformedDistance&, const ExpectedTransformedDistance&) = default;
};

struct CustomDistance {
  std::string name;
  std::function<double(const Vec&, const Vec&)> fn;
  friend bool operator==(const CustomDistance& a, const CustomDistance& b) { return a.name == b.name; }
};

using QuantFunction = std::variant<LpDistance, ExpectedTransformedDistance, CustomDistance>;

enum class Relation { AtMost, AtLeast };

struct DistanceConstraint {
  QuantFunction mu = LpDistance{Norm::Linf};
  double alpha = 0.0;
  Relation relation = Relation::AtMost;

  DistanceConstraint() = default;
  DistanceConstraint(QuantFunction m, double a, Relation r = Relation::AtMost)
      : mu(std::move(m)), alpha(a), relation(r) {
    if (!std::holds_alternative<CustomDistance>(mu) && alpha < 0.0) {
      throw InvalidArgument("distance threshold alpha must be non-negative");
    }
  }
  friend bool operator==(const DistanceConstraint&, const DistanceConstraint&) = default;
};

// ---------------------------------------------------------------------------
// Target behaviours

struct Targeted {
  Label target = 0;
  friend bool operator==(const Targeted&, const Targeted&) = default;
};
struct Untargeted {
  friend bool operator==(const Untargeted&, const Untargeted&) = default;
};
/// loss(cand, f(x)) >= beta
struct LossAtLeast {
  double beta = 0.0;
  friend bool operator==(const LossAtLeast&, const LossAtLeast&) = default;
};
/// E_t[ log P(target | t(cand)) ] >= beta
struct ExpectedTargetLogProbAtLeast {
  Label target = 0;
  double beta = 0.0;
  TransformFamily family;
  friend bool operator==(const ExpectedTargetLogProbAtLeast&, const ExpectedTargetLogProbAtLeast&) = default;
};
/// neuron_coverage({cand}, threshold) >= beta
struct CoverageAtLeast {
  double beta = 0.0;
  double threshold = 0.0;
  friend bool operator==(const CoverageAtLeast&, const CoverageAtLeast&) = default;
};
/// Witness against "for all admissible cand, f(cand) = f(x)".
struct InvarianceViolation {
  friend bool operator==(const InvarianceViolation&, const InvarianceViolation&) = default;
};

using TargetBehavior = std::variant<Targeted, Untargeted, LossAtLeast, ExpectedTargetLogProbAtLeast,
                                    CoverageAtLeast, InvarianceViolation>;

enum class Mode { Decision, MinimizeAlpha, MaximizeBeta };

struct RobustnessProblem {
  Vec x;
  AdmissibleSet admissible = BoxSet{};
  DistanceConstraint distance;
  TargetBehavior target = Untargeted{};
  Mode mode = Mode::Decision;
  friend bool operator==(const RobustnessProblem&, const RobustnessProblem&) = default;
};

struct Verdict {
  bool admissible_ok = false;
  bool distance_ok = false;
  bool target_ok = false;
  double mu_value = 0.0;
  /// The quantity the target predicate thresholds: loss, mean log-probability
  /// or coverage; for label-only targets, the predicted class of cand.
  double target_value = 0.0;
  bool overall = false;
  friend bool operator==(const Verdict&, const Verdict&) = default;
};

// ---------------------------------------------------------------------------
// Predicates

/// Running mean with standard error (Welford). Exact when all samples agree.
struct RunningMean {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double v) {
    ++n;
    const double d = v - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (v - mean);
  }
  double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
  double standard_error() const { return n > 0 ? std::sqrt(variance() / static_cast<double>(n)) : 0.0; }
};

inline bool check_admissible(const AdmissibleSet& set, const Vec& cand) {
  return std::visit(
      [&](const auto& s) -> bool {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, BoxSet>) {
          if (cand.empty()) throw DimensionError("admissibility of empty candidate");
          return std::all_of(cand.begin(), cand.end(), [&](double v) { return v >= s.lo && v <= s.hi; });
        } else if constexpr (std::is_same_v<T, FiniteSet>) {
          for (const Vec& p : s.points) {
            p.require_same_size(cand, "finite-set membership");
            bool same = true;
            for (std::size_t i = 0; i < p.size() && same; ++i) {
              same = std::abs(p[i] - cand[i]) <= kMembershipTolerance;
            }
            if (same) return true;
          }
          return false;
        } else {
          s.base.require_same_size(cand, "orbit membership");
          for (const SampledTransform& t : s.family.fixed_sample(cand.size())) {
            const Vec image = t.apply(s.base);
            bool same = true;
            for (std::size_t i = 0; i < image.size() && same; ++i) {
              same = std::abs(image[i] - cand[i]) <= kMembershipTolerance;
            }
            if (same) return true;
          }
          return false;
        }
      },
      set);
}

struct MonteCarloEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
};

inline MonteCarloEstimate expected_transformed_distance(const ExpectedTransformedDistance& mu, const Vec& x,
                                                        const Vec& cand) {
  x.require_same_size(cand, "expected transformed distance");
  RunningMean acc;
  for (const SampledTransform& t : mu.family.fixed_sample(x.size())) {
    acc.add(distance(t.apply(x), t.apply(cand), mu.inner));
  }
  return {acc.mean, acc.standard_error()};
}

inline double eval_mu(const QuantFunction& mu, const Vec& x, const Vec& cand) {
  x.require_same_size(cand, "eval_mu");
  return std::visit(
      [&](const auto& m) -> double {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, LpDistance>) {
          return distance(x, cand, m.p);
        } else if constexpr (std::is_same_v<T, ExpectedTransformedDistance>) {
          return expected_transformed_distance(m, x, cand).mean;
        } else {
          if (!m.fn) throw InvalidArgument("custom distance '" + m.name + "' has no function");
          const double v = m.fn(x, cand);
          if (!(v >= 0.0)) throw InvalidArgument("custom distance '" + m.name + "' returned a negative value");
          return v;
        }
      },
      mu);
}

inline bool compare(Relation r, double value, double threshold) {
  return r == Relation::AtMost ? value <= threshold : value >= threshold;
}

inline bool check_distance(const DistanceConstraint& dc, const Vec& x, const Vec& cand) {
  return compare(dc.relation, eval_mu(dc.mu, x, cand), dc.alpha);
}

inline double expected_target_log_prob(const Network& net, const ExpectedTargetLogProbAtLeast& tb,
                                       const Vec& cand) {
  RunningMean acc;
  for (const SampledTransform& t : tb.family.fixed_sample(cand.size())) {
    acc.add(log_softmax_at(trace(net, t.apply(cand)).logits(), tb.target));
  }
  return acc.mean;
}

/// Value of the quantity the target predicate thresholds, plus the decision.
inline std::pair<bool, double> eval_target(const Network& net, const TargetBehavior& tb, const Vec& x,
                                           const Vec& cand) {
  require_input(net, x);
  require_input(net, cand);
  return std::visit(
      [&](const auto& t) -> std::pair<bool, double> {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, Targeted>) {
          require_class(net, t.target);
          const Label lc = predict(net, cand);
          return {lc == t.target && t.target != predict(net, x), static_cast<double>(lc)};
        } else if constexpr (std::is_same_v<T, Untargeted> || std::is_same_v<T, InvarianceViolation>) {
          const Label lc = predict(net, cand);
          return {lc != predict(net, x), static_cast<double>(lc)};
        } else if constexpr (std::is_same_v<T, LossAtLeast>) {
          if (t.beta < 0.0) throw InvalidArgument("loss threshold beta must be non-negative");
          const double l = loss(net, cand, predict(net, x));
          return {l >= t.beta, l};
        } else if constexpr (std::is_same_v<T, ExpectedTargetLogProbAtLeast>) {
          require_class(net, t.target);
          const double v = expected_target_log_prob(net, t, cand);
          return {v >= t.beta, v};
        } else {
          const double c = neuron_coverage(net, cand, t.threshold);
          return {c >= t.beta, c};
        }
      },
      tb);
}

inline bool check_target(const Network& net, const TargetBehavior& tb, const Vec& x, const Vec& cand) {
  return eval_target(net, tb, x, cand).first;
}

/// All three constraints are always computed; overall is their conjunction.
inline Verdict evaluate(const RobustnessProblem& problem, const Network& net, const Vec& cand) {
  Verdict v;
  v.admissible_ok = check_admissible(problem.admissible, cand);
  v.mu_value = eval_mu(problem.distance.mu, problem.x, cand);
  v.distance_ok = compare(problem.distance.relation, v.mu_value, problem.distance.alpha);
  std::tie(v.target_ok, v.target_value) = eval_target(net, problem.target, problem.x, cand);
  v.overall = v.admissible_ok && v.distance_ok && v.target_ok;
  return v;
}

// ---------------------------------------------------------------------------
// Text format
//
//   admissible box <lo> <hi> | admissible finite <file>
//   ; distance <l0|l1|l2|linf|eot> <=|>= <alpha>
//   ; target <targeted <class> | untargeted | loss >= <beta> | coverage >= <beta> | invariance>
//   ; mode <decision|min-alpha|max-beta>
//
// Clauses are separated by ';' or newlines; '#' starts a comment.

/// A problem minus its anchor input.
struct ProblemSpec {
  AdmissibleSet admissible = BoxSet{};
  DistanceConstraint distance;
  TargetBehavior target = Untargeted{};
  Mode mode = Mode::Decision;
  friend bool operator==(const ProblemSpec&, const ProblemSpec&) = default;
};

inline RobustnessProblem instantiate(const ProblemSpec& spec, Vec x) {
  RobustnessProblem p{std::move(x), spec.admissible, spec.distance, spec.target, spec.mode};
  if (auto* orbit = std::get_if<TransformOrbit>(&p.admissible); orbit && orbit->base.empty()) orbit->base = p.x;
  return p;
}

struct SpecParseOptions {
  /// Loads the points of `admissible finite <file>`.
  std::function<std::vector<Vec>(const std::string&)> load_points;
  /// Family used for `distance eot`.
  TransformFamily eot_family = TransformFamily({Brightness{0.8, 1.2}}, kDefaultTransformSamples, 0);
  std::string source = "<spec>";
};

inline std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw Error("cannot format number");
  return std::string(buf, ptr);
}

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::Decision: return "decision";
    case Mode::MinimizeAlpha: return "min-alpha";
    case Mode::MaximizeBeta: return "max-beta";
  }
  return "?";
}

inline std::string describe(const AdmissibleSet& set) {
  return std::visit(
      [](const auto& s) -> std::string {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, BoxSet>) {
          return "box " + format_number(s.lo) + " " + format_number(s.hi);
        } else if constexpr (std::is_same_v<T, FiniteSet>) {
          if (s.source.empty()) throw InvalidArgument("finite set without a source file has no text form");
          return "finite " + s.source;
        } else {
          throw InvalidArgument("transform-orbit admissible sets have no text form");
        }
      },
      set);
}

inline std::string describe(const DistanceConstraint& dc) {
  std::string mu = std::visit(
      [](const auto& m) -> std::string {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, LpDistance>) {
          return std::string(to_string(m.p));
        } else if constexpr (std::is_same_v<T, ExpectedTransformedDistance>) {
          return "eot";
        } else {
          throw InvalidArgument("custom distance '" + m.name + "' has no text form");
        }
      },
      dc.mu);
  return mu + (dc.relation == Relation::AtMost ? " <= " : " >= ") + format_number(dc.alpha);
}

inline std::string describe(const TargetBehavior& tb) {
  return std::visit(
      [](const auto& t) -> std::string {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, Targeted>) {
          return "targeted " + std::to_string(t.target);
        } else if constexpr (std::is_same_v<T, Untargeted>) {
          return "untargeted";
        } else if constexpr (std::is_same_v<T, LossAtLeast>) {
          return "loss >= " + format_number(t.beta);
        } else if constexpr (std::is_same_v<T, CoverageAtLeast>) {
          return "coverage >= " + format_number(t.beta);
        } else if constexpr (std::is_same_v<T, InvarianceViolation>) {
          return "invariance";
        } else {
          throw InvalidArgument("expected-log-probability targets have no text form");
        }
      },
      tb);
}

/// Canonical single-line form.
inline std::string print_spec(const ProblemSpec& spec) {
  return "admissible " + describe(spec.admissible) + " ; distance " + describe(spec.distance) +
         " ; target " + describe(spec.target) + " ; mode " + std::string(to_string(spec.mode));
}

namespace detail {

inline std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

}  // namespace detail

inline ProblemSpec parse_spec(std::string_view text, const SpecParseOptions& opts = {}) {
  struct Clause {
    std::vector<std::string> words;
    std::size_t line;
  };
  std::vector<Clause> clauses;
  std::size_t line_no = 1;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, eol - pos);
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    std::size_t start = 0;
    while (start <= line.size()) {
      const std::size_t semi = std::min(line.find(';', start), line.size());
      auto words = detail::split_words(line.substr(start, semi - start));
      if (!words.empty()) clauses.push_back({std::move(words), line_no});
      start = semi + 1;
    }
    pos = eol + 1;
    ++line_no;
  }

  auto fail = [&](std::size_t line, const std::string& msg) -> ParseError {
    return ParseError(opts.source, line, msg);
  };
  auto number = [&](const Clause& c, std::size_t i) -> double {
    if (i >= c.words.size()) throw fail(c.line, "missing number in '" + c.words[0] + "' clause");
    const std::string& w = c.words[i];
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
    if (ec != std::errc() || ptr != w.data() + w.size() || !std::isfinite(v)) {
      throw fail(c.line, "invalid number '" + w + "'");
    }
    return v;
  };
  auto arity = [&](const Clause& c, std::size_t n) {
    if (c.words.size() != n) throw fail(c.line, "clause '" + c.words[0] + " " + (c.words.size() > 1 ? c.words[1] : "") + "' expects " + std::to_string(n - 1) + " arguments");
  };
  auto relation = [&](const Clause& c, std::size_t i) -> Relation {
    if (i >= c.words.size()) throw fail(c.line, "missing relation");
    if (c.words[i] == "<=") return Relation::AtMost;
    if (c.words[i] == ">=") return Relation::AtLeast;
    throw fail(c.line, "expected '<=' or '>=' but found '" + c.words[i] + "'");
  };

  ProblemSpec spec;
  bool seen_admissible = false, seen_distance = false, seen_target = false, seen_mode = false;
  for (const Clause& c : clauses) {
    const std::string& head = c.words[0];
    if (c.words.size() < 2) throw fail(c.line, "clause '" + head + "' is missing its body");
    const std::string& kind = c.words[1];
    try {
      if (head == "admissible") {
        if (seen_admissible) throw fail(c.line, "duplicate admissible clause");
        seen_admissible = true;
        if (kind == "box") {
          arity(c, 4);
          spec.admissible = BoxSet(number(c, 2), number(c, 3));
        } else if (kind == "finite") {
          arity(c, 3);
          if (!opts.load_points) throw fail(c.line, "no loader available for finite set '" + c.words[2] + "'");
          spec.admissible = FiniteSet(opts.load_points(c.words[2]), c.words[2]);
        } else {
          throw fail(c.line, "unknown admissible set '" + kind + "'");
        }
      } else if (head == "distance") {
        if (seen_distance) throw fail(c.line, "duplicate distance clause");
        seen_distance = true;
        arity(c, 4);
        QuantFunction mu;
        if (kind == "l0") mu = LpDistance{Norm::L0};
        else if (kind == "l1") mu = LpDistance{Norm::L1};
        else if (kind == "l2") mu = LpDistance{Norm::L2};
        else if (kind == "linf") mu = LpDistance{Norm::Linf};
        else if (kind == "eot") mu = ExpectedTransformedDistance{opts.eot_family, Norm::L2};
        else throw fail(c.line, "unknown distance '" + kind + "'");
        spec.distance = DistanceConstraint(std::move(mu), number(c, 3), relation(c, 2));
      } else if (head == "target") {
        if (seen_target) throw fail(c.line, "duplicate target clause");
        seen_target = true;
        if (kind == "targeted") {
          arity(c, 3);
          const double v = number(c, 2);
          if (v < 0 || v != std::floor(v)) throw fail(c.line, "target class must be a non-negative integer");
          spec.target = Targeted{static_cast<Label>(v)};
        } else if (kind == "untargeted") {
          arity(c, 2);
          spec.target = Untargeted{};
        } else if (kind == "invariance") {
          arity(c, 2);
          spec.target = InvarianceViolation{};
        } else if (kind == "loss" || kind == "coverage") {
          arity(c, 4);
          if (relation(c, 2) != Relation::AtLeast) throw fail(c.line, "'" + kind + "' target takes '>='");
          const double beta = number(c, 3);
          if (kind == "loss") {
            if (beta < 0) throw fail(c.line, "loss threshold must be non-negative");
            spec.target = LossAtLeast{beta};
          } else {
            spec.target = CoverageAtLeast{beta, 0.0};
          }
        } else {
          throw fail(c.line, "unknown target '" + kind + "'");
        }
      } else if (head == "mode") {
        if (seen_mode) throw fail(c.line, "duplicate mode clause");
        seen_mode = true;
        arity(c, 2);
        if (kind == "decision") spec.mode = Mode::Decision;
        else if (kind == "min-alpha") spec.mode = Mode::MinimizeAlpha;
        else if (kind == "max-beta") spec.mode = Mode::MaximizeBeta;
        else throw fail(c.line, "unknown mode '" + kind + "'");
      } else {
        throw fail(c.line, "unknown clause '" + head + "'");
      }
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw fail(c.line, e.what());
    }
  }
  const std::size_t last = line_no > 1 ? line_no - 1 : 1;
  if (!seen_admissible) throw fail(last, "missing admissible clause");
  if (!seen_distance) throw fail(last, "missing distance clause");
  if (!seen_target) throw fail(last, "missing target clause");
  return spec;
}

}  // namespace robust
