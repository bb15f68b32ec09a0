#pragma once

// Query-only attacks: a metered oracle around a hidden model, substitute
// training with Jacobian-based dataset augmentation, transfer attacks, and
// central finite-difference gradient estimation.

#include <memory>
#include <string>
#include <vector>

#include "robust/errors.hpp"
#include "robust/network.hpp"
#include "robust/spec.hpp"
#include "robust/tensor.hpp"
#include "robust/whitebox.hpp"

namespace robust {

enum class OracleAccess { LabelOnly, ScoreAccess };

/// Metered black-box view of a model. Each label()/scores() call counts as
/// exactly one query. Handles are independent: copy one to give another
/// attacker its own counter.
class QueryOracle {
 public:
  QueryOracle(std::shared_ptr<const Network> model, OracleAccess access = OracleAccess::LabelOnly)
      : model_(std::move(model)), access_(access) {
    if (!model_) throw InvalidArgument("oracle needs a model");
  }

  OracleAccess access() const noexcept { return access_; }
  std::size_t input_dim() const noexcept { return model_->input_dim(); }
  std::size_t num_classes() const noexcept { return model_->num_classes(); }
  std::size_t query_count() const noexcept { return queries_; }

  Label label(const Vec& x) {
    require_input(*model_, x);
    ++queries_;
    return predict(*model_, x);
  }

  Vec scores(const Vec& x) {
    if (access_ != OracleAccess::ScoreAccess) throw CapabilityError("oracle does not expose scores");
    require_input(*model_, x);
    ++queries_;
    return forward(*model_, x).probabilities;
  }

  /// Fresh handle on the same model with its own zeroed counter.
  QueryOracle fork() const { return QueryOracle(model_, access_); }

 private:
  std::shared_ptr<const Network> model_;
  OracleAccess access_;
  std::size_t queries_ = 0;
};

struct SubstituteConfig {
  std::size_t rounds = 5;
  double lambda = 0.1;
  /// Hidden layer widths; input and output widths come from the oracle.
  std::vector<std::size_t> hidden = {16};
  Activation activation = Activation::ReLU;
  TrainOptions training{300, 0.5};
  std::uint64_t seed = 0;
  BoxSet box;
};

struct SubstituteResult {
  Network substitute;
  std::size_t queries_used = 0;
  /// Augmented set size after the last round: |seeds| * 2^rounds.
  std::size_t dataset_size = 0;
};

/// Each round labels the not-yet-labeled points through the oracle, trains
/// a fresh substitute on every labeled point, then doubles the point set with
/// x + lambda * sign(d logit_{label(x)} / dx) (box-projected).
inline SubstituteResult train_substitute(QueryOracle& oracle, const std::vector<Vec>& seeds,
                                         const SubstituteConfig& cfg) {
  if (seeds.empty()) throw InvalidArgument("train_substitute: no seed points");
  if (cfg.rounds == 0) throw InvalidArgument("train_substitute: rounds must be >= 1");
  if (!(cfg.lambda > 0.0)) throw InvalidArgument("train_substitute: lambda must be positive");
  for (const Vec& s : seeds) {
    if (s.size() != oracle.input_dim()) throw DimensionError("train_substitute: seed dimension != oracle input");
  }

  std::vector<std::size_t> dims;
  dims.push_back(oracle.input_dim());
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(oracle.num_classes());

  std::vector<Vec> points = seeds;
  std::vector<Label> labels;
  std::size_t queries = 0;
  Rng init_rng(cfg.seed);
  std::optional<Network> substitute;
  for (std::size_t round = 0; round < cfg.rounds; ++round) {
    for (std::size_t i = labels.size(); i < points.size(); ++i) {
      labels.push_back(oracle.label(points[i]));
      ++queries;
    }
    LabeledDataset data(oracle.input_dim(), oracle.num_classes());
    for (std::size_t i = 0; i < points.size(); ++i) data.add(points[i], labels[i]);
    Rng round_rng = init_rng.split();
    substitute = train(Network::random(dims, cfg.activation, round_rng), data, cfg.training).network;

    const std::size_t n = points.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec g = grad_logit(*substitute, points[i], labels[i]);
      points.push_back(project_box(points[i] + sign(g) * cfg.lambda, cfg.box.lo, cfg.box.hi));
    }
  }
  return SubstituteResult{std::move(*substitute), queries, points.size()};
}

struct TransferReport {
  bool substitute_fooled = false;
  bool target_fooled = false;
  bool transferred = false;
  std::size_t queries_used = 0;
};

enum class TransferMethod { Fgsm, Pgd };

/// White-box attack on the substitute, then two oracle queries (x and x*).
/// The oracle's gradients are never used.
inline std::pair<AttackResult, TransferReport> transfer_attack(QueryOracle& oracle, const Network& substitute,
                                                               const Vec& x, TransferMethod method,
                                                               const AttackBudget& budget, std::uint64_t seed = 0) {
  if (substitute.input_dim() != oracle.input_dim()) throw DimensionError("transfer_attack: substitute input dim");
  const Label y_sub = predict(substitute, x);
  AttackResult r;
  if (method == TransferMethod::Fgsm) {
    r = fgsm(substitute, x, y_sub, budget.eps);
  } else {
    PgdOptions po;
    po.seed = seed;
    r = pgd(substitute, x, y_sub, budget, po);
  }
  const std::size_t before = oracle.query_count();
  const Label y_oracle = oracle.label(x);
  const Label y_oracle_star = oracle.label(r.x_star);
  TransferReport rep;
  rep.substitute_fooled = predict(substitute, r.x_star) != y_sub;
  rep.target_fooled = y_oracle_star != y_oracle;
  rep.transferred = rep.substitute_fooled && rep.target_fooled;
  rep.queries_used = oracle.query_count() - before;
  r.queries = rep.queries_used;
  return {std::move(r), rep};
}

/// Cross-entropy of class y computed from oracle scores, floored at 1e-12.
inline double loss_from_scores(const Vec& probabilities, Label y) {
  return -std::log(std::max(probabilities[y], kProbabilityFloor));
}

/// g_i = (L(x + h e_i) - L(x - h e_i)) / 2h from 2 * dim score queries.
inline Vec fd_gradient(QueryOracle& oracle, const Vec& x, Label y, double h) {
  if (oracle.access() != OracleAccess::ScoreAccess) throw CapabilityError("fd_gradient needs score access");
  if (!(h > 0.0)) throw InvalidArgument("fd_gradient: h must be positive");
  if (x.size() != oracle.input_dim()) throw DimensionError("fd_gradient: input dimension");
  if (y >= oracle.num_classes()) throw InvalidArgument("fd_gradient: class out of range");
  Vec g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    Vec plus = x;
    Vec minus = x;
    plus[i] += h;
    minus[i] -= h;
    const double lp = loss_from_scores(oracle.scores(plus), y);
    const double lm = loss_from_scores(oracle.scores(minus), y);
    g[i] = (lp - lm) / (2.0 * h);
  }
  return g;
}

/// FGSM step along the finite-difference gradient. The verdict's target
/// check uses two extra label queries (x and x*).
inline AttackResult fd_attack(QueryOracle& oracle, const Vec& x, Label y, double eps, double h,
                              const BoxSet& box = {}) {
  if (!(eps >= 0.0)) throw InvalidArgument("fd_attack: eps must be non-negative");
  const std::size_t before = oracle.query_count();
  const Vec g = fd_gradient(oracle, x, y, h);
  Vec x_star = project_box(project_linf_ball(x + sign(g) * eps, x, eps), box.lo, box.hi);

  AttackResult r;
  r.problem = RobustnessProblem{x, box, DistanceConstraint(LpDistance{Norm::Linf}, eps), Untargeted{}, Mode::Decision};
  r.verdict.admissible_ok = check_admissible(r.problem.admissible, x_star);
  r.verdict.mu_value = eval_mu(r.problem.distance.mu, x, x_star);
  r.verdict.distance_ok = compare(r.problem.distance.relation, r.verdict.mu_value, eps);
  const Label y_star = oracle.label(x_star);
  r.verdict.target_ok = y_star != oracle.label(x);
  r.verdict.target_value = static_cast<double>(y_star);
  r.verdict.overall = r.verdict.admissible_ok && r.verdict.distance_ok && r.verdict.target_ok;
  r.mu_value = r.verdict.mu_value;
  if (oracle.access() == OracleAccess::ScoreAccess) {
    r.loss_value = loss_from_scores(oracle.scores(x_star), y);
  }
  r.objective = r.loss_value;
  r.x_star = std::move(x_star);
  r.iterations = 1;
  r.queries = oracle.query_count() - before;
  return r;
}

}  // namespace robust
