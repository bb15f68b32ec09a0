#include <catch_amalgamated.hpp>

#include "oracles.hpp"
#include "robust/verifier.hpp"
#include "robust/whitebox.hpp"

using namespace robust;
using Catch::Matchers::WithinAbs;

namespace {

PgdOptions no_random_start() {
  PgdOptions po;
  po.random_start = false;
  return po;
}

}  // namespace

TEST_CASE("fgsm") {
  Rng rng(1);
  const Network net = Network::random({3, 6, 2}, Activation::ReLU, rng);
  const Vec x{0.2, 0.5, 0.7};
  const AttackResult zero = fgsm(net, x, 0, 0.0);
  CHECK(zero.x_star == x);
  CHECK(zero.loss_value == loss(net, x, 0));
  CHECK(zero.gradient_evals == 1);

  // logits (0, 2 x1 - 3 x2): for y = 0 the loss gradient is p1 * (2, -3)
  const Network lin = oracle::linear_binary(Vec{2.0, -3.0}, 0.0);
  const AttackResult r = fgsm(lin, Vec{0.5, 0.5}, 0, 0.1);
  CHECK_THAT(r.x_star[0], WithinAbs(0.6, 1e-15));
  CHECK_THAT(r.x_star[1], WithinAbs(0.4, 1e-15));

  // the box clips
  CHECK(fgsm(lin, Vec{0.95, 0.02}, 0, 0.1).x_star == Vec{1.0, 0.0});
}

TEST_CASE("fgsm is the best sign corner inside one linear region") {
  Rng rng(2);
  std::size_t compared = 0;
  for (int n = 0; n < 40; ++n) {
    const Network net = Network::random({2, 4, 2}, Activation::ReLU, rng);
    const Vec x{rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)};
    const Label y = rng.index(2);
    const double eps = 0.05;
    const AttackResult r = fgsm(net, x, y, eps);
    // only when every corner shares x's activation pattern is the loss convex-linear there
    auto pattern = [&](const Vec& v) {
      const Trace t = trace(net, v);
      std::vector<bool> p;
      for (double z : t.pre[0]) p.push_back(z > 0.0);
      return p;
    };
    bool same_region = true;
    double best = -1.0;
    for (double s0 : {-1.0, 1.0}) {
      for (double s1 : {-1.0, 1.0}) {
        const Vec c = x + Vec{s0 * eps, s1 * eps};
        same_region &= pattern(c) == pattern(x);
        best = std::max(best, loss(net, c, y));
      }
    }
    if (!same_region) continue;
    ++compared;
    CHECK(r.loss_value >= best - 1e-9);
  }
  CHECK(compared > 10);
}

TEST_CASE("pgd") {
  Rng rng(3);
  const Network net = Network::random({3, 8, 3}, Activation::Sigmoid, rng);
  const Vec x{0.3, 0.6, 0.4};
  const Label y = predict(net, x);

  // one saturating step from x is FGSM
  const AttackResult one = pgd(net, x, y, AttackBudget(0.1, 1, 0.1), no_random_start());
  const AttackResult f = fgsm(net, x, y, 0.1);
  CHECK(one.x_star == f.x_star);

  // linear logits: the optimum is the FGSM corner
  std::vector<double> w(9);
  for (double& v : w) v = rng.uniform(-1.0, 1.0);
  const Network lin({Layer(Mat(3, 3, w), Vec(3), Activation::Identity)});
  const AttackResult p = pgd(lin, x, 1, AttackBudget::with_default_step(0.1, 20));
  CHECK_THAT(p.loss_value, WithinAbs(fgsm(lin, x, 1, 0.1).loss_value, 1e-9));

  // iterates stay inside ball and box, best iterate is returned
  PgdOptions po;
  po.seed = 9;
  std::vector<Vec> iterates;
  po.on_iterate = [&](const Vec& v) { iterates.push_back(v); };
  const AttackResult r = pgd(net, Vec{0.02, 0.5, 0.97}, y, AttackBudget::with_default_step(0.1, 20), po);
  CHECK(iterates.size() == 20);
  double best = -1.0;
  for (const Vec& v : iterates) {
    CHECK(distance(Vec{0.02, 0.5, 0.97}, v, Norm::Linf) <= 0.1);
    CHECK(check_admissible(BoxSet{}, v));
    best = std::max(best, loss(net, v, y));
  }
  CHECK(r.loss_value == best);
  CHECK(r.gradient_evals == 20);
}

TEST_CASE("pgd against a dense grid over the ball") {
  Rng rng(4);
  std::size_t beaten = 0;
  for (int n = 0; n < 20; ++n) {
    const Network net = Network::random({2, 6, 2}, Activation::ReLU, rng);
    const Vec x{rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)};
    const Label y = predict(net, x);
    const double eps = 0.1;
    const AttackResult r = pgd(net, x, y, AttackBudget::with_default_step(eps, 20));
    Vec grid_best = x;
    for (int i = 0; i <= 20; ++i) {
      for (int j = 0; j <= 20; ++j) {
        const Vec g = project_linf_ball(x + Vec{eps * (i / 10.0 - 1.0), eps * (j / 10.0 - 1.0)}, x, eps);
        if (loss(net, g, y) > loss(net, grid_best, y)) grid_best = g;
      }
    }
    if (r.loss_value >= loss(net, grid_best, y) - 1e-6) continue;
    // PGD is local: report the grid point as the better witness
    ++beaten;
    WARN("grid witness (" << grid_best[0] << ", " << grid_best[1] << ") loss " << loss(net, grid_best, y)
                          << " beats PGD loss " << r.loss_value);
    CHECK(distance(x, grid_best, Norm::Linf) <= eps);
    CHECK(check_admissible(BoxSet{}, grid_best));
  }
  CHECK(beaten < 10);
}

TEST_CASE("deepfool") {
  Rng rng(5);
  for (int n = 0; n < 20; ++n) {
    const auto c = oracle::random_linear_case(rng, 3, rng.uniform(0.01, 0.1));
    const AttackResult r = deepfool(oracle::linear_binary(c.w, c.b), c.x);
    CHECK(r.iterations == 1);
    CHECK_THAT(oracle::l2(r.x_star - c.x), WithinAbs(1.02 * std::abs(c.margin) / oracle::l2(c.w), 1e-9));
    CHECK(r.success());
  }

  const Network net = Network::random({2, 6, 2}, Activation::ReLU, rng);
  const Vec x{0.4, 0.4};
  DeepFoolOptions already;
  already.reference_label = 1 - predict(net, x);
  const AttackResult r0 = deepfool(net, x, already);
  CHECK(r0.iterations == 0);
  CHECK(r0.x_star == x);

  const Network tie = oracle::linear_binary(Vec{1.0, 1.0}, -1.0);
  CHECK_THROWS_AS(deepfool(tie, Vec{0.5, 0.5}), AmbiguousLabel);
}

TEST_CASE("deepfool never beats the certified radius") {
  Rng rng(6);
  for (int n = 0; n < 15; ++n) {
    const Network net = Network::random({2, 8, 2}, Activation::ReLU, rng);
    const Vec x{rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
    const AttackResult r = deepfool(net, x);
    if (!r.success()) continue;
    const double radius = certified_radius(net, x, CertifyMethod::Enumeration);
    CHECK(distance(x, r.x_star, Norm::L2) >= radius - 1e-3);
  }
}

TEST_CASE("minimum-norm targeted perturbation") {
  Rng rng(7);
  for (int n = 0; n < 10; ++n) {
    const auto c = oracle::random_linear_case(rng, 3, rng.uniform(0.02, 0.1));
    const Network net = oracle::linear_binary(c.w, c.b);
    const Label target = 1 - predict(net, c.x);
    const AttackResult r = min_perturbation_targeted(net, c.x, target);
    REQUIRE(r.success());
    const double exact = std::abs(c.margin) / oracle::l2(c.w);
    CHECK(oracle::l2(r.x_star - c.x) <= 1.05 * exact);
    CHECK(oracle::l2(r.x_star - c.x) >= exact * (1.0 - 1e-9));
    const RobustnessProblem p{c.x, BoxSet{}, DistanceConstraint(LpDistance{Norm::L2}, r.mu_value), Targeted{target},
                              Mode::MinimizeAlpha};
    CHECK(evaluate(p, net, r.x_star).overall);
  }
  const Network net = oracle::linear_binary(Vec{1.0}, -0.5);
  CHECK_THROWS_AS(min_perturbation_targeted(net, Vec{0.8}, 1), InvalidArgument);
}

TEST_CASE("eot attack") {
  Rng rng(8);
  const Network net = Network::random({4, 10, 3}, Activation::ReLU, rng);
  const Vec x{0.3, 0.5, 0.6, 0.4};
  const Label t = (predict(net, x) + 1) % 3;
  const TransformFamily bright({Brightness{0.7, 1.3}}, 32, 4);
  CHECK(eot_attack(net, x, t, bright, AttackBudget(0.0, 10, 0.1)).x_star == x);

  // identity family: exactly the plain targeted L2 attack
  const TransformFamily id = TransformFamily::identity(8, 1);
  const AttackBudget budget = AttackBudget::with_default_step(0.4, 30);
  const AttackResult e = eot_attack(net, x, t, id, budget);
  const AttackResult plain = targeted_l2(net, x, t, budget);
  CHECK(e.x_star == plain.x_star);
  CHECK(e.mu_value == distance(x, e.x_star, Norm::L2));
}

TEST_CASE("eot beats the plain attack under fresh transform draws") {
  Rng rng(9);
  const TransformFamily bright({Brightness{0.6, 1.4}}, 32, 5);
  std::size_t wins = 0, trials = 0;
  for (int n = 0; n < 10; ++n) {
    const Network net = Network::random({4, 12, 3}, Activation::ReLU, rng);
    const Vec x{rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)};
    const Label t = (predict(net, x) + 1) % 3;
    const AttackBudget budget = AttackBudget::with_default_step(0.3, 40);
    const AttackResult e = eot_attack(net, x, t, bright, budget);
    const AttackResult plain = targeted_l2(net, x, t, budget);
    Rng draws(1000 + n);
    std::size_t hit_e = 0, hit_p = 0;
    for (const SampledTransform& tr : bright.draw(4, 256, draws)) {
      hit_e += predict(net, tr.apply(e.x_star)) == t ? 1 : 0;
      hit_p += predict(net, tr.apply(plain.x_star)) == t ? 1 : 0;
    }
    ++trials;
    wins += hit_e >= hit_p ? 1 : 0;
  }
  CHECK(wins >= 8);
}

TEST_CASE("solve in each mode") {
  Rng rng(10);
  const Network net = Network::random({2, 8, 2}, Activation::ReLU, rng);
  const Vec x{0.45, 0.55};
  const double radius = certified_radius(net, x, CertifyMethod::Enumeration);
  REQUIRE(radius > 0.01);

  RobustnessProblem p{x, BoxSet{}, DistanceConstraint(LpDistance{Norm::Linf}, 0.5 * radius), Untargeted{},
                      Mode::Decision};
  for (Method m : {Method::Fgsm, Method::Pgd}) CHECK_FALSE(solve(p, net, m).success());

  p.mode = Mode::MaximizeBeta;
  p.target = LossAtLeast{0.0};
  const AttackResult best = solve(p, net, Method::Pgd);
  const double beta = std::get<LossAtLeast>(best.problem.target).beta;
  CHECK(beta == best.loss_value);
  RobustnessProblem q = best.problem;
  std::get<LossAtLeast>(q.target).beta = beta;
  CHECK(evaluate(q, net, best.x_star).overall);
  std::get<LossAtLeast>(q.target).beta = beta - 1e-6;
  CHECK(evaluate(q, net, best.x_star).overall);
  std::get<LossAtLeast>(q.target).beta = std::nextafter(beta, 10.0);
  CHECK_FALSE(evaluate(q, net, best.x_star).overall);

  p.mode = Mode::MinimizeAlpha;
  p.target = Untargeted{};
  const AttackResult minimal = solve(p, net, Method::Pgd);
  if (minimal.success()) CHECK(minimal.problem.distance.alpha >= radius - 1e-3);
}

TEST_CASE("incompatible method and problem pairs") {
  Rng rng(11);
  const Network net = Network::random({2, 4, 2}, Activation::ReLU, rng);
  const Vec x{0.5, 0.5};
  const RobustnessProblem l2{x, BoxSet{}, DistanceConstraint(LpDistance{Norm::L2}, 0.1), Untargeted{},
                             Mode::Decision};
  CHECK_THROWS_AS(solve(l2, net, Method::Fgsm), IncompatibleMethod);
  const RobustnessProblem untargeted{x, BoxSet{}, DistanceConstraint(LpDistance{Norm::L2}, 0.1), Untargeted{},
                                     Mode::MinimizeAlpha};
  CHECK_THROWS_AS(solve(untargeted, net, Method::MinPerturbation), IncompatibleMethod);
  const RobustnessProblem at_least{x, BoxSet{}, DistanceConstraint(LpDistance{Norm::Linf}, 0.1, Relation::AtLeast),
                                   Untargeted{}, Mode::Decision};
  CHECK_THROWS_AS(solve(at_least, net, Method::Pgd), IncompatibleMethod);
  CHECK_FALSE(parse_method("cw").has_value());
  CHECK(parse_method("min-pert") == Method::MinPerturbation);
}
