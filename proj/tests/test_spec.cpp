#include <catch_amalgamated.hpp>

#include "robust/spec.hpp"

using namespace robust;

namespace {

// two-class net on one input: class 1 iff x > 0.5
Network threshold_net() {
  return Network({Layer(Mat(2, 1, std::vector<double>{0.0, 4.0}), Vec{0.0, -2.0}, Activation::Identity)});
}

}  // namespace

TEST_CASE("admissibility") {
  CHECK(check_admissible(BoxSet{}, Vec{0.5, 0.5}));
  CHECK_FALSE(check_admissible(BoxSet{}, Vec{1.0 + 1e-6, 0.0}));
  const Vec x{0.2, 0.3};
  CHECK(check_admissible(FiniteSet({x}), x));
  CHECK_FALSE(check_admissible(FiniteSet({x}), Vec{0.2, 0.31}));
  CHECK_THROWS_AS(BoxSet(1.0, 0.0), InvalidArgument);
  CHECK_THROWS_AS(FiniteSet(std::vector<Vec>{}), InvalidArgument);

  const TransformFamily bright({Brightness{0.8, 1.2}}, 8, 1);
  const TransformOrbit orbit{Vec{0.5, 0.25}, bright};
  for (const SampledTransform& t : bright.fixed_sample(2)) CHECK(check_admissible(orbit, t.apply(orbit.base)));
  CHECK_FALSE(check_admissible(orbit, Vec{0.9, 0.1}));
}

TEST_CASE("distance values") {
  const Vec x{0.3, 0.7};
  CHECK(eval_mu(LpDistance{Norm::L2}, x, x) == 0.0);
  CHECK(eval_mu(LpDistance{Norm::Linf}, Vec{0.0, 0.0}, Vec{0.1, -0.05}) == 0.1);
  const Vec cand{0.35, 0.61};
  CHECK(eval_mu(ExpectedTransformedDistance{TransformFamily::identity(16, 3)}, x, cand) ==
        eval_mu(LpDistance{Norm::L2}, x, cand));
  const CustomDistance half{"half-l1", [](const Vec& a, const Vec& b) { return 0.5 * distance(a, b, Norm::L1); }};
  CHECK(eval_mu(half, Vec{0.0}, Vec{1.0}) == 0.5);
  const CustomDistance broken{"negative", [](const Vec&, const Vec&) { return -1.0; }};
  CHECK_THROWS_AS(eval_mu(broken, x, x), InvalidArgument);
}

TEST_CASE("distance constraints") {
  const Vec x{0.5, 0.5};
  CHECK(check_distance(DistanceConstraint(LpDistance{Norm::Linf}, 0.1), x, Vec{0.6, 0.5}) ==
        (distance(x, Vec{0.6, 0.5}, Norm::Linf) <= 0.1));
  CHECK(check_distance(DistanceConstraint(LpDistance{Norm::Linf}, 0.25), Vec{0.5}, Vec{0.75}));
  CHECK(check_distance(DistanceConstraint(LpDistance{Norm::L2}, 0.0), x, x));
  CHECK_FALSE(check_distance(DistanceConstraint(LpDistance{Norm::L2}, 0.05), x, Vec{0.6, 0.5}));
  CHECK(check_distance(DistanceConstraint(LpDistance{Norm::L1}, 0.05, Relation::AtLeast), x, Vec{0.6, 0.5}));
  CHECK_THROWS_AS(DistanceConstraint(LpDistance{Norm::Linf}, -0.1), InvalidArgument);
}

TEST_CASE("target behaviors") {
  const Network net = threshold_net();
  const Vec x{0.3};
  CHECK_FALSE(check_target(net, Untargeted{}, x, x));
  CHECK(check_target(net, Untargeted{}, x, Vec{0.8}));
  CHECK_FALSE(check_target(net, Targeted{0}, x, x));  // target equals f(x)
  CHECK(check_target(net, Targeted{1}, x, Vec{0.8}));
  CHECK(check_target(net, LossAtLeast{0.0}, x, Vec{0.31}));
  CHECK(check_target(net, LossAtLeast{loss(net, Vec{0.45}, 0)}, x, Vec{0.45}));
  CHECK_FALSE(check_target(net, LossAtLeast{loss(net, Vec{0.45}, 0) + 1e-9}, x, Vec{0.45}));
  CHECK(check_target(net, InvarianceViolation{}, x, Vec{0.9}));
}

TEST_CASE("evaluate is the conjunction of the three checks") {
  const Network net = threshold_net();
  const Vec x{0.3};
  RobustnessProblem p{x, BoxSet{}, DistanceConstraint(LpDistance{Norm::Linf}, 2.0), Untargeted{}, Mode::Decision};
  const Verdict outside = evaluate(p, net, Vec{1.5});
  CHECK_FALSE(outside.admissible_ok);
  CHECK(outside.distance_ok);
  CHECK(outside.target_ok);
  CHECK_FALSE(outside.overall);
  CHECK_FALSE(evaluate(p, net, x).overall);
  CHECK(evaluate(p, net, Vec{0.9}).overall);
  CHECK(evaluate(p, net, Vec{0.9}).mu_value == distance(x, Vec{0.9}, Norm::Linf));
}

TEST_CASE("running mean is exact for identical samples") {
  RunningMean m;
  for (int i = 0; i < 1000; ++i) m.add(0.1);
  CHECK(m.mean == 0.1);
  CHECK(m.standard_error() == 0.0);
}

TEST_CASE("parse and print") {
  const ProblemSpec s = parse_spec("admissible box 0 1; distance linf <= 0.1; target untargeted; mode decision");
  CHECK(s.admissible == AdmissibleSet{BoxSet{0.0, 1.0}});
  CHECK(s.distance == DistanceConstraint(LpDistance{Norm::Linf}, 0.1));
  CHECK(s.target == TargetBehavior{Untargeted{}});
  CHECK(s.mode == Mode::Decision);
  CHECK(print_spec(s) == "admissible box 0 1 ; distance linf <= 0.1 ; target untargeted ; mode decision");

  // newlines, comments, default mode
  const ProblemSpec multi = parse_spec("# header\nadmissible box 0 1\ndistance l2 <= 0.5 # radius\ntarget targeted 3\n");
  CHECK(multi.target == TargetBehavior{Targeted{3}});
  CHECK(multi.mode == Mode::Decision);
  CHECK(parse_spec(print_spec(multi)) == multi);
  CHECK(parse_spec("admissible box 0 1; distance eot <= 0.2; target loss >= 1.5; mode max-beta").target ==
        TargetBehavior{LossAtLeast{1.5}});
}

TEST_CASE("parse errors carry line numbers") {
  auto line_of = [](const std::string& text) -> std::size_t {
    try {
      parse_spec(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return 0;
  };
  CHECK(line_of("admissible box 0 1; distance linf <= -0.1; target untargeted") == 1);
  CHECK(line_of("admissible box 0 1\ndistance linf <= 0.1\ntarget sideways") == 3);
  CHECK(line_of("admissible box 0 1\nadmissible box 0 1\ndistance linf <= 0.1\ntarget untargeted") == 2);
  CHECK(line_of("admissible box 1 0; distance linf <= 0.1; target untargeted") == 1);
  CHECK(line_of("admissible box 0 1; distance linf < 0.1; target untargeted") == 1);
  CHECK(line_of("admissible box 0 1; distance linf <= abc; target untargeted") == 1);
  CHECK(line_of("admissible box 0 1; target untargeted") != 0);
  CHECK(line_of("admissible finite pts.csv; distance l2 <= 1; target untargeted") == 1);  // no loader
}

TEST_CASE("forms without a text representation are rejected by the printer") {
  ProblemSpec s;
  s.distance = DistanceConstraint(CustomDistance{"mine", nullptr}, 1.0);
  CHECK_THROWS_AS(print_spec(s), InvalidArgument);
  s.distance = DistanceConstraint(LpDistance{Norm::L2}, 1.0);
  s.admissible = TransformOrbit{Vec{0.5}, TransformFamily()};
  CHECK_THROWS_AS(print_spec(s), InvalidArgument);
}
