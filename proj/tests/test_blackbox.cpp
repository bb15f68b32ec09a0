#include <catch_amalgamated.hpp>

#include "oracles.hpp"
#include "robust/blackbox.hpp"
#include "robust/io.hpp"

using namespace robust;

namespace {

std::shared_ptr<const Network> blob_oracle() {
  Rng rng(808);
  return std::make_shared<const Network>(
      train(Network::random({2, 16, 2}, Activation::ReLU, rng), io::make_blobs(200, 11), TrainOptions{300, 0.5})
          .network);
}

}  // namespace

TEST_CASE("oracle access and metering") {
  auto model = blob_oracle();
  QueryOracle labels(model);
  const Vec x{0.3, 0.3};
  CHECK(labels.label(x) == predict(*model, x));
  CHECK_THROWS_AS(labels.scores(x), CapabilityError);
  CHECK(labels.query_count() == 1);
  QueryOracle other = labels.fork();
  CHECK(other.query_count() == 0);
  QueryOracle scores(model, OracleAccess::ScoreAccess);
  CHECK(scores.scores(x) == forward(*model, x).probabilities);
  CHECK_THROWS_AS(labels.label(Vec{0.1}), DimensionError);
}

TEST_CASE("substitute query accounting follows the doubling schedule") {
  auto model = blob_oracle();
  const std::vector<Vec> seeds = io::make_blobs(10, 3).inputs();
  SubstituteConfig cfg;
  cfg.training = {50, 0.5};

  cfg.rounds = 1;
  QueryOracle one(model);
  const SubstituteResult r1 = train_substitute(one, seeds, cfg);
  CHECK(r1.queries_used == 10);
  // one round is plain supervised training on the oracle-labeled seeds
  LabeledDataset labeled(2, 2);
  for (const Vec& s : seeds) labeled.add(s, predict(*model, s));
  Rng init(cfg.seed);
  Rng round = init.split();
  const Network expected = train(Network::random({2, 16, 2}, Activation::ReLU, round), labeled, cfg.training).network;
  CHECK(r1.substitute == expected);

  cfg.rounds = 3;
  QueryOracle three(model);
  const SubstituteResult r3 = train_substitute(three, seeds, cfg);
  CHECK(r3.queries_used == 10 + 10 + 20);
  CHECK(three.query_count() == 40);
  CHECK(r3.dataset_size == 80);
}

TEST_CASE("transfer attacks") {
  auto model = blob_oracle();
  QueryOracle oracle(model);
  Rng rng(4);
  // the oracle as its own substitute: transfer is exactly substitute success
  for (int i = 0; i < 20; ++i) {
    const Vec x{rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7)};
    const auto [r, rep] = transfer_attack(oracle, *model, x, TransferMethod::Fgsm, AttackBudget(0.15, 1, 0.15));
    CHECK(rep.transferred == rep.substitute_fooled);
    CHECK(rep.queries_used == 2);
    if (!rep.substitute_fooled) CHECK_FALSE(rep.transferred);
  }

  // a trained substitute transfers at least as well as an untrained one
  SubstituteConfig cfg;
  cfg.rounds = 4;
  QueryOracle training_oracle(model);
  const Network trained = train_substitute(training_oracle, io::make_blobs(20, 12).inputs(), cfg).substitute;
  const Network untrained = Network::random({2, 16, 2}, Activation::ReLU, rng);
  const LabeledDataset test = io::make_blobs(50, 99);
  std::size_t with_trained = 0, with_random = 0;
  for (const Sample& s : test) {
    const AttackBudget budget = AttackBudget::with_default_step(0.15, 10);
    with_trained += transfer_attack(oracle, trained, s.input, TransferMethod::Pgd, budget).second.target_fooled;
    with_random += transfer_attack(oracle, untrained, s.input, TransferMethod::Pgd, budget).second.target_fooled;
  }
  WARN("transfer rate: trained " << with_trained << "/50, untrained " << with_random << "/50");
  CHECK(with_trained >= with_random);
}

TEST_CASE("finite-difference gradients") {
  // quadratic score: p(x) = softmax of logits (0, x.x) makes the loss smooth; compare with backprop
  Rng rng(5);
  for (int n = 0; n < 10; ++n) {
    auto net = std::make_shared<const Network>(Network::random({3, 6, 2}, Activation::Sigmoid, rng));
    QueryOracle oracle(net, OracleAccess::ScoreAccess);
    const Vec x{rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)};
    const Vec fd = fd_gradient(oracle, x, 0, 1e-4);
    CHECK(oracle::relative_error(fd, grad_input(*net, x, 0)) < 1e-4);
  }
  auto wide = std::make_shared<const Network>(Network::random({8, 4, 2}, Activation::Tanh, rng));
  QueryOracle oracle(wide, OracleAccess::ScoreAccess);
  fd_gradient(oracle, Vec(8, 0.5), 1, 1e-4);
  CHECK(oracle.query_count() == 16);
  QueryOracle label_only(wide);
  CHECK_THROWS_AS(fd_gradient(label_only, Vec(8, 0.5), 1, 1e-4), CapabilityError);
}

TEST_CASE("finite-difference gradient of a quadratic is exact to O(h^2)") {
  // one affine layer, logits (0, z): with z = a.x the loss of class 0 is softplus(z); an analytic check
  const Vec a{0.7, -1.1, 0.4};
  auto net = std::make_shared<const Network>(oracle::linear_binary(a, 0.2));
  QueryOracle oracle(net, OracleAccess::ScoreAccess);
  const Vec x{0.3, 0.6, 0.5};
  const double z = 0.7 * 0.3 - 1.1 * 0.6 + 0.4 * 0.5 + 0.2;
  const double sigma = 1.0 / (1.0 + std::exp(-z));
  const Vec exact = a * sigma;
  CHECK(oracle::relative_error(fd_gradient(oracle, x, 0, 1e-4), exact) < 1e-6);
}

TEST_CASE("fd attack") {
  Rng rng(6);
  std::size_t agree = 0, coords = 0;
  std::size_t fd_success = 0, wb_success = 0;
  for (int n = 0; n < 50; ++n) {
    auto net = std::make_shared<const Network>(Network::random({4, 8, 2}, Activation::Sigmoid, rng));
    QueryOracle oracle(net, OracleAccess::ScoreAccess);
    const Vec x{rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)};
    const Label y = predict(*net, x);
    CHECK(fd_attack(oracle, x, y, 0.0, 1e-4).x_star == x);
    const AttackResult r = fd_attack(oracle, x, y, 0.15, 1e-4);
    const AttackResult w = fgsm(*net, x, y, 0.15);
    for (std::size_t i = 0; i < 4; ++i) {
      ++coords;
      agree += (r.x_star[i] - x[i]) * (w.x_star[i] - x[i]) > 0.0 || r.x_star[i] == w.x_star[i] ? 1 : 0;
    }
    fd_success += r.success();
    wb_success += w.success();
  }
  CHECK(static_cast<double>(agree) / static_cast<double>(coords) >= 0.95);
  CHECK(std::abs(static_cast<double>(fd_success) - static_cast<double>(wb_success)) <= 10.0);
}
