#include <catch_amalgamated.hpp>

#include <filesystem>

#include "robust/io.hpp"

using namespace robust;

namespace {

std::size_t parse_error_line(auto&& fn) {
  try {
    fn();
  } catch (const ParseError& e) {
    return e.line();
  }
  FAIL("no ParseError thrown");
  return 0;
}

}  // namespace

TEST_CASE("model files round-trip bit-exactly") {
  Rng rng(51);
  const Network net = Network::random({3, 7, 5, 4}, Activation::Tanh, rng);
  const Network back = io::parse_model(io::serialize_model(net));
  CHECK(back == net);
  for (int n = 0; n < 20; ++n) {
    const Vec x{rng.uniform(), rng.uniform(), rng.uniform()};
    CHECK(forward(back, x).logits == forward(net, x).logits);
  }
  const auto path = std::filesystem::temp_directory_path() / "robust_test_io_model.txt";
  io::save_model(net, path.string());
  CHECK(io::load_model(path.string()) == net);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(io::load_model(path.string()), Error);
}

TEST_CASE("model parse errors carry line numbers") {
  const std::string good =
      "robust-model 1\n"
      "input_dim 2\n"
      "num_classes 2\n"
      "layer 2 2 relu\n"
      "weights 1 0 0 1\n"
      "bias 0 0\n"
      "end\n";
  CHECK(io::parse_model(good).input_dim() == 2);

  // truncated after the weights
  const std::string truncated = good.substr(0, good.find("bias"));
  CHECK(parse_error_line([&] { io::parse_model(truncated); }) == 6);
  CHECK_THROWS_WITH(io::parse_model(truncated), Catch::Matchers::ContainsSubstring("unexpected end"));

  std::string relu6 = good;
  relu6.replace(relu6.find("relu"), 4, "relu6");
  CHECK(parse_error_line([&] { io::parse_model(relu6); }) == 4);
  CHECK_THROWS_WITH(io::parse_model(relu6), Catch::Matchers::ContainsSubstring("unsupported activation 'relu6'"));

  std::string short_weights = good;
  short_weights.replace(short_weights.find("weights 1 0 0 1"), 15, "weights 1 0 0");
  CHECK(parse_error_line([&] { io::parse_model(short_weights); }) == 5);

  std::string wrong_dim = good;
  wrong_dim.replace(wrong_dim.find("input_dim 2"), 11, "input_dim 3");
  CHECK_THROWS_AS(io::parse_model(wrong_dim), ParseError);

  CHECK(parse_error_line([&] { io::parse_model(good + "layer 1 1 relu\n"); }) == 8);
  CHECK(parse_error_line([&] { io::parse_model("robust-model 2\n"); }) == 1);
  CHECK(parse_error_line([&] { io::parse_model("# only a comment\n\n"); }) == 1);
}

TEST_CASE("dataset files") {
  const std::string text =
      "# features 2 classes 3\n"
      "0.1,0.2,0\n"
      "\n"
      "0.3,0.4,1\n"
      "# trailing comments are fine\n"
      "0.5,0.6,2\n"
      "0.7,0.8,0\n";
  const LabeledDataset d = io::parse_dataset(text);
  REQUIRE(d.size() == 4);
  CHECK(d.input_dim() == 2);
  CHECK(d.num_classes() == 3);
  CHECK(d[1].input == Vec{0.3, 0.4});
  CHECK(d[2].label == 2);
  CHECK(io::parse_dataset(io::serialize_dataset(d)).inputs() == d.inputs());

  std::string ragged = text;
  ragged.replace(ragged.find("0.5,0.6,2"), 9, "0.5,2");
  CHECK(parse_error_line([&] { io::parse_dataset(ragged); }) == 6);
  CHECK_THROWS_WITH(io::parse_dataset(ragged), Catch::Matchers::ContainsSubstring("ragged"));

  std::string bad_label = text;
  bad_label.replace(bad_label.find("0.7,0.8,0"), 9, "0.7,0.8,3");
  CHECK(parse_error_line([&] { io::parse_dataset(bad_label); }) == 7);
  CHECK_THROWS_WITH(io::parse_dataset(bad_label), Catch::Matchers::ContainsSubstring("out of range"));

  CHECK(parse_error_line([&] { io::parse_dataset("0.1,0.2,0\n"); }) == 1);
  CHECK_THROWS_AS(io::parse_dataset(""), ParseError);
}

TEST_CASE("generators are deterministic") {
  CHECK(io::serialize_dataset(io::make_blobs(100, 7)) == io::serialize_dataset(io::make_blobs(100, 7)));
  CHECK(io::serialize_dataset(io::make_blobs(100, 7)) != io::serialize_dataset(io::make_blobs(100, 8)));
  CHECK(io::serialize_dataset(io::make_moons(100, 7)) == io::serialize_dataset(io::make_moons(100, 7)));
  const LabeledDataset b = io::make_blobs(101, 3);
  CHECK(b.size() == 101);
  std::size_t ones = 0;
  for (const Sample& s : b) {
    ones += s.label;
    for (double v : s.input) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  CHECK(ones == 50);
}

TEST_CASE("spec loading from text, file and dataset") {
  const ProblemSpec inline_spec = io::load_spec("admissible box 0 1; distance linf <= 0.1; target untargeted");
  CHECK(inline_spec.distance.alpha == 0.1);

  const auto dir = std::filesystem::temp_directory_path() / "robust_test_io_spec";
  std::filesystem::create_directories(dir);
  io::save_dataset(io::make_blobs(6, 1), (dir / "pts.csv").string());
  io::write_file((dir / "s.txt").string(),
                 "admissible finite " + (dir / "pts.csv").string() + "\ndistance l2 <= 0.5\ntarget untargeted\n");
  const ProblemSpec from_file = io::load_spec((dir / "s.txt").string());
  const auto* finite = std::get_if<FiniteSet>(&from_file.admissible);
  REQUIRE(finite != nullptr);
  CHECK(finite->points.size() == 6);
  std::filesystem::remove_all(dir);
}
