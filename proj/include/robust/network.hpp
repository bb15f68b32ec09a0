#pragma once

// Feedforward classifier: forward pass, cross-entropy loss, reverse-mode
// gradients, full-batch training and neuron coverage.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "robust/errors.hpp"
#include "robust/tensor.hpp"

namespace robust {

using Label = std::size_t;

enum class Activation { ReLU, Sigmoid, Tanh, Identity };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::ReLU: return "relu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Tanh: return "tanh";
    case Activation::Identity: return "identity";
  }
  return "?";
}

inline std::optional<Activation> parse_activation(std::string_view name) {
  if (name == "relu") return Activation::ReLU;
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "tanh") return Activation::Tanh;
  if (name == "identity" || name == "linear") return Activation::Identity;
  return std::nullopt;
}

inline double activate(Activation a, double z) {
  switch (a) {
    case Activation::ReLU: return z > 0.0 ? z : 0.0;
    case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-z));
    case Activation::Tanh: return std::tanh(z);
    case Activation::Identity: return z;
  }
  return z;
}

/// Derivative from the pre-activation z and post-activation a. ReLU'(0) = 0.
inline double activate_derivative(Activation act, double z, double a) {
  switch (act) {
    case Activation::ReLU: return z > 0.0 ? 1.0 : 0.0;
    case Activation::Sigmoid: return a * (1.0 - a);
    case Activation::Tanh: return 1.0 - a * a;
    case Activation::Identity: return 1.0;
  }
  return 1.0;
}

struct Layer {
  Mat weights;  // rows = outputs, cols = inputs
  Vec bias;
  Activation activation = Activation::Identity;

  Layer(Mat w, Vec b, Activation act) : weights(std::move(w)), bias(std::move(b)), activation(act) {
    if (bias.size() != weights.rows()) {
      throw DimensionError("layer bias length " + std::to_string(bias.size()) + " != rows " +
                           std::to_string(weights.rows()));
    }
  }

  std::size_t inputs() const noexcept { return weights.cols(); }
  std::size_t outputs() const noexcept { return weights.rows(); }

  friend bool operator==(const Layer&, const Layer&) = default;
};

class Network {
 public:
  explicit Network(std::vector<Layer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw InvalidArgument("network needs at least one layer");
    for (std::size_t k = 1; k < layers_.size(); ++k) {
      if (layers_[k].inputs() != layers_[k - 1].outputs()) {
        throw DimensionError("layer " + std::to_string(k) + " expects " +
                             std::to_string(layers_[k].inputs()) + " inputs but layer " +
                             std::to_string(k - 1) + " produces " +
                             std::to_string(layers_[k - 1].outputs()));
      }
    }
  }

  /// Layer widths `dims` = {input, hidden..., classes}; hidden layers use
  /// `hidden`, the output layer is Identity. Uniform Glorot initialization.
  static Network random(std::span<const std::size_t> dims, Activation hidden, Rng& rng) {
    if (dims.size() < 2) throw InvalidArgument("Network::random needs input and output widths");
    std::vector<Layer> layers;
    for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
      const std::size_t in = dims[k];
      const std::size_t out = dims[k + 1];
      const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
      Mat w(out, in);
      for (double& v : w.values()) v = rng.uniform(-limit, limit);
      Vec b(out);
      for (double& v : b) v = rng.uniform(-0.1, 0.1);
      const bool last = k + 2 == dims.size();
      layers.emplace_back(std::move(w), std::move(b), last ? Activation::Identity : hidden);
    }
    return Network(std::move(layers));
  }

  static Network random(std::initializer_list<std::size_t> dims, Activation hidden, Rng& rng) {
    const std::vector<std::size_t> v(dims);
    return random(std::span<const std::size_t>(v), hidden, rng);
  }

  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::vector<Layer>& layers() noexcept { return layers_; }
  std::size_t input_dim() const noexcept { return layers_.front().inputs(); }
  std::size_t num_classes() const noexcept { return layers_.back().outputs(); }

  std::size_t hidden_units() const noexcept {
    std::size_t n = 0;
    for (std::size_t k = 0; k + 1 < layers_.size(); ++k) n += layers_[k].outputs();
    return n;
  }

  friend bool operator==(const Network&, const Network&) = default;

 private:
  std::vector<Layer> layers_;
};

struct Prediction {
  Vec logits;
  Vec probabilities;
  Label label = 0;
};

/// Lowest index wins ties.
inline Label argmax(const Vec& v) {
  if (v.empty()) throw DimensionError("argmax of empty vector");
  Label best = 0;
  for (Label i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

inline Vec softmax(const Vec& logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  Vec p(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    total += p[i];
  }
  p *= 1.0 / total;
  return p;
}

inline double log_softmax_at(const Vec& logits, Label y) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double z : logits) total += std::exp(z - m);
  return logits[y] - m - std::log(total);
}

/// Pre- and post-activation values for every layer; post[0] is the input.
struct Trace {
  std::vector<Vec> pre;
  std::vector<Vec> post;

  const Vec& logits() const { return post.back(); }
};

inline void require_input(const Network& net, const Vec& x) {
  if (x.size() != net.input_dim()) {
    throw DimensionError("input has " + std::to_string(x.size()) + " entries, network expects " +
                         std::to_string(net.input_dim()));
  }
}

inline void require_class(const Network& net, Label y) {
  if (y >= net.num_classes()) {
    throw InvalidArgument("class " + std::to_string(y) + " out of range for " +
                          std::to_string(net.num_classes()) + " classes");
  }
}

inline Trace trace(const Network& net, const Vec& x) {
  require_input(net, x);
  Trace t;
  t.post.reserve(net.layers().size() + 1);
  t.pre.reserve(net.layers().size());
  t.post.push_back(x);
  for (const Layer& layer : net.layers()) {
    Vec z = matvec(layer.weights, t.post.back());
    z += layer.bias;
    Vec a(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) a[i] = activate(layer.activation, z[i]);
    t.pre.push_back(std::move(z));
    t.post.push_back(std::move(a));
  }
  if (!all_finite(t.logits())) throw Error("forward pass produced non-finite logits");
  return t;
}

inline Prediction forward(const Network& net, const Vec& x) {
  Trace t = trace(net, x);
  Prediction p;
  p.logits = std::move(t.post.back());
  p.probabilities = softmax(p.logits);
  p.label = argmax(p.logits);
  return p;
}

inline Label predict(const Network& net, const Vec& x) { return argmax(trace(net, x).logits()); }

inline constexpr double kProbabilityFloor = 1e-12;

/// Cross-entropy from logits, with the probability clamped at 1e-12.
inline double cross_entropy(const Vec& logits, Label y) {
  const double nll = -log_softmax_at(logits, y);
  return std::clamp(nll, 0.0, -std::log(kProbabilityFloor));
}

inline double loss(const Network& net, const Vec& x, Label y) {
  require_class(net, y);
  return cross_entropy(trace(net, x).logits(), y);
}

struct LayerGrad {
  Mat weights;
  Vec bias;
};

using ParamGrad = std::vector<LayerGrad>;

namespace detail {

/// Backpropagates dL/dlogits through the trace. Accumulates parameter
/// gradients into `params` when non-null; returns dL/dx.
inline Vec backprop(const Network& net, const Trace& t, Vec upstream, ParamGrad* params) {
  const auto& layers = net.layers();
  for (std::size_t k = layers.size(); k-- > 0;) {
    const Layer& layer = layers[k];
    Vec delta(upstream.size());
    for (std::size_t i = 0; i < delta.size(); ++i) {
      delta[i] = upstream[i] * activate_derivative(layer.activation, t.pre[k][i], t.post[k + 1][i]);
    }
    if (params != nullptr) {
      LayerGrad& g = (*params)[k];
      const Vec& in = t.post[k];
      for (std::size_t r = 0; r < layer.outputs(); ++r) {
        if (delta[r] == 0.0) continue;
        for (std::size_t c = 0; c < layer.inputs(); ++c) g.weights(r, c) += delta[r] * in[c];
        g.bias[r] += delta[r];
      }
    }
    upstream = matvec_transposed(layer.weights, delta);
  }
  return upstream;
}

/// dCE/dlogits = softmax(logits) - onehot(y)
inline Vec cross_entropy_logit_grad(const Vec& logits, Label y) {
  Vec g = softmax(logits);
  g[y] -= 1.0;
  return g;
}

inline ParamGrad zero_param_grad(const Network& net) {
  ParamGrad g;
  g.reserve(net.layers().size());
  for (const Layer& layer : net.layers()) {
    g.push_back(LayerGrad{Mat(layer.outputs(), layer.inputs()), Vec(layer.outputs())});
  }
  return g;
}

}  // namespace detail

inline Vec grad_input(const Network& net, const Vec& x, Label y) {
  require_class(net, y);
  const Trace t = trace(net, x);
  return detail::backprop(net, t, detail::cross_entropy_logit_grad(t.logits(), y), nullptr);
}

/// Gradient of a single logit with respect to the input.
inline Vec grad_logit(const Network& net, const Vec& x, Label k) {
  require_class(net, k);
  const Trace t = trace(net, x);
  Vec seed(net.num_classes());
  seed[k] = 1.0;
  return detail::backprop(net, t, std::move(seed), nullptr);
}

/// Gradient of an arbitrary linear functional of the logits.
inline Vec grad_logit_combination(const Network& net, const Vec& x, const Vec& coefficients) {
  if (coefficients.size() != net.num_classes()) throw DimensionError("logit coefficient size");
  const Trace t = trace(net, x);
  return detail::backprop(net, t, coefficients, nullptr);
}

inline ParamGrad grad_params(const Network& net, const Vec& x, Label y) {
  require_class(net, y);
  const Trace t = trace(net, x);
  ParamGrad g = detail::zero_param_grad(net);
  detail::backprop(net, t, detail::cross_entropy_logit_grad(t.logits(), y), &g);
  return g;
}

inline double param_grad_norm(const ParamGrad& g) {
  double acc = 0.0;
  for (const LayerGrad& lg : g) {
    for (double v : lg.weights.values()) acc += v * v;
    for (double v : lg.bias) acc += v * v;
  }
  return std::sqrt(acc);
}

struct Sample {
  Vec input;
  Label label = 0;
};

class LabeledDataset {
 public:
  LabeledDataset(std::size_t input_dim, std::size_t num_classes)
      : input_dim_(input_dim), num_classes_(num_classes) {
    if (input_dim == 0 || num_classes == 0) throw InvalidArgument("dataset needs positive dims");
  }

  void add(Vec input, Label label) {
    if (input.size() != input_dim_) {
      throw DimensionError("sample has " + std::to_string(input.size()) + " features, dataset " +
                           std::to_string(input_dim_));
    }
    if (label >= num_classes_) {
      throw InvalidArgument("label " + std::to_string(label) + " out of range");
    }
    samples_.push_back(Sample{std::move(input), label});
  }

  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t num_classes() const noexcept { return num_classes_; }
  std::size_t size() const noexcept { return samples_.size(); }
  bool empty() const noexcept { return samples_.empty(); }
  const Sample& operator[](std::size_t i) const noexcept { return samples_[i]; }
  const std::vector<Sample>& samples() const noexcept { return samples_; }
  auto begin() const noexcept { return samples_.begin(); }
  auto end() const noexcept { return samples_.end(); }

  std::vector<Vec> inputs() const {
    std::vector<Vec> out;
    out.reserve(samples_.size());
    for (const Sample& s : samples_) out.push_back(s.input);
    return out;
  }

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;

 private:
  std::size_t input_dim_;
  std::size_t num_classes_;
  std::vector<Sample> samples_;
};

inline double mean_loss(const Network& net, const LabeledDataset& data) {
  if (data.empty()) throw InvalidArgument("mean_loss: empty dataset");
  double total = 0.0;
  for (const Sample& s : data) total += loss(net, s.input, s.label);
  return total / static_cast<double>(data.size());
}

inline double accuracy(const Network& net, const LabeledDataset& data) {
  if (data.empty()) throw InvalidArgument("accuracy: empty dataset");
  std::size_t hits = 0;
  for (const Sample& s : data) hits += predict(net, s.input) == s.label ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

/// Gradient of the mean loss over `inputs`/`labels`.
inline ParamGrad mean_param_grad(const Network& net, std::span<const Vec> inputs,
                                 std::span<const Label> labels) {
  ParamGrad g = detail::zero_param_grad(net);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    require_class(net, labels[i]);
    const Trace t = trace(net, inputs[i]);
    detail::backprop(net, t, detail::cross_entropy_logit_grad(t.logits(), labels[i]), &g);
  }
  const double scale = 1.0 / static_cast<double>(inputs.size());
  for (LayerGrad& lg : g) {
    for (double& v : lg.weights.values()) v *= scale;
    lg.bias *= scale;
  }
  return g;
}

inline void apply_gradient_step(Network& net, const ParamGrad& g, double learning_rate) {
  for (std::size_t k = 0; k < net.layers().size(); ++k) {
    Layer& layer = net.layers()[k];
    auto& w = layer.weights.values();
    const auto& gw = g[k].weights.values();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= learning_rate * gw[i];
    for (std::size_t i = 0; i < layer.bias.size(); ++i) layer.bias[i] -= learning_rate * g[k].bias[i];
  }
}

struct TrainOptions {
  std::size_t epochs = 100;
  double learning_rate = 0.1;
};

struct TrainResult {
  Network network;
  double final_mean_loss = 0.0;
};

/// Full-batch gradient descent on the mean cross-entropy.
inline TrainResult train(const Network& net, const LabeledDataset& data, const TrainOptions& opts) {
  if (data.empty()) throw InvalidArgument("train: empty dataset");
  if (data.input_dim() != net.input_dim()) throw DimensionError("train: dataset/network input dims");
  std::vector<Vec> inputs = data.inputs();
  std::vector<Label> labels;
  labels.reserve(data.size());
  for (const Sample& s : data) labels.push_back(s.label);

  Network current = net;
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    apply_gradient_step(current, mean_param_grad(current, inputs, labels), opts.learning_rate);
  }
  const double final_loss = mean_loss(current, data);
  return TrainResult{std::move(current), final_loss};
}

/// Fraction of hidden units whose post-activation exceeds `threshold` on at
/// least one input. The output layer is not counted.
inline double neuron_coverage(const Network& net, std::span<const Vec> inputs, double threshold) {
  if (inputs.empty()) throw InvalidArgument("neuron_coverage: no inputs");
  const std::size_t hidden = net.hidden_units();
  if (hidden == 0) throw InvalidArgument("neuron_coverage: network has no hidden units");
  std::vector<bool> covered(hidden, false);
  for (const Vec& x : inputs) {
    const Trace t = trace(net, x);
    std::size_t offset = 0;
    for (std::size_t k = 0; k + 1 < net.layers().size(); ++k) {
      const Vec& a = t.post[k + 1];
      for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] > threshold) covered[offset + i] = true;
      }
      offset += a.size();
    }
  }
  const auto n = std::count(covered.begin(), covered.end(), true);
  return static_cast<double>(n) / static_cast<double>(hidden);
}

inline double neuron_coverage(const Network& net, const Vec& x, double threshold) {
  return neuron_coverage(net, std::span<const Vec>(&x, 1), threshold);
}

}  // namespace robust
