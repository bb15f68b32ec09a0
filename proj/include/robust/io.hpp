#pragma once

// Text formats: models, datasets and seeded toy-data generators.
//
// Model document (one record per line, '#' comments allowed):
//
//   robust-model 1
//   input_dim <n>
//   num_classes <k>
//   layer <rows> <cols> <activation>
//   weights <rows*cols numbers, row-major>
//   bias <rows numbers>
//   ...                      (one layer/weights/bias triple per layer)
//   end
//
// Dataset document: a "# features <n> classes <k>" header, then one
// comma-separated sample per line, features first and the integer label last.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "robust/errors.hpp"
#include "robust/network.hpp"
#include "robust/spec.hpp"
#include "robust/tensor.hpp"

namespace robust::io {

/// %.17g: enough digits to reload every double bit-exactly.
inline std::string format_exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  out << content;
  if (!out) throw Error("write to '" + path + "' failed");
}

namespace detail {

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::optional<double> to_double(std::string_view w) {
  w = trim(w);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
  if (ec != std::errc() || ptr != w.data() + w.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::optional<std::size_t> to_count(std::string_view w) {
  w = trim(w);
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
  if (ec != std::errc() || ptr != w.data() + w.size()) return std::nullopt;
  return v;
}

/// Non-empty, non-comment lines with their 1-based line numbers.
struct Lines {
  std::vector<std::pair<std::size_t, std::vector<std::string>>> records;

  explicit Lines(std::string_view text) {
    std::size_t line_no = 0;
    for (std::string_view line : split(text, '\n')) {
      ++line_no;
      if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      auto words = robust::detail::split_words(line);
      if (!words.empty()) records.emplace_back(line_no, std::move(words));
    }
  }
};

}  // namespace detail

inline std::string serialize_model(const Network& net) {
  std::string out = "robust-model 1\n";
  out += "input_dim " + std::to_string(net.input_dim()) + "\n";
  out += "num_classes " + std::to_string(net.num_classes()) + "\n";
  for (const Layer& layer : net.layers()) {
    out += "layer " + std::to_string(layer.outputs()) + " " + std::to_string(layer.inputs()) + " " +
           std::string(to_string(layer.activation)) + "\n";
    out += "weights";
    for (double v : layer.weights.values()) out += " " + format_exact(v);
    out += "\nbias";
    for (double v : layer.bias) out += " " + format_exact(v);
    out += "\n";
  }
  out += "end\n";
  return out;
}

inline Network parse_model(std::string_view text, const std::string& source = "<model>") {
  const detail::Lines lines(text);
  std::size_t i = 0;
  std::size_t last_line = 0;
  auto next = [&](std::string_view expect) -> const std::vector<std::string>& {
    if (i >= lines.records.size()) {
      throw ParseError(source, last_line + 1, "unexpected end of document, expected '" + std::string(expect) + "'");
    }
    const auto& [line, words] = lines.records[i++];
    last_line = line;
    if (words[0] != expect) {
      throw ParseError(source, line, "expected '" + std::string(expect) + "' but found '" + words[0] + "'");
    }
    return words;
  };
  auto count = [&](const std::vector<std::string>& words, std::size_t k) {
    if (k >= words.size()) throw ParseError(source, last_line, "missing count");
    auto v = detail::to_count(words[k]);
    if (!v || *v == 0) throw ParseError(source, last_line, "invalid count '" + words[k] + "'");
    return *v;
  };
  auto numbers = [&](const std::vector<std::string>& words, std::size_t expected) {
    if (words.size() - 1 != expected) {
      throw ParseError(source, last_line, "'" + words[0] + "' expects " + std::to_string(expected) +
                                              " numbers, found " + std::to_string(words.size() - 1));
    }
    std::vector<double> v;
    v.reserve(expected);
    for (std::size_t k = 1; k < words.size(); ++k) {
      auto d = detail::to_double(words[k]);
      if (!d) throw ParseError(source, last_line, "invalid number '" + words[k] + "'");
      v.push_back(*d);
    }
    return v;
  };

  const auto& header = next("robust-model");
  if (header.size() != 2 || header[1] != "1") throw ParseError(source, last_line, "unsupported model version");
  const std::size_t input_dim = count(next("input_dim"), 1);
  const std::size_t num_classes = count(next("num_classes"), 1);

  std::vector<Layer> layers;
  while (i < lines.records.size() && lines.records[i].second[0] == "layer") {
    const auto& spec = next("layer");
    if (spec.size() != 4) throw ParseError(source, last_line, "layer record needs rows, cols and activation");
    const std::size_t rows = count(spec, 1);
    const std::size_t cols = count(spec, 2);
    const auto act = parse_activation(spec[3]);
    if (!act) throw ParseError(source, last_line, "unsupported activation '" + spec[3] + "'");
    const std::size_t layer_line = last_line;
    auto w = numbers(next("weights"), rows * cols);
    auto b = numbers(next("bias"), rows);
    try {
      layers.emplace_back(Mat(rows, cols, std::move(w)), Vec(std::move(b)), *act);
    } catch (const Error& e) {
      throw ParseError(source, layer_line, e.what());
    }
  }
  next("end");
  if (i != lines.records.size()) throw ParseError(source, lines.records[i].first, "content after 'end'");
  if (layers.empty()) throw ParseError(source, last_line, "model has no layers");
  try {
    Network net(std::move(layers));
    if (net.input_dim() != input_dim) throw DimensionError("first layer does not match input_dim");
    if (net.num_classes() != num_classes) throw DimensionError("last layer does not match num_classes");
    return net;
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(source, last_line, e.what());
  }
}

inline Network load_model(const std::string& path) { return parse_model(read_file(path), path); }
inline void save_model(const Network& net, const std::string& path) { write_file(path, serialize_model(net)); }

inline std::string serialize_dataset(const LabeledDataset& data) {
  std::string out = "# features " + std::to_string(data.input_dim()) + " classes " +
                    std::to_string(data.num_classes()) + "\n";
  for (const Sample& s : data) {
    for (double v : s.input) out += format_exact(v) + ",";
    out += std::to_string(s.label) + "\n";
  }
  return out;
}

inline LabeledDataset parse_dataset(std::string_view text, const std::string& source = "<dataset>") {
  std::size_t line_no = 0;
  std::optional<LabeledDataset> data;
  for (std::string_view raw : detail::split(text, '\n')) {
    ++line_no;
    const std::string_view line = detail::trim(raw);
    if (line.empty()) continue;
    if (line.front() == '#') {
      if (data) continue;
      const auto words = robust::detail::split_words(line.substr(1));
      if (words.size() != 4 || words[0] != "features" || words[2] != "classes") {
        throw ParseError(source, line_no, "expected header '# features <n> classes <k>'");
      }
      const auto f = detail::to_count(words[1]);
      const auto k = detail::to_count(words[3]);
      if (!f || !k || *f == 0 || *k == 0) throw ParseError(source, line_no, "invalid dataset header counts");
      data.emplace(*f, *k);
      continue;
    }
    if (!data) throw ParseError(source, line_no, "sample before the '# features <n> classes <k>' header");
    const auto fields = detail::split(line, ',');
    if (fields.size() != data->input_dim() + 1) {
      throw ParseError(source, line_no, "ragged row: " + std::to_string(fields.size() - 1) + " features, expected " +
                                            std::to_string(data->input_dim()));
    }
    Vec x(data->input_dim());
    for (std::size_t j = 0; j < data->input_dim(); ++j) {
      auto v = detail::to_double(fields[j]);
      if (!v) throw ParseError(source, line_no, "invalid feature '" + std::string(fields[j]) + "'");
      x[j] = *v;
    }
    auto label = detail::to_count(fields.back());
    if (!label) throw ParseError(source, line_no, "invalid label '" + std::string(fields.back()) + "'");
    if (*label >= data->num_classes()) {
      throw ParseError(source, line_no, "label " + std::to_string(*label) + " out of range for " +
                                            std::to_string(data->num_classes()) + " classes");
    }
    data->add(std::move(x), *label);
  }
  if (!data) throw ParseError(source, line_no, "missing dataset header");
  return std::move(*data);
}

inline LabeledDataset load_dataset(const std::string& path) { return parse_dataset(read_file(path), path); }
inline void save_dataset(const LabeledDataset& data, const std::string& path) {
  write_file(path, serialize_dataset(data));
}

/// Spec text from a file if `text_or_path` names one, else the text itself.
/// `admissible finite <file>` loads the inputs of a dataset file.
inline ProblemSpec load_spec(const std::string& text_or_path, SpecParseOptions opts = {}) {
  if (!opts.load_points) {
    opts.load_points = [](const std::string& path) { return load_dataset(path).inputs(); };
  }
  std::ifstream probe(text_or_path);
  if (probe.good() && text_or_path.find(';') == std::string::npos) {
    opts.source = text_or_path;
    return parse_spec(read_file(text_or_path), opts);
  }
  return parse_spec(text_or_path, opts);
}

// ---------------------------------------------------------------------------
// Seeded toy data in the unit square

/// Axis-aligned Gaussian blobs, one per class (classes alternate), clamped
/// to [0, 1]. `spread` holds the per-feature standard deviations.
inline LabeledDataset make_blobs(std::size_t n, std::uint64_t seed, const std::vector<Vec>& centers,
                                 const Vec& spread) {
  if (centers.empty()) throw InvalidArgument("make_blobs: no centers");
  LabeledDataset data(centers.front().size(), centers.size());
  if (spread.size() != data.input_dim()) throw DimensionError("make_blobs: spread/center dims");
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const Label y = i % centers.size();
    Vec x = centers[y];
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = std::clamp(x[j] + spread[j] * rng.normal(), 0.0, 1.0);
    data.add(std::move(x), y);
  }
  return data;
}

inline LabeledDataset make_blobs(std::size_t n, std::uint64_t seed, const std::vector<Vec>& centers, double spread) {
  if (centers.empty()) throw InvalidArgument("make_blobs: no centers");
  return make_blobs(n, seed, centers, Vec(centers.front().size(), spread));
}

inline LabeledDataset make_blobs(std::size_t n, std::uint64_t seed) {
  return make_blobs(n, seed, {Vec{0.3, 0.3}, Vec{0.7, 0.7}}, 0.08);
}

/// Two interleaved half circles with Gaussian noise, scaled into [0, 1]^2.
inline LabeledDataset make_moons(std::size_t n, std::uint64_t seed, double noise = 0.05) {
  LabeledDataset data(2, 2);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const Label y = i % 2;
    const double t = std::numbers::pi * rng.uniform();
    double u = y == 0 ? std::cos(t) : 1.0 - std::cos(t);
    double v = y == 0 ? std::sin(t) : 0.5 - std::sin(t);
    u = (u + 1.0) / 3.0 + noise * rng.normal() / 3.0;
    v = (v + 0.5) / 1.5 + noise * rng.normal() / 1.5;
    data.add(Vec{std::clamp(u, 0.0, 1.0), std::clamp(v, 0.0, 1.0)}, y);
  }
  return data;
}

}  // namespace robust::io
