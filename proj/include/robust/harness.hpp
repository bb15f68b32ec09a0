#pragma once

// Experiment orchestration: adversarial training, per-input problem
// dispatch to attacks or verifiers, and CSV/Markdown reports whose columns
// follow the admissibility / distance / target / outcome decomposition.

#include <atomic>
#include <chrono>
#include <exception>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "robust/errors.hpp"
#include "robust/io.hpp"
#include "robust/network.hpp"
#include "robust/spec.hpp"
#include "robust/verifier.hpp"
#include "robust/whitebox.hpp"

namespace robust {

/// min over theta of the empirical mean of max_{x' in ball} loss: every epoch
/// swaps each training input for its PGD adversary under the current
/// parameters (true label, seeded random start), then takes one full-batch
/// step on the adversarial batch. eps == 0 keeps the clean inputs, which
/// makes the result identical to train().
inline TrainResult adversarial_train(const Network& net, const LabeledDataset& data, const AttackBudget& inner,
                                     const TrainOptions& opts, std::uint64_t seed, const BoxSet& box = {}) {
  if (data.empty()) throw InvalidArgument("adversarial_train: empty dataset");
  if (data.input_dim() != net.input_dim()) throw DimensionError("adversarial_train: dataset/network input dims");
  const std::vector<Vec> clean = data.inputs();
  std::vector<Label> labels;
  labels.reserve(data.size());
  for (const Sample& s : data) labels.push_back(s.label);

  Network current = net;
  std::vector<Vec> batch = clean;
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    if (inner.eps > 0.0) {
      for (std::size_t i = 0; i < clean.size(); ++i) {
        PgdOptions po;
        po.seed = seed + epoch * clean.size() + i;
        po.box = box;
        batch[i] = pgd(current, clean[i], labels[i], inner, po).x_star;
      }
    }
    apply_gradient_step(current, mean_param_grad(current, batch, labels), opts.learning_rate);
  }
  const double final_loss = mean_loss(current, data);
  return TrainResult{std::move(current), final_loss};
}

// ---------------------------------------------------------------------------
// Experiments

/// Attack methods go through solve(); the verifier methods are
/// certify-ibp, certify-enum, grid (falsification at `resolution`),
/// radius-ibp and radius-enum (certified radius, min-alpha specs).
struct ExperimentConfig {
  std::string model_path;
  std::string data_path;
  std::string spec;  // spec text or a path to a spec file
  std::string method = "pgd";
  std::optional<double> eps;  // overrides alpha from --spec
  std::size_t steps = 20;
  std::optional<double> step_size;
  std::size_t samples = kDefaultTransformSamples;
  std::uint64_t seed = 0;
  std::string out;
  std::string format = "csv";
  std::size_t jobs = 1;
  double resolution = 0.01;
  bool timing = false;
};

struct ReportRow {
  std::size_t id = 0;
  std::string admissible;
  bool admissible_ok = false;
  std::string distance;
  double mu = 0.0;
  bool distance_ok = false;
  std::string target;
  double target_value = 0.0;
  bool target_ok = false;
  std::string outcome;
  std::size_t iterations = 0;
  std::size_t gradient_evals = 0;
  std::size_t queries = 0;
  std::size_t patterns = 0;
  std::size_t grid_points = 0;
  Vec x_star;
  std::string diagnostic;
  std::optional<double> runtime_ms;
};

namespace detail {

enum class VerifierMethod { CertifyIbp, CertifyEnum, Grid, RadiusIbp, RadiusEnum };

inline std::optional<VerifierMethod> parse_verifier_method(std::string_view name) {
  if (name == "certify-ibp") return VerifierMethod::CertifyIbp;
  if (name == "certify-enum") return VerifierMethod::CertifyEnum;
  if (name == "grid") return VerifierMethod::Grid;
  if (name == "radius-ibp") return VerifierMethod::RadiusIbp;
  if (name == "radius-enum") return VerifierMethod::RadiusEnum;
  return std::nullopt;
}

inline void check_verifier_compatible(const ProblemSpec& spec, VerifierMethod m) {
  auto fail = [](const std::string& why) { throw IncompatibleMethod("verifier methods need " + why); };
  if (!std::holds_alternative<BoxSet>(spec.admissible)) fail("a box admissible set");
  const auto* lp = std::get_if<LpDistance>(&spec.distance.mu);
  if (!lp || lp->p != Norm::Linf || spec.distance.relation != Relation::AtMost) fail("distance linf <= eps");
  if (!std::holds_alternative<Untargeted>(spec.target)) fail("an untargeted target");
  const bool radius = m == VerifierMethod::RadiusIbp || m == VerifierMethod::RadiusEnum;
  if (radius && spec.mode != Mode::MinimizeAlpha) fail("mode min-alpha for radius-*");
  if (!radius && spec.mode != Mode::Decision) fail("mode decision for certify-* and grid");
}

inline ReportRow make_row(std::size_t id, const RobustnessProblem& problem, const Network& net, Vec x_star,
                          std::string outcome) {
  const Verdict v = evaluate(problem, net, x_star);
  ReportRow row;
  row.id = id;
  row.admissible = describe(problem.admissible);
  row.admissible_ok = v.admissible_ok;
  row.distance = describe(problem.distance);
  row.mu = v.mu_value;
  row.distance_ok = v.distance_ok;
  row.target = describe(problem.target);
  row.target_value = v.target_value;
  row.target_ok = v.target_ok;
  row.outcome = std::move(outcome);
  row.x_star = std::move(x_star);
  return row;
}

inline ReportRow run_verifier(std::size_t id, RobustnessProblem problem, const Network& net, VerifierMethod m,
                              double resolution) {
  const BoxSet box = std::get<BoxSet>(problem.admissible);
  const double eps = problem.distance.alpha;
  if (m == VerifierMethod::RadiusIbp || m == VerifierMethod::RadiusEnum) {
    const auto cm = m == VerifierMethod::RadiusIbp ? CertifyMethod::Ibp : CertifyMethod::Enumeration;
    problem.distance.alpha = certified_radius(net, problem.x, cm, resolution, box);
    Vec x = problem.x;
    ReportRow row = make_row(id, problem, net, std::move(x), "radius");
    row.diagnostic = "certified radius " + format_number(problem.distance.alpha);
    return row;
  }
  Certificate c;
  switch (m) {
    case VerifierMethod::CertifyIbp: c = certify_ibp(net, problem.x, eps, box); break;
    case VerifierMethod::CertifyEnum: c = certify_enumeration(net, problem.x, eps, EnumerationOptions{16, box}); break;
    default: c = grid_falsify(net, problem.x, eps, resolution, GridOptions{4'000'000, box}); break;
  }
  Vec x_star = c.witness ? *c.witness : problem.x;
  ReportRow row = make_row(id, problem, net, std::move(x_star), std::string(to_string(c.status)));
  row.patterns = c.patterns;
  row.grid_points = c.grid_points;
  row.iterations = c.propagations;
  row.diagnostic = c.diagnostic;
  return row;
}

}  // namespace detail

/// One row per dataset input, in input order. Row i of an attack uses seed
/// `cfg.seed + i`, so reports do not depend on `cfg.jobs`.
inline std::vector<ReportRow> run_experiment(const Network& net, const LabeledDataset& data, ProblemSpec spec,
                                             const ExperimentConfig& cfg) {
  if (data.empty()) throw InvalidArgument("run_experiment: empty dataset");
  if (data.input_dim() != net.input_dim()) {
    throw DimensionError("run_experiment: dataset has " + std::to_string(data.input_dim()) +
                         " features, model expects " + std::to_string(net.input_dim()));
  }
  if (cfg.eps) spec.distance.alpha = *cfg.eps;
  const auto attack = parse_method(cfg.method);
  const auto verifier = detail::parse_verifier_method(cfg.method);
  if (!attack && !verifier) throw InvalidArgument("unknown method '" + cfg.method + "'");
  if (verifier) {
    detail::check_verifier_compatible(spec, *verifier);
  } else {
    detail::check_compatible(instantiate(spec, data.inputs().front()), *attack);
  }

  const std::vector<Vec> inputs = data.inputs();
  std::vector<ReportRow> rows(inputs.size());
  std::vector<std::exception_ptr> errors(inputs.size());

  auto run_one = [&](std::size_t i) {
    const auto start = std::chrono::steady_clock::now();
    RobustnessProblem problem = instantiate(spec, inputs[i]);
    if (verifier) {
      rows[i] = detail::run_verifier(i, std::move(problem), net, *verifier, cfg.resolution);
    } else {
      SolveOptions so;
      so.steps = cfg.steps;
      so.step_size = cfg.step_size;
      so.samples = cfg.samples;
      so.seed = cfg.seed + i;
      const AttackResult r = solve(problem, net, *attack, so);
      ReportRow row = detail::make_row(i, r.problem, net, r.x_star, r.success() ? "violated" : "not-found");
      row.iterations = r.iterations;
      row.gradient_evals = r.gradient_evals;
      row.queries = r.queries;
      rows[i] = std::move(row);
    }
    if (cfg.timing) {
      rows[i].runtime_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    }
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < inputs.size(); i = next++) {
      try {
        run_one(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(cfg.jobs, inputs.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }

  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const std::exception& e) {
      throw Error("input " + std::to_string(i) + ": " + e.what());
    }
  }
  return rows;
}

inline std::vector<ReportRow> run_experiment(const ExperimentConfig& cfg) {
  const Network net = io::load_model(cfg.model_path);
  const LabeledDataset data = io::load_dataset(cfg.data_path);
  return run_experiment(net, data, io::load_spec(cfg.spec), cfg);
}

// ---------------------------------------------------------------------------
// Reports

enum class ReportFormat { Csv, Markdown };

inline ReportFormat parse_report_format(std::string_view name) {
  if (name == "csv") return ReportFormat::Csv;
  if (name == "markdown" || name == "md") return ReportFormat::Markdown;
  throw InvalidArgument("unknown report format '" + std::string(name) + "'");
}

namespace detail {

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string join_vec(const Vec& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? " " : "") + format_number(v[i]);
  return out;
}

inline const char* yes_no(bool b) { return b ? "yes" : "no"; }

inline const std::vector<std::string>& csv_header() {
  static const std::vector<std::string> h = {
      "id",      "admissible", "admissible_ok",  "distance", "mu",          "distance_ok", "target",
      "target_value", "target_ok", "outcome", "iterations", "gradient_evals", "queries", "patterns",
      "grid_points", "x_star", "diagnostic"};
  return h;
}

inline std::string md_cell(std::string s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out += '\\';
    out += c;
  }
  return out;
}

}  // namespace detail

inline std::string emit_report(const std::vector<ReportRow>& rows, ReportFormat format) {
  if (rows.empty()) throw InvalidArgument("emit_report: no rows");
  const bool timed = rows.front().runtime_ms.has_value();
  std::string out;
  if (format == ReportFormat::Csv) {
    const auto& header = detail::csv_header();
    for (std::size_t i = 0; i < header.size(); ++i) out += (i ? "," : "") + header[i];
    out += timed ? ",runtime_ms\n" : "\n";
    for (const ReportRow& r : rows) {
      std::vector<std::string> f = {std::to_string(r.id),
                                    r.admissible,
                                    detail::yes_no(r.admissible_ok),
                                    r.distance,
                                    format_number(r.mu),
                                    detail::yes_no(r.distance_ok),
                                    r.target,
                                    format_number(r.target_value),
                                    detail::yes_no(r.target_ok),
                                    r.outcome,
                                    std::to_string(r.iterations),
                                    std::to_string(r.gradient_evals),
                                    std::to_string(r.queries),
                                    std::to_string(r.patterns),
                                    std::to_string(r.grid_points),
                                    detail::join_vec(r.x_star),
                                    r.diagnostic};
      if (timed) f.push_back(r.runtime_ms ? format_number(*r.runtime_ms) : "");
      for (std::size_t i = 0; i < f.size(); ++i) out += (i ? "," : "") + detail::csv_field(f[i]);
      out += "\n";
    }
    return out;
  }

  out += "| input | x* ∈ X̃ | D(μ(x,x*), α) | A(x,x*,β) | outcome | iterations | gradient evals | queries | patterns "
         "| grid points |";
  out += timed ? " runtime (ms) |\n" : "\n";
  out += "|---|---|---|---|---|---:|---:|---:|---:|---:|";
  out += timed ? "---:|\n" : "\n";
  for (const ReportRow& r : rows) {
    std::string outcome = r.outcome;
    if (!r.diagnostic.empty()) outcome += " (" + r.diagnostic + ")";
    out += "| " + std::to_string(r.id) + " | " + detail::md_cell(r.admissible) + ": " +
           detail::yes_no(r.admissible_ok) + " | " + detail::md_cell(r.distance) + ", μ = " + format_number(r.mu) +
           ": " + detail::yes_no(r.distance_ok) + " | " + detail::md_cell(r.target) +
           ", value = " + format_number(r.target_value) + ": " + detail::yes_no(r.target_ok) + " | " +
           detail::md_cell(outcome) + " | " + std::to_string(r.iterations) + " | " +
           std::to_string(r.gradient_evals) + " | " + std::to_string(r.queries) + " | " +
           std::to_string(r.patterns) + " | " + std::to_string(r.grid_points) + " |";
    if (timed) out += " " + (r.runtime_ms ? format_number(*r.runtime_ms) : std::string()) + " |";
    out += "\n";
  }
  return out;
}

/// RFC 4180 records (quoted fields may contain commas, quotes, newlines).
inline std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
      continue;
    }
    any = true;
    if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      record.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      record.push_back(std::move(field));
      field.clear();
      records.push_back(std::move(record));
      record.clear();
      any = false;
    } else if (c != '\r') {
      field += c;
    }
  }
  if (quoted) throw ParseError("<csv>", records.size() + 1, "unterminated quoted field");
  if (any) {
    record.push_back(std::move(field));
    records.push_back(std::move(record));
  }
  return records;
}

/// Inverse of the CSV form of emit_report().
inline std::vector<ReportRow> parse_report_csv(std::string_view text, const std::string& source = "<report>") {
  const auto records = parse_csv(text);
  if (records.empty()) throw ParseError(source, 1, "empty report");
  const auto& header = detail::csv_header();
  const auto& got = records.front();
  const bool timed = got.size() == header.size() + 1 && got.back() == "runtime_ms";
  if (!timed && got != header) throw ParseError(source, 1, "not a report header");
  std::vector<ReportRow> rows;
  for (std::size_t k = 1; k < records.size(); ++k) {
    const auto& f = records[k];
    const std::size_t line = k + 1;
    if (f.size() != got.size()) throw ParseError(source, line, "expected " + std::to_string(got.size()) + " fields");
    auto num = [&](const std::string& s) {
      auto v = io::detail::to_double(s);
      if (!v) throw ParseError(source, line, "invalid number '" + s + "'");
      return *v;
    };
    auto count = [&](const std::string& s) {
      auto v = io::detail::to_count(s);
      if (!v) throw ParseError(source, line, "invalid count '" + s + "'");
      return *v;
    };
    auto flag = [&](const std::string& s) {
      if (s != "yes" && s != "no") throw ParseError(source, line, "expected yes/no, found '" + s + "'");
      return s == "yes";
    };
    ReportRow r;
    r.id = count(f[0]);
    r.admissible = f[1];
    r.admissible_ok = flag(f[2]);
    r.distance = f[3];
    r.mu = num(f[4]);
    r.distance_ok = flag(f[5]);
    r.target = f[6];
    r.target_value = num(f[7]);
    r.target_ok = flag(f[8]);
    r.outcome = f[9];
    r.iterations = count(f[10]);
    r.gradient_evals = count(f[11]);
    r.queries = count(f[12]);
    r.patterns = count(f[13]);
    r.grid_points = count(f[14]);
    std::vector<double> xs;
    for (const auto& w : robust::detail::split_words(f[15])) xs.push_back(num(w));
    r.x_star = Vec(std::move(xs));
    r.diagnostic = f[16];
    if (timed && !f[17].empty()) r.runtime_ms = num(f[17]);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace robust
