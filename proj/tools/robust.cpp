// robust: command-line front end for attacks, verification, substitute
// training, (adversarial) training, toy-data generation and reports.
//
// Exit status is 0 when the run completed, whatever the robustness outcome;
// 1 on any error (bad input, incompatible spec/method, module failure).

#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "robust/blackbox.hpp"
#include "robust/harness.hpp"
#include "robust/io.hpp"

namespace {

using namespace robust;

void write_output(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
  } else {
    io::write_file(path, content);
  }
}

Network fresh_network(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t classes,
                      const std::string& activation, std::uint64_t seed) {
  const auto act = parse_activation(activation);
  if (!act) throw UnsupportedActivation("unsupported activation '" + activation + "'");
  std::vector<std::size_t> dims{in};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(classes);
  Rng rng(seed);
  return Network::random(dims, *act, rng);
}

struct TrainFlags {
  std::string data;
  std::string out;
  std::vector<std::size_t> hidden{16};
  std::string activation = "relu";
  std::size_t epochs = 500;
  double lr = 0.5;
  std::uint64_t seed = 0;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--data", f.data, "training dataset")->required();
  cmd->add_option("--out", f.out, "model output path")->required();
  cmd->add_option("--hidden", f.hidden, "hidden layer widths")->delimiter(',');
  cmd->add_option("--activation", f.activation, "hidden activation (relu, sigmoid, tanh, identity)");
  cmd->add_option("--epochs", f.epochs, "full-batch gradient steps");
  cmd->add_option("--lr", f.lr, "learning rate");
  cmd->add_option("--seed", f.seed, "initialization seed");
}

void report_training(const Network& net, const LabeledDataset& data, double final_loss) {
  std::printf("final mean loss %s, training accuracy %s\n", format_number(final_loss).c_str(),
              format_number(accuracy(net, data)).c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"robustness problems: attacks, verifiers and reports"};
  app.require_subcommand(1);

  // attack / certify share the experiment flags
  ExperimentConfig attack_cfg;
  ExperimentConfig certify_cfg;
  certify_cfg.method = "certify-ibp";
  double eps = 0.0;
  double step_size = 0.0;
  auto add_experiment = [&](const std::string& name, const std::string& help, ExperimentConfig& cfg) {
    CLI::App* cmd = app.add_subcommand(name, help);
    cmd->add_option("--model", cfg.model_path, "model file")->required();
    cmd->add_option("--data", cfg.data_path, "dataset whose inputs are the anchors x")->required();
    cmd->add_option("--spec", cfg.spec, "spec text or spec file")->required();
    cmd->add_option("--method", cfg.method, "method name");
    cmd->add_option("--eps", eps, "override alpha from --spec");
    cmd->add_option("--steps", cfg.steps, "attack iterations");
    cmd->add_option("--step-size", step_size, "attack step size (default 2.5 * eps / steps)");
    cmd->add_option("--samples", cfg.samples, "Monte Carlo samples");
    cmd->add_option("--seed", cfg.seed, "base seed (row i uses seed + i)");
    cmd->add_option("--out", cfg.out, "report path (default stdout)");
    cmd->add_option("--format", cfg.format, "csv or markdown");
    cmd->add_option("--jobs", cfg.jobs, "worker threads");
    cmd->add_option("--resolution", cfg.resolution, "grid / radius resolution");
    cmd->add_flag("--timing", cfg.timing, "add a runtime column (makes reports run-dependent)");
    return cmd;
  };
  CLI::App* attack = add_experiment("attack", "run an attack on every dataset input", attack_cfg);
  attack->get_option("--method")->description("fgsm, pgd, deepfool, min-pert, eot, coverage");
  CLI::App* certify = add_experiment("certify", "run a verifier on every dataset input", certify_cfg);
  certify->get_option("--method")->description("certify-ibp, certify-enum, grid, radius-ibp, radius-enum");

  TrainFlags train_flags;
  CLI::App* train_cmd = app.add_subcommand("train", "train a fresh network by full-batch gradient descent");
  add_train_flags(train_cmd, train_flags);

  TrainFlags adv_flags;
  double adv_eps = 0.1;
  std::size_t adv_steps = 10;
  double adv_step = 0.0;
  CLI::App* adv_cmd = app.add_subcommand("adv-train", "train a fresh network on PGD adversaries");
  add_train_flags(adv_cmd, adv_flags);
  adv_cmd->add_option("--eps", adv_eps, "inner Linf budget");
  adv_cmd->add_option("--steps", adv_steps, "inner PGD steps");
  adv_cmd->add_option("--step-size", adv_step, "inner PGD step size (default 2.5 * eps / steps)");

  std::string sub_model, sub_data, sub_out;
  SubstituteConfig sub_cfg;
  std::string sub_activation = "relu";
  CLI::App* sub_cmd = app.add_subcommand("substitute", "train a substitute through label queries");
  sub_cmd->add_option("--model", sub_model, "oracle model (only queried for labels)")->required();
  sub_cmd->add_option("--data", sub_data, "dataset whose inputs seed the substitute")->required();
  sub_cmd->add_option("--out", sub_out, "substitute model output path")->required();
  sub_cmd->add_option("--rounds", sub_cfg.rounds, "augmentation rounds");
  sub_cmd->add_option("--lambda", sub_cfg.lambda, "augmentation step");
  sub_cmd->add_option("--hidden", sub_cfg.hidden, "hidden layer widths")->delimiter(',');
  sub_cmd->add_option("--activation", sub_activation, "hidden activation");
  sub_cmd->add_option("--epochs", sub_cfg.training.epochs, "training epochs per round");
  sub_cmd->add_option("--lr", sub_cfg.training.learning_rate, "learning rate");
  sub_cmd->add_option("--seed", sub_cfg.seed, "initialization seed");

  std::string gen_kind = "blobs";
  std::size_t gen_n = 200;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  CLI::App* gen_cmd = app.add_subcommand("generate", "write a seeded toy dataset");
  gen_cmd->add_option("--kind", gen_kind, "blobs or moons");
  gen_cmd->add_option("--n", gen_n, "number of samples");
  gen_cmd->add_option("--seed", gen_seed, "generator seed");
  gen_cmd->add_option("--out", gen_out, "output path (default stdout)");

  std::string rep_in, rep_out, rep_format = "markdown";
  CLI::App* rep_cmd = app.add_subcommand("report", "re-render a CSV report");
  rep_cmd->add_option("--in", rep_in, "CSV report")->required();
  rep_cmd->add_option("--format", rep_format, "csv or markdown");
  rep_cmd->add_option("--out", rep_out, "output path (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    for (auto [cmd, cfg_ptr] : {std::pair{attack, &attack_cfg}, std::pair{certify, &certify_cfg}}) {
      if (!cmd->parsed()) continue;
      ExperimentConfig& cfg = *cfg_ptr;
      if (cmd->count("--eps")) cfg.eps = eps;
      if (cmd->count("--step-size")) cfg.step_size = step_size;
      const bool is_attack = parse_method(cfg.method).has_value();
      if (cmd == attack && !is_attack) throw InvalidArgument("'" + cfg.method + "' is not an attack method");
      if (cmd == certify && is_attack) throw InvalidArgument("'" + cfg.method + "' is not a verifier method");
      const ReportFormat format = parse_report_format(cfg.format);
      write_output(cfg.out, emit_report(run_experiment(cfg), format));
    }

    if (train_cmd->parsed() || adv_cmd->parsed()) {
      const bool adversarial = adv_cmd->parsed();
      const TrainFlags& f = adversarial ? adv_flags : train_flags;
      const LabeledDataset data = io::load_dataset(f.data);
      const Network init = fresh_network(data.input_dim(), f.hidden, data.num_classes(), f.activation, f.seed);
      const TrainOptions opts{f.epochs, f.lr};
      TrainResult r = [&] {
        if (!adversarial) return train(init, data, opts);
        const AttackBudget inner = adv_cmd->count("--step-size") ? AttackBudget(adv_eps, adv_steps, adv_step)
                                                                  : AttackBudget::with_default_step(adv_eps, adv_steps);
        return adversarial_train(init, data, inner, opts, f.seed);
      }();
      io::save_model(r.network, f.out);
      report_training(r.network, data, r.final_mean_loss);
    }

    if (sub_cmd->parsed()) {
      const auto act = parse_activation(sub_activation);
      if (!act) throw UnsupportedActivation("unsupported activation '" + sub_activation + "'");
      sub_cfg.activation = *act;
      QueryOracle oracle(std::make_shared<const Network>(io::load_model(sub_model)));
      const LabeledDataset seeds = io::load_dataset(sub_data);
      const SubstituteResult r = train_substitute(oracle, seeds.inputs(), sub_cfg);
      io::save_model(r.substitute, sub_out);
      std::size_t agree = 0;
      for (const Sample& s : seeds) agree += predict(r.substitute, s.input) == oracle.label(s.input) ? 1 : 0;
      std::printf("oracle queries %zu, augmented points %zu, agreement on seeds %zu/%zu\n", r.queries_used,
                  r.dataset_size, agree, seeds.size());
    }

    if (gen_cmd->parsed()) {
      LabeledDataset data = [&] {
        if (gen_kind == "blobs") return io::make_blobs(gen_n, gen_seed);
        if (gen_kind == "moons") return io::make_moons(gen_n, gen_seed);
        throw InvalidArgument("unknown dataset kind '" + gen_kind + "'");
      }();
      write_output(gen_out, io::serialize_dataset(data));
    }

    if (rep_cmd->parsed()) {
      const auto rows = parse_report_csv(io::read_file(rep_in), rep_in);
      write_output(rep_out, emit_report(rows, parse_report_format(rep_format)));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
