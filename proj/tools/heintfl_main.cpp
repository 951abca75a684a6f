// Experiment runner: seeded federated training with interleaved selective
// encryption, gradient-inversion attacks against run artifacts, and report
// generation over finished runs.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "heintfl/experiment.hpp"

namespace {

using heintfl::exp::ExperimentConfig;

void apply_train_overrides(CLI::App* cmd, ExperimentConfig& config) {
  cmd->add_option("--source", config.source, "dataset source: toy | cifar10");
  cmd->add_option("--cifar-train", config.cifar_train, "CIFAR-10 training batch (binary)");
  cmd->add_option("--cifar-test", config.cifar_test, "CIFAR-10 test batch (binary)");
  cmd->add_option("--toy-classes", config.toy_classes);
  cmd->add_option("--toy-train-per-class", config.toy_train_per_class);
  cmd->add_option("--toy-test-per-class", config.toy_test_per_class);
  cmd->add_option("--toy-size", config.toy_size);
  cmd->add_option("--toy-noise", config.toy_noise);
  cmd->add_option("--clients", config.clients, "number of federated clients");
  cmd->add_option("--alpha", config.alpha, "Dirichlet concentration for the authentic split");
  cmd->add_option("--model", config.model, "model spec: lenet | toy-cnn | mlp | mlp:h1,h2");
  cmd->add_option("--local-epochs", config.local_epochs);
  cmd->add_option("--batch-size", config.batch_size);
  cmd->add_option("--lr", config.lr);
  cmd->add_option("--eta", config.eta, "encryption ratio in [0,1]");
  cmd->add_option("--modulus-bits", config.modulus_bits);
  cmd->add_option("--rho-syn", config.rho_syn, "synthetic rounds per period");
  cmd->add_option("--rho-tot", config.rho_tot, "rounds per interleaving period");
  cmd->add_option("--repetitions", config.repetitions);
  cmd->add_option("--seed", config.master_seed, "master seed");
  cmd->add_option("--max-rounds", config.max_rounds);
  cmd->add_option("--output-dir", config.output_dir);
  cmd->add_option("--name", config.name, "run name (directory component)");
  cmd->add_option("--trace-rounds", config.trace_rounds,
                  "rounds whose messages are kept for attacks")
      ->delimiter(',');
  cmd->add_option("--snapshot-rounds", config.snapshot_rounds)->delimiter(',');
  cmd->add_flag("--parallel", config.parallel_clients, "run clients on threads");
  cmd->add_option("--stop-rule", config.stop_rule, "fixed | convergence");
  cmd->add_option("--window", config.window, "convergence smoothing window");
  cmd->add_option("--epsilon", config.epsilon, "convergence improvement threshold [%]");
  cmd->add_option("--patience", config.patience, "non-improving rounds before stopping");
}

int error_record(const std::string& kind, const std::string& message) {
  nlohmann::ordered_json err;
  err["error"] = kind;
  err["message"] = message;
  std::cerr << err.dump() << std::endl;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"heintfl - interleaved federated learning with selective homomorphic encryption"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "run seeded federated training repetitions");
  std::string config_path;
  train->add_option("--config", config_path, "experiment config INI (flags override)");
  ExperimentConfig config;
  apply_train_overrides(train, config);

  // attack
  auto* attack = app.add_subcommand("attack", "gradient-inversion attack on run artifacts");
  std::string rep_dir;
  std::vector<std::int64_t> attack_rounds;
  int images_per_class = 10;
  std::uint64_t attack_seed = 7;
  int dlg_iterations = 400;
  double dlg_step = 0.08;
  attack->add_option("run_dir", rep_dir, "repetition directory (e.g. runs/exp/rep_000)")
      ->required();
  attack->add_option("--rounds", attack_rounds, "traced rounds to attack")
      ->delimiter(',')
      ->required();
  attack->add_option("--images-per-class", images_per_class);
  attack->add_option("--seed", attack_seed);
  attack->add_option("--iterations", dlg_iterations, "descent iterations per attacked image");
  attack->add_option("--step", dlg_step, "descent step size");

  // report
  auto* report = app.add_subcommand("report", "aggregate finished runs into a cost/accuracy table");
  std::vector<std::string> report_dirs;
  std::string baseline_dir;
  std::string report_out = "report";
  report->add_option("run_dirs", report_dirs, "experiment directories (each with rep_* inside)")
      ->required();
  report->add_option("--baseline", baseline_dir, "directory of the baseline configuration")
      ->required();
  report->add_option("--out", report_out, "report output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      if (!config_path.empty()) {
        // file first, explicitly passed flags override it
        const ExperimentConfig flags = config;
        config = heintfl::exp::load_config(config_path);
        auto merge = [&](const CLI::Option* opt, auto& dst, const auto& src) {
          if (opt && opt->count() > 0) dst = src;
        };
        merge(train->get_option("--source"), config.source, flags.source);
        merge(train->get_option("--cifar-train"), config.cifar_train, flags.cifar_train);
        merge(train->get_option("--cifar-test"), config.cifar_test, flags.cifar_test);
        merge(train->get_option("--toy-classes"), config.toy_classes, flags.toy_classes);
        merge(train->get_option("--toy-train-per-class"), config.toy_train_per_class,
              flags.toy_train_per_class);
        merge(train->get_option("--toy-test-per-class"), config.toy_test_per_class,
              flags.toy_test_per_class);
        merge(train->get_option("--toy-size"), config.toy_size, flags.toy_size);
        merge(train->get_option("--toy-noise"), config.toy_noise, flags.toy_noise);
        merge(train->get_option("--clients"), config.clients, flags.clients);
        merge(train->get_option("--alpha"), config.alpha, flags.alpha);
        merge(train->get_option("--model"), config.model, flags.model);
        merge(train->get_option("--local-epochs"), config.local_epochs, flags.local_epochs);
        merge(train->get_option("--batch-size"), config.batch_size, flags.batch_size);
        merge(train->get_option("--lr"), config.lr, flags.lr);
        merge(train->get_option("--eta"), config.eta, flags.eta);
        merge(train->get_option("--modulus-bits"), config.modulus_bits, flags.modulus_bits);
        merge(train->get_option("--rho-syn"), config.rho_syn, flags.rho_syn);
        merge(train->get_option("--rho-tot"), config.rho_tot, flags.rho_tot);
        merge(train->get_option("--repetitions"), config.repetitions, flags.repetitions);
        merge(train->get_option("--seed"), config.master_seed, flags.master_seed);
        merge(train->get_option("--max-rounds"), config.max_rounds, flags.max_rounds);
        merge(train->get_option("--output-dir"), config.output_dir, flags.output_dir);
        merge(train->get_option("--name"), config.name, flags.name);
        merge(train->get_option("--trace-rounds"), config.trace_rounds, flags.trace_rounds);
        merge(train->get_option("--snapshot-rounds"), config.snapshot_rounds,
              flags.snapshot_rounds);
        merge(train->get_option("--parallel"), config.parallel_clients, flags.parallel_clients);
        merge(train->get_option("--stop-rule"), config.stop_rule, flags.stop_rule);
        merge(train->get_option("--window"), config.window, flags.window);
        merge(train->get_option("--epsilon"), config.epsilon, flags.epsilon);
        merge(train->get_option("--patience"), config.patience, flags.patience);
      }
      const auto dirs = heintfl::exp::cmd_train(config);
      for (const auto& d : dirs) std::cout << d.string() << "\n";
      return 0;
    }
    if (attack->parsed()) {
      heintfl::attack::DlgOptions dlg;
      dlg.iterations = dlg_iterations;
      dlg.step = dlg_step;
      const auto out =
          heintfl::exp::cmd_attack(rep_dir, attack_rounds, images_per_class, attack_seed, dlg);
      std::cout << out.string() << "\n";
      return 0;
    }
    if (report->parsed()) {
      std::vector<std::filesystem::path> dirs(report_dirs.begin(), report_dirs.end());
      heintfl::exp::cmd_report(dirs, baseline_dir, report_out);
      std::cout << (std::filesystem::path(report_out) / "report.txt").string() << "\n";
      return 0;
    }
  } catch (const std::invalid_argument& e) {
    return error_record("invalid_argument", e.what());
  } catch (const std::overflow_error& e) {
    return error_record("overflow", e.what());
  } catch (const std::exception& e) {
    return error_record("runtime_error", e.what());
  }
  return 0;
}
