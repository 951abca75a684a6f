#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "heintfl/attack.hpp"
#include "heintfl/protocol.hpp"
#include "heintfl/report.hpp"

namespace heintfl::exp {

// Complete, serializable description of an experiment. Round-trips through
// the INI form losslessly; every field is validated before a run starts.
struct ExperimentConfig {
  // [dataset]
  std::string source = "toy";  // "toy" | "cifar10"
  std::string cifar_train;
  std::string cifar_test;
  int toy_classes = 4;
  int toy_train_per_class = 150;
  int toy_test_per_class = 40;
  int toy_size = 8;
  double toy_noise = 0.22;

  // [federation]
  int clients = 3;
  double alpha = 0.5;

  // [model]
  std::string model = "toy-cnn";

  // [training]
  int local_epochs = 1;
  int batch_size = 32;
  double lr = 0.05;

  // [crypto]
  double eta = 0.2;
  int modulus_bits = 256;
  int value_scale_bits = 40;
  int weight_scale_bits = 32;
  bool mask_from_sensitivity = true;

  // [schedule]
  int rho_syn = 0;
  int rho_tot = 1;

  // [run]
  int repetitions = 1;
  std::uint64_t master_seed = 1;
  std::int64_t max_rounds = 60;
  std::string output_dir = "runs";
  std::string name = "experiment";
  std::vector<std::int64_t> trace_rounds;
  std::vector<std::int64_t> snapshot_rounds;
  bool parallel_clients = false;

  // [stopping]
  std::string stop_rule = "fixed";  // "fixed" | "convergence"
  int window = 12;
  double epsilon = 0.1;
  int patience = 10;

  // [resolved] - present only in per-repetition run directories
  int resolved_rep = -1;
  std::uint64_t resolved_run_seed = 0;

  void validate() const;
  double rho() const { return static_cast<double>(rho_syn) / rho_tot; }
};

std::string to_ini(const ExperimentConfig& config);
ExperimentConfig from_ini(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const ExperimentConfig& config);

// Deterministic data pipeline for one repetition: pool generation/loading,
// authentic/synthetic half-split, Dirichlet and IID partitioning.
struct PreparedData {
  std::vector<data::ClientDataset> clients;
  std::vector<data::LabeledImage> test_set;
  std::vector<int> input_shape;
  int num_classes = 0;
};
PreparedData prepare_data(const ExperimentConfig& config, int rep);

// Environment variable overriding the configured output root.
extern const char* kOutputRootEnv;  // "HEINTFL_OUTPUT_ROOT"
std::filesystem::path output_root(const ExperimentConfig& config);

// Runs `repetitions` seeded training runs and persists per-repetition
// artifacts (resolved config, history.csv, ledger.csv, summary.json,
// public key, traces, snapshots). Returns the repetition directories.
std::vector<std::filesystem::path> cmd_train(const ExperimentConfig& config);

// Runs the gradient-inversion sweep against a finished repetition directory;
// writes attack_report.csv and recovered-image dumps.
std::filesystem::path cmd_attack(const std::filesystem::path& rep_dir,
                                 const std::vector<std::int64_t>& rounds, int images_per_class,
                                 std::uint64_t seed,
                                 const attack::DlgOptions& dlg = {});

// Aggregates experiment directories (each holding rep_* subdirectories) into
// a Table-style report; `baseline` names the flagged baseline directory.
// Writes report.csv, report.txt, accuracy_curves.csv and accuracy.svg into
// `out_dir` and returns the report.
analysis::ExperimentReport cmd_report(const std::vector<std::filesystem::path>& run_dirs,
                                      const std::filesystem::path& baseline,
                                      const std::filesystem::path& out_dir);

// Per-repetition artifact access, shared by cmd_attack and tests.
struct LoadedRun {
  ExperimentConfig config;
  std::vector<fl::RoundRecord> history;
  fl::CostLedger ledger;
  std::optional<std::int64_t> converged_round;
};
LoadedRun load_run(const std::filesystem::path& rep_dir);

fl::RoundTrace read_trace(const std::filesystem::path& path);
void write_trace(const std::filesystem::path& path, const fl::RoundTrace& trace);
std::shared_ptr<const crypto::PublicKey> read_public_key(const std::filesystem::path& path);
void write_public_key(const std::filesystem::path& path, const crypto::PublicKey& pk);

// Minimal self-contained SVG line chart of accuracy curves (one polyline per
// labelled series).
void write_accuracy_svg(const std::filesystem::path& path,
                        const std::vector<std::pair<std::string, std::vector<double>>>& series);

}  // namespace heintfl::exp
