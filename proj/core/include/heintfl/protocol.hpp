#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "heintfl/convergence.hpp"
#include "heintfl/dataset.hpp"
#include "heintfl/ledger.hpp"
#include "heintfl/masked_model.hpp"
#include "heintfl/nn.hpp"

namespace heintfl::fl {

// Interleaving schedule: rho_syn of every rho_tot consecutive rounds are
// synthetic (plaintext); the rest are authentic (encrypted).
struct RoundSchedule {
  int rho_syn = 0;
  int rho_tot = 1;

  double rho() const { return static_cast<double>(rho_syn) / rho_tot; }
  void validate() const;
};

// Round t (zero-based) is authentic iff t mod rho_tot < rho_tot - rho_syn,
// so each period starts with its authentic rounds.
bool is_authentic_round(std::int64_t t, const RoundSchedule& sched);

struct TrainingHyperparams {
  int local_epochs = 1;
  int batch_size = 32;
  double lr = 0.01;
};

struct ClientState {
  int client_id = 0;
  data::ClientDataset dataset;
  nn::ModelParams params;
  TrainingHyperparams hp;
};

struct ServerState {
  std::int64_t round = 0;
  crypto::EncryptionMask mask;
  crypto::MaskedModel global_model;
  std::vector<double> authentic_weights;
  std::vector<double> synthetic_weights;
};

struct RoundRecord {
  std::int64_t round = 0;
  bool is_authentic = false;
  double test_accuracy = 0.0;  // percent
};

// Serialized messages kept for rounds designated as attack targets, plus the
// simulator's plaintext view of the model the round started from (ground
// truth for the measurement harness; never part of the transmitted bytes).
struct RoundTrace {
  std::int64_t round = 0;
  bool is_authentic = false;
  std::vector<std::uint8_t> incoming_broadcast;
  std::vector<std::vector<std::uint8_t>> client_uploads;
  std::vector<double> model_in_plain;
};

struct RunConfig {
  nn::ModelSpec spec;
  std::vector<data::ClientDataset> clients;
  std::vector<data::LabeledImage> test_set;
  RoundSchedule schedule;
  double eta = 0.2;
  crypto::SchemeParams scheme;
  TrainingHyperparams hp;
  std::uint64_t master_seed = 1;
  std::int64_t max_rounds = 100;
  // When set, the run stops at detected convergence (still capped by
  // max_rounds); otherwise it runs exactly max_rounds.
  std::optional<analysis::ConvergenceRule> stop_rule;
  // Build the mask from client gradient sensitivity (top-magnitude entries);
  // when false the mask is a seeded uniform draw.
  bool mask_from_sensitivity = true;
  std::vector<std::int64_t> trace_rounds;
  std::vector<std::int64_t> snapshot_rounds;
  bool parallel_clients = false;
};

struct RunResult {
  std::vector<RoundRecord> history;
  CostLedger ledger;
  nn::ModelParams final_params;
  crypto::EncryptionMask mask;
  double client_lr = 0.0;
  std::vector<RoundTrace> traces;
  std::map<std::int64_t, nn::ModelParams> snapshots;
  std::optional<std::int64_t> converged_round;  // zero-based round index
  std::shared_ptr<const crypto::PublicKey> public_key;
};

// One client step of a round: decrypt the arriving model if needed, train on
// the authentic or synthetic set per the round type, and return the outbound
// message (encrypted on authentic rounds). Updates state and the ledger row.
crypto::MaskedModel client_round(const nn::ModelSpec& spec, ClientState& state,
                                 const crypto::MaskedModel& incoming, bool is_auth,
                                 const crypto::EncryptionMask& mask, const crypto::Keypair& key,
                                 std::uint64_t round_seed, LedgerRow& row);

// FedAvg aggregation over all received models. Authentic rounds average the
// plaintext entries arithmetically and fold the ciphertext entries through a
// weighted homomorphic chain; synthetic rounds average plain vectors.
crypto::MaskedModel server_aggregate(const std::vector<crypto::MaskedModel>& models,
                                     const std::vector<double>& weights,
                                     const crypto::EncryptionMask& mask, bool is_auth);

// Dataset-size FedAvg weights, normalized to sum exactly to 1.
std::vector<double> dataset_weights(const std::vector<data::ClientDataset>& clients,
                                    bool authentic);

// The full round engine: schedule predicate, client passes, aggregation,
// broadcast, and per-round evaluation. Deterministic per master_seed.
RunResult run_training(const RunConfig& config);

}  // namespace heintfl::fl
