#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "heintfl/dataset.hpp"
#include "heintfl/masked_model.hpp"
#include "heintfl/metrics.hpp"
#include "heintfl/nn.hpp"
#include "heintfl/protocol.hpp"

namespace heintfl::attack {

// What the honest-but-curious observer holds about one client update:
// the uploaded parameters and the previous broadcast, restricted to the
// coordinates visible in plaintext. On authentic rounds the observable set
// is the mask complement; on fully plaintext exchanges it is everything.
struct AttackTarget {
  nn::ModelSpec spec;
  std::vector<double> observed_params;      // client upload w_i^t
  std::vector<double> previous_broadcast;   // w^{t-1}
  std::vector<std::uint8_t> observable;     // 1 = coordinate visible
  double client_lr = 0.0;
  int num_classes = 0;
};

struct InferredGradient {
  std::vector<double> values;       // NaN on unobservable coordinates
  std::vector<std::uint8_t> known;  // 1 where the estimate is valid
};

// One-step gradient inference: g = (w^{t-1} - w^t) / lr on observable
// coordinates; the rest are flagged absent.
InferredGradient infer_gradient(const AttackTarget& target);

struct DlgOptions {
  int iterations = 400;
  double step = 0.08;        // descent step on the dummy variables
  double fd_epsilon = 1e-3;  // central-difference probe
  bool adaptive = true;      // Adam-style moment scaling of the step
};

struct AttackResult {
  Tensor recovered_image;
  std::vector<double> recovered_label_probs;
  double matching_loss = 0.0;
  int iterations_used = 0;
  bool diverged = false;
  double uqi_score = 0.0;
  double msssim_score = 0.0;
  double vif_score = 0.0;
};

// Gradient-matching inversion: starting from a seeded random dummy image and
// soft label, minimizes the squared distance between the dummy gradients and
// the inferred gradients over the observable coordinates. Gradients of the
// matching loss are taken by central finite differences over the dummy
// variables. Deterministic per seed; divergence is reported, not thrown.
// When `reference` is given the recovered image is scored against it.
AttackResult dlg_attack(const AttackTarget& target, const DlgOptions& opts, std::uint64_t seed,
                        const Tensor* reference = nullptr);

// Everything the scoring sweep needs from a finished training run.
struct AttackRunArtifacts {
  nn::ModelSpec spec;
  crypto::EncryptionMask mask;
  double client_lr = 0.0;
  std::vector<fl::RoundTrace> traces;
  std::vector<data::ClientDataset> clients;
  std::shared_ptr<const crypto::PublicKey> pk;
};

struct AttackRow {
  std::int64_t round = 0;
  bool is_authentic = false;
  int image_id = 0;
  int label = 0;
  double uqi = 0.0;
  double msssim = 0.0;
  double vif = 0.0;
  double matching_loss = 0.0;
  int iterations = 0;
};

struct RoundScoreSummary {
  std::int64_t round = 0;
  bool is_authentic = false;
  int images = 0;
  double max_uqi = 0.0, max_msssim = 0.0, max_vif = 0.0;
  double avg_uqi = 0.0, avg_msssim = 0.0, avg_vif = 0.0;
};

struct ScoreTable {
  std::vector<AttackRow> rows;
  std::vector<RoundScoreSummary> per_round;
  // recovered images aligned with rows, for optional dumping
  std::vector<Tensor> recovered;
};

struct SweepOptions {
  int images_per_class = 10;
  DlgOptions dlg;
  std::uint64_t seed = 0;
};

// Runs the attack over the traced rounds. Authentic rounds attack authentic
// images and score recoveries against the attacked image; synthetic rounds
// attack synthetic images and score each recovery against its best-matching
// authentic image (highest MSSSIM). Summaries carry per-round max and mean.
ScoreTable score_attack_sweep(const AttackRunArtifacts& artifacts,
                              const std::vector<std::int64_t>& round_ids,
                              const SweepOptions& opts);

void write_attack_csv(std::ostream& out, const ScoreTable& table);

// Portable pixmap dumps for visual inspection: PGM for 1-channel tensors,
// PPM for 3-channel.
void write_pnm(const std::string& path, const Tensor& image);

}  // namespace heintfl::attack
