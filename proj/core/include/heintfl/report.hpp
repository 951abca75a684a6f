#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <vector>

#include "heintfl/ledger.hpp"
#include "heintfl/protocol.hpp"

namespace heintfl::analysis {

// One repetition's artifacts, as the report builder consumes them.
struct RunRecordSet {
  double rho = 0.0;
  double eta = 0.0;
  int num_clients = 0;
  int smoothing_window = 12;
  bool is_baseline = false;
  std::vector<fl::RoundRecord> history;
  fl::CostLedger ledger;
  std::optional<std::int64_t> converged_round;
};

// Scalar summary of one repetition. Communication is measured in decimal
// megabytes; "client" columns are per-client averages.
struct RunSummary {
  double rho = 0.0;
  double eta = 0.0;
  double rounds_to_convergence = 0.0;
  double ciphertext_mb = 0.0;
  double total_comm_mb = 0.0;
  double comp_time_s = 0.0;
  double accuracy_pct = 0.0;
};

RunSummary summarize_run(const RunRecordSet& run);

struct ReportRow {
  double rho = 0.0;
  double eta = 0.0;
  bool is_baseline = false;
  int repetitions_used = 0;
  RunSummary mean;    // after dropping the best and worst run by accuracy
  RunSummary delta;   // (x - baseline) / baseline per column; 0 for baseline
};

struct ExperimentReport {
  std::vector<ReportRow> rows;
  std::size_t baseline_index = 0;
};

// Groups runs by (rho, eta), drops each group's best and worst repetition by
// accuracy, averages the rest, and reports relative deltas against the
// flagged baseline group. Groups need at least 3 repetitions.
ExperimentReport build_report(const std::vector<RunRecordSet>& runs);

void write_report_csv(std::ostream& out, const ExperimentReport& report);
// Plain-text table with bracketed percentage deltas against the baseline.
void write_report_table(std::ostream& out, const ExperimentReport& report);

}  // namespace heintfl::analysis
