#pragma once

#include <optional>
#include <vector>

namespace heintfl::analysis {

// Convergence is declared when the moving-average-smoothed accuracy fails to
// improve on its running maximum by more than `epsilon` (percentage points)
// for `patience` consecutive rounds.
struct ConvergenceRule {
  int window = 12;
  double epsilon = 0.1;
  int patience = 10;

  void validate() const;
};

// Trailing moving average; prefix positions average over the points available.
std::vector<double> smooth_series(const std::vector<double>& series, int window);

// First round index (0-based) at which the rule fires, or nullopt.
std::optional<std::size_t> detect_convergence(const std::vector<double>& accuracies,
                                              const ConvergenceRule& rule);

// Per-round cost of a non-interleaved run with encryption on every round,
// totalled over n rounds.
double cost_fedavg_he(double n, double cost_fedavg, double cost_he);

// Interleaved total cost: n_hat rounds of base cost plus encryption on the
// (1-rho) fraction of authentic rounds.
double cost_heintfl(double n_hat, double rho, double cost_fedavg, double cost_he_hat);

}  // namespace heintfl::analysis
