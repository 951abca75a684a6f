#include "heintfl/convergence.hpp"

#include <algorithm>
#include <stdexcept>

namespace heintfl::analysis {

void ConvergenceRule::validate() const {
  if (window < 1) throw std::invalid_argument("ConvergenceRule: window must be >= 1");
  if (!(epsilon > 0.0)) throw std::invalid_argument("ConvergenceRule: epsilon must be positive");
  if (patience < 1) throw std::invalid_argument("ConvergenceRule: patience must be >= 1");
}

std::vector<double> smooth_series(const std::vector<double>& series, int window) {
  if (window < 1) throw std::invalid_argument("smooth_series: window must be >= 1");
  std::vector<double> out(series.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    acc += series[i];
    if (i >= static_cast<std::size_t>(window)) acc -= series[i - static_cast<std::size_t>(window)];
    const std::size_t count = std::min<std::size_t>(i + 1, static_cast<std::size_t>(window));
    out[i] = acc / static_cast<double>(count);
  }
  return out;
}

std::optional<std::size_t> detect_convergence(const std::vector<double>& accuracies,
                                              const ConvergenceRule& rule) {
  rule.validate();
  for (double a : accuracies) {
    if (a < 0.0 || a > 100.0) {
      throw std::invalid_argument("detect_convergence: accuracies must be in [0,100]");
    }
  }
  const auto smoothed = smooth_series(accuracies, rule.window);

  // A round counts as "no improvement" when the smoothed value does not beat
  // the running maximum of all earlier smoothed values by more than epsilon.
  double best = -1.0;
  int streak = 0;
  for (std::size_t t = 0; t < smoothed.size(); ++t) {
    const bool improved = best < 0.0 || smoothed[t] - best > rule.epsilon;
    streak = improved ? 0 : streak + 1;
    best = std::max(best, smoothed[t]);
    if (streak >= rule.patience) return t;
  }
  return std::nullopt;
}

double cost_fedavg_he(double n, double cost_fedavg, double cost_he) {
  if (n < 0 || cost_fedavg < 0 || cost_he < 0) {
    throw std::invalid_argument("cost_fedavg_he: inputs must be non-negative");
  }
  return n * (cost_fedavg + cost_he);
}

double cost_heintfl(double n_hat, double rho, double cost_fedavg, double cost_he_hat) {
  if (n_hat < 0 || cost_fedavg < 0 || cost_he_hat < 0) {
    throw std::invalid_argument("cost_heintfl: inputs must be non-negative");
  }
  if (rho < 0.0 || rho > 1.0) throw std::invalid_argument("cost_heintfl: rho must be in [0,1]");
  return n_hat * cost_fedavg + (1.0 - rho) * n_hat * cost_he_hat;
}

}  // namespace heintfl::analysis
