#pragma once

#include <cmath>
#include <vector>

#include "heintfl/nn.hpp"

// Central finite-difference oracle for loss gradients, independent of the
// analytic backward pass it checks.
namespace fdcheck {

struct FdResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

inline double loss_at(const heintfl::nn::ModelSpec& spec, const heintfl::nn::ModelParams& params,
                      const heintfl::Tensor& batch, const std::vector<int>& labels) {
  heintfl::nn::ForwardCache cache;
  heintfl::nn::forward(spec, params, batch, &cache);
  heintfl::nn::Gradient grad;
  return heintfl::nn::backward(spec, params, cache, labels, grad);
}

// Relative error convention: |analytic - numeric| / max(1, |analytic|, |numeric|).
inline FdResult check_param_gradient(const heintfl::nn::ModelSpec& spec,
                                     const heintfl::nn::ModelParams& params,
                                     const heintfl::Tensor& batch, const std::vector<int>& labels,
                                     const std::vector<double>& analytic, double h = 1e-4) {
  FdResult res;
  heintfl::nn::ModelParams probe = params;
  for (std::size_t i = 0; i < probe.flat.size(); ++i) {
    const double keep = probe.flat[i];
    probe.flat[i] = keep + h;
    const double up = loss_at(spec, probe, batch, labels);
    probe.flat[i] = keep - h;
    const double down = loss_at(spec, probe, batch, labels);
    probe.flat[i] = keep;
    const double numeric = (up - down) / (2 * h);
    const double abs_err = std::abs(numeric - analytic[i]);
    const double rel = abs_err / std::max({1.0, std::abs(numeric), std::abs(analytic[i])});
    res.max_abs_error = std::max(res.max_abs_error, abs_err);
    res.max_rel_error = std::max(res.max_rel_error, rel);
  }
  return res;
}

inline FdResult check_input_gradient(const heintfl::nn::ModelSpec& spec,
                                     const heintfl::nn::ModelParams& params,
                                     const heintfl::Tensor& batch, const std::vector<int>& labels,
                                     const heintfl::Tensor& analytic, double h = 1e-4) {
  FdResult res;
  heintfl::Tensor probe = batch;
  for (std::size_t i = 0; i < probe.values.size(); ++i) {
    const double keep = probe.values[i];
    probe.values[i] = keep + h;
    const double up = loss_at(spec, params, probe, labels);
    probe.values[i] = keep - h;
    const double down = loss_at(spec, params, probe, labels);
    probe.values[i] = keep;
    const double numeric = (up - down) / (2 * h);
    const double abs_err = std::abs(numeric - analytic.values[i]);
    const double rel = abs_err / std::max({1.0, std::abs(numeric), std::abs(analytic.values[i])});
    res.max_abs_error = std::max(res.max_abs_error, abs_err);
    res.max_rel_error = std::max(res.max_rel_error, rel);
  }
  return res;
}

}  // namespace fdcheck
