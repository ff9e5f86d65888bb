#pragma once

#include <functional>
#include <span>
#include <vector>

#include "lfi/abc.hpp"
#include "lfi/core.hpp"

namespace lfi {

/// Gaussian log-likelihood of a zero-mean stationary series whose autocovariance
/// vanishes beyond lag q = autocov.size() − 1, via the innovations algorithm
/// restricted to the q-band.
double innovations_loglik(std::span<const double> x, std::span<const double> autocov);

/// Exact log-likelihood of the MA(2) model X_j = Z_j + θ1 Z_{j−1} + θ2 Z_{j−2}.
/// Throws OutsideSupport outside the identifiable triangle.
double ma2_exact_loglik(std::span<const double> x, std::span<const double> theta);

struct Chain {
  std::vector<ParameterVector> states;  // every step, start excluded
  std::size_t accepted = 0;
  double acceptance_rate() const {
    return states.empty() ? 0.0 : static_cast<double>(accepted) / static_cast<double>(states.size());
  }
};

/// Random-walk Metropolis with independent Gaussian increments of the given
/// scales. A log target of −∞ rejects the proposal.
Chain random_walk_metropolis(const std::function<double(std::span<const double>)>& log_target,
                             ParameterVector start, std::span<const double> proposal_scale,
                             std::size_t steps, RngStream& rng);

struct RwmhOptions {
  std::size_t steps = 100'000;
  double burn_in_fraction = 0.2;
  std::size_t thin = 10;
  /// Empty: 0.1 × prior width per parameter.
  std::vector<double> proposal_scale;
  /// Empty: the prior midpoint.
  ParameterVector start;
};

/// Exact MA(2) posterior under the uniform triangular prior, as a post-burn-in,
/// thinned chain with uniform weights. trial_count holds the number of steps.
Posterior rwmh_ma2(std::span<const double> observed, const UniformBoxPrior& prior,
                   const RwmhOptions& options, RngStream& rng);

}  // namespace lfi
