#include "lfi/mcmc.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "lfi/error.hpp"
#include "lfi/simulators.hpp"

namespace lfi {

double innovations_loglik(std::span<const double> x, std::span<const double> autocov) {
  if (autocov.empty()) throw InvalidArgument("autocovariance needs at least lag 0");
  const std::size_t n = x.size(), q = autocov.size() - 1;
  auto gamma = [&](std::size_t h) { return h <= q ? autocov[h] : 0.0; };

  // coef[m][j-1] = θ_{m,j}, j = 1..q; v[m] is the one-step prediction variance.
  std::vector<std::vector<double>> coef(n, std::vector<double>(q, 0.0));
  std::vector<double> v(n), resid(n);
  double loglik = 0.0;
  for (std::size_t m = 0; m < n; ++m) {
    const std::size_t lo = m > q ? m - q : 0;
    for (std::size_t k = lo; k < m; ++k) {
      double s = gamma(m - k);
      for (std::size_t j = lo; j < k; ++j) s -= coef[k][k - j - 1] * coef[m][m - j - 1] * v[j];
      coef[m][m - k - 1] = s / v[k];
    }
    double vm = gamma(0);
    for (std::size_t j = lo; j < m; ++j) vm -= coef[m][m - j - 1] * coef[m][m - j - 1] * v[j];
    if (!(vm > 0.0)) throw Degenerate("innovations variance is not positive");
    v[m] = vm;
    double pred = 0.0;
    for (std::size_t j = 1; j <= std::min(m, q); ++j) pred += coef[m][j - 1] * resid[m - j];
    resid[m] = x[m] - pred;
    loglik -= 0.5 * (std::log(2.0 * std::numbers::pi * vm) + resid[m] * resid[m] / vm);
  }
  return loglik;
}

double ma2_exact_loglik(std::span<const double> x, std::span<const double> theta) {
  if (theta.size() != 2) throw DimensionMismatch("MA(2) takes two parameters");
  if (!ma2_prior().contains(theta))
    throw OutsideSupport("MA(2) parameters lie outside the identifiable triangle");
  const double t1 = theta[0], t2 = theta[1];
  const double g[3] = {1.0 + t1 * t1 + t2 * t2, t1 * (1.0 + t2), t2};
  return innovations_loglik(x, g);
}

Chain random_walk_metropolis(const std::function<double(std::span<const double>)>& log_target,
                             ParameterVector start, std::span<const double> proposal_scale,
                             std::size_t steps, RngStream& rng) {
  if (steps == 0) throw InvalidArgument("Metropolis chain needs at least one step");
  if (proposal_scale.size() != start.size())
    throw DimensionMismatch("one proposal scale per parameter is required");
  for (double s : proposal_scale)
    if (!(s > 0.0)) throw InvalidArgument("proposal scales must be positive");
  double current = log_target(start);
  if (!(current > -std::numeric_limits<double>::infinity()))
    throw OutsideSupport("chain start has zero target density");
  Chain chain;
  chain.states.reserve(steps);
  ParameterVector x = std::move(start), y(x.size());
  for (std::size_t s = 0; s < steps; ++s) {
    for (std::size_t k = 0; k < x.size(); ++k) y[k] = x[k] + proposal_scale[k] * rng.normal();
    const double proposed = log_target(y);
    const double u = rng.uniform_open();
    if (proposed > -std::numeric_limits<double>::infinity() && std::log(u) < proposed - current) {
      x = y;
      current = proposed;
      ++chain.accepted;
    }
    chain.states.push_back(x);
  }
  return chain;
}

Posterior rwmh_ma2(std::span<const double> observed, const UniformBoxPrior& prior,
                   const RwmhOptions& options, RngStream& rng) {
  if (prior.dim() != 2) throw DimensionMismatch("MA(2) prior must be two-dimensional");
  if (options.thin == 0) throw InvalidArgument("thinning must be at least 1");
  if (!(options.burn_in_fraction >= 0.0 && options.burn_in_fraction < 1.0))
    throw InvalidArgument("burn-in fraction must lie in [0, 1)");
  std::vector<double> scale = options.proposal_scale;
  if (scale.empty())
    for (std::size_t k = 0; k < 2; ++k) scale.push_back(0.1 * prior.width(k));
  ParameterVector start = options.start.empty() ? prior.midpoint() : options.start;
  if (!prior.contains(start)) throw OutsideSupport("chain start lies outside the prior");

  auto target = [&](std::span<const double> theta) {
    if (!prior.contains(theta) || !ma2_prior().contains(theta))
      return -std::numeric_limits<double>::infinity();
    return ma2_exact_loglik(observed, theta);
  };
  const Chain chain = random_walk_metropolis(target, start, scale, options.steps, rng);
  const auto burn =
      static_cast<std::size_t>(options.burn_in_fraction * static_cast<double>(options.steps));
  Posterior p;
  for (std::size_t i = burn; i < chain.states.size(); i += options.thin) p.samples.push_back(chain.states[i]);
  if (p.samples.empty()) throw InvalidArgument("burn-in and thinning leave no samples");
  p.weights.assign(p.samples.size(), 1.0 / static_cast<double>(p.samples.size()));
  p.trial_count = options.steps;
  return p;
}

}  // namespace lfi
