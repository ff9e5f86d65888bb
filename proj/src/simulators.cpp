#include "lfi/simulators.hpp"

#include <algorithm>
#include <cmath>

#include "lfi/error.hpp"

namespace lfi {

ReactionNetwork::ReactionNetwork(std::vector<std::string> species_names,
                                 std::vector<std::int64_t> initial_counts,
                                 std::vector<Reaction> reactions,
                                 std::vector<std::string> param_names)
    : species_(std::move(species_names)),
      initial_(std::move(initial_counts)),
      reactions_(std::move(reactions)),
      params_(std::move(param_names)) {
  if (species_.empty()) throw InvalidArgument("reaction network needs at least one species");
  if (initial_.size() != species_.size())
    throw InvalidArgument("one initial count per species required");
  for (auto n : initial_) {
    if (n < 0) throw InvalidArgument("initial counts must be non-negative");
  }
  for (std::size_t r = 0; r < reactions_.size(); ++r) {
    const auto& rx = reactions_[r];
    if (rx.rate_param >= params_.size())
      throw InvalidArgument("reaction " + std::to_string(r) + " references an unknown rate parameter");
    int order = 0;
    for (auto [s, m] : rx.reactants) {
      if (s >= species_.size() || m <= 0)
        throw InvalidArgument("reaction " + std::to_string(r) + " has an invalid reactant");
      order += m;
    }
    if (order > 2)
      throw InvalidArgument("reaction " + std::to_string(r) + " exceeds bimolecular order");
    for (auto [s, m] : rx.products) {
      if (s >= species_.size() || m <= 0)
        throw InvalidArgument("reaction " + std::to_string(r) + " has an invalid product");
    }
  }
}

std::size_t ReactionNetwork::species_index(const std::string& name) const {
  auto it = std::find(species_.begin(), species_.end(), name);
  if (it == species_.end()) throw InvalidArgument("unknown species '" + name + "'");
  return static_cast<std::size_t>(it - species_.begin());
}

std::size_t ReactionNetwork::param_index(const std::string& name) const {
  auto it = std::find(params_.begin(), params_.end(), name);
  if (it == params_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
  return static_cast<std::size_t>(it - params_.begin());
}

ReactionNetwork ReactionNetwork::with_initial_counts(std::vector<std::int64_t> counts) const {
  return ReactionNetwork(species_, std::move(counts), reactions_, params_);
}

std::size_t SimGrid::timepoints() const {
  if (!(dt > 0.0)) throw InvalidArgument("grid step must be positive");
  if (!(t_end > t0)) throw InvalidArgument("grid end must exceed start");
  const double steps = (t_end - t0) / dt;
  const double rounded = std::round(steps);
  if (std::abs(steps - rounded) > 1e-9 * std::max(1.0, rounded))
    throw InvalidArgument("grid span is not an integral number of steps");
  return static_cast<std::size_t>(rounded) + 1;
}

namespace {

struct CompiledReaction {
  std::vector<std::pair<std::size_t, int>> reactants;
  std::vector<std::pair<std::size_t, std::int64_t>> delta;
  std::vector<std::size_t> dependents;
  double rate = 0.0;
};

inline double falling_factorial(std::int64_t n, int m) {
  double p = 1.0;
  for (int k = 0; k < m; ++k) p *= static_cast<double>(n - k);
  return n < m ? 0.0 : p;
}

std::vector<CompiledReaction> compile(const ReactionNetwork& net, std::span<const double> theta) {
  std::vector<CompiledReaction> out(net.reaction_count());
  for (std::size_t r = 0; r < net.reaction_count(); ++r) {
    const auto& rx = net.reactions()[r];
    auto& c = out[r];
    c.reactants = rx.reactants;
    c.rate = theta[rx.rate_param];
    std::vector<std::int64_t> d(net.species_count(), 0);
    for (auto [s, m] : rx.reactants) d[s] -= m;
    for (auto [s, m] : rx.products) d[s] += m;
    for (std::size_t s = 0; s < d.size(); ++s) {
      if (d[s] != 0) c.delta.emplace_back(s, d[s]);
    }
  }
  for (std::size_t r = 0; r < out.size(); ++r) {
    for (std::size_t q = 0; q < out.size(); ++q) {
      bool depends = false;
      for (auto [s, ds] : out[r].delta) {
        for (auto [s2, m] : out[q].reactants) depends |= (s == s2);
      }
      if (depends) out[r].dependents.push_back(q);
    }
  }
  return out;
}

inline double propensity(const CompiledReaction& c, const std::vector<std::int64_t>& x) {
  double a = c.rate;
  for (auto [s, m] : c.reactants) a *= falling_factorial(x[s], m);
  return a;
}

}  // namespace

TimeSeries ssa_simulate(const ReactionNetwork& net, std::span<const double> theta,
                        const SimGrid& grid, RngStream& rng, const SsaOptions& options) {
  if (theta.size() != net.param_count())
    throw DimensionMismatch("ssa_simulate: expected " + std::to_string(net.param_count()) +
                            " rate parameters");
  for (double v : theta) {
    if (!std::isfinite(v) || v < 0.0)
      throw InvalidArgument("ssa_simulate: rate parameters must be finite and non-negative");
  }
  const std::size_t T = grid.timepoints();
  std::vector<std::size_t> channels;
  if (grid.species_subset) {
    channels = *grid.species_subset;
    for (auto c : channels) {
      if (c >= net.species_count()) throw InvalidArgument("species subset index out of range");
    }
  } else {
    for (std::size_t s = 0; s < net.species_count(); ++s) channels.push_back(s);
  }
  std::vector<std::string> names;
  for (auto c : channels) names.push_back(net.species_names()[c]);

  auto reactions = compile(net, theta);
  const std::size_t R = reactions.size();
  std::vector<std::int64_t> x = net.initial_counts();
  std::vector<double> a(R);
  for (std::size_t r = 0; r < R; ++r) a[r] = propensity(reactions[r], x);

  std::vector<double> out(channels.size() * T);
  auto record = [&](std::size_t j) {
    for (std::size_t ci = 0; ci < channels.size(); ++ci)
      out[ci * T + j] = static_cast<double>(x[channels[ci]]);
  };

  const auto start = std::chrono::steady_clock::now();
  const bool check_clock = options.timeout.count() > 0.0;
  double t = grid.t0;
  std::size_t j = 0;
  std::uint64_t events = 0;
  while (j < T) {
    double a0 = 0.0;
    for (double ar : a) a0 += ar;
    if (!std::isfinite(a0)) throw PropensityOverflow("total propensity is not finite");
    if (a0 <= 0.0) {
      for (; j < T; ++j) record(j);
      break;
    }
    const double t_next = t + rng.exponential() / a0;
    while (j < T && grid.t0 + static_cast<double>(j) * grid.dt < t_next) record(j++);
    if (j >= T) break;

    const double target = rng.uniform() * a0;
    std::size_t r = 0;
    double acc = a[0];
    while (acc <= target && r + 1 < R) acc += a[++r];
    while (a[r] <= 0.0 && r > 0) --r;  // rounding can land past the last active channel

    for (auto [s, d] : reactions[r].delta) x[s] += d;
    for (std::size_t q : reactions[r].dependents) a[q] = propensity(reactions[q], x);
    t = t_next;

    ++events;
    if (options.max_events != 0 && events >= options.max_events)
      throw Timeout("SSA event budget of " + std::to_string(options.max_events) + " exhausted");
    if (check_clock && (events & 1023u) == 0 &&
        std::chrono::steady_clock::now() - start > options.timeout)
      throw Timeout("SSA wall-clock budget exhausted");
  }
  return TimeSeries(channels.size(), T, grid.t0, grid.dt, std::move(names), std::move(out));
}

ReactionNetwork build_lotka_volterra() {
  // prey -> 2 prey; prey + predator -> 2 predator; predator -> 0
  std::vector<Reaction> rx = {
      {{{0, 1}}, {{0, 2}}, 0},
      {{{0, 1}, {1, 1}}, {{1, 2}}, 1},
      {{{1, 1}}, {}, 2},
  };
  return ReactionNetwork({"prey", "predator"}, {50, 100}, std::move(rx),
                         {"theta_1", "theta_2", "theta_3"});
}

namespace {
enum VilarSpecies : std::size_t { DA, DAb, DR, DRb, MA, MR, A, R, C };
enum VilarParam : std::size_t {
  alphaA, alphaAb, alphaR, alphaRb, betaA, betaR, deltaMA, deltaMR,
  deltaA, deltaR, gammaA, gammaR, gammaC, thetaA, thetaR
};
}  // namespace

ReactionNetwork build_vilar(VilarReleaseRate release) {
  const std::size_t release_rate = release == VilarReleaseRate::ThetaA ? thetaA : thetaR;
  std::vector<Reaction> rx = {
      {{{DAb, 1}}, {{DA, 1}}, thetaA},
      {{{DA, 1}, {A, 1}}, {{DAb, 1}}, gammaA},
      {{{DRb, 1}}, {{DR, 1}}, thetaR},
      {{{DR, 1}, {A, 1}}, {{DRb, 1}}, gammaR},
      {{{DAb, 1}}, {{DAb, 1}, {MA, 1}}, alphaAb},
      {{{DA, 1}}, {{DA, 1}, {MA, 1}}, alphaA},
      {{{MA, 1}}, {}, deltaMA},
      {{{MA, 1}}, {{A, 1}, {MA, 1}}, betaA},
      {{{DAb, 1}}, {{DAb, 1}, {A, 1}}, thetaA},
      {{{DRb, 1}}, {{DRb, 1}, {A, 1}}, release_rate},
      {{{A, 1}}, {}, deltaA},
      {{{A, 1}, {R, 1}}, {{C, 1}}, gammaC},
      {{{DRb, 1}}, {{DRb, 1}, {MR, 1}}, alphaRb},
      {{{DR, 1}}, {{DR, 1}, {MR, 1}}, alphaR},
      {{{MR, 1}}, {}, deltaMR},
      {{{MR, 1}}, {{MR, 1}, {R, 1}}, betaR},
      {{{R, 1}}, {}, deltaR},
      {{{C, 1}}, {{R, 1}}, deltaA},
  };
  return ReactionNetwork({"D_A", "D_A*", "D_R", "D_R*", "M_A", "M_R", "A", "R", "C"},
                         {1, 0, 1, 0, 0, 0, 0, 0, 0}, std::move(rx),
                         {"alpha_A", "alpha_A'", "alpha_R", "alpha_R'", "beta_A", "beta_R",
                          "delta_MA", "delta_MR", "delta_A", "delta_R", "gamma_A", "gamma_R",
                          "gamma_C", "theta_A", "theta_R"});
}

UniformBoxPrior vilar_prior() {
  return UniformBoxPrior({0, 100, 0, 20, 10, 1, 1, 0, 0, 0, 0.5, 0, 0, 0, 0},
                         {80, 600, 4, 60, 60, 7, 12, 2, 3, 0.7, 2.5, 4, 3, 70, 300}, {},
                         build_vilar().param_names());
}

ParameterVector vilar_reference_theta() {
  return {50, 500, 0.01, 50, 50, 5, 10, 0.5, 1, 0.2, 1, 1, 2, 50, 100};
}

UniformBoxPrior lotka_volterra_prior() {
  return UniformBoxPrior({0.005, 0.005, 0.005}, {6.0, 6.0, 6.0}, {},
                         {"theta_1", "theta_2", "theta_3"});
}

ParameterVector lotka_volterra_true_theta() { return {1.0, 0.005, 0.6}; }

UniformBoxPrior ma2_prior() {
  return UniformBoxPrior({-2.0, -1.0}, {2.0, 1.0},
                         {{{1.0, 1.0}, -1.0}, {{-1.0, 1.0}, -1.0}}, {"theta_1", "theta_2"});
}

TimeSeries ma2_from_innovations(std::span<const double> theta, std::span<const double> z) {
  if (theta.size() != 2) throw DimensionMismatch("MA(2) takes two parameters");
  if (z.size() < 5) throw InvalidArgument("MA(2) needs p >= 3");
  const std::size_t p = z.size() - 2;
  std::vector<double> x(p);
  for (std::size_t j = 0; j < p; ++j) x[j] = z[j + 2] + theta[0] * z[j + 1] + theta[1] * z[j];
  return TimeSeries(1, p, 1.0, 1.0, {"x"}, std::move(x));
}

TimeSeries ma2_generate(std::span<const double> theta, std::size_t p, RngStream& rng) {
  if (p < 3) throw InvalidArgument("MA(2) needs p >= 3");
  std::vector<double> z(p + 2);
  for (auto& v : z) v = rng.normal();
  return ma2_from_innovations(theta, z);
}

}  // namespace lfi
