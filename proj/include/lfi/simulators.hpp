#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lfi/core.hpp"

namespace lfi {

/// One mass-action reaction. Stoichiometries are (species index, count) pairs.
struct Reaction {
  std::vector<std::pair<std::size_t, int>> reactants;
  std::vector<std::pair<std::size_t, int>> products;
  std::size_t rate_param = 0;
};

class ReactionNetwork {
 public:
  ReactionNetwork() = default;
  ReactionNetwork(std::vector<std::string> species_names, std::vector<std::int64_t> initial_counts,
                  std::vector<Reaction> reactions, std::vector<std::string> param_names);

  std::size_t species_count() const noexcept { return species_.size(); }
  std::size_t reaction_count() const noexcept { return reactions_.size(); }
  std::size_t param_count() const noexcept { return params_.size(); }
  const std::vector<std::string>& species_names() const noexcept { return species_; }
  const std::vector<std::string>& param_names() const noexcept { return params_; }
  const std::vector<std::int64_t>& initial_counts() const noexcept { return initial_; }
  const std::vector<Reaction>& reactions() const noexcept { return reactions_; }

  std::size_t species_index(const std::string& name) const;
  std::size_t param_index(const std::string& name) const;
  ReactionNetwork with_initial_counts(std::vector<std::int64_t> counts) const;

 private:
  std::vector<std::string> species_;
  std::vector<std::int64_t> initial_;
  std::vector<Reaction> reactions_;
  std::vector<std::string> params_;
};

/// Recording grid t0, t0+dt, ..., t_end (inclusive), optionally restricted to a
/// subset of species channels.
struct SimGrid {
  double t0 = 0.0;
  double t_end = 1.0;
  double dt = 1.0;
  std::optional<std::vector<std::size_t>> species_subset;

  /// Validates the grid and returns the number of recorded timepoints.
  std::size_t timepoints() const;
};

struct SsaOptions {
  /// Wall-clock budget per trajectory; zero disables the check.
  std::chrono::duration<double> timeout = std::chrono::seconds(1);
  /// Deterministic event budget per trajectory; zero disables the check.
  std::uint64_t max_events = 0;
};

/// Gillespie direct method. Column j holds the state carried forward from the
/// last event at or before grid time j. Throws Timeout when either budget is
/// exhausted and PropensityOverflow if the total propensity becomes non-finite.
TimeSeries ssa_simulate(const ReactionNetwork& net, std::span<const double> theta,
                        const SimGrid& grid, RngStream& rng, const SsaOptions& options = {});

/// Prey 𝒳₁ and predator 𝒳₂ with birth, predation and death; 𝒳₁=50, 𝒳₂=100.
ReactionNetwork build_lotka_volterra();

/// Rate parameter used by the repressor-gene release reaction D_R* -> D_R* + A.
enum class VilarReleaseRate { ThetaA, ThetaR };

/// Nine-species activator/repressor oscillator with 18 reactions and 15 rate
/// constants ordered α_A, α_A', α_R, α_R', β_A, β_R, δ_MA, δ_MR, δ_A, δ_R,
/// γ_A, γ_R, γ_C, θ_A, θ_R. One copy of each gene starts unbound.
ReactionNetwork build_vilar(VilarReleaseRate release = VilarReleaseRate::ThetaR);

/// Uniform prior box for the oscillator rate constants.
UniformBoxPrior vilar_prior();
/// Reference parameter point of the oscillator (inside the prior box).
ParameterVector vilar_reference_theta();

UniformBoxPrior lotka_volterra_prior();
ParameterVector lotka_volterra_true_theta();

/// Triangular identifiability region θ1∈[-2,2], θ2∈[-1,1], θ2 ± θ1 ≥ -1.
UniformBoxPrior ma2_prior();

/// X_j = Z_j + θ1 Z_{j-1} + θ2 Z_{j-2}, j = 1..p, with p+2 standard normal
/// innovations Z_{-1}..Z_p; returned as a 1×p series with dt = 1.
TimeSeries ma2_generate(std::span<const double> theta, std::size_t p, RngStream& rng);
/// Same recursion on caller-supplied innovations (length p+2).
TimeSeries ma2_from_innovations(std::span<const double> theta, std::span<const double> innovations);

/// Plain-text reaction file:
///   species NAME=COUNT ...
///   parameters NAME ...
///   [n] A + [m] B -> [k] C + ... @ PARAM      (0 denotes no species)
/// Lines starting with '#' are comments. Errors carry line and column.
ReactionNetwork parse_reaction_network(const std::string& text);
ReactionNetwork load_reaction_network(const std::string& path);

}  // namespace lfi
