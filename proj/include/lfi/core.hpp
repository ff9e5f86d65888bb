#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lfi/rng.hpp"

namespace lfi {

/// A point in parameter space, in the model's own rate units.
using ParameterVector = std::vector<double>;

/// Linear inequality a·θ ≥ b restricting a box prior.
struct LinearConstraint {
  std::vector<double> coeffs;
  double bound = 0.0;

  bool satisfied(std::span<const double> theta) const;
};

/// Uniform prior over an axis-aligned box, optionally cut by linear constraints.
/// The density is constant on the admissible region.
class UniformBoxPrior {
 public:
  UniformBoxPrior() = default;
  UniformBoxPrior(std::vector<double> dmin, std::vector<double> dmax,
                  std::vector<LinearConstraint> constraints = {},
                  std::vector<std::string> names = {});

  std::size_t dim() const noexcept { return dmin_.size(); }
  const std::vector<double>& lower() const noexcept { return dmin_; }
  const std::vector<double>& upper() const noexcept { return dmax_; }
  const std::vector<LinearConstraint>& constraints() const noexcept { return constraints_; }
  const std::vector<std::string>& names() const noexcept { return names_; }

  bool contains(std::span<const double> theta) const;
  std::vector<double> midpoint() const;
  double width(std::size_t k) const { return dmax_[k] - dmin_[k]; }

  /// Affine map of the bounding box onto [0,1]^L and its inverse.
  std::vector<double> to_unit(std::span<const double> theta) const;
  std::vector<double> from_unit(std::span<const double> unit) const;

  friend bool operator==(const UniformBoxPrior& a, const UniformBoxPrior& b);

 private:
  std::vector<double> dmin_;
  std::vector<double> dmax_;
  std::vector<LinearConstraint> constraints_;
  std::vector<std::string> names_;
};

inline constexpr std::size_t kPriorRetryBudget = 1'000'000;

/// Draws n points uniformly over the prior's admissible region by rejection
/// against the bounding box. Throws RetryBudgetExceeded after kPriorRetryBudget
/// consecutive rejections.
std::vector<ParameterVector> prior_sample(const UniformBoxPrior& prior, std::size_t n,
                                          RngStream& rng);
ParameterVector prior_sample_one(const UniformBoxPrior& prior, RngStream& rng);

/// Mean absolute deviation of a uniform coordinate from its midpoint: (dmax-dmin)/4.
std::vector<double> prior_mae_denominator(const UniformBoxPrior& prior);

/// Non-owning view of a C×T grid stored channel-major.
struct SeriesView {
  std::size_t channels = 0;
  std::size_t timepoints = 0;
  double t0 = 0.0;
  double dt = 1.0;
  std::span<const double> data;

  std::span<const double> channel(std::size_t c) const {
    return data.subspan(c * timepoints, timepoints);
  }
  double operator()(std::size_t c, std::size_t j) const { return data[c * timepoints + j]; }
};

/// Multi-channel trajectory on a regular grid; column j sits at t0 + j·dt.
class TimeSeries {
 public:
  TimeSeries() = default;
  TimeSeries(std::size_t channels, std::size_t timepoints, double t0, double dt,
             std::vector<std::string> names, std::vector<double> data);

  static TimeSeries zeros(std::size_t channels, std::size_t timepoints, double t0, double dt,
                          std::vector<std::string> names);

  std::size_t channels() const noexcept { return channels_; }
  std::size_t timepoints() const noexcept { return timepoints_; }
  double t0() const noexcept { return t0_; }
  double dt() const noexcept { return dt_; }
  double time(std::size_t j) const noexcept { return t0_ + static_cast<double>(j) * dt_; }
  const std::vector<std::string>& names() const noexcept { return names_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> mutable_data() noexcept { return data_; }

  double operator()(std::size_t c, std::size_t j) const { return data_[c * timepoints_ + j]; }
  double& operator()(std::size_t c, std::size_t j) { return data_[c * timepoints_ + j]; }
  std::span<const double> channel(std::size_t c) const {
    return std::span<const double>(data_).subspan(c * timepoints_, timepoints_);
  }

  SeriesView view() const { return {channels_, timepoints_, t0_, dt_, data_}; }
  operator SeriesView() const { return view(); }

  /// Keeps the listed channels in the given order.
  TimeSeries select_channels(std::span<const std::size_t> indices) const;

 private:
  std::size_t channels_ = 0;
  std::size_t timepoints_ = 0;
  double t0_ = 0.0;
  double dt_ = 1.0;
  std::vector<std::string> names_;
  std::vector<double> data_;
};

TimeSeries to_series(const SeriesView& view, std::vector<std::string> names);

}  // namespace lfi
