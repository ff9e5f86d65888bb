#include "lfi/core.hpp"

#include <cmath>
#include <string>

#include "lfi/error.hpp"

namespace lfi {

bool LinearConstraint::satisfied(std::span<const double> theta) const {
  double s = 0.0;
  for (std::size_t k = 0; k < coeffs.size(); ++k) s += coeffs[k] * theta[k];
  return s >= bound;
}

UniformBoxPrior::UniformBoxPrior(std::vector<double> dmin, std::vector<double> dmax,
                                 std::vector<LinearConstraint> constraints,
                                 std::vector<std::string> names)
    : dmin_(std::move(dmin)),
      dmax_(std::move(dmax)),
      constraints_(std::move(constraints)),
      names_(std::move(names)) {
  if (dmin_.empty() || dmin_.size() != dmax_.size())
    throw InvalidArgument("prior bounds must be non-empty and of equal length");
  for (std::size_t k = 0; k < dmin_.size(); ++k) {
    if (!std::isfinite(dmin_[k]) || !std::isfinite(dmax_[k]) || !(dmin_[k] < dmax_[k]))
      throw InvalidArgument("prior requires finite dmin < dmax for parameter " +
                            std::to_string(k));
  }
  for (const auto& c : constraints_) {
    if (c.coeffs.size() != dmin_.size())
      throw InvalidArgument("constraint coefficient count differs from prior dimension");
  }
  if (names_.empty()) {
    for (std::size_t k = 0; k < dmin_.size(); ++k) names_.push_back("theta_" + std::to_string(k + 1));
  } else if (names_.size() != dmin_.size()) {
    throw InvalidArgument("prior parameter names must match dimension");
  }
}

bool UniformBoxPrior::contains(std::span<const double> theta) const {
  if (theta.size() != dim()) return false;
  for (std::size_t k = 0; k < dim(); ++k) {
    if (!(theta[k] >= dmin_[k] && theta[k] <= dmax_[k])) return false;
  }
  for (const auto& c : constraints_) {
    if (!c.satisfied(theta)) return false;
  }
  return true;
}

std::vector<double> UniformBoxPrior::midpoint() const {
  std::vector<double> m(dim());
  for (std::size_t k = 0; k < dim(); ++k) m[k] = 0.5 * (dmin_[k] + dmax_[k]);
  return m;
}

std::vector<double> UniformBoxPrior::to_unit(std::span<const double> theta) const {
  if (theta.size() != dim()) throw DimensionMismatch("to_unit: parameter length mismatch");
  std::vector<double> u(dim());
  for (std::size_t k = 0; k < dim(); ++k) u[k] = (theta[k] - dmin_[k]) / width(k);
  return u;
}

std::vector<double> UniformBoxPrior::from_unit(std::span<const double> unit) const {
  if (unit.size() != dim()) throw DimensionMismatch("from_unit: parameter length mismatch");
  std::vector<double> theta(dim());
  for (std::size_t k = 0; k < dim(); ++k) theta[k] = dmin_[k] + unit[k] * width(k);
  return theta;
}

bool operator==(const UniformBoxPrior& a, const UniformBoxPrior& b) {
  if (a.dmin_ != b.dmin_ || a.dmax_ != b.dmax_ || a.names_ != b.names_) return false;
  if (a.constraints_.size() != b.constraints_.size()) return false;
  for (std::size_t i = 0; i < a.constraints_.size(); ++i) {
    if (a.constraints_[i].coeffs != b.constraints_[i].coeffs ||
        a.constraints_[i].bound != b.constraints_[i].bound)
      return false;
  }
  return true;
}

ParameterVector prior_sample_one(const UniformBoxPrior& prior, RngStream& rng) {
  ParameterVector theta(prior.dim());
  for (std::size_t attempt = 0; attempt < kPriorRetryBudget; ++attempt) {
    for (std::size_t k = 0; k < prior.dim(); ++k)
      theta[k] = rng.uniform(prior.lower()[k], prior.upper()[k]);
    bool ok = true;
    for (const auto& c : prior.constraints()) {
      if (!c.satisfied(theta)) {
        ok = false;
        break;
      }
    }
    if (ok) return theta;
  }
  throw RetryBudgetExceeded("prior constraint rejection exceeded " +
                            std::to_string(kPriorRetryBudget) + " consecutive attempts");
}

std::vector<ParameterVector> prior_sample(const UniformBoxPrior& prior, std::size_t n,
                                          RngStream& rng) {
  if (n == 0) throw InvalidArgument("prior_sample requires n >= 1");
  std::vector<ParameterVector> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(prior_sample_one(prior, rng));
  return out;
}

std::vector<double> prior_mae_denominator(const UniformBoxPrior& prior) {
  std::vector<double> d(prior.dim());
  for (std::size_t k = 0; k < prior.dim(); ++k) d[k] = prior.width(k) / 4.0;
  return d;
}

TimeSeries::TimeSeries(std::size_t channels, std::size_t timepoints, double t0, double dt,
                       std::vector<std::string> names, std::vector<double> data)
    : channels_(channels),
      timepoints_(timepoints),
      t0_(t0),
      dt_(dt),
      names_(std::move(names)),
      data_(std::move(data)) {
  if (channels_ == 0 || timepoints_ == 0) throw InvalidArgument("time series needs C >= 1 and T >= 1");
  if (!(dt_ > 0.0) || !std::isfinite(t0_)) throw InvalidArgument("time series needs dt > 0");
  if (data_.size() != channels_ * timepoints_)
    throw DimensionMismatch("time series data length is not C*T");
  if (names_.empty()) {
    for (std::size_t c = 0; c < channels_; ++c) names_.push_back("ch" + std::to_string(c));
  } else if (names_.size() != channels_) {
    throw DimensionMismatch("time series needs one name per channel");
  }
  for (double v : data_) {
    if (!std::isfinite(v)) throw InvalidArgument("time series contains a non-finite value");
  }
}

TimeSeries TimeSeries::zeros(std::size_t channels, std::size_t timepoints, double t0, double dt,
                             std::vector<std::string> names) {
  return TimeSeries(channels, timepoints, t0, dt, std::move(names),
                    std::vector<double>(channels * timepoints, 0.0));
}

TimeSeries TimeSeries::select_channels(std::span<const std::size_t> indices) const {
  std::vector<double> data;
  std::vector<std::string> names;
  data.reserve(indices.size() * timepoints_);
  for (std::size_t c : indices) {
    if (c >= channels_) throw InvalidArgument("channel index out of range");
    auto ch = channel(c);
    data.insert(data.end(), ch.begin(), ch.end());
    names.push_back(names_[c]);
  }
  return TimeSeries(indices.size(), timepoints_, t0_, dt_, std::move(names), std::move(data));
}

TimeSeries to_series(const SeriesView& view, std::vector<std::string> names) {
  return TimeSeries(view.channels, view.timepoints, view.t0, view.dt, std::move(names),
                    std::vector<double>(view.data.begin(), view.data.end()));
}

}  // namespace lfi
