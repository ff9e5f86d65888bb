#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "lfi/core.hpp"
#include "lfi/dataset.hpp"

namespace lfi {

enum class Statistic { Sum, Median, Mean, StdDev, Variance, Max, Burstiness };

/// Fixed pool order used everywhere statistics are enumerated.
inline constexpr std::array<Statistic, 7> kStatisticPool = {
    Statistic::Sum,      Statistic::Median, Statistic::Mean,      Statistic::StdDev,
    Statistic::Variance, Statistic::Max,    Statistic::Burstiness};

std::string_view statistic_name(Statistic s);
Statistic statistic_from_name(std::string_view name);

/// (σ − μ)/(σ + μ) over the values, population σ. Throws Degenerate when σ + μ = 0.
double burstiness(std::span<const double> values);

/// Single statistic of one channel. Variance and standard deviation use 1/T.
double compute_statistic(Statistic s, std::span<const double> values);

/// The seven pool statistics per channel, channel blocks in channel order.
/// An all-zero channel (undefined burstiness) reports burstiness −1, the
/// constant-signal value.
std::vector<double> compute_pool(const SeriesView& ts);

struct Feature {
  std::size_t channel = 0;
  Statistic statistic = Statistic::Mean;
  friend bool operator==(const Feature&, const Feature&) = default;
};

/// Transformation h(y): an ordered list of per-channel statistics.
class FeatureMap {
 public:
  FeatureMap() = default;
  explicit FeatureMap(std::vector<Feature> features) : features_(std::move(features)) {}

  /// Full 7·C pool in compute_pool order.
  static FeatureMap pool(std::size_t channels);

  std::size_t size() const noexcept { return features_.size(); }
  bool empty() const noexcept { return features_.empty(); }
  const std::vector<Feature>& features() const noexcept { return features_; }
  FeatureMap subset(std::span<const std::size_t> indices) const;

  std::vector<double> evaluate(const SeriesView& ts) const;
  /// N×F matrix of features over a dataset.
  Eigen::MatrixXd evaluate_all(const LabeledDataset& dataset, std::size_t jobs = 1) const;
  std::vector<std::string> names(const std::vector<std::string>& channel_names) const;

  nlohmann::json to_json() const;
  static FeatureMap from_json(const nlohmann::json& j);

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  std::vector<Feature> features_;
};

struct AsSelectOptions {
  double epsilon_quantile = 0.05;
  double threshold = 0.10;
  std::size_t bins = 20;
};

/// Approximate-sufficiency selection. Candidates are visited in a random order;
/// a candidate joins the current subset when adding it moves some parameter's
/// accepted-sample histogram (bins over the prior box) by more than `threshold`
/// in maximum absolute bin probability. Features are scaled by their standard
/// deviation over the dataset. Returns the kept candidate indices, ascending.
std::vector<std::size_t> as_select(const FeatureMap& candidates, const SeriesView& observed,
                                   const LabeledDataset& dataset, RngStream& rng,
                                   const AsSelectOptions& options = {});

/// Same as above on precomputed features (N×K) and observed features (K).
std::vector<std::size_t> as_select_features(const Eigen::MatrixXd& features,
                                            std::span<const double> observed,
                                            const LabeledDataset& dataset, RngStream& rng,
                                            const AsSelectOptions& options = {});

/// Per-parameter regression E(θ_j | y) = b0_j + B_j·h(y) with residual scale σ_j.
struct LinearSummaryModel {
  std::vector<double> b0;
  Eigen::MatrixXd B;  // L×F
  std::vector<double> sigma;
  FeatureMap feature_map;
  std::size_t rank = 0;
};

struct LinearFitOptions {
  /// Relative pivot tolerance of the column-pivoted QR solve.
  double rank_tolerance = 1e-10;
  /// Exactly collinear features (e.g. sum and mean at fixed T) get zero
  /// coefficients instead of raising SingularDesign.
  bool allow_collinear = true;
};

LinearSummaryModel fit_linear_summary(const LabeledDataset& dataset, const FeatureMap& feature_map,
                                      const LinearFitOptions& options = {});
ParameterVector linear_predict(const LinearSummaryModel& model, const SeriesView& ts);
ParameterVector linear_predict_features(const LinearSummaryModel& model, std::span<const double> h);

}  // namespace lfi
