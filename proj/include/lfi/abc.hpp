#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "lfi/core.hpp"
#include "lfi/dataset.hpp"
#include "lfi/neural/model.hpp"
#include "lfi/sumstats.hpp"

namespace lfi {

/// Euclidean distance between two summaries.
double summary_distance(std::span<const double> a, std::span<const double> b);

/// max(1, round(ratio·n)), capped at n.
std::size_t accepted_count(std::size_t n, double ratio);

/// Indices of the `count` smallest distances, ascending by (distance, index).
std::vector<std::size_t> accept_nearest(std::span<const double> distances, std::size_t count);

/// The summary S(y) compared inside ABC.
class SummaryFunction {
 public:
  enum class Kind { Learned, Linear, Statistics, Raw };

  /// Trained regressor; distances use its [0,1]-scaled predictions.
  static SummaryFunction learned(std::shared_ptr<const nn::TrainedSummaryModel> model);
  /// Linear regression summary; predictions are scaled by the prior box.
  static SummaryFunction linear(std::shared_ptr<const LinearSummaryModel> model,
                                const UniformBoxPrior& prior);
  /// Hand-crafted statistics, each divided by the given scale.
  static SummaryFunction statistics(FeatureMap features, std::vector<double> scales);
  /// Hand-crafted statistics scaled by their standard deviation over `reference`.
  static SummaryFunction statistics(FeatureMap features, const LabeledDataset& reference);
  /// All recorded channels flattened.
  static SummaryFunction raw();

  Kind kind() const noexcept { return kind_; }
  std::string descriptor() const;

  std::vector<double> operator()(const SeriesView& series) const;
  /// D × N summaries for a whole dataset.
  Eigen::MatrixXd evaluate_all(const LabeledDataset& dataset, std::size_t jobs = 1) const;

 private:
  Kind kind_ = Kind::Raw;
  std::shared_ptr<const nn::TrainedSummaryModel> learned_;
  std::shared_ptr<const LinearSummaryModel> linear_;
  UniformBoxPrior prior_;
  FeatureMap features_;
  std::vector<double> scales_;
};

struct Posterior {
  std::vector<ParameterVector> samples;
  std::vector<double> weights;    // normalized
  std::vector<double> distances;  // empty for MCMC chains
  std::size_t trial_count = 0;
  std::vector<double> epsilon_schedule;

  std::size_t size() const noexcept { return samples.size(); }
  ParameterVector mean() const;
  ParameterVector stddev() const;
};

/// Accepts the max(1, round(ratio·N)) entries whose summaries lie closest to
/// the observed summary; uniform weights; ties by dataset index.
Posterior rejection_reference_table(const LabeledDataset& dataset, const SummaryFunction& summary,
                                    const SeriesView& observed, double acceptance_ratio,
                                    std::size_t jobs = 1);

/// Same on precomputed summaries (D × N) of the dataset.
Posterior rejection_from_summaries(const LabeledDataset& dataset, const Eigen::MatrixXd& summaries,
                                   std::span<const double> observed_summary,
                                   double acceptance_ratio);

using Simulator = std::function<TimeSeries(std::span<const double>, RngStream&)>;

struct SmcOptions {
  std::size_t population = 500;
  std::size_t rounds = 6;
  double epsilon_quantile = 0.2;
  /// Proposals per round before BudgetExceeded.
  std::size_t max_trials_per_round = 5'000'000;
  /// Kernel covariance = kernel_scale × weighted population covariance.
  double kernel_scale = 2.0;
  /// Proposals are simulated in blocks of this size (each with its own stream);
  /// acceptances are taken in proposal order, so results ignore `jobs`.
  std::size_t block = 256;
  std::size_t jobs = 1;
  /// Proposals whose simulation times out are counted as trials and skipped.
  std::function<void(std::size_t round, const Posterior&)> on_round;
};

/// Population Monte Carlo ABC with a quantile ε schedule and Gaussian kernel.
/// Returns one Posterior per round.
std::vector<Posterior> smc_abc(const Simulator& simulator, const UniformBoxPrior& prior,
                               const SummaryFunction& summary, const SeriesView& observed,
                               const SmcOptions& options, std::uint64_t seed);

}  // namespace lfi
