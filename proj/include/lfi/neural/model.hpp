#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lfi/core.hpp"
#include "lfi/dataset.hpp"
#include "lfi/error.hpp"
#include "lfi/neural/network.hpp"

namespace lfi::nn {

/// Per-channel standardization fitted on training data (population σ; σ = 0 maps to 1).
struct InputNormalizer {
  std::vector<double> mean;
  std::vector<double> stddev;

  static InputNormalizer fit(const LabeledDataset& dataset);
  nlohmann::json to_json() const;
  static InputNormalizer from_json(const nlohmann::json& j);
  friend bool operator==(const InputNormalizer&, const InputNormalizer&) = default;
};

struct EpochRecord {
  std::size_t stage = 1;
  std::size_t epoch = 0;  // 0 is the untrained state
  double train_mse = 0.0;
  double val_mae = 0.0;
  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainConfig {
  int approach = 1;
  std::vector<std::size_t> batch_sizes = {512};
  std::size_t patience = 5;
  std::size_t max_epochs = 500;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
  std::uint64_t seed = 0;
  /// Gradients are accumulated over chunks of at most this many samples in a
  /// fixed order, which bounds memory for large batches.
  std::size_t micro_batch = 256;
  std::function<void(const EpochRecord&)> on_epoch;

  /// Approach 1: one stage with batch 512. Approach 2: batch 32, then 4096
  /// continuing from the stage-1 weights.
  static TrainConfig for_approach(int approach);
  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// A fitted regressor y ↦ θ̂(y): architecture, weights, input normalizer and
/// the prior box used for target scaling.
class TrainedSummaryModel {
 public:
  TrainedSummaryModel(ArchitectureSpec spec, std::vector<double> weights, InputNormalizer normalizer,
                      UniformBoxPrior prior);

  const ArchitectureSpec& spec() const noexcept { return net_->spec(); }
  const Network& network() const noexcept { return *net_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  std::vector<double>& mutable_weights() noexcept { return weights_; }
  const InputNormalizer& normalizer() const noexcept { return normalizer_; }
  const UniformBoxPrior& prior() const noexcept { return prior_; }
  const std::vector<EpochRecord>& history() const noexcept { return history_; }
  std::vector<EpochRecord>& mutable_history() noexcept { return history_; }
  std::size_t output_dim() const noexcept { return prior_.dim(); }

  /// Normalized network input (C × B·T) for entries [begin, end) of a dataset.
  Matrix input_batch(const LabeledDataset& dataset, std::span<const std::size_t> indices) const;
  Matrix input_batch(const SeriesView& series) const;

  /// Network output in [0,1]-scaled target space.
  std::vector<double> predict_scaled(const SeriesView& series) const;
  /// θ̂ in original parameter units.
  ParameterVector predict(const SeriesView& series) const;
  /// L × N predictions for a whole dataset, in scaled or raw units.
  Matrix predict_all(const LabeledDataset& dataset, bool scaled = false, std::size_t jobs = 1) const;

 private:
  std::shared_ptr<const Network> net_;
  std::vector<double> weights_;
  InputNormalizer normalizer_;
  UniformBoxPrior prior_;
  std::vector<EpochRecord> history_;
};

/// Divergence during training. Carries the best finite model seen so far.
class NonFiniteLoss : public NumericError {
 public:
  NonFiniteLoss(const std::string& what, std::shared_ptr<const TrainedSummaryModel> checkpoint)
      : NumericError("NonFiniteLoss", what), checkpoint_(std::move(checkpoint)) {}
  const std::shared_ptr<const TrainedSummaryModel>& checkpoint() const noexcept { return checkpoint_; }

 private:
  std::shared_ptr<const TrainedSummaryModel> checkpoint_;
};

/// Untrained model with He/Xavier initial weights; the normalizer is fitted on
/// `train_data` when given, identity otherwise.
TrainedSummaryModel build_architecture(const ArchitectureSpec& spec, const UniformBoxPrior& prior,
                                       RngStream& rng, const LabeledDataset* train_data = nullptr);

/// Prior-box targets in [0,1], L × N.
Matrix scaled_targets(const LabeledDataset& dataset);

/// Mean absolute error in scaled target space.
double validation_mae(const TrainedSummaryModel& model, const LabeledDataset& val);

/// Early-stopped Adam training of `model` in place; returns the best-MAE model.
TrainedSummaryModel train(TrainedSummaryModel model, const LabeledDataset& train_data,
                          const LabeledDataset& val_data, const TrainConfig& config);

/// Checkpoint: magic `LFIM`, u32 manifest length, JSON manifest, u64 weight count,
/// float64 LE weights.
void save_model(const TrainedSummaryModel& model, const std::filesystem::path& path);
TrainedSummaryModel load_model(const std::filesystem::path& path);

}  // namespace lfi::nn
