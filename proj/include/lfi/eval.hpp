#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "lfi/core.hpp"
#include "lfi/dataset.hpp"
#include "lfi/models.hpp"
#include "lfi/neural/model.hpp"

namespace lfi {

/// Per-parameter 4/(dmax − dmin) · mean |θ − θ̂|.
std::vector<double> e_percent(const std::vector<ParameterVector>& predictions,
                              const std::vector<ParameterVector>& truths,
                              const UniformBoxPrior& prior);
/// Predictions as an L × N matrix against the θ of `test`.
std::vector<double> e_percent(const Eigen::MatrixXd& predictions, const LabeledDataset& test);
/// Same formula against a single fixed θ.
std::vector<double> e_percent_true(const std::vector<ParameterVector>& predictions,
                                   std::span<const double> theta_true, const UniformBoxPrior& prior);

struct EvalReport {
  std::vector<std::string> param_names;
  std::vector<std::vector<double>> per_repetition;  // repetitions × L
  std::vector<double> e_percent;      // mean over repetitions, per parameter
  std::vector<double> e_percent_std;  // sample std over repetitions (0 for one)
  double mean = 0.0;                  // mean over repetitions of the per-repetition parameter mean
  double mean_std = 0.0;
  std::size_t repetitions = 0;
  nlohmann::json fingerprint = nlohmann::json::object();

  static EvalReport from_repetitions(std::vector<std::string> names,
                                     std::vector<std::vector<double>> per_repetition,
                                     nlohmann::json fingerprint = nlohmann::json::object());
};

/// 100 · (mean_b − mean_a) / mean_a. Throws DivisionByZero when mean_a = 0.
double percent_change(const EvalReport& a, const EvalReport& b);

/// Draws n (θ, y) pairs with entry i on stream i of `seed`. Simulations that
/// time out are discarded and θ is redrawn on the same stream; the number of
/// redraws is recorded in the manifest extras as `timeout_resamples`.
LabeledDataset generate_dataset(const ModelDefinition& model, std::size_t n, std::uint64_t seed,
                                std::size_t jobs = 0);

/// Cache key of a generation request (model description, n, seed).
std::string dataset_cache_key(const ModelDefinition& model, std::size_t n, std::uint64_t seed);

/// generate_dataset through an on-disk cache under `cache_dir` (or $LFI_CACHE_DIR
/// when empty; no caching when both are unset).
LabeledDataset cached_dataset(const ModelDefinition& model, std::size_t n, std::uint64_t seed,
                              std::size_t jobs = 0, const std::filesystem::path& cache_dir = {});

std::filesystem::path default_cache_dir();

struct ExperimentConfig {
  ModelOptions model;
  std::vector<std::string> architectures = {"CNN", "DNN", "PEN"};
  std::string preset = "setup1";  // setup1 | setup2 | ma2
  std::size_t pen_order = 10;
  std::vector<std::size_t> train_sizes = {10'000};
  std::size_t val_size = 10'000;
  std::size_t test_size = 10'000;
  nn::TrainConfig training = nn::TrainConfig::for_approach(1);
  std::size_t repetitions = 1;
  std::uint64_t seed = 0;
  std::size_t jobs = 0;
  /// Sampling-design sweep; empty keeps the model grid. Each step must be a
  /// multiple of the model dt and each t_end at most the model t_end. A design
  /// keeps the grid times t0, t0 + step, ... that do not exceed t_end.
  std::vector<double> steps;
  std::vector<double> t_ends;
  /// Extra test set of this size simulated at `theta_true` (E%_true rows).
  std::optional<ParameterVector> theta_true;
  std::size_t true_test_size = 0;
  std::string cache_dir;
  bool save_models = false;
  bool verbose = false;

  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
};

struct ReportRow {
  std::string architecture;
  std::string model;
  std::size_t train_size = 0;
  double step = 0.0;
  double t_end = 0.0;
  std::string species;
  EvalReport report;
};

struct ExperimentResult {
  std::vector<ReportRow> rows;
  std::vector<ReportRow> true_rows;
  nlohmann::json manifest;
};

/// Runs every (repetition, design, train size, architecture) cell on shared
/// datasets and writes report.csv (plus report_true.csv, history/, models/ and
/// manifest.json) under `out_dir`.
ExperimentResult run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                                const std::function<void(const std::string&)>& log = {});

/// CSV with columns architecture, model, train_size, step, t_end, species,
/// param_name, e_percent_mean, e_percent_std, repetitions; one row per parameter
/// plus a `mean` row per cell.
std::string report_csv(const std::vector<ReportRow>& rows);

/// epoch, train_mse, val_mae, stage.
std::string history_csv(const std::vector<nn::EpochRecord>& history);

}  // namespace lfi
