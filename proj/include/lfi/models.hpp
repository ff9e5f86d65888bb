#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lfi/dataset.hpp"
#include "lfi/simulators.hpp"

namespace lfi {

/// Everything needed to draw labelled data from one model: prior, output layout
/// and a simulator. `simulate` may throw Timeout; callers resample θ.
struct ModelDefinition {
  std::string name;
  UniformBoxPrior prior;
  SeriesShape shape;
  ParameterVector reference_theta;
  std::function<TimeSeries(std::span<const double>, RngStream&)> simulate;
  nlohmann::json description;
};

/// Model selection as it appears in run configurations.
struct ModelOptions {
  std::string model = "ma2";  // ma2 | lotka_volterra | vilar | custom
  std::size_t ma2_length = 100;
  std::optional<double> t0, t_end, dt;
  std::vector<std::string> species;  // empty: model default
  double timeout_seconds = 30.0;  // safety net; the event budget decides
  std::uint64_t max_events = 0;  // 0: model default
  VilarReleaseRate vilar_release = VilarReleaseRate::ThetaR;
  std::string reaction_file;
  std::optional<UniformBoxPrior> prior;  // required for custom networks
  std::optional<ParameterVector> reference_theta;

  nlohmann::json to_json() const;
  static ModelOptions from_json(const nlohmann::json& j);
};

ModelDefinition make_model(const ModelOptions& options);

/// Default deterministic SSA event budgets (the wall-clock timeout stays as a
/// safety net but is not needed for reproducible resampling).
inline constexpr std::uint64_t kLotkaVolterraMaxEvents = 1'000'000;
inline constexpr std::uint64_t kVilarMaxEvents = 10'000'000;

}  // namespace lfi
