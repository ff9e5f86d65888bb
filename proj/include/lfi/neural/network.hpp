#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lfi/neural/layers.hpp"

namespace lfi::nn {

enum class ArchitectureKind { DNN, CNN, PEN };

std::string architecture_name(ArchitectureKind kind);
ArchitectureKind architecture_from_name(const std::string& name);

struct ArchitectureSpec {
  ArchitectureKind kind = ArchitectureKind::CNN;
  std::vector<std::size_t> conv_channels;  // CNN and PEN
  std::vector<std::size_t> dense_widths;
  std::size_t pen_order = 10;              // PEN only
  std::size_t conv_width = 3;              // CNN only
  std::size_t pooled_conv_layers = 2;      // CNN only
  std::size_t input_channels = 1;
  std::size_t input_timepoints = 1;
  std::size_t output_dim = 1;

  /// Throws InvalidArgument for empty or zero widths, UnsupportedShape when the
  /// series is too short for the architecture.
  void validate() const;

  nlohmann::json to_json() const;
  static ArchitectureSpec from_json(const nlohmann::json& j);
  friend bool operator==(const ArchitectureSpec&, const ArchitectureSpec&) = default;
};

/// Named layer-size presets: "setup1" (conv [25,50,100], dense [100,100]),
/// "setup2" (conv [32,48,64,96], dense [400,400,400]) and "ma2" (setup 1 sizes,
/// with the DNN using three dense layers of 100).
ArchitectureSpec preset_architecture(ArchitectureKind kind, const std::string& preset,
                                     std::size_t channels, std::size_t timepoints,
                                     std::size_t output_dim);

/// Buffers reused across passes of one network.
struct Workspace {
  std::vector<Matrix> acts;
  std::vector<LayerCache> caches;
  Matrix d, d_prev;
};

/// Feed-forward stack realizing an ArchitectureSpec over a flat weight store.
class Network {
 public:
  explicit Network(const ArchitectureSpec& spec);

  const ArchitectureSpec& spec() const noexcept { return spec_; }
  std::size_t param_count() const noexcept { return param_count_; }
  const std::vector<std::unique_ptr<Layer>>& layers() const noexcept { return layers_; }
  std::span<const double> layer_weights(std::span<const double> w, std::size_t layer) const {
    return w.subspan(offsets_[layer], layers_[layer]->param_count());
  }

  std::vector<double> init_weights(RngStream& rng) const;

  /// Input is C × (B·T) (see Shape); returns output_dim × B.
  Matrix forward(std::span<const double> w, const Matrix& input, std::size_t batch) const;
  const Matrix& forward(std::span<const double> w, const Matrix& input, std::size_t batch,
                        Workspace& ws) const;

  /// Adds ∂/∂w of Σ (out − target)² · scale to `grad` and returns Σ (out − target)².
  /// Targets are output_dim × B.
  double accumulate_gradients(std::span<const double> w, const Matrix& input, const Matrix& targets,
                              std::size_t batch, double scale, std::span<double> grad) const;
  double accumulate_gradients(std::span<const double> w, const Matrix& input, const Matrix& targets,
                              std::size_t batch, double scale, std::span<double> grad,
                              Workspace& ws) const;

 private:
  ArchitectureSpec spec_;
  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<std::size_t> offsets_;
  std::size_t param_count_ = 0;
};

/// Mean over batch and outputs of the squared error, with its gradient.
struct LossAndGradients {
  double loss = 0.0;
  std::vector<double> gradients;
};
LossAndGradients loss_and_gradients(const Network& net, std::span<const double> w,
                                    const Matrix& input, const Matrix& targets, std::size_t batch);

}  // namespace lfi::nn
