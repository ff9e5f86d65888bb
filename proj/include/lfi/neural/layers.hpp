#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lfi/rng.hpp"

namespace lfi::nn {

using Matrix = Eigen::MatrixXd;

/// Per-sample activation layout. A batch of B samples is stored as a
/// channels × (B·timepoints) matrix, sample b occupying columns [b·T, (b+1)·T).
/// Dense activations are the T = 1 case.
struct Shape {
  std::size_t channels = 0;
  std::size_t timepoints = 0;
  friend bool operator==(const Shape&, const Shape&) = default;
};

enum class Activation { Linear, Relu };
enum class Padding { Same, Valid };

/// Scratch kept between forward and backward for one layer.
struct LayerCache {
  Matrix m;
  Matrix scratch;
};

class Layer {
 public:
  explicit Layer(Shape in, Shape out) : in_(in), out_(out) {}
  virtual ~Layer() = default;

  virtual std::string kind() const = 0;
  Shape input_shape() const noexcept { return in_; }
  Shape output_shape() const noexcept { return out_; }
  virtual std::size_t param_count() const { return 0; }
  /// He-normal for ReLU layers, Xavier-uniform otherwise; biases zero.
  virtual void init(std::span<double> w, RngStream& rng) const {}

  /// `net_in` is the network input batch (only the PEN prefix head reads it).
  virtual void forward(std::span<const double> w, const Matrix& in, std::size_t batch, Matrix& out,
                       LayerCache& cache, const Matrix& net_in) const = 0;
  /// `d_out` may be overwritten. Gradients are accumulated into `d_w`;
  /// `d_in` is skipped when null.
  virtual void backward(std::span<const double> w, const Matrix& in, const Matrix& out,
                        LayerCache& cache, Matrix& d_out, std::size_t batch, Matrix* d_in,
                        std::span<double> d_w) const = 0;

 protected:
  Shape in_;
  Shape out_;
};

/// Convolution over time with kernels C_out × C_in × width. Same padding is
/// centred with zero fill (odd widths only); valid padding drops the edges.
class Conv1D final : public Layer {
 public:
  Conv1D(Shape in, std::size_t out_channels, std::size_t width, Padding padding, Activation act);
  std::string kind() const override { return "conv1d"; }
  std::size_t param_count() const override;
  void init(std::span<double> w, RngStream& rng) const override;
  void forward(std::span<const double> w, const Matrix& in, std::size_t batch, Matrix& out,
               LayerCache& cache, const Matrix& net_in) const override;
  void backward(std::span<const double> w, const Matrix& in, const Matrix& out,
                LayerCache& cache, Matrix& d_out, std::size_t batch, Matrix* d_in,
                std::span<double> d_w) const override;

  std::size_t width() const noexcept { return width_; }
  Padding padding() const noexcept { return padding_; }
  Activation activation() const noexcept { return act_; }

 private:
  void im2col(const Matrix& in, std::size_t batch, Matrix& X) const;
  void clear_edges(Matrix& X, std::size_t tap, std::ptrdiff_t shift, std::size_t batch) const;

  std::size_t width_;
  Padding padding_;
  Activation act_;
  std::ptrdiff_t offset_;  // input column of tap 0 relative to output column
};

class Dense final : public Layer {
 public:
  Dense(std::size_t in_features, std::size_t out_features, Activation act);
  std::string kind() const override { return "dense"; }
  std::size_t param_count() const override;
  void init(std::span<double> w, RngStream& rng) const override;
  void forward(std::span<const double> w, const Matrix& in, std::size_t batch, Matrix& out,
               LayerCache& cache, const Matrix& net_in) const override;
  void backward(std::span<const double> w, const Matrix& in, const Matrix& out,
                LayerCache& cache, Matrix& d_out, std::size_t batch, Matrix* d_in,
                std::span<double> d_w) const override;
  Activation activation() const noexcept { return act_; }

 private:
  Activation act_;
};

/// Width 2, stride 2. An odd final window repeats the last element, so the
/// output length is ⌈T/2⌉. Ties route the gradient to the first position.
class MaxPool2 final : public Layer {
 public:
  explicit MaxPool2(Shape in);
  std::string kind() const override { return "maxpool"; }
  void forward(std::span<const double> w, const Matrix& in, std::size_t batch, Matrix& out,
               LayerCache& cache, const Matrix& net_in) const override;
  void backward(std::span<const double> w, const Matrix& in, const Matrix& out,
                LayerCache& cache, Matrix& d_out, std::size_t batch, Matrix* d_in,
                std::span<double> d_w) const override;
};

class GlobalAvgPool final : public Layer {
 public:
  explicit GlobalAvgPool(Shape in);
  std::string kind() const override { return "avgpool"; }
  void forward(std::span<const double> w, const Matrix& in, std::size_t batch, Matrix& out,
               LayerCache& cache, const Matrix& net_in) const override;
  void backward(std::span<const double> w, const Matrix& in, const Matrix& out,
                LayerCache& cache, Matrix& d_out, std::size_t batch, Matrix* d_in,
                std::span<double> d_w) const override;
};

/// Sum over time, multiplied by a fixed factor. Each channel is accumulated in
/// 64-bit fixed point scaled to its largest magnitude, so the result does not
/// depend on the order of the window contributions.
class SumPool final : public Layer {
 public:
  explicit SumPool(Shape in, double factor = 1.0);
  double factor() const noexcept { return factor_; }
  std::string kind() const override { return "sumpool"; }
  void forward(std::span<const double> w, const Matrix& in, std::size_t batch, Matrix& out,
               LayerCache& cache, const Matrix& net_in) const override;
  void backward(std::span<const double> w, const Matrix& in, const Matrix& out,
                LayerCache& cache, Matrix& d_out, std::size_t batch, Matrix* d_in,
                std::span<double> d_w) const override;
 private:
  double factor_;
};

/// C×T per sample to a C·T feature vector, channel-major.
class Flatten final : public Layer {
 public:
  explicit Flatten(Shape in);
  std::string kind() const override { return "flatten"; }
  void forward(std::span<const double> w, const Matrix& in, std::size_t batch, Matrix& out,
               LayerCache& cache, const Matrix& net_in) const override;
  void backward(std::span<const double> w, const Matrix& in, const Matrix& out,
                LayerCache& cache, Matrix& d_out, std::size_t batch, Matrix* d_in,
                std::span<double> d_w) const override;
};

/// Appends the first `prefix` timepoints of every network input channel to a
/// feature vector (the PEN conditioning block).
class InputPrefix final : public Layer {
 public:
  InputPrefix(std::size_t features, Shape network_input, std::size_t prefix);
  std::string kind() const override { return "input_prefix"; }
  void forward(std::span<const double> w, const Matrix& in, std::size_t batch, Matrix& out,
               LayerCache& cache, const Matrix& net_in) const override;
  void backward(std::span<const double> w, const Matrix& in, const Matrix& out,
                LayerCache& cache, Matrix& d_out, std::size_t batch, Matrix* d_in,
                std::span<double> d_w) const override;

 private:
  Shape net_in_;
  std::size_t prefix_;
};

// Single-sample helpers on C×T matrices.

/// Width-3 same-padded convolution; kernels[c] is a C_in × 3 block (tap order −1, 0, +1).
Matrix conv1d_forward(const Matrix& input, const std::vector<Matrix>& kernels,
                      const Eigen::VectorXd& bias);
Matrix maxpool1d(const Matrix& input);
Eigen::VectorXd global_avg_pool(const Matrix& input);
Eigen::VectorXd dense_forward(const Eigen::VectorXd& input, const Matrix& weights,
                              const Eigen::VectorXd& bias, Activation act);

}  // namespace lfi::nn
