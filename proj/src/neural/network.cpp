#include "lfi/neural/network.hpp"

#include <cctype>

#include "lfi/error.hpp"
#include "lfi/json_util.hpp"

namespace lfi::nn {

std::string architecture_name(ArchitectureKind kind) {
  switch (kind) {
    case ArchitectureKind::DNN: return "DNN";
    case ArchitectureKind::CNN: return "CNN";
    case ArchitectureKind::PEN: return "PEN";
  }
  return "?";
}

ArchitectureKind architecture_from_name(const std::string& name) {
  std::string up;
  for (char c : name) up.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  if (up == "DNN") return ArchitectureKind::DNN;
  if (up == "CNN") return ArchitectureKind::CNN;
  if (up == "PEN" || up.rfind("PEN", 0) == 0) return ArchitectureKind::PEN;
  throw ConfigError("unknown architecture '" + name + "' (expected DNN, CNN, PEN)");
}

void ArchitectureSpec::validate() const {
  if (input_channels == 0 || input_timepoints == 0 || output_dim == 0)
    throw InvalidArgument("architecture needs positive input and output sizes");
  for (auto w : dense_widths)
    if (w == 0) throw InvalidArgument("dense widths must be positive");
  for (auto c : conv_channels)
    if (c == 0) throw InvalidArgument("convolution channel counts must be positive");
  if (kind != ArchitectureKind::DNN && conv_channels.empty())
    throw InvalidArgument(architecture_name(kind) + " needs at least one convolution layer");
  if (kind == ArchitectureKind::CNN && (conv_width == 0 || conv_width % 2 == 0))
    throw InvalidArgument("CNN convolution window must be odd");
  if (kind == ArchitectureKind::PEN && input_timepoints < pen_order + 1)
    throw UnsupportedShape("PEN order " + std::to_string(pen_order) + " needs at least " +
                           std::to_string(pen_order + 1) + " timepoints, got " +
                           std::to_string(input_timepoints));
}

nlohmann::json ArchitectureSpec::to_json() const {
  return {{"kind", architecture_name(kind)},
          {"conv_channels", conv_channels},
          {"dense_widths", dense_widths},
          {"pen_order", pen_order},
          {"conv_width", conv_width},
          {"pooled_conv_layers", pooled_conv_layers},
          {"input_channels", input_channels},
          {"input_timepoints", input_timepoints},
          {"output_dim", output_dim}};
}

ArchitectureSpec ArchitectureSpec::from_json(const nlohmann::json& j) {
  const std::string ctx = "architecture";
  require_known_keys(j, {"kind", "conv_channels", "dense_widths", "pen_order", "conv_width",
                         "pooled_conv_layers", "input_channels", "input_timepoints", "output_dim"},
                     ctx);
  ArchitectureSpec s;
  s.kind = architecture_from_name(json_get<std::string>(j, "kind", ctx));
  json_read(j, "conv_channels", s.conv_channels, ctx);
  json_read(j, "dense_widths", s.dense_widths, ctx);
  json_read(j, "pen_order", s.pen_order, ctx);
  json_read(j, "conv_width", s.conv_width, ctx);
  json_read(j, "pooled_conv_layers", s.pooled_conv_layers, ctx);
  json_read(j, "input_channels", s.input_channels, ctx);
  json_read(j, "input_timepoints", s.input_timepoints, ctx);
  json_read(j, "output_dim", s.output_dim, ctx);
  return s;
}

ArchitectureSpec preset_architecture(ArchitectureKind kind, const std::string& preset,
                                     std::size_t channels, std::size_t timepoints,
                                     std::size_t output_dim) {
  ArchitectureSpec s;
  s.kind = kind;
  s.input_channels = channels;
  s.input_timepoints = timepoints;
  s.output_dim = output_dim;
  if (preset == "setup1" || preset == "ma2") {
    s.conv_channels = {25, 50, 100};
    s.dense_widths = {100, 100};
    if (preset == "ma2" && kind == ArchitectureKind::DNN) s.dense_widths = {100, 100, 100};
  } else if (preset == "setup2") {
    s.conv_channels = {32, 48, 64, 96};
    s.dense_widths = {400, 400, 400};
  } else {
    throw ConfigError("unknown architecture preset '" + preset + "' (expected setup1, setup2, ma2)");
  }
  if (kind == ArchitectureKind::DNN) s.conv_channels.clear();
  s.validate();
  return s;
}

Network::Network(const ArchitectureSpec& spec) : spec_(spec) {
  spec_.validate();
  Shape shape{spec.input_channels, spec.input_timepoints};
  auto add = [&](std::unique_ptr<Layer> layer) {
    shape = layer->output_shape();
    layers_.push_back(std::move(layer));
  };
  switch (spec.kind) {
    case ArchitectureKind::DNN:
      add(std::make_unique<Flatten>(shape));
      break;
    case ArchitectureKind::CNN:
      for (std::size_t i = 0; i < spec.conv_channels.size(); ++i) {
        add(std::make_unique<Conv1D>(shape, spec.conv_channels[i], spec.conv_width, Padding::Same,
                                     Activation::Relu));
        if (i < spec.pooled_conv_layers) add(std::make_unique<MaxPool2>(shape));
      }
      add(std::make_unique<GlobalAvgPool>(shape));
      break;
    case ArchitectureKind::PEN:
      // Inner network on every (d+1)-window: one window-wide convolution then
      // pointwise layers, so the receptive field is exactly d+1.
      for (std::size_t i = 0; i < spec.conv_channels.size(); ++i) {
        add(std::make_unique<Conv1D>(shape, spec.conv_channels[i], i == 0 ? spec.pen_order + 1 : 1,
                                     Padding::Valid, Activation::Relu));
      }
      // The window count is fixed by the input length, so dividing by it only
      // rescales what the next dense layer sees.
      add(std::make_unique<SumPool>(shape, 1.0 / static_cast<double>(shape.timepoints)));
      add(std::make_unique<InputPrefix>(shape.channels,
                                        Shape{spec.input_channels, spec.input_timepoints},
                                        spec.pen_order));
      break;
  }
  for (auto w : spec.dense_widths) add(std::make_unique<Dense>(shape.channels, w, Activation::Relu));
  add(std::make_unique<Dense>(shape.channels, spec.output_dim, Activation::Linear));

  for (const auto& layer : layers_) {
    offsets_.push_back(param_count_);
    param_count_ += layer->param_count();
  }
}

std::vector<double> Network::init_weights(RngStream& rng) const {
  std::vector<double> w(param_count_);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i]->init(std::span<double>(w).subspan(offsets_[i], layers_[i]->param_count()), rng);
  }
  return w;
}

Matrix Network::forward(std::span<const double> w, const Matrix& input, std::size_t batch) const {
  Workspace ws;
  return forward(w, input, batch, ws);
}

const Matrix& Network::forward(std::span<const double> w, const Matrix& input, std::size_t batch,
                               Workspace& ws) const {
  if (w.size() != param_count_) throw DimensionMismatch("weight store has the wrong length");
  const std::size_t n = layers_.size();
  ws.acts.resize(n + 1);
  ws.caches.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Matrix& in = i == 0 ? input : ws.acts[i];
    layers_[i]->forward(layer_weights(w, i), in, batch, ws.acts[i + 1], ws.caches[i], input);
  }
  return ws.acts[n];
}

double Network::accumulate_gradients(std::span<const double> w, const Matrix& input,
                                     const Matrix& targets, std::size_t batch, double scale,
                                     std::span<double> grad) const {
  Workspace ws;
  return accumulate_gradients(w, input, targets, batch, scale, grad, ws);
}

double Network::accumulate_gradients(std::span<const double> w, const Matrix& input,
                                     const Matrix& targets, std::size_t batch, double scale,
                                     std::span<double> grad, Workspace& ws) const {
  if (w.size() != param_count_ || grad.size() != param_count_)
    throw DimensionMismatch("weight or gradient store has the wrong length");
  if (targets.rows() != static_cast<Eigen::Index>(spec_.output_dim) ||
      targets.cols() != static_cast<Eigen::Index>(batch))
    throw DimensionMismatch("targets must be output_dim x batch");
  const std::size_t n = layers_.size();
  const Matrix& out = forward(w, input, batch, ws);
  ws.d = out - targets;
  const double sse = ws.d.squaredNorm();
  ws.d *= 2.0 * scale;
  for (std::size_t i = n; i-- > 0;) {
    auto gw = grad.subspan(offsets_[i], layers_[i]->param_count());
    const Matrix& in = i == 0 ? input : ws.acts[i];
    layers_[i]->backward(layer_weights(w, i), in, ws.acts[i + 1], ws.caches[i], ws.d, batch,
                         i == 0 ? nullptr : &ws.d_prev, gw);
    std::swap(ws.d, ws.d_prev);
  }
  return sse;
}

LossAndGradients loss_and_gradients(const Network& net, std::span<const double> w,
                                    const Matrix& input, const Matrix& targets, std::size_t batch) {
  if (batch == 0) throw InvalidArgument("loss over an empty batch");
  LossAndGradients r;
  r.gradients.assign(net.param_count(), 0.0);
  const double denom = static_cast<double>(batch * net.spec().output_dim);
  r.loss = net.accumulate_gradients(w, input, targets, batch, 1.0 / denom, r.gradients) / denom;
  return r;
}

}  // namespace lfi::nn
