#include "lfi/neural/layers.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>

#include "lfi/error.hpp"

namespace lfi::nn {

namespace {

using Index = Eigen::Index;
using ConstMap = Eigen::Map<const Matrix>;
using MutMap = Eigen::Map<Matrix>;
using StridedConst = Eigen::Map<const Matrix, 0, Eigen::OuterStride<>>;
using StridedMut = Eigen::Map<Matrix, 0, Eigen::OuterStride<>>;

Index ix(std::size_t v) { return static_cast<Index>(v); }

template <class Bias>
void bias_act(Matrix& out, const Bias& bias, Activation act) {
  if (act == Activation::Relu) out.array() = (out.array().colwise() + bias.array()).max(0.0);
  else out.colwise() += bias;
}

// The partial reduction goes through an owned vector: evaluated straight into a
// Map its packet/scalar split would follow the address of the gradient store.
template <typename Dst>
void add_row_sums(Dst&& db, const Matrix& d_out) {
  const Eigen::VectorXd sums = d_out.rowwise().sum();
  db += sums;
}

void relu_mask(Matrix& d_out, const Matrix& out) {
  d_out.array() *= (out.array() > 0.0).cast<double>();
}

void he_normal(std::span<double> w, std::size_t fan_in, RngStream& rng) {
  const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (double& v : w) v = sd * rng.normal();
}

void xavier_uniform(std::span<double> w, std::size_t fan_in, std::size_t fan_out, RngStream& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : w) v = rng.uniform(-limit, limit);
}

void check_rows(const Matrix& in, std::size_t rows, std::size_t cols, const char* layer) {
  if (static_cast<std::size_t>(in.rows()) != rows || static_cast<std::size_t>(in.cols()) != cols)
    throw DimensionMismatch(std::string(layer) + ": input is " + std::to_string(in.rows()) + "x" +
                            std::to_string(in.cols()) + ", expected " + std::to_string(rows) + "x" +
                            std::to_string(cols));
}

}  // namespace

// ---- Conv1D ---------------------------------------------------------------

Conv1D::Conv1D(Shape in, std::size_t out_channels, std::size_t width, Padding padding,
               Activation act)
    : Layer(in, {out_channels, 0}), width_(width), padding_(padding), act_(act) {
  if (width == 0 || out_channels == 0 || in.channels == 0)
    throw InvalidArgument("conv1d needs positive width and channel counts");
  if (padding == Padding::Same) {
    if (width % 2 == 0) throw InvalidArgument("same padding needs an odd window");
    out_.timepoints = in.timepoints;
    offset_ = -static_cast<std::ptrdiff_t>((width - 1) / 2);
  } else {
    if (in.timepoints < width)
      throw UnsupportedShape("valid convolution of width " + std::to_string(width) +
                             " on a series of length " + std::to_string(in.timepoints));
    out_.timepoints = in.timepoints - width + 1;
    offset_ = 0;
  }
}

std::size_t Conv1D::param_count() const { return out_.channels * (in_.channels * width_ + 1); }

void Conv1D::init(std::span<double> w, RngStream& rng) const {
  const std::size_t nw = out_.channels * in_.channels * width_;
  if (act_ == Activation::Relu) he_normal(w.first(nw), in_.channels * width_, rng);
  else xavier_uniform(w.first(nw), in_.channels * width_, out_.channels * width_, rng);
  std::fill(w.begin() + static_cast<std::ptrdiff_t>(nw), w.end(), 0.0);
}

void Conv1D::im2col(const Matrix& in, std::size_t batch, Matrix& X) const {
  const std::size_t cin = in_.channels, tin = in_.timepoints, tout = out_.timepoints;
  X.resize(ix(cin * width_), ix(batch * tout));
  if (padding_ == Padding::Valid) {
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t a = 0; a < width_; ++a)
        X.block(ix(a * cin), ix(b * tout), ix(cin), ix(tout)) = in.middleCols(ix(b * tin + a), ix(tout));
    }
    return;
  }
  // Same padding: shift the whole batch per tap, then clear the columns that
  // read across a sample boundary.
  const auto N = static_cast<std::ptrdiff_t>(batch * tout);
  for (std::size_t a = 0; a < width_; ++a) {
    const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(a) + offset_;
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -s), hi = std::min(N, N - s);
    if (hi > lo) X.block(ix(a * cin), lo, ix(cin), hi - lo) = in.middleCols(lo + s, hi - lo);
    clear_edges(X, a, s, batch);
  }
}

void Conv1D::clear_edges(Matrix& X, std::size_t tap, std::ptrdiff_t s, std::size_t batch) const {
  if (s == 0) return;
  const std::size_t cin = in_.channels;
  const auto T = static_cast<std::ptrdiff_t>(out_.timepoints);
  const std::ptrdiff_t n = std::min<std::ptrdiff_t>(s < 0 ? -s : s, T);
  const std::ptrdiff_t first = s < 0 ? 0 : T - n;
  for (std::size_t b = 0; b < batch; ++b)
    X.block(ix(tap * cin), static_cast<Index>(b) * T + first, ix(cin), n).setZero();
}

void Conv1D::forward(std::span<const double> w, const Matrix& in, std::size_t batch, Matrix& out,
                     LayerCache& cache, const Matrix&) const {
  const std::size_t cin = in_.channels, tin = in_.timepoints, tout = out_.timepoints;
  check_rows(in, cin, batch * tin, "conv1d");
  const ConstMap W(w.data(), ix(out_.channels), ix(cin * width_));
  const Eigen::Map<const Eigen::VectorXd> bias(w.data() + out_.channels * cin * width_,
                                               ix(out_.channels));
  if (width_ == 1 && tin == tout) {
    cache.m.resize(0, 0);
    out.noalias() = W * in;
  } else {
    im2col(in, batch, cache.m);
    out.noalias() = W * cache.m;
  }
  bias_act(out, bias, act_);
}

void Conv1D::backward(std::span<const double> w, const Matrix& in, const Matrix& out,
                      LayerCache& cache, Matrix& d_out, std::size_t batch, Matrix* d_in,
                      std::span<double> d_w) const {
  const std::size_t cin = in_.channels, tin = in_.timepoints, tout = out_.timepoints;
  if (act_ == Activation::Relu) relu_mask(d_out, out);
  const std::size_t nw = out_.channels * cin * width_;
  const ConstMap W(w.data(), ix(out_.channels), ix(cin * width_));
  MutMap dW(d_w.data(), ix(out_.channels), ix(cin * width_));
  Eigen::Map<Eigen::VectorXd> db(d_w.data() + nw, ix(out_.channels));
  const bool direct = cache.m.size() == 0;
  const Matrix& X = direct ? in : cache.m;
  dW.noalias() += d_out * X.transpose();
  add_row_sums(db, d_out);
  if (!d_in) return;
  if (direct) {
    d_in->noalias() = W.transpose() * d_out;
    return;
  }
  Matrix& dX = cache.scratch;
  dX.noalias() = W.transpose() * d_out;
  d_in->setZero(ix(cin), ix(batch * tin));
  if (padding_ == Padding::Valid) {
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t a = 0; a < width_; ++a)
        d_in->middleCols(ix(b * tin + a), ix(tout)) += dX.block(ix(a * cin), ix(b * tout), ix(cin), ix(tout));
    }
    return;
  }
  const auto N = static_cast<std::ptrdiff_t>(batch * tout);
  for (std::size_t a = 0; a < width_; ++a) {
    const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(a) + offset_;
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -s), hi = std::min(N, N - s);
    clear_edges(dX, a, s, batch);
    if (hi > lo) d_in->middleCols(lo + s, hi - lo) += dX.block(ix(a * cin), lo, ix(cin), hi - lo);
  }
}

// ---- Dense ----------------------------------------------------------------

Dense::Dense(std::size_t in_features, std::size_t out_features, Activation act)
    : Layer({in_features, 1}, {out_features, 1}), act_(act) {
  if (in_features == 0 || out_features == 0) throw InvalidArgument("dense layer needs positive sizes");
}

std::size_t Dense::param_count() const { return out_.channels * (in_.channels + 1); }

void Dense::init(std::span<double> w, RngStream& rng) const {
  const std::size_t nw = out_.channels * in_.channels;
  if (act_ == Activation::Relu) he_normal(w.first(nw), in_.channels, rng);
  else xavier_uniform(w.first(nw), in_.channels, out_.channels, rng);
  std::fill(w.begin() + static_cast<std::ptrdiff_t>(nw), w.end(), 0.0);
}

void Dense::forward(std::span<const double> w, const Matrix& in, std::size_t batch, Matrix& out,
                    LayerCache&, const Matrix&) const {
  check_rows(in, in_.channels, batch, "dense");
  const ConstMap W(w.data(), ix(out_.channels), ix(in_.channels));
  const Eigen::Map<const Eigen::VectorXd> bias(w.data() + out_.channels * in_.channels,
                                               ix(out_.channels));
  out.noalias() = W * in;
  bias_act(out, bias, act_);
}

void Dense::backward(std::span<const double> w, const Matrix& in, const Matrix& out,
                     LayerCache&, Matrix& d_out, std::size_t, Matrix* d_in,
                     std::span<double> d_w) const {
  if (act_ == Activation::Relu) relu_mask(d_out, out);
  const std::size_t nw = out_.channels * in_.channels;
  const ConstMap W(w.data(), ix(out_.channels), ix(in_.channels));
  MutMap dW(d_w.data(), ix(out_.channels), ix(in_.channels));
  Eigen::Map<Eigen::VectorXd> db(d_w.data() + nw, ix(out_.channels));
  dW.noalias() += d_out * in.transpose();
  add_row_sums(db, d_out);
  if (d_in) d_in->noalias() = W.transpose() * d_out;
}

// ---- MaxPool2 -------------------------------------------------------------

MaxPool2::MaxPool2(Shape in) : Layer(in, {in.channels, (in.timepoints + 1) / 2}) {
  if (in.timepoints == 0) throw UnsupportedShape("max pooling an empty series");
}

// cache.m holds 1 where the second element of a window won.
void MaxPool2::forward(std::span<const double>, const Matrix& in, std::size_t batch, Matrix& out,
                       LayerCache& cache, const Matrix&) const {
  const std::size_t C = in_.channels, T = in_.timepoints, T2 = out_.timepoints, P = T / 2;
  check_rows(in, C, batch * T, "maxpool");
  out.resize(ix(C), ix(batch * T2));
  cache.m.resize(ix(C), ix(batch * T2));
  const Eigen::OuterStride<> stride(ix(2 * C));
  for (std::size_t b = 0; b < batch; ++b) {
    const double* base = in.data() + b * T * C;
    const StridedConst even(base, ix(C), ix(P), stride), odd(base + C, ix(C), ix(P), stride);
    out.middleCols(ix(b * T2), ix(P)) = even.cwiseMax(odd);
    cache.m.middleCols(ix(b * T2), ix(P)) = (odd.array() > even.array()).cast<double>();
    if (T2 > P) {
      out.col(ix(b * T2 + P)) = in.col(ix(b * T + T - 1));
      cache.m.col(ix(b * T2 + P)).setZero();
    }
  }
}

void MaxPool2::backward(std::span<const double>, const Matrix&, const Matrix&, LayerCache& cache,
                        Matrix& d_out, std::size_t batch, Matrix* d_in, std::span<double>) const {
  if (!d_in) return;
  const std::size_t C = in_.channels, T = in_.timepoints, T2 = out_.timepoints, P = T / 2;
  d_in->resize(ix(C), ix(batch * T));
  const Eigen::OuterStride<> stride(ix(2 * C));
  for (std::size_t b = 0; b < batch; ++b) {
    double* base = d_in->data() + b * T * C;
    StridedMut even(base, ix(C), ix(P), stride), odd(base + C, ix(C), ix(P), stride);
    const auto g = d_out.middleCols(ix(b * T2), ix(P)).array();
    const auto second = cache.m.middleCols(ix(b * T2), ix(P)).array();
    odd = (g * second).matrix();
    even = (g - odd.array()).matrix();
    if (T2 > P) d_in->col(ix(b * T + T - 1)) = d_out.col(ix(b * T2 + P));
  }
}

// ---- GlobalAvgPool --------------------------------------------------------

GlobalAvgPool::GlobalAvgPool(Shape in) : Layer(in, {in.channels, 1}) {
  if (in.timepoints == 0) throw UnsupportedShape("average pooling an empty series");
}

void GlobalAvgPool::forward(std::span<const double>, const Matrix& in, std::size_t batch,
                            Matrix& out, LayerCache&, const Matrix&) const {
  const std::size_t T = in_.timepoints;
  check_rows(in, in_.channels, batch * T, "avgpool");
  out.resize(ix(in_.channels), ix(batch));
  for (std::size_t b = 0; b < batch; ++b) out.col(ix(b)) = in.middleCols(ix(b * T), ix(T)).rowwise().mean();
}

void GlobalAvgPool::backward(std::span<const double>, const Matrix&, const Matrix&,
                             LayerCache&, Matrix& d_out, std::size_t batch, Matrix* d_in,
                             std::span<double>) const {
  if (!d_in) return;
  const std::size_t T = in_.timepoints;
  d_in->resize(ix(in_.channels), ix(batch * T));
  const double inv = 1.0 / static_cast<double>(T);
  Eigen::VectorXd g;
  for (std::size_t b = 0; b < batch; ++b) {
    g = d_out.col(ix(b)) * inv;
    for (std::size_t t = 0; t < T; ++t) d_in->col(ix(b * T + t)) = g;
  }
}

// ---- SumPool --------------------------------------------------------------

SumPool::SumPool(Shape in, double factor) : Layer(in, {in.channels, 1}), factor_(factor) {
  if (in.timepoints == 0) throw UnsupportedShape("sum pooling an empty series");
  if (!(std::isfinite(factor) && factor > 0)) throw ConfigError("sum pooling factor must be positive");
}

void SumPool::forward(std::span<const double>, const Matrix& in, std::size_t batch, Matrix& out,
                      LayerCache&, const Matrix&) const {
  const std::size_t C = in_.channels, T = in_.timepoints;
  check_rows(in, C, batch * T, "sumpool");
  out.resize(ix(C), ix(batch));
  // Terms are truncated to multiples of 2^(e - bits) where 2^e bounds the channel
  // maximum; T such terms cannot overflow 63 bits.
  const int bits = 62 - static_cast<int>(std::bit_width(T));
  Eigen::VectorXd scale(ix(C));
  std::vector<std::int64_t> acc(C);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto block = in.middleCols(ix(b * T), ix(T));
    const Eigen::VectorXd mx = block.cwiseAbs().rowwise().maxCoeff();
    bool exact = true;
    for (std::size_t c = 0; c < C; ++c) {
      int e = 0;
      if (!std::isfinite(mx(ix(c)))) exact = false;
      else if (mx(ix(c)) > 0.0) std::frexp(mx(ix(c)), &e);
      scale(ix(c)) = std::ldexp(1.0, std::min(bits - e, 1000));
    }
    if (!exact) {
      out.col(ix(b)) = block.rowwise().sum() * factor_;
      continue;
    }
    std::fill(acc.begin(), acc.end(), 0);
    const double* sc = scale.data();
    for (std::size_t t = 0; t < T; ++t) {
      const double* col = block.col(ix(t)).data();
      for (std::size_t c = 0; c < C; ++c) acc[c] += static_cast<std::int64_t>(col[c] * sc[c]);
    }
    for (std::size_t c = 0; c < C; ++c)
      out(ix(c), ix(b)) = static_cast<double>(acc[c]) / scale(ix(c)) * factor_;
  }
}

void SumPool::backward(std::span<const double>, const Matrix&, const Matrix&, LayerCache&,
                       Matrix& d_out, std::size_t batch, Matrix* d_in, std::span<double>) const {
  if (!d_in) return;
  const std::size_t T = in_.timepoints;
  d_in->resize(ix(in_.channels), ix(batch * T));
  for (std::size_t b = 0; b < batch; ++b) {
    const Eigen::VectorXd g = d_out.col(ix(b)) * factor_;
    for (std::size_t t = 0; t < T; ++t) d_in->col(ix(b * T + t)) = g;
  }
}

// ---- Flatten --------------------------------------------------------------

Flatten::Flatten(Shape in) : Layer(in, {in.channels * in.timepoints, 1}) {}

void Flatten::forward(std::span<const double>, const Matrix& in, std::size_t batch, Matrix& out,
                      LayerCache&, const Matrix&) const {
  const std::size_t C = in_.channels, T = in_.timepoints;
  check_rows(in, C, batch * T, "flatten");
  out.resize(ix(C * T), ix(batch));
  for (std::size_t b = 0; b < batch; ++b)
    MutMap(out.col(ix(b)).data(), ix(T), ix(C)) = in.middleCols(ix(b * T), ix(T)).transpose();
}

void Flatten::backward(std::span<const double>, const Matrix&, const Matrix&, LayerCache&,
                       Matrix& d_out, std::size_t batch, Matrix* d_in, std::span<double>) const {
  if (!d_in) return;
  const std::size_t C = in_.channels, T = in_.timepoints;
  d_in->resize(ix(C), ix(batch * T));
  for (std::size_t b = 0; b < batch; ++b)
    d_in->middleCols(ix(b * T), ix(T)) = ConstMap(d_out.col(ix(b)).data(), ix(T), ix(C)).transpose();
}

// ---- InputPrefix ----------------------------------------------------------

InputPrefix::InputPrefix(std::size_t features, Shape network_input, std::size_t prefix)
    : Layer({features, 1}, {features + network_input.channels * prefix, 1}),
      net_in_(network_input),
      prefix_(prefix) {
  if (prefix > network_input.timepoints)
    throw UnsupportedShape("input prefix longer than the series");
}

void InputPrefix::forward(std::span<const double>, const Matrix& in, std::size_t batch,
                          Matrix& out, LayerCache&, const Matrix& net_in) const {
  check_rows(in, in_.channels, batch, "input_prefix");
  const std::size_t F = in_.channels, C = net_in_.channels, T = net_in_.timepoints;
  out.resize(ix(out_.channels), ix(batch));
  out.topRows(ix(F)) = in;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t k = 0; k < prefix_; ++k)
        out(ix(F + c * prefix_ + k), ix(b)) = net_in(ix(c), ix(b * T + k));
    }
  }
}

void InputPrefix::backward(std::span<const double>, const Matrix&, const Matrix&,
                           LayerCache&, Matrix& d_out, std::size_t, Matrix* d_in,
                           std::span<double>) const {
  if (d_in) *d_in = d_out.topRows(ix(in_.channels));
}

// ---- single-sample helpers ------------------------------------------------

Matrix conv1d_forward(const Matrix& input, const std::vector<Matrix>& kernels,
                      const Eigen::VectorXd& bias) {
  const auto cin = static_cast<std::size_t>(input.rows());
  const auto cout = kernels.size();
  if (cout == 0 || static_cast<std::size_t>(bias.size()) != cout)
    throw DimensionMismatch("conv1d: kernel and bias counts differ");
  std::vector<double> w(cout * (cin * 3 + 1));
  MutMap W(w.data(), ix(cout), ix(cin * 3));
  for (std::size_t c = 0; c < cout; ++c) {
    if (kernels[c].rows() != input.rows() || kernels[c].cols() != 3)
      throw DimensionMismatch("conv1d: each kernel must be C_in x 3");
    for (Index a = 0; a < 3; ++a) {
      for (Index ci = 0; ci < ix(cin); ++ci) W(ix(c), a * ix(cin) + ci) = kernels[c](ci, a);
    }
  }
  for (std::size_t c = 0; c < cout; ++c) w[cout * cin * 3 + c] = bias(ix(c));
  Conv1D layer({cin, static_cast<std::size_t>(input.cols())}, cout, 3, Padding::Same,
               Activation::Linear);
  Matrix out;
  LayerCache cache;
  layer.forward(w, input, 1, out, cache, input);
  return out;
}

Matrix maxpool1d(const Matrix& input) {
  MaxPool2 layer({static_cast<std::size_t>(input.rows()), static_cast<std::size_t>(input.cols())});
  Matrix out;
  LayerCache cache;
  layer.forward({}, input, 1, out, cache, input);
  return out;
}

Eigen::VectorXd global_avg_pool(const Matrix& input) {
  GlobalAvgPool layer({static_cast<std::size_t>(input.rows()), static_cast<std::size_t>(input.cols())});
  Matrix out;
  LayerCache cache;
  layer.forward({}, input, 1, out, cache, input);
  return out.col(0);
}

Eigen::VectorXd dense_forward(const Eigen::VectorXd& input, const Matrix& weights,
                              const Eigen::VectorXd& bias, Activation act) {
  if (weights.cols() != input.size() || weights.rows() != bias.size())
    throw DimensionMismatch("dense: weight " + std::to_string(weights.rows()) + "x" +
                            std::to_string(weights.cols()) + " does not fit input " +
                            std::to_string(input.size()) + " and bias " + std::to_string(bias.size()));
  Eigen::VectorXd out = weights * input + bias;
  if (act == Activation::Relu) out = out.cwiseMax(0.0);
  return out;
}

}  // namespace lfi::nn
