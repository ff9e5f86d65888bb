#include "lfi/neural/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include "lfi/json_util.hpp"
#include "lfi/parallel.hpp"

namespace lfi::nn {

namespace {

using Index = Eigen::Index;
using RowMajorMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

Index ix(std::size_t v) { return static_cast<Index>(v); }

void check_dataset(const TrainedSummaryModel& model, const LabeledDataset& d, const char* role) {
  const auto& s = model.spec();
  if (d.shape().channels != s.input_channels || d.shape().timepoints != s.input_timepoints)
    throw DimensionMismatch(std::string(role) + " series are " + std::to_string(d.shape().channels) +
                            "x" + std::to_string(d.shape().timepoints) + ", model expects " +
                            std::to_string(s.input_channels) + "x" +
                            std::to_string(s.input_timepoints));
  if (d.param_dim() != s.output_dim)
    throw DimensionMismatch(std::string(role) + " has " + std::to_string(d.param_dim()) +
                            " parameters, model predicts " + std::to_string(s.output_dim));
}

constexpr std::size_t kPredictChunk = 512;

}  // namespace

// ---- InputNormalizer -------------------------------------------------------

InputNormalizer InputNormalizer::fit(const LabeledDataset& dataset) {
  if (dataset.empty()) throw EmptyDataset("cannot fit an input normalizer on an empty dataset");
  const std::size_t C = dataset.shape().channels, T = dataset.shape().timepoints;
  InputNormalizer n;
  n.mean.assign(C, 0.0);
  n.stddev.assign(C, 0.0);
  const double count = static_cast<double>(dataset.size() * T);
  for (std::size_t c = 0; c < C; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < dataset.size(); ++i)
      for (double v : dataset.series(i).channel(c)) s += v;
    const double mu = s / count;
    double ss = 0.0;
    for (std::size_t i = 0; i < dataset.size(); ++i)
      for (double v : dataset.series(i).channel(c)) ss += (v - mu) * (v - mu);
    const double sd = std::sqrt(ss / count);
    n.mean[c] = mu;
    n.stddev[c] = sd > 0.0 ? sd : 1.0;
  }
  return n;
}

nlohmann::json InputNormalizer::to_json() const { return {{"mean", mean}, {"stddev", stddev}}; }

InputNormalizer InputNormalizer::from_json(const nlohmann::json& j) {
  InputNormalizer n;
  n.mean = j.at("mean").get<std::vector<double>>();
  n.stddev = j.at("stddev").get<std::vector<double>>();
  return n;
}

// ---- TrainConfig ----------------------------------------------------------

TrainConfig TrainConfig::for_approach(int approach) {
  TrainConfig c;
  c.approach = approach;
  if (approach == 1) c.batch_sizes = {512};
  else if (approach == 2) c.batch_sizes = {32, 4096};
  else throw ConfigError("training approach must be 1 or 2");
  return c;
}

void TrainConfig::validate() const {
  if (batch_sizes.empty()) throw ConfigError("training needs at least one batch size");
  for (auto b : batch_sizes)
    if (b == 0) throw ConfigError("batch sizes must be at least 1");
  if (patience == 0) throw ConfigError("patience must be at least 1");
  if (max_epochs == 0) throw ConfigError("max_epochs must be at least 1");
  if (micro_batch == 0) throw ConfigError("micro_batch must be at least 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"approach", approach},       {"batch_sizes", batch_sizes},
          {"patience", patience},       {"max_epochs", max_epochs},
          {"learning_rate", learning_rate}, {"beta1", beta1},
          {"beta2", beta2},             {"epsilon", epsilon},
          {"seed", seed},               {"micro_batch", micro_batch}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  const std::string ctx = "training";
  require_known_keys(j, {"approach", "batch_sizes", "patience", "max_epochs", "learning_rate",
                         "beta1", "beta2", "epsilon", "seed", "micro_batch"},
                     ctx);
  TrainConfig c = for_approach(j.contains("approach") ? json_get<int>(j, "approach", ctx) : 1);
  json_read(j, "batch_sizes", c.batch_sizes, ctx);
  json_read(j, "patience", c.patience, ctx);
  json_read(j, "max_epochs", c.max_epochs, ctx);
  json_read(j, "learning_rate", c.learning_rate, ctx);
  json_read(j, "beta1", c.beta1, ctx);
  json_read(j, "beta2", c.beta2, ctx);
  json_read(j, "epsilon", c.epsilon, ctx);
  json_read(j, "seed", c.seed, ctx);
  json_read(j, "micro_batch", c.micro_batch, ctx);
  c.validate();
  return c;
}

// ---- TrainedSummaryModel --------------------------------------------------

TrainedSummaryModel::TrainedSummaryModel(ArchitectureSpec spec, std::vector<double> weights,
                                         InputNormalizer normalizer, UniformBoxPrior prior)
    : net_(std::make_shared<const Network>(spec)),
      weights_(std::move(weights)),
      normalizer_(std::move(normalizer)),
      prior_(std::move(prior)) {
  if (weights_.size() != net_->param_count())
    throw DimensionMismatch("architecture needs " + std::to_string(net_->param_count()) +
                            " weights, got " + std::to_string(weights_.size()));
  if (prior_.dim() != spec.output_dim)
    throw DimensionMismatch("prior dimension differs from the architecture output");
  if (normalizer_.mean.size() != spec.input_channels ||
      normalizer_.stddev.size() != spec.input_channels)
    throw DimensionMismatch("normalizer does not match the input channel count");
}

Matrix TrainedSummaryModel::input_batch(const LabeledDataset& dataset,
                                        std::span<const std::size_t> indices) const {
  check_dataset(*this, dataset, "dataset");
  const std::size_t C = spec().input_channels, T = spec().input_timepoints;
  const Eigen::Map<const Eigen::VectorXd> mu(normalizer_.mean.data(), ix(C));
  const Eigen::Map<const Eigen::VectorXd> sd(normalizer_.stddev.data(), ix(C));
  Matrix X(ix(C), ix(indices.size() * T));
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const RowMajorMap y(dataset.series(indices[b]).data.data(), ix(C), ix(T));
    X.middleCols(ix(b * T), ix(T)) = (y.colwise() - mu).array().colwise() / sd.array();
  }
  return X;
}

Matrix TrainedSummaryModel::input_batch(const SeriesView& series) const {
  const std::size_t C = spec().input_channels, T = spec().input_timepoints;
  if (series.channels != C || series.timepoints != T)
    throw DimensionMismatch("series is " + std::to_string(series.channels) + "x" +
                            std::to_string(series.timepoints) + ", model expects " +
                            std::to_string(C) + "x" + std::to_string(T));
  const Eigen::Map<const Eigen::VectorXd> mu(normalizer_.mean.data(), ix(C));
  const Eigen::Map<const Eigen::VectorXd> sd(normalizer_.stddev.data(), ix(C));
  const RowMajorMap y(series.data.data(), ix(C), ix(T));
  return (y.colwise() - mu).array().colwise() / sd.array();
}

std::vector<double> TrainedSummaryModel::predict_scaled(const SeriesView& series) const {
  const Matrix out = net_->forward(weights_, input_batch(series), 1);
  return {out.data(), out.data() + out.size()};
}

ParameterVector TrainedSummaryModel::predict(const SeriesView& series) const {
  return prior_.from_unit(predict_scaled(series));
}

Matrix TrainedSummaryModel::predict_all(const LabeledDataset& dataset, bool scaled,
                                        std::size_t jobs) const {
  check_dataset(*this, dataset, "dataset");
  const std::size_t N = dataset.size(), L = output_dim();
  Matrix out(ix(L), ix(N));
  const std::size_t chunks = (N + kPredictChunk - 1) / kPredictChunk;
  parallel_for(chunks, jobs, [&](std::size_t k) {
    const std::size_t begin = k * kPredictChunk, end = std::min(N, begin + kPredictChunk);
    std::vector<std::size_t> idx(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    out.middleCols(ix(begin), ix(end - begin)) =
        net_->forward(weights_, input_batch(dataset, idx), idx.size());
  });
  if (!scaled) {
    for (std::size_t k = 0; k < L; ++k)
      out.row(ix(k)) = (out.row(ix(k)).array() * prior_.width(k) + prior_.lower()[k]).matrix();
  }
  return out;
}

// ---- construction and training ---------------------------------------------

TrainedSummaryModel build_architecture(const ArchitectureSpec& spec, const UniformBoxPrior& prior,
                                       RngStream& rng, const LabeledDataset* train_data) {
  Network net(spec);
  InputNormalizer norm;
  if (train_data) {
    norm = InputNormalizer::fit(*train_data);
    if (norm.mean.size() != spec.input_channels)
      throw DimensionMismatch("training data channel count differs from the architecture");
  } else {
    norm.mean.assign(spec.input_channels, 0.0);
    norm.stddev.assign(spec.input_channels, 1.0);
  }
  return TrainedSummaryModel(spec, net.init_weights(rng), std::move(norm), prior);
}

Matrix scaled_targets(const LabeledDataset& dataset) {
  const auto& prior = dataset.prior();
  const std::size_t N = dataset.size(), L = dataset.param_dim();
  Matrix Y(ix(L), ix(N));
  for (std::size_t i = 0; i < N; ++i) {
    const auto t = dataset.theta(i);
    for (std::size_t k = 0; k < L; ++k)
      Y(ix(k), ix(i)) = (t[k] - prior.lower()[k]) / prior.width(k);
  }
  return Y;
}

namespace {

struct Errors {
  double mae = 0.0;
  double mse = 0.0;
};

Errors errors_on(const Network& net, std::span<const double> w, const Matrix& X, const Matrix& Y,
                 std::size_t T) {
  const auto N = static_cast<std::size_t>(Y.cols());
  double abs_total = 0.0, sq_total = 0.0;
  Workspace ws;
  Matrix chunk;
  for (std::size_t begin = 0; begin < N; begin += kPredictChunk) {
    const std::size_t n = std::min(kPredictChunk, N - begin);
    chunk = X.middleCols(ix(begin * T), ix(n * T));
    const Matrix& out = net.forward(w, chunk, n, ws);
    const auto diff = (out - Y.middleCols(ix(begin), ix(n))).array();
    abs_total += diff.abs().sum();
    sq_total += diff.square().sum();
  }
  const auto count = static_cast<double>(Y.size());
  return {abs_total / count, sq_total / count};
}

double mae_on(const Network& net, std::span<const double> w, const Matrix& X, const Matrix& Y,
              std::size_t T) {
  return errors_on(net, w, X, Y, T).mae;
}

}  // namespace

double validation_mae(const TrainedSummaryModel& model, const LabeledDataset& val) {
  if (val.empty()) throw EmptyDataset("validation set is empty");
  std::vector<std::size_t> idx(val.size());
  std::iota(idx.begin(), idx.end(), 0);
  return mae_on(model.network(), model.weights(), model.input_batch(val, idx), scaled_targets(val),
                model.spec().input_timepoints);
}

TrainedSummaryModel train(TrainedSummaryModel model, const LabeledDataset& train_data,
                          const LabeledDataset& val_data, const TrainConfig& config) {
  config.validate();
  if (train_data.empty()) throw EmptyDataset("training set is empty");
  if (val_data.empty()) throw EmptyDataset("validation set is empty");
  check_dataset(model, train_data, "training set");
  check_dataset(model, val_data, "validation set");
  if (!(train_data.prior() == model.prior()) || !(val_data.prior() == model.prior()))
    throw DimensionMismatch("training, validation and model priors differ");

  const Network& net = model.network();
  const std::size_t N = train_data.size(), L = model.output_dim();
  const std::size_t T = model.spec().input_timepoints, C = model.spec().input_channels;
  const std::size_t P = net.param_count();

  std::vector<std::size_t> all(N);
  std::iota(all.begin(), all.end(), 0);
  const Matrix Xtr = model.input_batch(train_data, all);
  const Matrix Ytr = scaled_targets(train_data);
  std::vector<std::size_t> vall(val_data.size());
  std::iota(vall.begin(), vall.end(), 0);
  const Matrix Xva = model.input_batch(val_data, vall);
  const Matrix Yva = scaled_targets(val_data);

  std::vector<double>& w = model.mutable_weights();
  std::vector<double> best_w = w;
  double best_mae = mae_on(net, w, Xva, Yva, T);
  auto fail = [&](const std::string& what) {
    auto ckpt = std::make_shared<TrainedSummaryModel>(model);
    ckpt->mutable_weights() = best_w;
    throw NonFiniteLoss(what, ckpt);
  };
  if (!std::isfinite(best_mae)) fail("validation MAE of the initial weights is not finite");
  {
    const EpochRecord rec{1, 0, errors_on(net, w, Xtr, Ytr, T).mse, best_mae};
    model.mutable_history().push_back(rec);
    if (config.on_epoch) config.on_epoch(rec);
  }

  std::vector<double> grad(P), m(P, 0.0), v(P, 0.0);
  std::uint64_t step = 0;
  Matrix Xb, Yb;
  Workspace ws;

  for (std::size_t stage = 1; stage <= config.batch_sizes.size(); ++stage) {
    const std::size_t bs = config.batch_sizes[stage - 1];
    std::size_t wait = 0;
    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
      RngStream rng(config.seed, (static_cast<std::uint64_t>(stage) << 32) | epoch);
      std::vector<std::size_t> order = all;
      shuffle(order.begin(), order.end(), rng);

      double sse_total = 0.0;
      for (std::size_t start = 0; start < N; start += bs) {
        const std::size_t B = std::min(bs, N - start);
        std::fill(grad.begin(), grad.end(), 0.0);
        const double scale = 1.0 / static_cast<double>(B * L);
        double sse = 0.0;
        for (std::size_t c0 = 0; c0 < B; c0 += config.micro_batch) {
          const std::size_t cb = std::min(config.micro_batch, B - c0);
          Xb.resize(ix(C), ix(cb * T));
          Yb.resize(ix(L), ix(cb));
          for (std::size_t k = 0; k < cb; ++k) {
            const std::size_t i = order[start + c0 + k];
            Xb.middleCols(ix(k * T), ix(T)) = Xtr.middleCols(ix(i * T), ix(T));
            Yb.col(ix(k)) = Ytr.col(ix(i));
          }
          sse += net.accumulate_gradients(w, Xb, Yb, cb, scale, grad, ws);
        }
        if (!std::isfinite(sse))
          fail("training loss became non-finite in stage " + std::to_string(stage) + ", epoch " +
               std::to_string(epoch));
        sse_total += sse;

        ++step;
        const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
        const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
        const double lr = config.learning_rate * std::sqrt(bc2) / bc1;
        for (std::size_t p = 0; p < P; ++p) {
          m[p] = config.beta1 * m[p] + (1.0 - config.beta1) * grad[p];
          v[p] = config.beta2 * v[p] + (1.0 - config.beta2) * grad[p] * grad[p];
          w[p] -= lr * m[p] / (std::sqrt(v[p]) + config.epsilon);
        }
      }

      const double val = mae_on(net, w, Xva, Yva, T);
      if (!std::isfinite(val))
        fail("validation MAE became non-finite in stage " + std::to_string(stage) + ", epoch " +
             std::to_string(epoch));
      EpochRecord rec{stage, epoch, sse_total / static_cast<double>(N * L), val};
      model.mutable_history().push_back(rec);
      if (config.on_epoch) config.on_epoch(rec);
      if (val < best_mae) {
        best_mae = val;
        best_w = w;
        wait = 0;
      } else if (++wait >= config.patience) {
        break;
      }
    }
    w = best_w;
  }
  return model;
}

// ---- checkpoints ----------------------------------------------------------

namespace {

constexpr char kModelMagic[4] = {'L', 'F', 'I', 'M'};

template <typename U>
void put_le(std::ostream& os, U v) {
  unsigned char b[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), sizeof(U));
}

template <typename U>
U get_le(std::istream& is) {
  unsigned char b[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(b), sizeof(U))) throw IoError("truncated model checkpoint");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void save_model(const TrainedSummaryModel& model, const std::filesystem::path& path) {
  nlohmann::json history = nlohmann::json::array();
  for (const auto& r : model.history())
    history.push_back({{"stage", r.stage}, {"epoch", r.epoch}, {"train_mse", r.train_mse},
                       {"val_mae", r.val_mae}});
  const nlohmann::json manifest = {{"format", 1},
                                   {"spec", model.spec().to_json()},
                                   {"prior", prior_to_json(model.prior())},
                                   {"normalizer", model.normalizer().to_json()},
                                   {"history", history}};
  const std::string text = manifest.dump();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write model checkpoint " + path.string());
  os.write(kModelMagic, 4);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  put_le<std::uint64_t>(os, model.weights().size());
  for (double d : model.weights()) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, sizeof bits);
    put_le(os, bits);
  }
  if (!os) throw IoError("failed writing model checkpoint " + path.string());
}

TrainedSummaryModel load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open model checkpoint " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kModelMagic, 4) != 0)
    throw IoError(path.string() + " is not a model checkpoint");
  const auto len = get_le<std::uint32_t>(is);
  std::string text(len, '\0');
  if (!is.read(text.data(), len)) throw IoError("truncated model checkpoint manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt model checkpoint manifest: " + std::string(e.what()));
  }
  const auto count = get_le<std::uint64_t>(is);
  std::vector<double> w(count);
  for (auto& d : w) {
    const auto bits = get_le<std::uint64_t>(is);
    std::memcpy(&d, &bits, sizeof d);
  }
  TrainedSummaryModel model(ArchitectureSpec::from_json(manifest.at("spec")), std::move(w),
                            InputNormalizer::from_json(manifest.at("normalizer")),
                            prior_from_json(manifest.at("prior")));
  for (const auto& r : manifest.at("history"))
    model.mutable_history().push_back({r.at("stage").get<std::size_t>(),
                                       r.at("epoch").get<std::size_t>(),
                                       r.at("train_mse").get<double>(), r.at("val_mae").get<double>()});
  return model;
}

}  // namespace lfi::nn
