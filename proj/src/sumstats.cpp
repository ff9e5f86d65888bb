#include "lfi/sumstats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lfi/abc.hpp"
#include "lfi/error.hpp"
#include "lfi/parallel.hpp"

namespace lfi {

std::string_view statistic_name(Statistic s) {
  switch (s) {
    case Statistic::Sum: return "sum";
    case Statistic::Median: return "median";
    case Statistic::Mean: return "mean";
    case Statistic::StdDev: return "std_dev";
    case Statistic::Variance: return "variance";
    case Statistic::Max: return "max";
    case Statistic::Burstiness: return "burstiness";
  }
  return "?";
}

Statistic statistic_from_name(std::string_view name) {
  for (Statistic s : kStatisticPool) {
    if (statistic_name(s) == name) return s;
  }
  throw InvalidArgument("unknown statistic '" + std::string(name) + "'");
}

namespace {

struct Moments {
  double mean;
  double variance;
};

Moments moments(std::span<const double> v) {
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, ss / n};
}

double median(std::span<const double> v) {
  std::vector<double> tmp(v.begin(), v.end());
  const std::size_t mid = tmp.size() / 2;
  std::nth_element(tmp.begin(), tmp.begin() + static_cast<std::ptrdiff_t>(mid), tmp.end());
  const double upper = tmp[mid];
  if (tmp.size() % 2 == 1) return upper;
  const double lower = *std::max_element(tmp.begin(), tmp.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

}  // namespace

double burstiness(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("burstiness of an empty channel");
  const auto m = moments(values);
  const double sigma = std::sqrt(m.variance);
  const double denom = sigma + m.mean;
  if (denom == 0.0) throw Degenerate("burstiness undefined: sigma + mean = 0");
  return (sigma - m.mean) / denom;
}

double compute_statistic(Statistic s, std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("statistic of an empty channel");
  switch (s) {
    case Statistic::Sum: return std::accumulate(values.begin(), values.end(), 0.0);
    case Statistic::Median: return median(values);
    case Statistic::Mean: return moments(values).mean;
    case Statistic::StdDev: return std::sqrt(moments(values).variance);
    case Statistic::Variance: return moments(values).variance;
    case Statistic::Max: return *std::max_element(values.begin(), values.end());
    case Statistic::Burstiness:
      try {
        return burstiness(values);
      } catch (const Degenerate&) {
        return -1.0;
      }
  }
  return 0.0;
}

std::vector<double> compute_pool(const SeriesView& ts) {
  if (ts.timepoints < 2) throw InvalidArgument("statistic pool needs T >= 2");
  std::vector<double> out;
  out.reserve(kStatisticPool.size() * ts.channels);
  for (std::size_t c = 0; c < ts.channels; ++c) {
    for (Statistic s : kStatisticPool) out.push_back(compute_statistic(s, ts.channel(c)));
  }
  return out;
}

FeatureMap FeatureMap::pool(std::size_t channels) {
  std::vector<Feature> f;
  for (std::size_t c = 0; c < channels; ++c) {
    for (Statistic s : kStatisticPool) f.push_back({c, s});
  }
  return FeatureMap(std::move(f));
}

FeatureMap FeatureMap::subset(std::span<const std::size_t> indices) const {
  std::vector<Feature> f;
  for (auto i : indices) {
    if (i >= features_.size()) throw InvalidArgument("feature index out of range");
    f.push_back(features_[i]);
  }
  return FeatureMap(std::move(f));
}

std::vector<double> FeatureMap::evaluate(const SeriesView& ts) const {
  std::vector<double> out;
  out.reserve(features_.size());
  for (const auto& f : features_) {
    if (f.channel >= ts.channels) throw DimensionMismatch("feature references a missing channel");
    out.push_back(compute_statistic(f.statistic, ts.channel(f.channel)));
  }
  return out;
}

Eigen::MatrixXd FeatureMap::evaluate_all(const LabeledDataset& dataset, std::size_t jobs) const {
  Eigen::MatrixXd h(dataset.size(), features_.size());
  parallel_for(dataset.size(), jobs, [&](std::size_t i) {
    const auto row = evaluate(dataset.series(i));
    for (std::size_t f = 0; f < row.size(); ++f) h(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f)) = row[f];
  });
  return h;
}

std::vector<std::string> FeatureMap::names(const std::vector<std::string>& channel_names) const {
  std::vector<std::string> out;
  for (const auto& f : features_) {
    std::string name(statistic_name(f.statistic));
    if (channel_names.size() > 1) name = channel_names.at(f.channel) + ":" + name;
    out.push_back(std::move(name));
  }
  return out;
}

nlohmann::json FeatureMap::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& f : features_)
    arr.push_back({{"channel", f.channel}, {"statistic", std::string(statistic_name(f.statistic))}});
  return arr;
}

FeatureMap FeatureMap::from_json(const nlohmann::json& j) {
  std::vector<Feature> f;
  for (const auto& e : j)
    f.push_back({e.at("channel").get<std::size_t>(),
                 statistic_from_name(e.at("statistic").get<std::string>())});
  return FeatureMap(std::move(f));
}

namespace {

/// Bin probabilities of each parameter's accepted samples over the prior box.
std::vector<std::vector<double>> histograms(const LabeledDataset& dataset,
                                            std::span<const std::size_t> accepted, std::size_t bins) {
  const auto& prior = dataset.prior();
  std::vector<std::vector<double>> h(prior.dim(), std::vector<double>(bins, 0.0));
  const double w = 1.0 / static_cast<double>(accepted.size());
  for (auto i : accepted) {
    const auto theta = dataset.theta(i);
    for (std::size_t k = 0; k < prior.dim(); ++k) {
      const double u = (theta[k] - prior.lower()[k]) / prior.width(k);
      auto b = static_cast<std::size_t>(std::clamp(u, 0.0, 1.0) * static_cast<double>(bins));
      h[k][std::min(b, bins - 1)] += w;
    }
  }
  return h;
}

std::vector<std::size_t> accepted_for(const Eigen::MatrixXd& scaled, std::span<const double> observed,
                                      const std::vector<std::size_t>& subset, std::size_t count) {
  const auto n = static_cast<std::size_t>(scaled.rows());
  if (subset.empty()) {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    return all;
  }
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (auto k : subset) {
      const double diff = scaled(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) - observed[k];
      s += diff * diff;
    }
    d[i] = std::sqrt(s);
  }
  return accept_nearest(d, count);
}

}  // namespace

std::vector<std::size_t> as_select_features(const Eigen::MatrixXd& features,
                                            std::span<const double> observed,
                                            const LabeledDataset& dataset, RngStream& rng,
                                            const AsSelectOptions& options) {
  const auto K = static_cast<std::size_t>(features.cols());
  if (K == 0) throw EmptyCandidates("approximate sufficiency needs at least one candidate");
  if (dataset.empty()) throw EmptyDataset("approximate sufficiency needs a reference table");
  if (static_cast<std::size_t>(features.rows()) != dataset.size() || observed.size() != K)
    throw DimensionMismatch("feature matrix does not match dataset or observation");
  if (!(options.epsilon_quantile > 0.0 && options.epsilon_quantile < 1.0))
    throw InvalidArgument("epsilon_quantile must lie in (0, 1)");

  // Scale each candidate by its spread over the reference table.
  Eigen::MatrixXd scaled = features;
  std::vector<double> obs(observed.begin(), observed.end());
  for (std::size_t k = 0; k < K; ++k) {
    auto col = scaled.col(static_cast<Eigen::Index>(k));
    const double mean = col.mean();
    const double sd = std::sqrt((col.array() - mean).square().mean());
    const double s = sd > 0.0 ? sd : 1.0;
    col /= s;
    obs[k] /= s;
  }

  std::vector<std::size_t> order(K);
  std::iota(order.begin(), order.end(), 0);
  shuffle(order.begin(), order.end(), rng);

  const std::size_t count = accepted_count(dataset.size(), options.epsilon_quantile);
  std::vector<std::size_t> kept;
  auto current = histograms(dataset, accepted_for(scaled, obs, kept, count), options.bins);
  for (auto k : order) {
    auto trial = kept;
    trial.push_back(k);
    auto candidate = histograms(dataset, accepted_for(scaled, obs, trial, count), options.bins);
    double change = 0.0;
    for (std::size_t p = 0; p < candidate.size(); ++p) {
      for (std::size_t b = 0; b < options.bins; ++b)
        change = std::max(change, std::abs(candidate[p][b] - current[p][b]));
    }
    if (change > options.threshold) {
      kept = std::move(trial);
      current = std::move(candidate);
    }
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

std::vector<std::size_t> as_select(const FeatureMap& candidates, const SeriesView& observed,
                                   const LabeledDataset& dataset, RngStream& rng,
                                   const AsSelectOptions& options) {
  if (candidates.empty()) throw EmptyCandidates("approximate sufficiency needs at least one candidate");
  const Eigen::MatrixXd features = candidates.evaluate_all(dataset);
  const auto obs = candidates.evaluate(observed);
  return as_select_features(features, obs, dataset, rng, options);
}

LinearSummaryModel fit_linear_summary(const LabeledDataset& dataset, const FeatureMap& feature_map,
                                      const LinearFitOptions& options) {
  const std::size_t N = dataset.size();
  const std::size_t F = feature_map.size();
  const std::size_t L = dataset.param_dim();
  if (N <= F + 1)
    throw SingularDesign("linear summary needs more samples (" + std::to_string(N) +
                         ") than features + 1 (" + std::to_string(F + 1) + ")");
  const Eigen::MatrixXd H = feature_map.evaluate_all(dataset);
  Eigen::MatrixXd Y(N, L);
  for (std::size_t i = 0; i < N; ++i) {
    const auto t = dataset.theta(i);
    for (std::size_t k = 0; k < L; ++k) Y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = t[k];
  }

  // Centre and scale columns so the pivot tolerance is scale-free.
  const Eigen::RowVectorXd mu = H.colwise().mean();
  Eigen::MatrixXd Z = H.rowwise() - mu;
  Eigen::RowVectorXd scale(F);
  for (std::size_t f = 0; f < F; ++f) {
    const double sd = std::sqrt(Z.col(static_cast<Eigen::Index>(f)).squaredNorm() / static_cast<double>(N));
    scale(static_cast<Eigen::Index>(f)) = sd > 0.0 ? sd : 1.0;
  }
  Z = Z.array().rowwise() / scale.array();
  const Eigen::RowVectorXd ybar = Y.colwise().mean();
  const Eigen::MatrixXd Yc = Y.rowwise() - ybar;

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Z);
  qr.setThreshold(options.rank_tolerance);
  const auto rank = static_cast<std::size_t>(qr.rank());
  if (rank < F && !options.allow_collinear)
    throw SingularDesign("feature design has rank " + std::to_string(rank) + " < " + std::to_string(F));
  Eigen::MatrixXd beta = F > 0 ? Eigen::MatrixXd(qr.solve(Yc)) : Eigen::MatrixXd::Zero(0, L);
  if (!beta.allFinite()) throw SingularDesign("least-squares solve produced non-finite coefficients");

  LinearSummaryModel model;
  model.feature_map = feature_map;
  model.rank = rank;
  model.B = (beta.array().colwise() / scale.transpose().array()).transpose();  // L×F
  model.b0.resize(L);
  model.sigma.resize(L);
  const Eigen::MatrixXd resid = Yc - Z * beta;
  const double dof = static_cast<double>(N - rank - 1);
  for (std::size_t k = 0; k < L; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    model.b0[k] = ybar(kk) - model.B.row(kk).dot(mu);
    model.sigma[k] = std::sqrt(resid.col(kk).squaredNorm() / dof);
  }
  return model;
}

ParameterVector linear_predict_features(const LinearSummaryModel& model, std::span<const double> h) {
  if (h.size() != static_cast<std::size_t>(model.B.cols()))
    throw DimensionMismatch("linear summary expects " + std::to_string(model.B.cols()) + " features");
  ParameterVector out(model.b0);
  for (std::size_t k = 0; k < out.size(); ++k) {
    for (std::size_t f = 0; f < h.size(); ++f)
      out[k] += model.B(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(f)) * h[f];
  }
  return out;
}

ParameterVector linear_predict(const LinearSummaryModel& model, const SeriesView& ts) {
  return linear_predict_features(model, model.feature_map.evaluate(ts));
}

}  // namespace lfi
