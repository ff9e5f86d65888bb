#include "lfi/abc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

#include "lfi/error.hpp"
#include "lfi/parallel.hpp"

namespace lfi {

double summary_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw DimensionMismatch("summary lengths differ: " + std::to_string(a.size()) + " vs " +
                            std::to_string(b.size()));
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

std::size_t accepted_count(std::size_t n, double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw InvalidArgument("acceptance ratio must lie in (0, 1]");
  const auto k = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  return std::min(n, std::max<std::size_t>(1, k));
}

std::vector<std::size_t> accept_nearest(std::span<const double> distances, std::size_t count) {
  for (double d : distances)
    if (std::isnan(d)) throw Degenerate("ABC distance is NaN");
  count = std::min(count, distances.size());
  std::vector<std::size_t> idx(distances.size());
  std::iota(idx.begin(), idx.end(), 0);
  auto less = [&](std::size_t a, std::size_t b) {
    return distances[a] < distances[b] || (distances[a] == distances[b] && a < b);
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(count), idx.end(), less);
  idx.resize(count);
  return idx;
}

// ---- SummaryFunction ------------------------------------------------------

SummaryFunction SummaryFunction::learned(std::shared_ptr<const nn::TrainedSummaryModel> model) {
  if (!model) throw InvalidArgument("learned summary needs a model");
  SummaryFunction s;
  s.kind_ = Kind::Learned;
  s.learned_ = std::move(model);
  return s;
}

SummaryFunction SummaryFunction::linear(std::shared_ptr<const LinearSummaryModel> model,
                                        const UniformBoxPrior& prior) {
  if (!model) throw InvalidArgument("linear summary needs a model");
  if (model->b0.size() != prior.dim())
    throw DimensionMismatch("linear summary and prior dimensions differ");
  SummaryFunction s;
  s.kind_ = Kind::Linear;
  s.linear_ = std::move(model);
  s.prior_ = prior;
  return s;
}

SummaryFunction SummaryFunction::statistics(FeatureMap features, std::vector<double> scales) {
  if (features.empty()) throw EmptyCandidates("statistic summary needs at least one statistic");
  if (scales.size() != features.size())
    throw DimensionMismatch("one scale per statistic is required");
  for (double s : scales)
    if (!(s > 0.0) || !std::isfinite(s)) throw InvalidArgument("statistic scales must be positive");
  SummaryFunction f;
  f.kind_ = Kind::Statistics;
  f.features_ = std::move(features);
  f.scales_ = std::move(scales);
  return f;
}

SummaryFunction SummaryFunction::statistics(FeatureMap features, const LabeledDataset& reference) {
  if (reference.empty()) throw EmptyDataset("statistic scaling needs a reference dataset");
  const Eigen::MatrixXd h = features.evaluate_all(reference);
  std::vector<double> scales(features.size());
  for (Eigen::Index k = 0; k < h.cols(); ++k) {
    const double mu = h.col(k).mean();
    const double sd = std::sqrt((h.col(k).array() - mu).square().mean());
    scales[static_cast<std::size_t>(k)] = sd > 0.0 ? sd : 1.0;
  }
  return statistics(std::move(features), std::move(scales));
}

SummaryFunction SummaryFunction::raw() { return SummaryFunction(); }

std::string SummaryFunction::descriptor() const {
  switch (kind_) {
    case Kind::Learned: return "learned:" + nn::architecture_name(learned_->spec().kind);
    case Kind::Linear: return "linear";
    case Kind::Statistics: return "statistics:" + std::to_string(features_.size());
    case Kind::Raw: return "raw";
  }
  return "?";
}

std::vector<double> SummaryFunction::operator()(const SeriesView& series) const {
  switch (kind_) {
    case Kind::Learned: return learned_->predict_scaled(series);
    case Kind::Linear: return prior_.to_unit(linear_predict(*linear_, series));
    case Kind::Statistics: {
      auto h = features_.evaluate(series);
      for (std::size_t k = 0; k < h.size(); ++k) h[k] /= scales_[k];
      return h;
    }
    case Kind::Raw: return {series.data.begin(), series.data.end()};
  }
  return {};
}

Eigen::MatrixXd SummaryFunction::evaluate_all(const LabeledDataset& dataset, std::size_t jobs) const {
  switch (kind_) {
    case Kind::Learned: return learned_->predict_all(dataset, true, jobs);
    case Kind::Linear: {
      const Eigen::MatrixXd h = linear_->feature_map.evaluate_all(dataset, jobs);
      Eigen::MatrixXd out(static_cast<Eigen::Index>(prior_.dim()), h.rows());
      std::vector<double> row(static_cast<std::size_t>(h.cols()));
      for (Eigen::Index i = 0; i < h.rows(); ++i) {
        for (Eigen::Index f = 0; f < h.cols(); ++f) row[static_cast<std::size_t>(f)] = h(i, f);
        const auto u = prior_.to_unit(linear_predict_features(*linear_, row));
        for (std::size_t k = 0; k < u.size(); ++k) out(static_cast<Eigen::Index>(k), i) = u[k];
      }
      return out;
    }
    case Kind::Statistics: {
      Eigen::MatrixXd out = features_.evaluate_all(dataset, jobs).transpose();
      for (std::size_t k = 0; k < scales_.size(); ++k) out.row(static_cast<Eigen::Index>(k)) /= scales_[k];
      return out;
    }
    case Kind::Raw:
      return Eigen::Map<const Eigen::MatrixXd>(dataset.series_data().data(),
                                               static_cast<Eigen::Index>(dataset.series_length()),
                                               static_cast<Eigen::Index>(dataset.size()));
  }
  return {};
}

// ---- Posterior ------------------------------------------------------------

ParameterVector Posterior::mean() const {
  if (samples.empty()) throw EmptyDataset("posterior has no samples");
  ParameterVector m(samples[0].size(), 0.0);
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t k = 0; k < m.size(); ++k) m[k] += weights[i] * samples[i][k];
  return m;
}

ParameterVector Posterior::stddev() const {
  const auto m = mean();
  ParameterVector v(m.size(), 0.0);
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t k = 0; k < m.size(); ++k) v[k] += weights[i] * (samples[i][k] - m[k]) * (samples[i][k] - m[k]);
  for (double& x : v) x = std::sqrt(x);
  return v;
}

// ---- rejection ------------------------------------------------------------

Posterior rejection_from_summaries(const LabeledDataset& dataset, const Eigen::MatrixXd& summaries,
                                   std::span<const double> observed_summary,
                                   double acceptance_ratio) {
  if (dataset.empty()) throw EmptyDataset("reference table is empty");
  if (static_cast<std::size_t>(summaries.cols()) != dataset.size())
    throw DimensionMismatch("one summary column per dataset entry is required");
  if (static_cast<std::size_t>(summaries.rows()) != observed_summary.size())
    throw DimensionMismatch("observed summary length differs from the table's");
  const std::size_t count = accepted_count(dataset.size(), acceptance_ratio);
  const Eigen::Map<const Eigen::VectorXd> obs(observed_summary.data(), summaries.rows());
  std::vector<double> d(dataset.size());
  for (std::size_t i = 0; i < d.size(); ++i)
    d[i] = (summaries.col(static_cast<Eigen::Index>(i)) - obs).norm();
  const auto accepted = accept_nearest(d, count);

  Posterior p;
  p.trial_count = dataset.size();
  for (auto i : accepted) {
    const auto t = dataset.theta(i);
    p.samples.emplace_back(t.begin(), t.end());
    p.distances.push_back(d[i]);
  }
  p.weights.assign(accepted.size(), 1.0 / static_cast<double>(accepted.size()));
  p.epsilon_schedule = {p.distances.back()};
  return p;
}

Posterior rejection_reference_table(const LabeledDataset& dataset, const SummaryFunction& summary,
                                    const SeriesView& observed, double acceptance_ratio,
                                    std::size_t jobs) {
  if (dataset.empty()) throw EmptyDataset("reference table is empty");
  const auto obs = summary(observed);
  return rejection_from_summaries(dataset, summary.evaluate_all(dataset, jobs), obs,
                                  acceptance_ratio);
}

// ---- SMC ------------------------------------------------------------------

namespace {

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct Kernel {
  Eigen::MatrixXd chol;  // lower factor of the covariance
};

Kernel make_kernel(const Posterior& prev, double scale) {
  const std::size_t L = prev.samples[0].size();
  const auto mu = prev.mean();
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(L));
  for (std::size_t i = 0; i < prev.size(); ++i) {
    Eigen::VectorXd d(static_cast<Eigen::Index>(L));
    for (std::size_t k = 0; k < L; ++k) d(static_cast<Eigen::Index>(k)) = prev.samples[i][k] - mu[k];
    cov += prev.weights[i] * d * d.transpose();
  }
  cov *= scale;
  double jitter = 0.0;
  const double base = std::max(cov.diagonal().mean(), 1e-300);
  for (int attempt = 0; attempt < 40; ++attempt) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov + jitter * Eigen::MatrixXd::Identity(cov.rows(), cov.cols()));
    if (llt.info() == Eigen::Success) return {llt.matrixL()};
    jitter = jitter == 0.0 ? base * 1e-10 : jitter * 10.0;
  }
  throw Degenerate("SMC kernel covariance is not positive definite");
}

struct Proposal {
  ParameterVector theta;
  std::optional<double> distance;  // empty when the simulation timed out
};

}  // namespace

std::vector<Posterior> smc_abc(const Simulator& simulator, const UniformBoxPrior& prior,
                               const SummaryFunction& summary, const SeriesView& observed,
                               const SmcOptions& options, std::uint64_t seed) {
  if (options.population < 2) throw InvalidArgument("SMC population must be at least 2");
  if (options.rounds < 1) throw InvalidArgument("SMC needs at least one round");
  if (!(options.epsilon_quantile > 0.0 && options.epsilon_quantile <= 1.0))
    throw InvalidArgument("epsilon_quantile must lie in (0, 1]");
  if (options.block == 0) throw InvalidArgument("SMC block size must be positive");
  const auto obs = summary(observed);
  const std::size_t P = options.population, L = prior.dim();

  std::vector<Posterior> rounds;
  double epsilon = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < options.rounds; ++r) {
    const std::uint64_t round_seed = derive_seed(seed, r);
    const Posterior* prev = r == 0 ? nullptr : &rounds.back();
    Kernel kernel;
    std::vector<double> cdf;
    if (prev) {
      epsilon = quantile(prev->distances, options.epsilon_quantile);
      kernel = make_kernel(*prev, options.kernel_scale);
      cdf.resize(prev->size());
      std::partial_sum(prev->weights.begin(), prev->weights.end(), cdf.begin());
    }

    auto propose = [&](std::size_t j) {
      RngStream rng(round_seed, j);
      Proposal out;
      if (!prev) {
        out.theta = prior_sample_one(prior, rng);
      } else {
        for (std::size_t tries = 0;; ++tries) {
          if (tries >= kPriorRetryBudget)
            throw BudgetExceeded("SMC kernel proposals keep leaving the prior support");
          const double u = rng.uniform() * cdf.back();
          const auto pick = static_cast<std::size_t>(
              std::min<std::ptrdiff_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin(),
                                       static_cast<std::ptrdiff_t>(cdf.size() - 1)));
          Eigen::VectorXd z(static_cast<Eigen::Index>(L));
          for (auto& v : z) v = rng.normal();
          const Eigen::VectorXd step = kernel.chol * z;
          out.theta = prev->samples[pick];
          for (std::size_t k = 0; k < L; ++k) out.theta[k] += step(static_cast<Eigen::Index>(k));
          if (prior.contains(out.theta)) break;
        }
      }
      try {
        const TimeSeries y = simulator(out.theta, rng);
        out.distance = summary_distance(summary(y), obs);
      } catch (const Timeout&) {
      }
      return out;
    };

    Posterior post;
    post.epsilon_schedule = rounds.empty() ? std::vector<double>{} : rounds.back().epsilon_schedule;
    post.epsilon_schedule.push_back(epsilon);
    std::size_t trials = 0;
    std::vector<Proposal> block(options.block);
    while (post.size() < P) {
      if (trials >= options.max_trials_per_round)
        throw BudgetExceeded("SMC round " + std::to_string(r + 1) + " exceeded " +
                             std::to_string(options.max_trials_per_round) + " trials at epsilon " +
                             std::to_string(epsilon));
      const std::size_t base = trials;
      parallel_for(options.block, options.jobs, [&](std::size_t k) { block[k] = propose(base + k); });
      for (std::size_t k = 0; k < options.block && post.size() < P; ++k) {
        ++trials;
        const auto& prop = block[k];
        if (!prop.distance || !(*prop.distance <= epsilon)) continue;
        post.samples.push_back(prop.theta);
        post.distances.push_back(*prop.distance);
      }
    }
    post.trial_count = trials;

    if (!prev) {
      post.weights.assign(P, 1.0 / static_cast<double>(P));
    } else {
      // Uniform prior: weight ∝ 1 / Σ_i w_i K(θ | θ_i), evaluated in log space.
      const Eigen::MatrixXd& Lc = kernel.chol;
      std::vector<double> logw(P);
      for (std::size_t j = 0; j < P; ++j) {
        std::vector<double> terms(prev->size());
        for (std::size_t i = 0; i < prev->size(); ++i) {
          Eigen::VectorXd d(static_cast<Eigen::Index>(L));
          for (std::size_t k = 0; k < L; ++k)
            d(static_cast<Eigen::Index>(k)) = post.samples[j][k] - prev->samples[i][k];
          const Eigen::VectorXd s = Lc.triangularView<Eigen::Lower>().solve(d);
          terms[i] = std::log(prev->weights[i]) - 0.5 * s.squaredNorm();
        }
        const double mx = *std::max_element(terms.begin(), terms.end());
        double acc = 0.0;
        for (double t : terms) acc += std::exp(t - mx);
        logw[j] = -(mx + std::log(acc));
      }
      const double mx = *std::max_element(logw.begin(), logw.end());
      post.weights.resize(P);
      double total = 0.0;
      for (std::size_t j = 0; j < P; ++j) total += post.weights[j] = std::exp(logw[j] - mx);
      for (double& w : post.weights) w /= total;
    }
    if (options.on_round) options.on_round(r + 1, post);
    rounds.push_back(std::move(post));
  }
  return rounds;
}

}  // namespace lfi
