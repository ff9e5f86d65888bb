#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include <Eigen/Dense>

#include "lfi/error.hpp"
#include "lfi/sumstats.hpp"

using namespace lfi;

namespace {

TimeSeries series1(std::vector<double> v) {
  const auto T = v.size();
  return TimeSeries(1, T, 0.0, 1.0, {"x"}, std::move(v));
}

/// 1-parameter dataset on [0, 10] whose series are produced by `make`.
template <typename Make>
LabeledDataset dataset_of(std::size_t n, std::size_t T, std::uint64_t seed, Make make) {
  UniformBoxPrior prior({0.0}, {10.0}, {}, {"theta"});
  LabeledDataset ds(prior, {1, T, 0.0, 1.0, {"x"}}, seed, "synthetic");
  ds.resize(n);
  RngStream rng(seed, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const double theta[] = {rng.uniform(0.0, 10.0)};
    std::vector<double> v = make(theta[0], rng);
    ds.set(i, theta, {1, T, 0.0, 1.0, v});
  }
  return ds;
}

}  // namespace

TEST_CASE("pool of a constant channel") {
  const auto pool = compute_pool(series1({5, 5, 5, 5}));
  const std::vector<double> expect = {20, 5, 5, 0, 0, 5, -1};
  CHECK(pool == expect);
}

TEST_CASE("pool of 1..4") {
  const auto pool = compute_pool(series1({1, 2, 3, 4}));
  const double sd = std::sqrt(1.25);
  CHECK(pool[0] == 10);
  CHECK(pool[1] == 2.5);
  CHECK(pool[2] == 2.5);
  CHECK(pool[3] == doctest::Approx(sd).epsilon(1e-15));
  CHECK(pool[4] == doctest::Approx(1.25).epsilon(1e-15));
  CHECK(pool[5] == 4);
  CHECK(pool[6] == doctest::Approx((sd - 2.5) / (sd + 2.5)).epsilon(1e-14));
}

TEST_CASE("multi-channel pool concatenates channel blocks") {
  TimeSeries ts(2, 3, 0.0, 1.0, {"a", "b"}, {1, 1, 1, 2, 4, 6});
  const auto pool = compute_pool(ts);
  REQUIRE(pool.size() == 14);
  CHECK(pool[0] == 3);
  CHECK(pool[7] == 12);
  CHECK(pool[12] == 6);
}

TEST_CASE("pool needs two timepoints") { CHECK_THROWS(compute_pool(series1({1.0}))); }

TEST_CASE("burstiness") {
  const double c[] = {3, 3, 3};
  CHECK(burstiness(c) == -1.0);
  const double pair[] = {0, 10};
  CHECK(burstiness(pair) == 0.0);
  const double zeros[] = {0, 0, 0};
  CHECK_THROWS_AS(burstiness(zeros), Degenerate);
  CHECK(compute_pool(series1({0, 0, 0}))[6] == -1.0);
}

TEST_CASE("pool values ignore time reversal") {
  RngStream rng(12, 0);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> v(17);
    for (auto& x : v) x = std::floor(rng.uniform(0.0, 50.0));
    auto r = v;
    std::reverse(r.begin(), r.end());
    const auto a = compute_pool(series1(v)), b = compute_pool(series1(r));
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k] == doctest::Approx(b[k]).epsilon(1e-13));
  }
}

TEST_CASE("statistic names round trip") {
  for (auto s : kStatisticPool) CHECK(statistic_from_name(statistic_name(s)) == s);
  CHECK_THROWS(statistic_from_name("kurtosis"));
}

TEST_CASE("feature map json round trip and names") {
  const auto fm = FeatureMap::pool(2);
  CHECK(fm.size() == 14);
  CHECK(FeatureMap::from_json(fm.to_json()) == fm);
  const auto names = fm.names({"A", "B"});
  CHECK(names[0] == "A:sum");
  CHECK(names[13] == "B:burstiness");
}

TEST_CASE("linear fit recovers an exact relation") {
  const auto ds = dataset_of(60, 6, 3, [](double th, RngStream& rng) {
    std::vector<double> v(6);
    for (auto& x : v) x = rng.normal();
    double m = 0;
    for (double x : v) m += x;
    m /= 6;
    for (auto& x : v) x += th / 2 - m;
    return v;
  });
  const FeatureMap fm({{0, Statistic::Mean}});
  const auto model = fit_linear_summary(ds, fm);
  CHECK(model.B(0, 0) == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(std::abs(model.b0[0]) < 1e-8);
  CHECK(model.sigma[0] < 1e-8);
  for (std::size_t i = 0; i < ds.size(); ++i)
    CHECK(std::abs(linear_predict(model, ds.series(i))[0] - ds.theta(i)[0]) < 1e-6);
}

TEST_CASE("linear fit on constant targets") {
  UniformBoxPrior prior({0.0}, {10.0});
  LabeledDataset ds(prior, {1, 4, 0.0, 1.0, {"x"}}, 1, "const");
  RngStream rng(4, 0);
  for (int i = 0; i < 30; ++i) {
    std::vector<double> v(4);
    for (auto& x : v) x = rng.normal();
    const double theta[] = {3.5};
    ds.push_back(theta, {1, 4, 0.0, 1.0, v});
  }
  const auto model = fit_linear_summary(ds, FeatureMap({{0, Statistic::Mean}, {0, Statistic::Max}}));
  CHECK(model.b0[0] == doctest::Approx(3.5).epsilon(1e-10));
  CHECK(std::abs(model.B(0, 0)) < 1e-10);
  CHECK(std::abs(model.B(0, 1)) < 1e-10);
}

TEST_CASE("linear fit agrees with a normal-equations oracle and leaves orthogonal residuals") {
  const auto ds = dataset_of(50, 8, 9, [](double th, RngStream& rng) {
    std::vector<double> v(8);
    for (auto& x : v) x = th + rng.normal() * (1.0 + 0.1 * th);
    return v;
  });
  const FeatureMap fm({{0, Statistic::Mean}, {0, Statistic::StdDev}, {0, Statistic::Max}});
  const auto model = fit_linear_summary(ds, fm);

  const Eigen::MatrixXd H = fm.evaluate_all(ds);
  Eigen::MatrixXd X(H.rows(), H.cols() + 1);
  X.col(0).setOnes();
  X.rightCols(H.cols()) = H;
  Eigen::VectorXd y(H.rows());
  for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = ds.theta(static_cast<std::size_t>(i))[0];
  const Eigen::VectorXd beta = (X.transpose() * X).ldlt().solve(X.transpose() * y);
  CHECK(model.b0[0] == doctest::Approx(beta(0)).epsilon(1e-8));
  for (Eigen::Index k = 0; k < H.cols(); ++k) CHECK(model.B(0, k) == doctest::Approx(beta(k + 1)).epsilon(1e-8));

  Eigen::VectorXd resid(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i)
    resid(i) = y(i) - linear_predict(model, ds.series(static_cast<std::size_t>(i)))[0];
  const Eigen::VectorXd ortho = H.transpose() * resid;
  for (Eigen::Index k = 0; k < ortho.size(); ++k) CHECK(std::abs(ortho(k)) < 1e-6);
  CHECK(std::abs(resid.sum()) < 1e-6);
  const double rss = resid.squaredNorm();
  CHECK(model.sigma[0] == doctest::Approx(std::sqrt(rss / (50.0 - 3.0 - 1.0))).epsilon(1e-8));
}

TEST_CASE("linear predict is affine in the features") {
  LinearSummaryModel m;
  m.b0 = {1.5};
  m.B = Eigen::MatrixXd::Zero(1, 1);
  m.feature_map = FeatureMap({{0, Statistic::Mean}});
  CHECK(linear_predict(m, series1({7, 9}))[0] == 1.5);
  m.b0 = {0.0};
  m.B(0, 0) = 1.0;
  CHECK(linear_predict(m, series1({7, 9}))[0] == 8.0);
  const double wrong[] = {1.0, 2.0};
  CHECK_THROWS_AS(linear_predict_features(m, wrong), DimensionMismatch);
}

TEST_CASE("linear fit rejects under-determined and collinear designs") {
  const auto ds = dataset_of(8, 4, 5, [](double th, RngStream& rng) {
    std::vector<double> v(4);
    for (auto& x : v) x = th + rng.normal();
    return v;
  });
  CHECK_THROWS_AS(fit_linear_summary(ds, FeatureMap::pool(1)), SingularDesign);
  LinearFitOptions strict;
  strict.allow_collinear = false;
  CHECK_THROWS_AS(fit_linear_summary(ds, FeatureMap({{0, Statistic::Sum}, {0, Statistic::Mean}}), strict),
                  SingularDesign);
  const auto loose = fit_linear_summary(ds, FeatureMap({{0, Statistic::Sum}, {0, Statistic::Mean}}));
  CHECK(loose.rank == 1);
}

TEST_CASE("approximate sufficiency finds the informative statistic") {
  const std::size_t N = 3000, K = 5, informative = 2;
  const auto ds = dataset_of(N, 2, 21, [](double, RngStream&) { return std::vector<double>{0.0, 0.0}; });
  Eigen::MatrixXd F(N, K);
  RngStream noise(22, 0);
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t k = 0; k < K; ++k)
      F(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = k == informative ? ds.theta(i)[0] : noise.normal();
  }
  const double observed[] = {0.1, -0.3, 6.0, 0.7, 0.2};
  int hits = 0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    RngStream rng(100, s);
    const auto sel = as_select_features(F, observed, ds, rng);
    CHECK(std::is_sorted(sel.begin(), sel.end()));
    CHECK(std::set<std::size_t>(sel.begin(), sel.end()).size() == sel.size());
    for (auto i : sel) CHECK(i < K);
    hits += std::count(sel.begin(), sel.end(), informative) > 0;
  }
  CHECK(hits >= 45);

  RngStream a(7, 7), b(7, 7);
  CHECK(as_select_features(F, observed, ds, a) == as_select_features(F, observed, ds, b));
}

TEST_CASE("approximate sufficiency on series and its errors") {
  const auto ds = dataset_of(500, 6, 31, [](double th, RngStream& rng) {
    std::vector<double> v(6);
    for (auto& x : v) x = th + rng.normal();
    return v;
  });
  RngStream rng(1, 0);
  const auto sel = as_select(FeatureMap::pool(1), ds.series(0), ds, rng);
  for (auto i : sel) CHECK(i < 7);
  CHECK_THROWS_AS(as_select(FeatureMap(), ds.series(0), ds, rng), EmptyCandidates);
  AsSelectOptions bad;
  bad.epsilon_quantile = 1.5;
  CHECK_THROWS(as_select(FeatureMap::pool(1), ds.series(0), ds, rng, bad));
}
