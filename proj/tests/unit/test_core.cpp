#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "lfi/core.hpp"
#include "lfi/dataset.hpp"
#include "lfi/error.hpp"
#include "lfi/rng.hpp"
#include "lfi/simulators.hpp"

using namespace lfi;

TEST_CASE("philox known-answer vectors") {
  using A4 = std::array<std::uint32_t, 4>;
  CHECK(detail::philox4x32_10({0, 0, 0, 0}, {0, 0}) ==
        A4{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(detail::philox4x32_10({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff},
                              {0xffffffff, 0xffffffff}) ==
        A4{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(detail::philox4x32_10({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344},
                              {0xa4093822, 0x299f31d0}) ==
        A4{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("streams are reproducible and distinct") {
  RngStream a(42, 7), b(42, 7), c(42, 8), d(43, 7);
  bool differs_c = false, differs_d = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs_c |= x != c.next_u64();
    differs_d |= x != d.next_u64();
  }
  CHECK(differs_c);
  CHECK(differs_d);
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
  CHECK(derive_seed(1, 2) != derive_seed(2, 1));
}

TEST_CASE("uniform and normal moments") {
  RngStream rng(3, 0);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    CHECK_UNARY(u >= 0.0);
    CHECK_UNARY(u < 1.0);
    su += u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
  }
  CHECK(std::abs(su / n - 0.5) < 3 * std::sqrt(1.0 / 12 / n) + 1e-12);
  CHECK(std::abs(sn / n) < 3 * std::sqrt(1.0 / n));
  CHECK(std::abs(sn2 / n - 1.0) < 3 * std::sqrt(2.0 / n));
}

TEST_CASE("below is unbiased over a small range") {
  RngStream rng(5, 1);
  std::array<int, 3> counts{};
  for (int i = 0; i < 30000; ++i) ++counts[rng.below(3)];
  for (int c : counts) CHECK(std::abs(c - 10000) < 400);
}

TEST_CASE("prior sampling respects the box") {
  UniformBoxPrior box({0, 0}, {1, 1});
  RngStream rng(1, 0);
  const auto pts = prior_sample(box, 3, rng);
  REQUIRE(pts.size() == 3);
  for (const auto& p : pts) CHECK(box.contains(p));
}

TEST_CASE("MA(2) prior samples satisfy the triangle") {
  const auto prior = ma2_prior();
  RngStream rng(9, 0);
  for (const auto& t : prior_sample(prior, 10000, rng)) {
    CHECK_UNARY(t[1] + t[0] >= -1.0);
    CHECK_UNARY(t[1] - t[0] >= -1.0);
  }
}

TEST_CASE("uniform box mean and mean absolute deviation") {
  UniformBoxPrior box({0, 0}, {2, 4});
  RngStream rng(11, 0);
  const std::size_t n = 100000;
  const auto pts = prior_sample(box, n, rng);
  for (std::size_t k = 0; k < 2; ++k) {
    double m = 0, mad = 0;
    for (const auto& p : pts) m += p[k];
    m /= n;
    const double mid = box.midpoint()[k], w = box.width(k);
    for (const auto& p : pts) mad += std::abs(p[k] - mid);
    mad /= n;
    CHECK(std::abs(m - mid) < 3 * w / std::sqrt(12.0 * n));
    CHECK(std::abs(mad - w / 4) / (w / 4) < 0.02);
  }
}

TEST_CASE("prior sampling is deterministic per stream") {
  const auto prior = ma2_prior();
  RngStream a(4, 2), b(4, 2);
  CHECK(prior_sample(prior, 50, a) == prior_sample(prior, 50, b));
}

TEST_CASE("empty constraint region exhausts the retry budget") {
  UniformBoxPrior impossible({0.0}, {1.0}, {{{1.0}, 2.0}});
  RngStream rng(1, 1);
  CHECK_THROWS_AS(prior_sample_one(impossible, rng), RetryBudgetExceeded);
}

TEST_CASE("prior MAE denominator") {
  CHECK(prior_mae_denominator(UniformBoxPrior({0}, {4}))[0] == 1.0);
  CHECK(prior_mae_denominator(UniformBoxPrior({-2}, {2}))[0] == 1.0);
  CHECK(prior_mae_denominator(vilar_prior())[14] == 75.0);
}

TEST_CASE("invalid priors are rejected") {
  CHECK_THROWS_AS(UniformBoxPrior({1.0}, {1.0}), InvalidArgument);
  CHECK_THROWS_AS(UniformBoxPrior({0.0, 0.0}, {1.0}), InvalidArgument);
}

TEST_CASE("unit mapping round trip") {
  const auto prior = vilar_prior();
  const auto theta = vilar_reference_theta();
  const auto back = prior.from_unit(prior.to_unit(theta));
  for (std::size_t k = 0; k < theta.size(); ++k) CHECK(back[k] == doctest::Approx(theta[k]).epsilon(1e-14));
}

TEST_CASE("time series grid and channel layout") {
  TimeSeries ts(2, 3, 0.5, 0.25, {"a", "b"}, {1, 2, 3, 4, 5, 6});
  CHECK(ts.time(2) == 1.0);
  CHECK(ts(1, 0) == 4);
  CHECK(ts.channel(1)[2] == 6);
  const std::size_t pick[] = {1};
  const auto sub = ts.select_channels(pick);
  CHECK(sub.channels() == 1);
  CHECK(sub(0, 1) == 5);
  CHECK(sub.names()[0] == "b");
  CHECK_THROWS_AS(TimeSeries(1, 2, 0, 1, {"a"}, {1, std::nan("")}), InvalidArgument);
}

namespace {

LabeledDataset small_dataset(std::size_t n) {
  UniformBoxPrior prior({0, -1}, {1, 1}, {}, {"a", "b"});
  LabeledDataset ds(prior, {2, 4, 0.0, 0.5, {"x", "y"}}, 77, "toy", {{"note", "unit"}});
  ds.resize(n);
  RngStream rng(1, 2);
  for (std::size_t i = 0; i < n; ++i) {
    const auto t = prior_sample_one(prior, rng);
    std::vector<double> v(8);
    for (auto& x : v) x = rng.normal() * 1e3 + 1.0 / 3.0;
    ds.set(i, t, {2, 4, 0.0, 0.5, v});
  }
  return ds;
}

}  // namespace

TEST_CASE("dataset round trip is bit exact") {
  const auto ds = small_dataset(25);
  const auto dir = std::filesystem::temp_directory_path() / "lfi_unit_dataset_rt";
  std::filesystem::remove_all(dir);
  write_dataset(ds, dir);
  const auto back = read_dataset(dir);
  CHECK(back.size() == ds.size());
  CHECK(back.theta_data() == ds.theta_data());
  CHECK(back.series_data() == ds.series_data());
  CHECK(back.prior() == ds.prior());
  CHECK(back.shape() == ds.shape());
  CHECK(back.seed() == 77);
  CHECK(back.extra().at("note") == "unit");
  CHECK(back.content_hash() == ds.content_hash());
  std::filesystem::remove_all(dir);
}

TEST_CASE("dataset rejects entries outside the prior or with a wrong grid") {
  auto ds = small_dataset(1);
  const std::vector<double> v(8, 0.0);
  const double outside[] = {2.0, 0.0};
  CHECK_THROWS_AS(ds.push_back(outside, {2, 4, 0.0, 0.5, v}), OutsideSupport);
  const double inside[] = {0.5, 0.0};
  CHECK_THROWS_AS(ds.push_back(inside, {2, 4, 0.0, 1.0, v}), DimensionMismatch);
}

TEST_CASE("slice and regrid") {
  const auto ds = small_dataset(5);
  const auto s = ds.slice(1, 3);
  CHECK(s.size() == 2);
  CHECK(s.theta(0)[0] == ds.theta(1)[0]);
  const std::size_t chans[] = {1};
  const auto r = ds.regrid(2, 2, chans);
  CHECK(r.shape().timepoints == 2);
  CHECK(r.shape().dt == 1.0);
  CHECK(r.shape().channels == 1);
  CHECK(r.series(3)(0, 1) == ds.series(3)(1, 2));
}

TEST_CASE("binary array header is validated") {
  const auto path = std::filesystem::temp_directory_path() / "lfi_unit_bad.bin";
  {
    std::ofstream os(path, std::ios::binary);
    os << "NOPE";
  }
  CHECK_THROWS(read_binary_array(path));
  std::filesystem::remove(path);
}
