#include <doctest.h>

#include <cmath>

#include "lfi/error.hpp"
#include "lfi/models.hpp"
#include "lfi/simulators.hpp"

using namespace lfi;

namespace {

ReactionNetwork pure_death(std::int64_t x0) {
  return ReactionNetwork({"X"}, {x0}, {Reaction{{{0, 1}}, {}, 0}}, {"k"});
}

SsaOptions budget(std::uint64_t events) {
  SsaOptions o;
  o.timeout = std::chrono::seconds(30);
  o.max_events = events;
  return o;
}

}  // namespace

TEST_CASE("pure death matches the analytic mean and variance") {
  const auto net = pure_death(1000);
  const double k[] = {1.0};
  const SimGrid grid{0.0, 1.0, 1.0, std::nullopt};
  const int n = 10000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    RngStream rng(21, static_cast<std::uint64_t>(i));
    const double x = ssa_simulate(net, k, grid, rng)(0, 1);
    s += x;
    s2 += x * x;
  }
  const double mean = s / n, var = (s2 - n * mean * mean) / (n - 1);
  const double p = std::exp(-1.0), m_true = 1000 * p, v_true = 1000 * p * (1 - p);
  CHECK(std::abs(mean - m_true) < 3 * std::sqrt(v_true / n));
  CHECK(std::abs(var - v_true) < 3 * v_true * std::sqrt(2.0 / (n - 1)));
}

TEST_CASE("zero rates keep the initial state") {
  const auto net = build_lotka_volterra();
  const double theta[] = {0, 0, 0};
  RngStream rng(1, 0);
  const auto ts = ssa_simulate(net, theta, {0.0, 10.0, 1.0, std::nullopt}, rng);
  for (std::size_t t = 0; t < ts.timepoints(); ++t) {
    CHECK(ts(0, t) == 50);
    CHECK(ts(1, t) == 100);
  }
}

TEST_CASE("Lotka-Volterra network structure") {
  const auto net = build_lotka_volterra();
  CHECK(net.species_count() == 2);
  CHECK(net.reaction_count() == 3);
  CHECK(net.param_count() == 3);
  const auto& r = net.reactions()[1];
  CHECK(r.reactants.size() == 2);
  int prey_in = 0, pred_in = 0, pred_out = 0;
  for (auto [s, c] : r.reactants) (s == 0 ? prey_in : pred_in) += c;
  for (auto [s, c] : r.products) {
    CHECK(s == 1);
    pred_out += c;
  }
  CHECK(prey_in == 1);
  CHECK(pred_in == 1);
  CHECK(pred_out == 2);
}

TEST_CASE("Lotka-Volterra at the true parameters") {
  const auto net = build_lotka_volterra();
  const auto theta = lotka_volterra_true_theta();
  RngStream rng(5, 0);
  const auto ts = ssa_simulate(net, theta, {0.0, 30.0, 1.0, std::nullopt}, rng, budget(kLotkaVolterraMaxEvents));
  CHECK(ts.channels() == 2);
  CHECK(ts.timepoints() == 31);
}

TEST_CASE("prey never decreases with predation and death switched off") {
  const auto net = build_lotka_volterra();
  const double theta[] = {0.3, 0.0, 0.0};
  RngStream rng(2, 3);
  const auto ts = ssa_simulate(net, theta, {0.0, 10.0, 0.5, std::nullopt}, rng);
  for (std::size_t t = 1; t < ts.timepoints(); ++t) CHECK(ts(0, t) >= ts(0, t - 1));
}

TEST_CASE("exploding prey raises Timeout") {
  const auto net = build_lotka_volterra();
  const double theta[] = {6.0, 0.0, 0.005};
  RngStream rng(1, 1);
  CHECK_THROWS_AS(ssa_simulate(net, theta, {0.0, 30.0, 1.0, std::nullopt}, rng, budget(200000)), Timeout);
  SsaOptions wall;
  wall.timeout = std::chrono::milliseconds(50);
  RngStream rng2(1, 1);
  CHECK_THROWS_AS(ssa_simulate(net, theta, {0.0, 30.0, 1.0, std::nullopt}, rng2, wall), Timeout);
}

TEST_CASE("SSA is deterministic per stream") {
  const auto net = build_lotka_volterra();
  const auto theta = lotka_volterra_true_theta();
  const SimGrid grid{0.0, 30.0, 1.0, std::nullopt};
  RngStream a(8, 4), b(8, 4);
  const auto x = ssa_simulate(net, theta, grid, a, budget(kLotkaVolterraMaxEvents));
  const auto y = ssa_simulate(net, theta, grid, b, budget(kLotkaVolterraMaxEvents));
  CHECK(std::equal(x.data().begin(), x.data().end(), y.data().begin()));
}

TEST_CASE("grid must be well formed") {
  CHECK_THROWS((SimGrid{0.0, -1.0, 1.0, std::nullopt}.timepoints()));
  CHECK_THROWS((SimGrid{0.0, 1.0, 0.0, std::nullopt}.timepoints()));
  CHECK(SimGrid{0.0, 200.0, 0.5, std::nullopt}.timepoints() == 401);
}

TEST_CASE("Vilar network structure") {
  const auto net = build_vilar();
  CHECK(net.species_count() == 9);
  CHECK(net.reaction_count() == 18);
  CHECK(net.param_count() == 15);
  const auto prior = vilar_prior();
  CHECK(prior.lower()[14] == 0.0);
  CHECK(prior.upper()[14] == 300.0);
  const auto C = net.species_index("C"), R = net.species_index("R");
  bool found = false;
  for (const auto& r : net.reactions()) {
    if (r.reactants.size() == 1 && r.reactants[0].first == C && r.products.size() == 1 &&
        r.products[0].first == R) {
      CHECK(r.rate_param == net.param_index("delta_A"));
      found = true;
    }
  }
  CHECK(found);
}

TEST_CASE("Vilar release rate is configurable") {
  const auto a = build_vilar(VilarReleaseRate::ThetaA), r = build_vilar(VilarReleaseRate::ThetaR);
  CHECK(a.reactions()[9].rate_param == a.param_index("theta_A"));
  CHECK(r.reactions()[9].rate_param == r.param_index("theta_R"));
}

TEST_CASE("Vilar gene copies are conserved") {
  const auto net = build_vilar();
  const auto theta = vilar_reference_theta();
  for (std::uint64_t s = 0; s < 3; ++s) {
    RngStream rng(17, s);
    const auto ts = ssa_simulate(net, theta, {0.0, 50.0, 0.5, std::nullopt}, rng, budget(kVilarMaxEvents));
    for (std::size_t t = 0; t < ts.timepoints(); ++t) {
      CHECK(ts(0, t) + ts(1, t) == 1.0);
      CHECK(ts(2, t) + ts(3, t) == 1.0);
    }
  }
}

TEST_CASE("MA(2) generator") {
  SUBCASE("zero coefficients return the innovations") {
    std::vector<double> z = {0.1, -0.2, 0.3, 0.4, -0.5, 0.6};
    const double theta[] = {0.0, 0.0};
    const auto x = ma2_from_innovations(theta, z);
    REQUIRE(x.timepoints() == 4);
    for (std::size_t j = 0; j < 4; ++j) CHECK(x(0, j) == z[j + 2]);
  }
  SUBCASE("unit innovations") {
    const std::vector<double> z(12, 1.0);
    const double theta[] = {0.6, 0.2};
    const auto x = ma2_from_innovations(theta, z);
    for (std::size_t j = 0; j < x.timepoints(); ++j) CHECK(x(0, j) == doctest::Approx(1.8).epsilon(1e-15));
  }
  SUBCASE("variance and mean for a long series") {
    const double theta[] = {0.6, 0.2};
    RngStream rng(3, 0);
    const std::size_t p = 100000;
    const auto x = ma2_generate(theta, p, rng);
    double s = 0, s2 = 0;
    for (std::size_t j = 0; j < p; ++j) {
      s += x(0, j);
      s2 += x(0, j) * x(0, j);
    }
    const double mean = s / p, var = s2 / p - mean * mean;
    CHECK(std::abs(var - 1.4) / 1.4 < 0.02);
    CHECK(std::abs(mean) < 3 * 1.8 / std::sqrt(static_cast<double>(p)));
  }
}

TEST_CASE("reaction file parsing") {
  const auto net = parse_reaction_network(
      "# birth-death\n"
      "species X=10 Y=0\n"
      "parameters k1 k2\n"
      "0 -> X @ k1\n"
      "2 X -> Y @ k2\n");
  CHECK(net.species_count() == 2);
  CHECK(net.reaction_count() == 2);
  CHECK(net.initial_counts()[0] == 10);
  CHECK(net.reactions()[1].reactants[0].second == 2);
  CHECK(net.reactions()[1].rate_param == 1);

  try {
    parse_reaction_network("species X=1\nparameters k\nX -> Z @ k\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_reaction_network("species X=1\nparameters k\nX + X + X -> 0 @ k\n"), ParseError);
}

TEST_CASE("model factory grids") {
  ModelOptions o;
  o.model = "vilar";
  o.species = {"C"};
  o.dt = 0.5;
  o.t_end = 200.0;
  const auto m = make_model(o);
  CHECK(m.shape.timepoints == 401);
  CHECK(m.shape.channels == 1);

  ModelOptions lv;
  lv.model = "lotka_volterra";
  const auto l = make_model(lv);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(l.prior.lower()[k] == 0.005);
    CHECK(l.prior.upper()[k] == 6.0);
  }
  ModelOptions bad;
  bad.model = "nope";
  CHECK_THROWS_AS(make_model(bad), ConfigError);
}
