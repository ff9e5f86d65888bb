#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "lfi/error.hpp"
#include "lfi/eval.hpp"
#include "lfi/io.hpp"

using namespace lfi;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("lfi_test_eval_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

EvalReport report_with_mean(double m) { return EvalReport::from_repetitions({"a", "b"}, {{m, m}}); }

}  // namespace

TEST_CASE("E% of perfect and single predictions") {
  UniformBoxPrior prior({0.0, -1.0}, {2.0, 1.0});
  const std::vector<ParameterVector> truth = {{0.5, 0.2}, {1.5, -0.4}};
  for (double e : e_percent(truth, truth, prior)) CHECK(e == 0.0);
  const auto one = e_percent({{0.3, 0.2}}, {{0.5, 0.7}}, prior);
  CHECK(one[0] == doctest::Approx(4.0 / 2.0 * 0.2).epsilon(1e-14));
  CHECK(one[1] == doctest::Approx(4.0 / 2.0 * 0.5).epsilon(1e-14));
  CHECK_THROWS(e_percent({{0.3, 0.2}}, truth, prior));
}

TEST_CASE("the prior-mean predictor scores about one") {
  const UniformBoxPrior prior({0.0, 10.0}, {4.0, 11.0});
  RngStream rng(2, 0);
  const auto truth = prior_sample(prior, 40000, rng);
  const std::vector<ParameterVector> preds(truth.size(), prior.midpoint());
  for (double e : e_percent(preds, truth, prior)) CHECK(std::abs(e - 1.0) < 0.02);
}

TEST_CASE("E% is invariant to affine reparameterization") {
  const UniformBoxPrior p1({0.0}, {1.0}), p2({5.0}, {8.0});
  RngStream rng(5, 0);
  std::vector<ParameterVector> t1, h1, t2, h2;
  for (int i = 0; i < 100; ++i) {
    const double t = rng.uniform(), h = std::clamp(t + 0.1 * rng.normal(), 0.0, 1.0);
    t1.push_back({t});
    h1.push_back({h});
    t2.push_back({5 + 3 * t});
    h2.push_back({5 + 3 * h});
  }
  CHECK(e_percent(h1, t1, p1)[0] == doctest::Approx(e_percent(h2, t2, p2)[0]).epsilon(1e-12));
}

TEST_CASE("E% against a fixed parameter") {
  const UniformBoxPrior prior({0.0}, {4.0});
  const double truth[] = {1.0};
  CHECK(e_percent_true({{1.5}, {0.5}, {1.0}}, truth, prior)[0] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("repetition aggregation") {
  const auto r = EvalReport::from_repetitions({"a", "b"}, {{1.0, 3.0}, {2.0, 4.0}});
  CHECK(r.repetitions == 2);
  CHECK(r.e_percent == std::vector<double>{1.5, 3.5});
  CHECK(r.mean == 2.5);
  CHECK(r.e_percent_std[0] == doctest::Approx(std::sqrt(0.5)));
  CHECK(r.mean_std == doctest::Approx(std::sqrt(0.5)));
  CHECK(EvalReport::from_repetitions({"a"}, {{0.7}}).e_percent_std[0] == 0.0);
}

TEST_CASE("percent change") {
  CHECK(percent_change(report_with_mean(0.5), report_with_mean(0.6)) == doctest::Approx(20.0));
  CHECK(percent_change(report_with_mean(0.5), report_with_mean(0.4)) == doctest::Approx(-20.0));
  CHECK_THROWS_AS(percent_change(report_with_mean(0.0), report_with_mean(0.4)), DivisionByZero);
}

TEST_CASE("dataset generation is independent of jobs and prefix stable") {
  ModelOptions o;
  o.ma2_length = 20;
  const auto model = make_model(o);
  const auto a = generate_dataset(model, 40, 9, 1), b = generate_dataset(model, 40, 9, 3);
  CHECK(a.theta_data() == b.theta_data());
  CHECK(a.series_data() == b.series_data());
  const auto short_set = generate_dataset(model, 10, 9, 1);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(std::equal(short_set.theta(i).begin(), short_set.theta(i).end(), a.theta(i).begin()));
  }
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(model.prior.contains(a.theta(i)));
  CHECK(generate_dataset(model, 40, 10, 1).theta_data() != a.theta_data());
}

TEST_CASE("dataset cache") {
  ModelOptions o;
  o.ma2_length = 12;
  const auto model = make_model(o);
  o.ma2_length = 13;
  const auto other = make_model(o);
  const auto k = dataset_cache_key(model, 30, 4);
  CHECK(k == dataset_cache_key(model, 30, 4));
  CHECK(k != dataset_cache_key(model, 31, 4));
  CHECK(k != dataset_cache_key(model, 30, 5));
  CHECK(k != dataset_cache_key(other, 30, 4));

  const auto dir = scratch_dir("cache");
  const auto first = cached_dataset(model, 30, 4, 1, dir);
  CHECK(!fs::is_empty(dir));
  const auto second = cached_dataset(model, 30, 4, 1, dir);
  CHECK(first.series_data() == second.series_data());
  CHECK(first.theta_data() == generate_dataset(model, 30, 4, 1).theta_data());
  fs::remove_all(dir);
}

TEST_CASE("experiments reproduce byte for byte") {
  ExperimentConfig c;
  c.model.ma2_length = 16;
  c.architectures = {"DNN", "CNN"};
  c.preset = "ma2";
  c.train_sizes = {120};
  c.val_size = 60;
  c.test_size = 60;
  c.training.batch_sizes = {32};
  c.training.max_epochs = 3;
  c.repetitions = 2;
  c.seed = 3;
  c.jobs = 1;
  c.theta_true = ParameterVector{0.6, 0.2};
  c.true_test_size = 20;
  CHECK(ExperimentConfig::from_json(c.to_json()).to_json() == c.to_json());

  const auto d1 = scratch_dir("exp1"), d2 = scratch_dir("exp2");
  const auto r1 = run_experiment(c, d1);
  c.jobs = 2;
  const auto r2 = run_experiment(c, d2);
  REQUIRE(r1.rows.size() == 2);
  CHECK(r1.true_rows.size() == 2);
  CHECK(r1.rows[0].report.repetitions == 2);
  CHECK(read_text_file(d1 / "report.csv") == read_text_file(d2 / "report.csv"));
  CHECK(read_text_file(d1 / "report_true.csv") == read_text_file(d2 / "report_true.csv"));
  for (const auto& row : r1.rows) CHECK((std::isfinite(row.report.mean) && row.report.mean > 0));
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("CSV quoting round trip") {
  const std::vector<std::vector<std::string>> rows = {
      {"plain", "with,comma", "with \"quote\""}, {"multi\nline", "", "x"}};
  std::ostringstream os;
  CsvWriter w(os);
  for (const auto& r : rows) w.row(r);
  CHECK(os.str().substr(0, 6) == "plain,");
  CHECK(os.str().find("\"with \"\"quote\"\"\"") != std::string::npos);
  CHECK(os.str().find("\r\n") != std::string::npos);
  std::istringstream is(os.str());
  CHECK(read_csv(is) == rows);
}

TEST_CASE("numbers are written round-trip exact") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.0, 123456789.125}) {
    const auto s = format_double(v);
    CHECK(std::stod(s) == v);
  }
  CHECK(format_double(0.5) == "0.5");
}

TEST_CASE("SVG output is standalone and escaped") {
  const auto dir = scratch_dir("svg");
  write_scatter_svg(dir / "s.svg", {{"a<b", {0, 1, 2}, {1, 0, 2}}}, "t & t", "x", "y");
  write_lines_svg(dir / "l.svg", {{"line", {0, 1}, {0, 1}}, {"flat", {0, 1}, {3, 3}}}, "lines", "x", "y");
  for (const char* name : {"s.svg", "l.svg"}) {
    const auto text = read_text_file(dir / name);
    CHECK(text.find("<svg xmlns=\"http://www.w3.org/2000/svg\"") != std::string::npos);
    CHECK(text.substr(text.size() - 7) == "</svg>\n");
  }
  const auto s = read_text_file(dir / "s.svg");
  CHECK(s.find("a&lt;b") != std::string::npos);
  CHECK(s.find("t &amp; t") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("history CSV") {
  const auto csv = history_csv({{1, 0, 0.5, 0.25}, {2, 3, 0.125, 0.0625}});
  CHECK(csv == "epoch,train_mse,val_mae,stage\r\n0,0.5,0.25,1\r\n3,0.125,0.0625,2\r\n");
}
