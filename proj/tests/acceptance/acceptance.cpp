// Acceptance criteria 1-11. Each invocation runs one criterion and prints a
// single "criterion N: PASS|FAIL ..." line on stdout; progress goes to stderr.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <Eigen/Dense>

#include "lfi/abc.hpp"
#include "lfi/error.hpp"
#include "lfi/eval.hpp"
#include "lfi/io.hpp"
#include "lfi/mcmc.hpp"
#include "lfi/simulators.hpp"
#include "support/gradcheck.hpp"

using namespace lfi;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeed = 20200801;

struct Context {
  fs::path work;
  fs::path cache;
  std::size_t jobs = 0;
  unsigned cores = 1;

  /// Budgets are stated for 4 cores.
  double budget_seconds(double minutes) const { return minutes * 60.0 * 4.0 / cores; }
};

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

std::string runtime_note(double seconds, double budget) {
  return "runtime " + fmt(seconds / 60.0, 3) + " min (budget " + fmt(budget / 60.0, 3) + " min)";
}

void progress(const std::string& s) { std::cerr << "  " << s << std::endl; }

const ReportRow& row_for(const std::vector<ReportRow>& rows, const std::string& arch,
                         std::size_t train_size = 0, double step = 0, double t_end = 0) {
  for (const auto& r : rows) {
    if (r.architecture != arch) continue;
    if (train_size && r.train_size != train_size) continue;
    if (step > 0 && std::abs(r.step - step) > 1e-9) continue;
    if (t_end > 0 && std::abs(r.t_end - t_end) > 1e-9) continue;
    return r;
  }
  throw std::runtime_error("no report row for " + arch);
}

// ---- MA(2) table band ------------------------------------------------------

ExperimentConfig ma2_table_config(const Context& ctx) {
  ExperimentConfig c;
  c.model.model = "ma2";
  c.model.ma2_length = 100;
  c.architectures = {"CNN", "DNN"};
  c.preset = "ma2";
  c.train_sizes = {10'000};
  c.val_size = 10'000;
  c.test_size = 10'000;
  c.training = nn::TrainConfig::for_approach(1);
  c.repetitions = 3;
  c.seed = kSeed;
  c.jobs = ctx.jobs;
  c.cache_dir = ctx.cache.string();
  return c;
}

Outcome criterion1(const Context& ctx) {
  const Stopwatch sw;
  const fs::path dir = ctx.work / "c1";
  fs::remove_all(dir);
  const auto result = run_experiment(ma2_table_config(ctx), dir, progress);
  const double cnn = row_for(result.rows, "CNN").report.mean;
  const double dnn = row_for(result.rows, "DNN").report.mean;
  const double t = sw.seconds(), budget = ctx.budget_seconds(15);
  const bool band = cnn >= 0.15 && cnn <= 0.35;
  return {band && dnn > cnn && t <= budget,
          "MA(2) 1e4/1e4/1e4, 3 reps: CNN mean E% " + fmt(cnn) + " (band [0.15, 0.35]), DNN mean E% " +
              fmt(dnn) + (dnn > cnn ? " > CNN" : " not above CNN") + "; " + runtime_note(t, budget)};
}

// ---- MA(2) size trend ------------------------------------------------------

Outcome criterion2(const Context& ctx) {
  const Stopwatch sw;
  ExperimentConfig c = ma2_table_config(ctx);
  c.architectures = {"CNN", "DNN", "PEN"};
  c.pen_order = 10;
  c.train_sizes = {1'000, 100'000};
  c.repetitions = 1;
  c.seed = derive_seed(kSeed, 2);
  const fs::path dir = ctx.work / "c2";
  fs::remove_all(dir);
  const auto result = run_experiment(c, dir, progress);
  bool ok = true;
  std::string detail = "MA(2) mean E% at 1e3 -> 1e5:";
  for (const std::string arch : {"CNN", "DNN", "PEN"}) {
    const double small = row_for(result.rows, arch, 1'000).report.mean;
    const double large = row_for(result.rows, arch, 100'000).report.mean;
    ok = ok && large < small;
    detail += " " + arch + " " + fmt(small) + " -> " + fmt(large) + (large < small ? "" : " (no decrease)") + ";";
  }
  const double t = sw.seconds(), budget = ctx.budget_seconds(45);
  return {ok && t <= budget, detail + " " + runtime_note(t, budget)};
}

// ---- prior-mean predictor ----------------------------------------------------

Outcome criterion3(const Context&) {
  bool ok = true;
  std::string detail = "prior-mean predictor on 1e5 uniform points, E% per parameter:";
  for (const std::string name : {"lotka_volterra", "vilar"}) {
    ModelOptions o;
    o.model = name;
    const auto model = make_model(o);
    RngStream rng(derive_seed(kSeed, 3), name == "vilar");
    const auto truth = prior_sample(model.prior, 100'000, rng);
    const std::vector<ParameterVector> preds(truth.size(), model.prior.midpoint());
    const auto e = e_percent(preds, truth, model.prior);
    double lo = e[0], hi = e[0];
    for (double v : e) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      ok = ok && std::abs(v - 1.0) <= 0.02;
    }
    detail += " " + name + " [" + fmt(lo) + ", " + fmt(hi) + "];";
  }
  return {ok, detail + " tolerance 1 +/- 0.02"};
}

// ---- SSA oracle ------------------------------------------------------------

Outcome criterion4(const Context&) {
  const ReactionNetwork net({"X"}, {1000}, {Reaction{{{0, 1}}, {}, 0}}, {"k"});
  const double k[] = {1.0};
  const SimGrid grid{0.0, 1.0, 1.0, std::nullopt};
  const int n = 10'000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    RngStream rng(derive_seed(kSeed, 4), static_cast<std::uint64_t>(i));
    const double x = ssa_simulate(net, k, grid, rng)(0, 1);
    s += x;
    s2 += x * x;
  }
  const double mean = s / n, var = (s2 - n * mean * mean) / (n - 1);
  const double p = std::exp(-1.0), m_true = 1000 * p, v_true = 1000 * p * (1 - p);
  const double se_mean = std::sqrt(v_true / n), se_var = v_true * std::sqrt(2.0 / (n - 1));
  const double z_mean = (mean - m_true) / se_mean, z_var = (var - v_true) / se_var;
  return {std::abs(z_mean) < 3 && std::abs(z_var) < 3,
          "pure death X0=1000, k=1, t=1, 1e4 replicates: mean " + fmt(mean, 6) + " vs " + fmt(m_true, 6) +
              " (z " + fmt(z_mean, 3) + "), variance " + fmt(var, 6) + " vs " + fmt(v_true, 6) + " (z " +
              fmt(z_var, 3) + ")"};
}

// ---- MA(2) exact likelihood ------------------------------------------------

double dense_ma2_loglik(std::span<const double> x, double t1, double t2) {
  const auto n = static_cast<Eigen::Index>(x.size());
  const double g[] = {1 + t1 * t1 + t2 * t2, t1 * (1 + t2), t2};
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (std::abs(i - j) <= 2) S(i, j) = g[std::abs(i - j)];
  const Eigen::LLT<Eigen::MatrixXd> llt(S);
  const Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(x.data(), n);
  const Eigen::VectorXd z = llt.matrixL().solve(v);
  const double logdet = 2 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * (static_cast<double>(n) * std::log(2 * std::numbers::pi) + logdet + z.squaredNorm());
}

Outcome criterion5(const Context&) {
  const auto prior = ma2_prior();
  RngStream rng(derive_seed(kSeed, 5), 0);
  double worst = 0;
  for (int i = 0; i < 100; ++i) {
    const auto theta = prior_sample_one(prior, rng);
    const auto x = ma2_generate(theta, 10, rng);
    worst = std::max(worst, std::abs(ma2_exact_loglik(x.data(), theta) - dense_ma2_loglik(x.data(), theta[0], theta[1])));
  }
  return {worst <= 1e-10, "100 MA(2) instances at p=10: max |innovations - dense Cholesky| = " + fmt(worst, 3) +
                              " (tolerance 1e-10)"};
}

// ---- RWMH calibration and ABC agreement -------------------------------------

Outcome criterion6(const Context& ctx) {
  const Stopwatch sw;
  const std::uint64_t seed = derive_seed(kSeed, 6);
  ModelOptions o;
  o.model = "ma2";
  const auto model = make_model(o);
  const ParameterVector truth = {0.6, 0.2};
  RngStream obs_rng(seed, 0);
  const auto observed = ma2_generate(truth, 100, obs_rng);

  RngStream mcmc_rng(seed, 1);
  const auto chain = rwmh_ma2(observed.data(), model.prior, RwmhOptions{}, mcmc_rng);
  const auto m = chain.mean(), sd = chain.stddev();
  bool ok = true;
  std::string detail = "RWMH mean (" + fmt(m[0]) + ", " + fmt(m[1]) + ") sd (" + fmt(sd[0]) + ", " + fmt(sd[1]) + ")";
  for (std::size_t k = 0; k < 2; ++k) ok = ok && std::abs(m[k] - truth[k]) <= 3 * sd[k];
  detail += ok ? " covers (0.6, 0.2) within 3 sd;" : " does not cover (0.6, 0.2) within 3 sd;";
  progress(detail);

  const auto train_set = cached_dataset(model, 10'000, derive_seed(seed, 2), ctx.jobs, ctx.cache);
  const auto val_set = cached_dataset(model, 10'000, derive_seed(seed, 3), ctx.jobs, ctx.cache);
  const auto spec = nn::preset_architecture(nn::ArchitectureKind::CNN, "ma2", 1, 100, 2);
  RngStream init(seed, 4);
  auto cfg = nn::TrainConfig::for_approach(1);
  cfg.seed = derive_seed(seed, 5);
  auto trained = std::make_shared<const nn::TrainedSummaryModel>(
      nn::train(nn::build_architecture(spec, model.prior, init, &train_set), train_set, val_set, cfg));
  progress("CNN trained, validation MAE " + fmt(nn::validation_mae(*trained, val_set)));

  const auto reference = generate_dataset(model, 500'000, derive_seed(seed, 6), ctx.jobs);
  const auto post = rejection_reference_table(reference, SummaryFunction::learned(trained), observed, 1e-4, ctx.jobs);
  const auto am = post.mean();
  bool agree = post.size() == 50;
  for (std::size_t k = 0; k < 2; ++k) agree = agree && std::abs(am[k] - m[k]) <= 0.15;
  detail += " ABC (CNN summary, 5e5 table, ratio 1e-4) accepted " + std::to_string(post.size()) + ", mean (" +
            fmt(am[0]) + ", " + fmt(am[1]) + ")" + (agree ? " within 0.15 of RWMH;" : " not within 0.15 of RWMH;");
  const double t = sw.seconds(), budget = ctx.budget_seconds(20);
  return {ok && agree && t <= budget, detail + " " + runtime_note(t, budget)};
}

// ---- Lotka-Volterra ----------------------------------------------------------

Outcome criterion7(const Context& ctx) {
  const Stopwatch sw;
  ExperimentConfig c;
  c.model.model = "lotka_volterra";
  c.architectures = {"CNN", "PEN", "DNN"};
  c.preset = "setup1";
  c.pen_order = 10;
  c.train_sizes = {30'000};
  c.val_size = 10'000;
  c.test_size = 20'000;
  c.training = nn::TrainConfig::for_approach(2);
  c.repetitions = 1;
  c.seed = derive_seed(kSeed, 7);
  c.jobs = ctx.jobs;
  c.cache_dir = ctx.cache.string();
  const fs::path dir = ctx.work / "c7";
  fs::remove_all(dir);
  const auto result = run_experiment(c, dir, progress);
  const double cnn = row_for(result.rows, "CNN").report.mean;
  const double pen = row_for(result.rows, "PEN").report.mean;
  const double dnn = row_for(result.rows, "DNN").report.mean;
  const bool band = cnn >= 0.65 && cnn <= 0.85;
  const bool order = cnn <= pen && pen <= dnn + 0.05;
  const double t = sw.seconds(), budget = ctx.budget_seconds(120);
  return {band && order && t <= budget,
          "LV 3e4 approach 2: mean E% CNN " + fmt(cnn) + " (band [0.65, 0.85]), PEN " + fmt(pen) + ", DNN " +
              fmt(dnn) + (order ? "; CNN <= PEN <= DNN + 0.05" : "; ordering CNN <= PEN <= DNN + 0.05 violated") +
              "; " + runtime_note(t, budget)};
}

// ---- Vilar desk-scale substitute ---------------------------------------------

Outcome criterion8(const Context& ctx) {
  const Stopwatch sw;
  std::string detail;

  // (b) gene conservation on full-species trajectories
  ModelOptions full;
  full.model = "vilar";
  full.species = {"D_A", "D_A*", "D_R", "D_R*", "M_A", "M_R", "A", "R", "C"};
  const auto full_model = make_model(full);
  const auto& names = full_model.shape.names;
  auto idx = [&](const std::string& s) {
    const auto it = std::find(names.begin(), names.end(), s);
    if (it == names.end()) throw std::runtime_error("species " + s + " not recorded");
    return static_cast<std::size_t>(it - names.begin());
  };
  const std::size_t da = idx("D_A"), das = idx("D_A*"), dr = idx("D_R"), drs = idx("D_R*");
  const auto trajectories = generate_dataset(full_model, 500, derive_seed(kSeed, 81), ctx.jobs);
  std::size_t violations = 0;
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const auto y = trajectories.series(i);
    for (std::size_t t = 0; t < y.timepoints; ++t)
      violations += (y(da, t) + y(das, t) != 1.0) + (y(dr, t) + y(drs, t) != 1.0);
  }
  const bool conserved = violations == 0;
  detail += "(b) conservation on " + std::to_string(trajectories.size()) + " trajectories: " +
            std::to_string(violations) + " violations;";
  progress(detail);

  ExperimentConfig c;
  c.model.model = "vilar";
  c.model.species = {"C"};
  c.architectures = {"CNN", "DNN"};
  c.preset = "setup1";
  c.train_sizes = {20'000};
  c.val_size = 4'000;
  c.test_size = 4'000;
  c.training = nn::TrainConfig::for_approach(1);
  c.repetitions = 1;
  c.steps = {0.5, 1.0, 2.0};
  c.t_ends = {25, 50, 100, 200};
  c.seed = derive_seed(kSeed, 8);
  c.jobs = ctx.jobs;
  c.cache_dir = ctx.cache.string();
  const fs::path dir = ctx.work / "c8";
  fs::remove_all(dir);
  const auto result = run_experiment(c, dir, progress);

  // (a) full grid, species C
  const auto& cnn = row_for(result.rows, "CNN", 0, 0.5, 200).report;
  const auto& dnn = row_for(result.rows, "DNN", 0, 0.5, 200).report;
  const auto informative = std::count_if(cnn.e_percent.begin(), cnn.e_percent.end(), [](double e) { return e < 1; });
  const bool part_a = informative >= 10 && cnn.mean < dnn.mean;
  detail += " (a) CNN E% < 1 for " + std::to_string(informative) + "/15 parameters, mean CNN " + fmt(cnn.mean) +
            " vs DNN " + fmt(dnn.mean) + ";";

  // (c) 3x4 table and the t_end trend at step 0.5
  std::size_t cells = 0;
  for (const auto& r : result.rows) cells += r.architecture == "CNN";
  std::vector<double> trend;
  for (double t_end : {200.0, 100.0, 50.0, 25.0}) trend.push_back(row_for(result.rows, "CNN", 0, 0.5, t_end).report.mean);
  bool monotone = true;
  for (std::size_t i = 1; i < trend.size(); ++i) monotone = monotone && trend[i] >= trend[i - 1];
  const bool part_c = cells == 12 && monotone;
  detail += " (c) " + std::to_string(cells) + " CNN cells; step 0.5 mean E% at t_end 200/100/50/25: " + fmt(trend[0]) +
            " " + fmt(trend[1]) + " " + fmt(trend[2]) + " " + fmt(trend[3]) + (monotone ? " (non-decreasing);" : " (not monotone);");
  const double t = sw.seconds(), budget = ctx.budget_seconds(360);
  return {conserved && part_a && part_c && t <= budget, detail + " " + runtime_note(t, budget)};
}

// ---- gradients ---------------------------------------------------------------

Outcome criterion9(const Context&) {
  using nn::ArchitectureKind;
  std::size_t checked = 0, bad = 0;
  double worst = 0;
  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    for (const auto& spec : {testing::small_spec(ArchitectureKind::CNN, 2, 9, 2),
                             testing::small_spec(ArchitectureKind::CNN, 1, 12, 3),
                             testing::small_spec(ArchitectureKind::DNN, 2, 5, 2),
                             testing::small_spec(ArchitectureKind::PEN, 2, 8, 2),
                             testing::small_spec(ArchitectureKind::PEN, 1, 13, 1)}) {
      const auto r = testing::check_gradients(spec, seed);
      checked += r.parameters;
      bad += r.mismatches;
      worst = std::max(worst, r.worst);
    }
  }
  return {bad == 0, "25 seeds x 5 networks (conv same/valid, maxpool, avgpool, sumpool, flatten, input prefix, dense): " +
                        std::to_string(checked) + " gradients, " + std::to_string(bad) +
                        " outside 1e-4, worst accepted relative error " + fmt(worst, 3)};
}

// ---- reference-table exactness -----------------------------------------------

Outcome criterion10(const Context&) {
  RngStream rng(derive_seed(kSeed, 10), 0);
  std::size_t cases = 0, bad = 0;
  std::size_t headline = 0;
  for (std::size_t n : {1ul, 2ul, 7ul, 10ul, 999ul, 12'345ul, 100'000ul, 500'000ul}) {
    UniformBoxPrior prior({0.0}, {1.0});
    LabeledDataset ds(prior, {1, 1, 0.0, 1.0, {"y"}}, 0, "sweep");
    ds.resize(n);
    Eigen::MatrixXd S(1, static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const double v[] = {rng.uniform()};
      ds.set(i, v, {1, 1, 0.0, 1.0, v});
      S(0, static_cast<Eigen::Index>(i)) = std::floor(v[0] * 1000) / 1000;  // ties exercise index order
    }
    const double obs[] = {0.5};
    for (double ratio : {1e-6, 1e-4, 1e-3, 0.01, 0.1, 0.37, 0.5, 1.0}) {
      ++cases;
      const auto expected = static_cast<std::size_t>(std::max<long long>(1, std::llround(ratio * static_cast<double>(n))));
      const auto post = rejection_from_summaries(ds, S, obs, ratio);
      bool ok = post.size() == expected;
      // every rejected entry is at least as far as the furthest accepted one
      if (ok && expected < n) {
        const double cut = post.distances.back();
        std::size_t closer = 0;
        for (std::size_t i = 0; i < n; ++i) closer += std::abs(S(0, static_cast<Eigen::Index>(i)) - 0.5) < cut;
        ok = closer <= expected;
      }
      bad += !ok;
      if (n == 500'000 && ratio == 1e-4) headline = post.size();
    }
  }
  return {bad == 0 && headline == 50,
          std::to_string(cases) + " (N, ratio) cases, " + std::to_string(bad) + " mismatches; N=5e5 at 1e-4 accepted " +
              std::to_string(headline) + " (expected 50)"};
}

// ---- determinism ---------------------------------------------------------------

std::map<std::string, std::string> csv_files(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv")
      out[fs::relative(e.path(), dir).generic_string()] = read_text_file(e.path());
  return out;
}

Outcome criterion11(const Context& ctx) {
  const fs::path first = ctx.work / "c1", second = ctx.work / "c11";
  if (!fs::exists(first / "report.csv")) {
    progress("no criterion 1 output; running it first");
    run_experiment(ma2_table_config(ctx), first, progress);
  }
  fs::remove_all(second);
  run_experiment(ma2_table_config(ctx), second, progress);
  const auto a = csv_files(first), b = csv_files(second);
  std::size_t differing = 0;
  for (const auto& [name, text] : a) {
    const auto it = b.find(name);
    if (it == b.end() || it->second != text) {
      ++differing;
      progress("differs: " + name);
    }
  }
  differing += b.size() > a.size() ? b.size() - a.size() : 0;
  return {differing == 0 && !a.empty(), "rerun of criterion 1 with the same seed: " + std::to_string(a.size()) +
                                            " CSV files compared, " + std::to_string(differing) + " differ"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("Acceptance criteria");
  int criterion = 0;
  Context ctx;
  std::string work = LFI_ACCEPTANCE_WORK, cache;
  app.add_option("--criterion", criterion, "Criterion number (1-11)")->required()->check(CLI::Range(1, 11));
  app.add_option("--work", work, "Working directory for experiment outputs");
  app.add_option("--cache", cache, "Dataset cache (default <work>/cache or $LFI_CACHE_DIR)");
  app.add_option("--jobs", ctx.jobs, "Worker threads (0: all logical cores)");
  CLI11_PARSE(app, argc, argv);

  ctx.work = work;
  if (!cache.empty()) ctx.cache = cache;
  else if (const char* env = std::getenv("LFI_CACHE_DIR")) ctx.cache = env;
  else ctx.cache = ctx.work / "cache";
  ctx.cores = std::max(1u, std::thread::hardware_concurrency());
  fs::create_directories(ctx.work);

  using Fn = Outcome (*)(const Context&);
  const Fn criteria[] = {criterion1, criterion2, criterion3, criterion4,  criterion5, criterion6,
                         criterion7, criterion8, criterion9, criterion10, criterion11};
  std::cerr << "criterion " << criterion << " on " << ctx.cores << " core(s); budgets scaled by "
            << fmt(4.0 / ctx.cores, 3) << std::endl;
  Outcome r;
  try {
    r = criteria[criterion - 1](ctx);
  } catch (const std::exception& e) {
    r = {false, std::string("error: ") + e.what()};
  }
  const std::string line =
      "criterion " + std::to_string(criterion) + ": " + (r.pass ? "PASS" : "FAIL") + " " + r.detail;
  std::cout << line << std::endl;
  std::ofstream(ctx.work / "results.txt", std::ios::app) << line << '\n';
  return r.pass ? 0 : 1;
}
