#include "lfi/eval.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <map>
#include <numeric>
#include <sstream>
#include <unistd.h>

#include "lfi/error.hpp"
#include "lfi/io.hpp"
#include "lfi/json_util.hpp"
#include "lfi/parallel.hpp"

namespace lfi {

// ---- E% -------------------------------------------------------------------

std::vector<double> e_percent(const std::vector<ParameterVector>& predictions,
                              const std::vector<ParameterVector>& truths,
                              const UniformBoxPrior& prior) {
  if (predictions.size() != truths.size())
    throw DimensionMismatch("predictions and truths differ in count");
  if (predictions.empty()) throw EmptyDataset("E% needs at least one prediction");
  const std::size_t L = prior.dim();
  std::vector<double> e(L, 0.0);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].size() != L || truths[i].size() != L)
      throw DimensionMismatch("parameter vector length differs from the prior");
    for (std::size_t k = 0; k < L; ++k) e[k] += std::abs(truths[i][k] - predictions[i][k]);
  }
  const double n = static_cast<double>(predictions.size());
  for (std::size_t k = 0; k < L; ++k) e[k] = 4.0 * (e[k] / n) / prior.width(k);
  return e;
}

std::vector<double> e_percent(const Eigen::MatrixXd& predictions, const LabeledDataset& test) {
  const std::size_t L = test.param_dim(), N = test.size();
  if (N == 0) throw EmptyDataset("E% needs at least one prediction");
  if (static_cast<std::size_t>(predictions.rows()) != L ||
      static_cast<std::size_t>(predictions.cols()) != N)
    throw DimensionMismatch("prediction matrix must be L x N");
  std::vector<double> e(L, 0.0);
  for (std::size_t i = 0; i < N; ++i) {
    const auto t = test.theta(i);
    for (std::size_t k = 0; k < L; ++k)
      e[k] += std::abs(t[k] - predictions(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)));
  }
  for (std::size_t k = 0; k < L; ++k)
    e[k] = 4.0 * (e[k] / static_cast<double>(N)) / test.prior().width(k);
  return e;
}

std::vector<double> e_percent_true(const std::vector<ParameterVector>& predictions,
                                   std::span<const double> theta_true, const UniformBoxPrior& prior) {
  std::vector<ParameterVector> truths(predictions.size(),
                                      ParameterVector(theta_true.begin(), theta_true.end()));
  return e_percent(predictions, truths, prior);
}

namespace {

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

EvalReport EvalReport::from_repetitions(std::vector<std::string> names,
                                        std::vector<std::vector<double>> per_repetition,
                                        nlohmann::json fingerprint) {
  if (per_repetition.empty()) throw EmptyDataset("report needs at least one repetition");
  const std::size_t L = per_repetition[0].size();
  if (names.size() != L) throw DimensionMismatch("one name per parameter is required");
  EvalReport r;
  r.param_names = std::move(names);
  r.repetitions = per_repetition.size();
  r.fingerprint = std::move(fingerprint);
  std::vector<double> rep_means;
  for (const auto& rep : per_repetition) {
    if (rep.size() != L) throw DimensionMismatch("repetitions differ in parameter count");
    rep_means.push_back(mean_of(rep));
  }
  for (std::size_t k = 0; k < L; ++k) {
    std::vector<double> col;
    for (const auto& rep : per_repetition) col.push_back(rep[k]);
    r.e_percent.push_back(mean_of(col));
    r.e_percent_std.push_back(sample_std(col));
  }
  r.mean = mean_of(rep_means);
  r.mean_std = sample_std(rep_means);
  r.per_repetition = std::move(per_repetition);
  return r;
}

double percent_change(const EvalReport& a, const EvalReport& b) {
  if (a.param_names != b.param_names) throw DimensionMismatch("reports cover different parameters");
  if (a.mean == 0.0) throw DivisionByZero("percent change relative to a zero mean E%");
  return 100.0 * (b.mean - a.mean) / a.mean;
}

// ---- dataset generation and cache -------------------------------------------

namespace {

constexpr std::size_t kTimeoutResampleBudget = 10'000;

}  // namespace

LabeledDataset generate_dataset(const ModelDefinition& model, std::size_t n, std::uint64_t seed,
                                std::size_t jobs) {
  if (n == 0) throw InvalidArgument("dataset size must be at least 1");
  LabeledDataset ds(model.prior, model.shape, seed, model.name,
                    {{"generator", model.description}});
  ds.resize(n);
  std::vector<std::size_t> resamples(n, 0);
  parallel_for(n, jobs, [&](std::size_t i) {
    RngStream rng(seed, i);
    for (;;) {
      const ParameterVector theta = prior_sample_one(model.prior, rng);
      try {
        const TimeSeries y = model.simulate(theta, rng);
        ds.set(i, theta, y);
        return;
      } catch (const Timeout&) {
        if (++resamples[i] >= kTimeoutResampleBudget)
          throw RetryBudgetExceeded("entry " + std::to_string(i) + " timed out " +
                                    std::to_string(kTimeoutResampleBudget) + " times");
      }
    }
  });
  ds.extra()["timeout_resamples"] = std::accumulate(resamples.begin(), resamples.end(), std::size_t{0});
  return ds;
}

std::string dataset_cache_key(const ModelDefinition& model, std::size_t n, std::uint64_t seed) {
  const std::string text = model.description.dump() + "|n=" + std::to_string(n) +
                           "|seed=" + std::to_string(seed) + "|format=1";
  return model.name + "-" + hex64(fnv1a(text));
}

std::filesystem::path default_cache_dir() {
  const char* env = std::getenv("LFI_CACHE_DIR");
  return env && *env ? std::filesystem::path(env) : std::filesystem::path();
}

LabeledDataset cached_dataset(const ModelDefinition& model, std::size_t n, std::uint64_t seed,
                              std::size_t jobs, const std::filesystem::path& cache_dir) {
  const auto dir = cache_dir.empty() ? default_cache_dir() : cache_dir;
  if (dir.empty()) return generate_dataset(model, n, seed, jobs);
  const auto path = dir / dataset_cache_key(model, n, seed);
  if (std::filesystem::exists(path / "manifest.json")) {
    LabeledDataset ds = read_dataset(path);
    if (ds.size() == n && ds.seed() == seed) return ds;
  }
  LabeledDataset ds = generate_dataset(model, n, seed, jobs);
  const auto tmp = path.string() + ".tmp" + std::to_string(::getpid());
  std::filesystem::remove_all(tmp);
  write_dataset(ds, tmp);
  std::filesystem::remove_all(path);
  std::filesystem::rename(tmp, path);
  return ds;
}

// ---- experiment config ------------------------------------------------------

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j = {{"model", model.to_json()},
                      {"architectures", architectures},
                      {"preset", preset},
                      {"pen_order", pen_order},
                      {"train_sizes", train_sizes},
                      {"val_size", val_size},
                      {"test_size", test_size},
                      {"training", training.to_json()},
                      {"repetitions", repetitions},
                      {"seed", seed},
                      {"jobs", jobs},
                      {"steps", steps},
                      {"t_ends", t_ends},
                      {"true_test_size", true_test_size},
                      {"cache_dir", cache_dir},
                      {"save_models", save_models},
                      {"verbose", verbose}};
  if (theta_true) j["theta_true"] = *theta_true;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  const std::string ctx = "experiment";
  require_known_keys(j, {"model", "architectures", "preset", "pen_order", "train_sizes", "val_size",
                         "test_size", "training", "repetitions", "seed", "jobs", "steps", "t_ends",
                         "theta_true", "true_test_size", "cache_dir", "save_models", "verbose"},
                     ctx);
  ExperimentConfig c;
  if (j.contains("model")) c.model = ModelOptions::from_json(j.at("model"));
  json_read(j, "architectures", c.architectures, ctx);
  json_read(j, "preset", c.preset, ctx);
  json_read(j, "pen_order", c.pen_order, ctx);
  json_read(j, "train_sizes", c.train_sizes, ctx);
  json_read(j, "val_size", c.val_size, ctx);
  json_read(j, "test_size", c.test_size, ctx);
  if (j.contains("training")) c.training = nn::TrainConfig::from_json(j.at("training"));
  json_read(j, "repetitions", c.repetitions, ctx);
  json_read(j, "seed", c.seed, ctx);
  json_read(j, "jobs", c.jobs, ctx);
  json_read(j, "steps", c.steps, ctx);
  json_read(j, "t_ends", c.t_ends, ctx);
  if (j.contains("theta_true")) c.theta_true = json_get<std::vector<double>>(j, "theta_true", ctx);
  json_read(j, "true_test_size", c.true_test_size, ctx);
  json_read(j, "cache_dir", c.cache_dir, ctx);
  json_read(j, "save_models", c.save_models, ctx);
  json_read(j, "verbose", c.verbose, ctx);
  return c;
}

// ---- experiment -----------------------------------------------------------

namespace {

struct Design {
  double step;
  double t_end;
  std::size_t stride;
  std::size_t count;
  bool identity;
};

std::vector<Design> designs_for(const ExperimentConfig& config, const SeriesShape& shape) {
  const double base_end = shape.t0 + static_cast<double>(shape.timepoints - 1) * shape.dt;
  if (config.steps.empty() != config.t_ends.empty())
    throw ConfigError("steps and t_ends must be given together");
  if (config.steps.empty()) return {{shape.dt, base_end, 1, shape.timepoints, true}};
  std::vector<Design> out;
  for (double step : config.steps) {
    const double ratio = step / shape.dt;
    const auto stride = static_cast<std::size_t>(std::llround(ratio));
    if (stride == 0 || std::abs(ratio - static_cast<double>(stride)) > 1e-9)
      throw ConfigError("step " + format_double(step) + " is not a multiple of the model dt " +
                        format_double(shape.dt));
    for (double t_end : config.t_ends) {
      // Grid times t0, t0 + step, ... up to and including t_end when it lies on the grid.
      const auto n = static_cast<std::size_t>(std::floor((t_end - shape.t0) / step + 1e-9));
      if (n == 0 || t_end > base_end + 1e-9)
        throw ConfigError("t_end " + format_double(t_end) + " does not fit the model grid");
      out.push_back({step, t_end, stride, n + 1, stride == 1 && n + 1 == shape.timepoints});
    }
  }
  return out;
}

std::string join(const std::vector<std::string>& v, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
  return out;
}

LabeledDataset fixed_theta_dataset(const ModelDefinition& model, std::span<const double> theta,
                                   std::size_t n, std::uint64_t seed, std::size_t jobs) {
  LabeledDataset ds(model.prior, model.shape, seed, model.name, {{"theta_true", theta}});
  ds.resize(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    RngStream rng(seed, i);
    for (std::size_t attempt = 0;; ++attempt) {
      try {
        ds.set(i, theta, model.simulate(theta, rng));
        return;
      } catch (const Timeout&) {
        if (attempt + 1 >= kTimeoutResampleBudget)
          throw RetryBudgetExceeded("θ_true simulations keep timing out");
      }
    }
  });
  return ds;
}

struct CellKey {
  std::size_t design, size, arch;
  auto operator<=>(const CellKey&) const = default;
};

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                                const std::function<void(const std::string&)>& log) {
  auto say = [&](const std::string& s) {
    if (log) log(s);
  };
  if (config.repetitions == 0) throw ConfigError("repetitions must be at least 1");
  if (config.train_sizes.empty()) throw ConfigError("train_sizes must not be empty");
  if (config.architectures.empty()) throw ConfigError("architectures must not be empty");
  if (config.val_size == 0 || config.test_size == 0) throw ConfigError("val/test sizes must be positive");
  if (config.theta_true && config.true_test_size == 0)
    throw ConfigError("theta_true needs a positive true_test_size");
  std::vector<nn::ArchitectureKind> kinds;
  for (const auto& a : config.architectures) kinds.push_back(nn::architecture_from_name(a));

  const ModelDefinition base = make_model(config.model);
  const auto designs = designs_for(config, base.shape);
  const std::size_t max_train = *std::max_element(config.train_sizes.begin(), config.train_sizes.end());
  const std::string species = join(base.shape.names, "+");
  const std::filesystem::path cache = config.cache_dir;
  std::filesystem::create_directories(out_dir);

  std::map<CellKey, std::vector<std::vector<double>>> cells, true_cells;
  nlohmann::json runs = nlohmann::json::array();
  nlohmann::json datasets = nlohmann::json::array();

  for (std::size_t rep = 0; rep < config.repetitions; ++rep) {
    const std::uint64_t rep_seed = derive_seed(config.seed, rep);
    const std::uint64_t seeds[3] = {derive_seed(rep_seed, 1), derive_seed(rep_seed, 2),
                                    derive_seed(rep_seed, 3)};
    say("repetition " + std::to_string(rep + 1) + "/" + std::to_string(config.repetitions) +
        ": simulating datasets");
    const LabeledDataset train_full = cached_dataset(base, max_train, seeds[0], config.jobs, cache);
    const LabeledDataset val_full = cached_dataset(base, config.val_size, seeds[1], config.jobs, cache);
    const LabeledDataset test_full = cached_dataset(base, config.test_size, seeds[2], config.jobs, cache);
    std::optional<LabeledDataset> true_full;
    if (config.theta_true)
      true_full = fixed_theta_dataset(base, *config.theta_true, config.true_test_size,
                                      derive_seed(rep_seed, 4), config.jobs);
    datasets.push_back({{"repetition", rep},
                        {"train", {{"seed", seeds[0]}, {"n", max_train},
                                   {"cache_key", dataset_cache_key(base, max_train, seeds[0])},
                                   {"hash", hex64(train_full.content_hash())},
                                   {"timeout_resamples", train_full.extra().value("timeout_resamples", 0)}}},
                        {"val", {{"seed", seeds[1]}, {"n", config.val_size},
                                 {"cache_key", dataset_cache_key(base, config.val_size, seeds[1])},
                                 {"hash", hex64(val_full.content_hash())},
                                 {"timeout_resamples", val_full.extra().value("timeout_resamples", 0)}}},
                        {"test", {{"seed", seeds[2]}, {"n", config.test_size},
                                  {"cache_key", dataset_cache_key(base, config.test_size, seeds[2])},
                                  {"hash", hex64(test_full.content_hash())},
                                  {"timeout_resamples", test_full.extra().value("timeout_resamples", 0)}}}});

    std::vector<std::size_t> all_channels(base.shape.channels);
    std::iota(all_channels.begin(), all_channels.end(), 0);
    for (std::size_t d = 0; d < designs.size(); ++d) {
      const Design& g = designs[d];
      auto view = [&](const LabeledDataset& ds) {
        return g.identity ? ds : ds.regrid(g.stride, g.count, all_channels);
      };
      const LabeledDataset train_d = view(train_full), val = view(val_full), test = view(test_full);
      std::optional<LabeledDataset> true_test;
      if (true_full) true_test = view(*true_full);

      for (std::size_t s = 0; s < config.train_sizes.size(); ++s) {
        const std::size_t n = config.train_sizes[s];
        const LabeledDataset train_set = n == max_train ? train_d : train_d.slice(0, n);
        for (std::size_t a = 0; a < kinds.size(); ++a) {
          const std::string arch = nn::architecture_name(kinds[a]);
          nn::ArchitectureSpec spec = nn::preset_architecture(
              kinds[a], config.preset, train_set.shape().channels, train_set.shape().timepoints,
              train_set.param_dim());
          spec.pen_order = config.pen_order;
          spec.validate();
          const std::uint64_t arch_seed = derive_seed(rep_seed, fnv1a(arch));
          RngStream init(arch_seed, 0);
          nn::TrainedSummaryModel model = nn::build_architecture(spec, base.prior, init, &train_set);
          nn::TrainConfig tc = config.training;
          tc.seed = derive_seed(arch_seed, 1);
          const std::string tag = arch + " rep " + std::to_string(rep + 1) + " n=" +
                                  std::to_string(n) + " step=" + format_double(g.step) +
                                  " t_end=" + format_double(g.t_end);
          if (config.verbose)
            tc.on_epoch = [&](const nn::EpochRecord& r) {
              say("  " + tag + " stage " + std::to_string(r.stage) + " epoch " +
                  std::to_string(r.epoch) + ": train_mse " + format_double(r.train_mse) +
                  " val_mae " + format_double(r.val_mae));
            };
          const auto t0 = std::chrono::steady_clock::now();
          const nn::TrainedSummaryModel trained = nn::train(std::move(model), train_set, val, tc);
          const double seconds =
              std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
          const auto e = e_percent(trained.predict_all(test, false, config.jobs), test);
          cells[{d, s, a}].push_back(e);
          say(tag + ": mean E% " + format_double(mean_of(e)) + " (" +
              std::to_string(trained.history().size() - 1) + " epochs, " + format_double(std::round(seconds * 10) / 10) + " s)");

          const std::string stem = arch + "_rep" + std::to_string(rep) + "_n" + std::to_string(n) +
                                   "_step" + format_double(g.step) + "_tend" + format_double(g.t_end);
          write_text_file(out_dir / "history" / (stem + ".csv"), history_csv(trained.history()));
          if (config.save_models) {
            std::filesystem::create_directories(out_dir / "models");
            nn::save_model(trained, out_dir / "models" / (stem + ".lfim"));
          }
          nlohmann::json run = {{"repetition", rep},      {"architecture", arch},
                                {"train_size", n},        {"step", g.step},
                                {"t_end", g.t_end},       {"epochs", trained.history().size() - 1},
                                {"seconds", seconds},     {"parameters", trained.network().param_count()},
                                {"init_seed", arch_seed}, {"train_seed", tc.seed},
                                {"train_hash", hex64(train_set.content_hash())},
                                {"e_percent", e}};
          if (true_test) {
            const Eigen::MatrixXd p = trained.predict_all(*true_test, false, config.jobs);
            std::vector<ParameterVector> preds(static_cast<std::size_t>(p.cols()));
            for (Eigen::Index i = 0; i < p.cols(); ++i)
              preds[static_cast<std::size_t>(i)].assign(p.col(i).data(), p.col(i).data() + p.rows());
            const auto et = e_percent_true(preds, *config.theta_true, base.prior);
            true_cells[{d, s, a}].push_back(et);
            run["e_percent_true"] = et;
          }
          runs.push_back(std::move(run));
        }
      }
    }
  }

  ExperimentResult result;
  auto make_rows = [&](const std::map<CellKey, std::vector<std::vector<double>>>& src,
                       std::vector<ReportRow>& rows) {
    for (const auto& [key, reps] : src) {
      const Design& g = designs[key.design];
      ReportRow row;
      row.architecture = nn::architecture_name(kinds[key.arch]);
      row.model = base.name;
      row.train_size = config.train_sizes[key.size];
      row.step = g.step;
      row.t_end = g.t_end;
      row.species = species;
      row.report = EvalReport::from_repetitions(
          base.prior.names(), reps,
          {{"seed", config.seed}, {"train_size", row.train_size}, {"step", g.step},
           {"t_end", g.t_end}, {"species", species}});
      rows.push_back(std::move(row));
    }
  };
  make_rows(cells, result.rows);
  make_rows(true_cells, result.true_rows);

  write_text_file(out_dir / "report.csv", report_csv(result.rows));
  if (!result.true_rows.empty()) write_text_file(out_dir / "report_true.csv", report_csv(result.true_rows));
  result.manifest = {{"config", config.to_json()},
                     {"model", base.description},
                     {"datasets", datasets},
                     {"runs", runs}};
  write_text_file(out_dir / "manifest.json", result.manifest.dump(2) + "\n");
  return result;
}

std::string report_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream os;
  CsvWriter csv(os);
  csv.row({"architecture", "model", "train_size", "step", "t_end", "species", "param_name",
           "e_percent_mean", "e_percent_std", "repetitions"});
  for (const auto& r : rows) {
    auto emit = [&](const std::string& name, double mean, double sd) {
      csv.row({r.architecture, r.model, std::to_string(r.train_size), format_double(r.step),
               format_double(r.t_end), r.species, name, format_double(mean), format_double(sd),
               std::to_string(r.report.repetitions)});
    };
    for (std::size_t k = 0; k < r.report.param_names.size(); ++k)
      emit(r.report.param_names[k], r.report.e_percent[k], r.report.e_percent_std[k]);
    emit("mean", r.report.mean, r.report.mean_std);
  }
  return os.str();
}

std::string history_csv(const std::vector<nn::EpochRecord>& history) {
  std::ostringstream os;
  CsvWriter csv(os);
  csv.row({"epoch", "train_mse", "val_mae", "stage"});
  for (const auto& r : history)
    csv.row({std::to_string(r.epoch), format_double(r.train_mse), format_double(r.val_mae),
             std::to_string(r.stage)});
  return os.str();
}

}  // namespace lfi
