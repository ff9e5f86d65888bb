#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "lfi/abc.hpp"
#include "lfi/error.hpp"
#include "lfi/eval.hpp"
#include "lfi/io.hpp"
#include "lfi/json_util.hpp"
#include "lfi/mcmc.hpp"
#include "lfi/models.hpp"
#include "lfi/neural/model.hpp"
#include "lfi/parallel.hpp"
#include "lfi/rng.hpp"
#include "lfi/sumstats.hpp"

namespace lfi::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void log(const std::string& msg) { std::cerr << msg << '\n'; }

void write_resolved(const fs::path& out, const json& resolved) {
  write_text_file(out / "config.resolved.json", resolved.dump(2) + "\n");
}

std::size_t jobs_of(std::size_t jobs) { return jobs == 0 ? default_jobs() : jobs; }

// ---- shared config pieces -------------------------------------------------

/// Where the observed series comes from: an entry of a stored dataset, or a
/// fresh simulation at θ (the model's reference θ when none is given).
struct ObservedSpec {
  std::string dataset;
  std::size_t index = 0;
  std::vector<double> theta;
  std::uint64_t seed = 0;

  json to_json() const {
    if (!dataset.empty()) return {{"dataset", dataset}, {"index", index}};
    return {{"theta", theta}, {"seed", seed}};
  }
  static ObservedSpec from_json(const json& j) {
    const std::string ctx = "observed";
    require_known_keys(j, {"dataset", "index", "theta", "seed"}, ctx);
    ObservedSpec o;
    json_read(j, "dataset", o.dataset, ctx);
    json_read(j, "index", o.index, ctx);
    json_read(j, "theta", o.theta, ctx);
    json_read(j, "seed", o.seed, ctx);
    if (!o.dataset.empty() && !o.theta.empty())
      throw ConfigError("observed: give either a dataset entry or a theta, not both");
    return o;
  }
};

struct Observation {
  TimeSeries series;
  ParameterVector theta;
};

Observation resolve_observed(ObservedSpec& spec, const ModelOptions& model_options) {
  if (!spec.dataset.empty()) {
    const LabeledDataset ds = read_dataset(spec.dataset);
    if (spec.index >= ds.size())
      throw ConfigError("observed.index " + std::to_string(spec.index) + " outside a dataset of " +
                        std::to_string(ds.size()));
    const auto t = ds.theta(spec.index);
    return {ds.time_series(spec.index), ParameterVector(t.begin(), t.end())};
  }
  const ModelDefinition model = make_model(model_options);
  if (spec.theta.empty()) spec.theta = model.reference_theta;
  if (spec.theta.size() != model.prior.dim())
    throw ConfigError("observed.theta has " + std::to_string(spec.theta.size()) +
                      " entries, the model has " + std::to_string(model.prior.dim()) +
                      " parameters");
  RngStream rng(spec.seed, 0);
  return {model.simulate(spec.theta, rng), spec.theta};
}

/// Summary used inside ABC.
struct SummarySpec {
  std::string kind = "learned";  // learned | statistics | linear | raw
  std::string checkpoint;
  std::vector<std::string> statistics;  // empty: the full pool
  std::string reference;                // scale / fit dataset; empty: a pilot simulation
  std::size_t pilot_size = 1000;

  json to_json() const {
    return {{"kind", kind},           {"checkpoint", checkpoint}, {"statistics", statistics},
            {"reference", reference}, {"pilot_size", pilot_size}};
  }
  static SummarySpec from_json(const json& j) {
    const std::string ctx = "summary";
    require_known_keys(j, {"kind", "checkpoint", "statistics", "reference", "pilot_size"}, ctx);
    SummarySpec s;
    json_read(j, "kind", s.kind, ctx);
    json_read(j, "checkpoint", s.checkpoint, ctx);
    json_read(j, "statistics", s.statistics, ctx);
    json_read(j, "reference", s.reference, ctx);
    json_read(j, "pilot_size", s.pilot_size, ctx);
    if (s.kind != "learned" && s.kind != "statistics" && s.kind != "linear" && s.kind != "raw")
      throw ConfigError("summary.kind must be learned, statistics, linear or raw");
    if (s.kind == "learned" && s.checkpoint.empty())
      throw ConfigError("summary.checkpoint is required for a learned summary");
    return s;
  }
};

FeatureMap feature_map_for(const std::vector<std::string>& names, std::size_t channels) {
  if (names.empty()) return FeatureMap::pool(channels);
  std::vector<Feature> features;
  for (std::size_t c = 0; c < channels; ++c) {
    for (const auto& n : names) {
      try {
        features.push_back({c, statistic_from_name(n)});
      } catch (const Error&) {
        throw ConfigError("unknown statistic '" + n + "'");
      }
    }
  }
  return FeatureMap(std::move(features));
}

/// `reference` is used for statistic scales and linear fits when the spec names
/// no dataset of its own; `model` draws a pilot set when neither is available.
SummaryFunction build_summary(const SummarySpec& spec, const LabeledDataset* reference,
                              const ModelDefinition* model, std::uint64_t seed, std::size_t jobs) {
  if (spec.kind == "raw") return SummaryFunction::raw();
  if (spec.kind == "learned")
    return SummaryFunction::learned(
        std::make_shared<const nn::TrainedSummaryModel>(nn::load_model(spec.checkpoint)));
  LabeledDataset local;
  if (!spec.reference.empty()) {
    local = read_dataset(spec.reference);
    reference = &local;
  } else if (!reference) {
    if (!model) throw ConfigError("summary.reference is required here");
    local = generate_dataset(*model, spec.pilot_size, derive_seed(seed, 0x9e1f), jobs);
    reference = &local;
  }
  const FeatureMap fm = feature_map_for(spec.statistics, reference->shape().channels);
  if (spec.kind == "statistics") return SummaryFunction::statistics(fm, *reference);
  return SummaryFunction::linear(
      std::make_shared<const LinearSummaryModel>(fit_linear_summary(*reference, fm)),
      reference->prior());
}

// ---- output helpers -------------------------------------------------------

void write_posterior_csv(const fs::path& path, const std::vector<const Posterior*>& rounds,
                         const std::vector<std::string>& names, std::size_t first_round) {
  std::ostringstream os;
  CsvWriter csv(os);
  std::vector<std::string> header = {"round", "particle", "weight"};
  header.insert(header.end(), names.begin(), names.end());
  csv.row(header);
  for (std::size_t r = 0; r < rounds.size(); ++r) {
    const Posterior& p = *rounds[r];
    for (std::size_t i = 0; i < p.size(); ++i) {
      std::vector<std::string> row = {std::to_string(first_round + r), std::to_string(i),
                                      format_double(p.weights[i])};
      for (double v : p.samples[i]) row.push_back(format_double(v));
      csv.row(row);
    }
  }
  write_text_file(path, os.str());
}

void write_posterior_svg(const fs::path& path, const std::vector<const Posterior*>& rounds,
                         const std::vector<std::string>& round_names,
                         const std::vector<std::string>& names, const ParameterVector* truth,
                         const std::string& title) {
  const std::size_t a = 0, b = names.size() > 1 ? 1 : 0;
  std::vector<SvgSeries> series;
  for (std::size_t r = 0; r < rounds.size(); ++r) {
    SvgSeries s{round_names[r], {}, {}};
    for (const auto& t : rounds[r]->samples) {
      s.x.push_back(t[a]);
      s.y.push_back(t[b]);
    }
    series.push_back(std::move(s));
  }
  if (truth) series.push_back({"true", {(*truth)[a]}, {(*truth)[b]}});
  write_scatter_svg(path, series, title, names[a], names[b]);
}

json posterior_summary(const Posterior& p, const std::vector<std::string>& names) {
  json mean = json::object(), sd = json::object();
  const auto m = p.mean(), s = p.stddev();
  for (std::size_t k = 0; k < names.size(); ++k) {
    mean[names[k]] = m[k];
    sd[names[k]] = s[k];
  }
  return {{"size", p.size()},
          {"trials", p.trial_count},
          {"epsilon", p.epsilon_schedule.empty() ? 0.0 : p.epsilon_schedule.back()},
          {"mean", mean},
          {"stddev", sd}};
}

void write_json(const fs::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

std::uint64_t arch_seed(std::uint64_t seed, const std::string& arch) {
  return derive_seed(seed, fnv1a(arch));
}

}  // namespace

json load_config(const fs::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

// ---- generate -------------------------------------------------------------

void cmd_generate(const json& config, const fs::path& out) {
  const std::string ctx = "generate";
  require_known_keys(config, {"model", "n", "seed", "jobs"}, ctx);
  ModelOptions mo;
  if (config.contains("model")) mo = ModelOptions::from_json(config.at("model"));
  std::size_t n = 1000, jobs = 0;
  std::uint64_t seed = 0;
  json_read(config, "n", n, ctx);
  json_read(config, "seed", seed, ctx);
  json_read(config, "jobs", jobs, ctx);
  if (n == 0) throw ConfigError("generate.n must be positive");

  const ModelDefinition model = make_model(mo);
  const LabeledDataset ds = generate_dataset(model, n, seed, jobs);
  write_dataset(ds, out);
  write_resolved(out, {{"model", mo.to_json()}, {"n", n}, {"seed", seed}, {"jobs", jobs}});

  std::vector<SvgSeries> lines;
  const auto& shape = ds.shape();
  for (std::size_t i = 0; i < std::min<std::size_t>(ds.size(), 4); ++i) {
    const auto view = ds.series(i);
    SvgSeries s{"entry " + std::to_string(i) + " " + shape.names.front(), {}, {}};
    for (std::size_t t = 0; t < shape.timepoints; ++t) {
      s.x.push_back(shape.t0 + static_cast<double>(t) * shape.dt);
      s.y.push_back(view(0, t));
    }
    lines.push_back(std::move(s));
  }
  write_lines_svg(out / "series.svg", lines, model.name + " trajectories", "time", shape.names.front());
  log("generated " + std::to_string(n) + " entries of " + model.name + " (" +
      std::to_string(shape.channels) + "x" + std::to_string(shape.timepoints) +
      "), timeout resamples: " + ds.extra().value("timeout_resamples", json(0)).dump());
}

// ---- train ----------------------------------------------------------------

void cmd_train(const json& config, const fs::path& out) {
  const std::string ctx = "train";
  require_known_keys(config, {"train", "val", "architecture", "preset", "pen_order", "training",
                              "seed", "jobs"},
                     ctx);
  const auto train_path = json_get<std::string>(config, "train", ctx);
  const auto val_path = json_get<std::string>(config, "val", ctx);
  std::string arch = "CNN", preset = "setup1";
  std::size_t pen_order = 10, jobs = 0;
  std::uint64_t seed = 0;
  json_read(config, "architecture", arch, ctx);
  json_read(config, "preset", preset, ctx);
  json_read(config, "pen_order", pen_order, ctx);
  json_read(config, "seed", seed, ctx);
  json_read(config, "jobs", jobs, ctx);
  const json tj = config.value("training", json::object());
  nn::TrainConfig tc = nn::TrainConfig::from_json(tj);

  const LabeledDataset train = read_dataset(train_path), val = read_dataset(val_path);
  const auto kind = nn::architecture_from_name(arch);
  auto spec = nn::preset_architecture(kind, preset, train.shape().channels, train.shape().timepoints,
                                      train.param_dim());
  spec.pen_order = pen_order;
  spec.validate();

  const std::uint64_t as = arch_seed(seed, arch);
  if (!tj.contains("seed")) tc.seed = derive_seed(as, 1);
  RngStream init(as, 0);
  write_resolved(out, {{"train", train_path},
                       {"val", val_path},
                       {"architecture", arch},
                       {"preset", preset},
                       {"pen_order", pen_order},
                       {"training", tc.to_json()},
                       {"seed", seed},
                       {"jobs", jobs}});

  tc.on_epoch = [](const nn::EpochRecord& r) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "stage %zu epoch %zu train_mse %.6g val_mae %.6g", r.stage,
                  r.epoch, r.train_mse, r.val_mae);
    log(buf);
  };
  nn::TrainedSummaryModel model = nn::build_architecture(spec, train.prior(), init, &train);
  try {
    model = nn::train(std::move(model), train, val, tc);
  } catch (const nn::NonFiniteLoss& e) {
    if (e.checkpoint()) nn::save_model(*e.checkpoint(), out / "model.partial.lfim");
    throw;
  }
  nn::save_model(model, out / "model.lfim");
  write_text_file(out / "history.csv", history_csv(model.history()));

  SvgSeries tr{"train_mse", {}, {}}, va{"val_mae", {}, {}};
  for (std::size_t i = 0; i < model.history().size(); ++i) {
    tr.x.push_back(static_cast<double>(i + 1));
    tr.y.push_back(model.history()[i].train_mse);
    va.x.push_back(static_cast<double>(i + 1));
    va.y.push_back(model.history()[i].val_mae);
  }
  write_lines_svg(out / "history.svg", {tr, va}, arch + " training", "epoch", "loss");
  log("trained " + arch + " for " + std::to_string(model.history().size() - 1) + " epochs, best val_mae " +
      format_double(nn::validation_mae(model, val)));
}

// ---- eval -----------------------------------------------------------------

void cmd_eval(const json& config, const fs::path& out) {
  const std::string ctx = "eval";
  require_known_keys(config, {"checkpoint", "test", "jobs", "seed"}, ctx);
  const auto ckpt = json_get<std::string>(config, "checkpoint", ctx);
  const auto test_path = json_get<std::string>(config, "test", ctx);
  std::size_t jobs = 0;
  std::uint64_t seed = 0;
  json_read(config, "jobs", jobs, ctx);
  json_read(config, "seed", seed, ctx);
  write_resolved(out, {{"checkpoint", ckpt}, {"test", test_path}, {"jobs", jobs}, {"seed", seed}});

  const nn::TrainedSummaryModel model = nn::load_model(ckpt);
  const LabeledDataset test = read_dataset(test_path);
  if (!(test.prior() == model.prior())) throw DimensionMismatch("test set prior differs from the model's");
  const Eigen::MatrixXd pred = model.predict_all(test, false, jobs);
  const auto e = e_percent(pred, test);
  const auto& names = test.prior().names();

  std::ostringstream os;
  CsvWriter csv(os);
  csv.row({"param_name", "e_percent"});
  double mean = 0.0;
  for (std::size_t k = 0; k < e.size(); ++k) {
    csv.row({names[k], format_double(e[k])});
    mean += e[k];
  }
  mean /= static_cast<double>(e.size());
  csv.row({"mean", format_double(mean)});
  write_text_file(out / "eval.csv", os.str());

  std::ostringstream ps;
  CsvWriter pc(ps);
  std::vector<std::string> header = {"index"};
  for (const auto& n : names) header.push_back(n);
  for (const auto& n : names) header.push_back(n + "_hat");
  pc.row(header);
  for (std::size_t i = 0; i < test.size(); ++i) {
    std::vector<std::string> row = {std::to_string(i)};
    for (double v : test.theta(i)) row.push_back(format_double(v));
    for (Eigen::Index k = 0; k < pred.rows(); ++k) row.push_back(format_double(pred(k, static_cast<Eigen::Index>(i))));
    pc.row(row);
  }
  write_text_file(out / "predictions.csv", ps.str());

  std::vector<SvgSeries> pts;
  for (std::size_t k = 0; k < names.size(); ++k) {
    SvgSeries s{names[k], {}, {}};
    for (std::size_t i = 0; i < std::min<std::size_t>(test.size(), 2000); ++i) {
      s.x.push_back(test.prior().to_unit(test.theta(i))[k]);
      ParameterVector p(names.size());
      for (std::size_t q = 0; q < names.size(); ++q) p[q] = pred(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(i));
      s.y.push_back(test.prior().to_unit(p)[k]);
    }
    pts.push_back(std::move(s));
  }
  write_scatter_svg(out / "predictions.svg", pts, "predicted vs true (prior-scaled)", "true", "predicted");
  log("mean E% " + format_double(mean));
}

// ---- select ---------------------------------------------------------------

void cmd_select(const json& config, const fs::path& out) {
  const std::string ctx = "select";
  require_known_keys(config, {"dataset", "observed", "model", "statistics", "invocations",
                              "epsilon_quantile", "threshold", "bins", "seed", "jobs"},
                     ctx);
  const auto ds_path = json_get<std::string>(config, "dataset", ctx);
  ModelOptions mo;
  if (config.contains("model")) mo = ModelOptions::from_json(config.at("model"));
  ObservedSpec obs;
  if (config.contains("observed")) obs = ObservedSpec::from_json(config.at("observed"));
  std::vector<std::string> stats;
  std::size_t invocations = 50, jobs = 0;
  std::uint64_t seed = 0;
  AsSelectOptions opt;
  json_read(config, "statistics", stats, ctx);
  json_read(config, "invocations", invocations, ctx);
  json_read(config, "epsilon_quantile", opt.epsilon_quantile, ctx);
  json_read(config, "threshold", opt.threshold, ctx);
  json_read(config, "bins", opt.bins, ctx);
  json_read(config, "seed", seed, ctx);
  json_read(config, "jobs", jobs, ctx);
  if (invocations == 0) throw ConfigError("select.invocations must be positive");
  if (obs.dataset.empty() && obs.theta.empty()) obs.dataset = ds_path;

  const LabeledDataset ds = read_dataset(ds_path);
  const Observation observed = resolve_observed(obs, mo);
  write_resolved(out, {{"dataset", ds_path},
                       {"observed", obs.to_json()},
                       {"model", mo.to_json()},
                       {"statistics", stats},
                       {"invocations", invocations},
                       {"epsilon_quantile", opt.epsilon_quantile},
                       {"threshold", opt.threshold},
                       {"bins", opt.bins},
                       {"seed", seed},
                       {"jobs", jobs}});

  const FeatureMap fm = feature_map_for(stats, ds.shape().channels);
  if (fm.empty()) throw EmptyCandidates("no candidate statistics");
  const Eigen::MatrixXd features = fm.evaluate_all(ds, jobs);
  const auto h_obs = fm.evaluate(observed.series.view());
  std::vector<std::size_t> counts(fm.size(), 0);
  for (std::size_t k = 0; k < invocations; ++k) {
    RngStream rng(seed, k);
    for (auto i : as_select_features(features, h_obs, ds, rng, opt)) ++counts[i];
  }

  const auto names = fm.names(ds.shape().names);
  std::ostringstream os;
  CsvWriter csv(os);
  csv.row({"statistic_name", "selection_count", "invocations"});
  SvgSeries line{"selections", {}, {}};
  for (std::size_t i = 0; i < fm.size(); ++i) {
    csv.row({names[i], std::to_string(counts[i]), std::to_string(invocations)});
    line.x.push_back(static_cast<double>(i));
    line.y.push_back(static_cast<double>(counts[i]));
  }
  write_text_file(out / "selection.csv", os.str());
  write_lines_svg(out / "selection.svg", {line}, "selection frequency", "statistic index", "count");
}

// ---- abc (reference-table rejection) --------------------------------------

void cmd_abc(const json& config, const fs::path& out) {
  const std::string ctx = "abc";
  require_known_keys(config, {"reference", "observed", "model", "summary", "ratio", "seed", "jobs"},
                     ctx);
  const auto ref_path = json_get<std::string>(config, "reference", ctx);
  const LabeledDataset ref = read_dataset(ref_path);
  ModelOptions mo;
  if (config.contains("model")) mo = ModelOptions::from_json(config.at("model"));
  else if (ref.extra().contains("generator")) mo = ModelOptions::from_json(ref.extra().at("generator"));
  ObservedSpec obs;
  if (config.contains("observed")) obs = ObservedSpec::from_json(config.at("observed"));
  SummarySpec ss;
  if (config.contains("summary")) ss = SummarySpec::from_json(config.at("summary"));
  double ratio = 1e-2;
  std::size_t jobs = 0;
  std::uint64_t seed = 0;
  json_read(config, "ratio", ratio, ctx);
  json_read(config, "seed", seed, ctx);
  json_read(config, "jobs", jobs, ctx);

  const Observation observed = resolve_observed(obs, mo);
  write_resolved(out, {{"reference", ref_path},
                       {"observed", obs.to_json()},
                       {"model", mo.to_json()},
                       {"summary", ss.to_json()},
                       {"ratio", ratio},
                       {"seed", seed},
                       {"jobs", jobs}});

  const SummaryFunction summary = build_summary(ss, &ref, nullptr, seed, jobs);
  const Posterior post = rejection_reference_table(ref, summary, observed.series.view(), ratio, jobs);
  const auto& names = ref.prior().names();
  write_posterior_csv(out / "posterior.csv", {&post}, names, 0);
  write_posterior_svg(out / "posterior.svg", {&post}, {"accepted"}, names, &observed.theta,
                      "rejection ABC (" + summary.descriptor() + ")");
  json s = posterior_summary(post, names);
  s["observed_theta"] = observed.theta;
  write_json(out / "summary.json", s);
  log("accepted " + std::to_string(post.size()) + " of " + std::to_string(ref.size()));
}

// ---- smc ------------------------------------------------------------------

void cmd_smc(const json& config, const fs::path& out) {
  const std::string ctx = "smc";
  require_known_keys(config, {"model", "observed", "summary", "population", "rounds",
                              "epsilon_quantile", "max_trials_per_round", "kernel_scale", "block",
                              "seed", "jobs"},
                     ctx);
  ModelOptions mo;
  if (config.contains("model")) mo = ModelOptions::from_json(config.at("model"));
  ObservedSpec obs;
  if (config.contains("observed")) obs = ObservedSpec::from_json(config.at("observed"));
  SummarySpec ss;
  if (config.contains("summary")) ss = SummarySpec::from_json(config.at("summary"));
  SmcOptions opt;
  std::uint64_t seed = 0;
  json_read(config, "population", opt.population, ctx);
  json_read(config, "rounds", opt.rounds, ctx);
  json_read(config, "epsilon_quantile", opt.epsilon_quantile, ctx);
  json_read(config, "max_trials_per_round", opt.max_trials_per_round, ctx);
  json_read(config, "kernel_scale", opt.kernel_scale, ctx);
  json_read(config, "block", opt.block, ctx);
  json_read(config, "seed", seed, ctx);
  json_read(config, "jobs", opt.jobs, ctx);

  const ModelDefinition model = make_model(mo);
  const Observation observed = resolve_observed(obs, mo);
  write_resolved(out, {{"model", mo.to_json()},
                       {"observed", obs.to_json()},
                       {"summary", ss.to_json()},
                       {"population", opt.population},
                       {"rounds", opt.rounds},
                       {"epsilon_quantile", opt.epsilon_quantile},
                       {"max_trials_per_round", opt.max_trials_per_round},
                       {"kernel_scale", opt.kernel_scale},
                       {"block", opt.block},
                       {"seed", seed},
                       {"jobs", opt.jobs}});

  const SummaryFunction summary = build_summary(ss, nullptr, &model, seed, opt.jobs);
  opt.jobs = jobs_of(opt.jobs);
  opt.on_round = [](std::size_t r, const Posterior& p) {
    log("round " + std::to_string(r) + ": epsilon " + format_double(p.epsilon_schedule.back()) +
        ", trials " + std::to_string(p.trial_count));
  };
  const auto rounds = smc_abc(model.simulate, model.prior, summary, observed.series.view(), opt, seed);
  const auto& names = model.prior.names();

  std::ostringstream os;
  CsvWriter csv(os);
  csv.row({"round", "epsilon", "trials", "particles"});
  std::vector<const Posterior*> all;
  std::vector<std::string> labels;
  for (std::size_t r = 0; r < rounds.size(); ++r) {
    const auto& p = rounds[r];
    write_posterior_csv(out / ("posterior_round_" + std::to_string(r + 1) + ".csv"), {&p}, names, r + 1);
    csv.row({std::to_string(r + 1), format_double(p.epsilon_schedule.back()),
             std::to_string(p.trial_count), std::to_string(p.size())});
    all.push_back(&p);
    labels.push_back("round " + std::to_string(r + 1));
  }
  write_text_file(out / "epsilon.csv", os.str());
  write_posterior_svg(out / "posterior.svg", all, labels, names, &observed.theta,
                      "SMC-ABC (" + summary.descriptor() + ")");
  json s = posterior_summary(rounds.back(), names);
  s["observed_theta"] = observed.theta;
  write_json(out / "summary.json", s);
}

// ---- exact_posterior ------------------------------------------------------

void cmd_exact_posterior(const json& config, const fs::path& out) {
  const std::string ctx = "exact_posterior";
  require_known_keys(config, {"model", "observed", "steps", "burn_in_fraction", "thin",
                              "proposal_scale", "start", "seed", "jobs"},
                     ctx);
  ModelOptions mo;
  if (config.contains("model")) mo = ModelOptions::from_json(config.at("model"));
  if (mo.model != "ma2") throw ConfigError("exact_posterior supports the ma2 model only");
  ObservedSpec obs;
  if (config.contains("observed")) obs = ObservedSpec::from_json(config.at("observed"));
  RwmhOptions opt;
  std::uint64_t seed = 0;
  std::size_t jobs = 0;
  json_read(config, "steps", opt.steps, ctx);
  json_read(config, "burn_in_fraction", opt.burn_in_fraction, ctx);
  json_read(config, "thin", opt.thin, ctx);
  json_read(config, "proposal_scale", opt.proposal_scale, ctx);
  json_read(config, "start", opt.start, ctx);
  json_read(config, "seed", seed, ctx);
  json_read(config, "jobs", jobs, ctx);

  const ModelDefinition model = make_model(mo);
  const Observation observed = resolve_observed(obs, mo);
  write_resolved(out, {{"model", mo.to_json()},
                       {"observed", obs.to_json()},
                       {"steps", opt.steps},
                       {"burn_in_fraction", opt.burn_in_fraction},
                       {"thin", opt.thin},
                       {"proposal_scale", opt.proposal_scale},
                       {"start", opt.start},
                       {"seed", seed},
                       {"jobs", jobs}});

  RngStream rng(seed, 0);
  const auto view = observed.series.view();
  std::vector<double> x(view.timepoints);
  for (std::size_t t = 0; t < view.timepoints; ++t) x[t] = view(0, t);
  const Posterior chain = rwmh_ma2(x, model.prior, opt, rng);
  const auto& names = model.prior.names();
  write_posterior_csv(out / "chain.csv", {&chain}, names, 0);
  write_posterior_svg(out / "posterior.svg", {&chain}, {"chain"}, names, &observed.theta,
                      "exact MA(2) posterior");
  json s = posterior_summary(chain, names);
  s["observed_theta"] = observed.theta;
  write_json(out / "summary.json", s);
}

// ---- experiment -----------------------------------------------------------

void cmd_experiment(const json& config, const fs::path& out) {
  const ExperimentConfig ec = ExperimentConfig::from_json(config);
  write_resolved(out, ec.to_json());
  const ExperimentResult result = run_experiment(ec, out, log);

  std::vector<SvgSeries> series;
  const bool by_size = ec.train_sizes.size() > 1;
  for (const auto& row : result.rows) {
    const std::string name = row.architecture + (by_size ? "" : " step " + format_double(row.step));
    auto it = std::find_if(series.begin(), series.end(), [&](const SvgSeries& s) { return s.name == name; });
    if (it == series.end()) {
      series.push_back({name, {}, {}});
      it = series.end() - 1;
    }
    it->x.push_back(by_size ? static_cast<double>(row.train_size) : row.t_end);
    it->y.push_back(row.report.mean);
  }
  write_lines_svg(out / "e_percent.svg", series, "mean E%", by_size ? "training size" : "t_end", "E%");
}

}  // namespace lfi::cli
