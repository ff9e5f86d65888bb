#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "commands.hpp"
#include "lfi/error.hpp"

namespace {

using nlohmann::json;

/// Flag values land in a JSON patch that is merged over the --config document.
struct Sub {
  CLI::App* app = nullptr;
  lfi::cli::Command run = nullptr;
  std::string config_path;
  std::string out = "out";
  json patch = json::object();
};

template <typename T>
void option(Sub& s, const std::string& flag, const std::string& pointer, const std::string& help) {
  json* patch = &s.patch;
  s.app->add_option_function<T>(
      flag, [patch, pointer](const T& v) { (*patch)[json::json_pointer(pointer)] = v; }, help);
}

void switch_flag(Sub& s, const std::string& flag, const std::string& pointer, const std::string& help) {
  json* patch = &s.patch;
  s.app->add_flag_callback(flag, [patch, pointer] { (*patch)[json::json_pointer(pointer)] = true; }, help);
}

void common(Sub& s) {
  s.app->add_option("--config", s.config_path, "JSON configuration file")->check(CLI::ExistingFile);
  s.app->add_option("--out", s.out, "Output directory")->capture_default_str();
  option<std::uint64_t>(s, "--seed", "/seed", "Master seed");
  option<std::size_t>(s, "--jobs", "/jobs", "Worker threads (0: all logical cores)");
}

void model_flags(Sub& s, const std::string& prefix = "/model") {
  option<std::string>(s, "--model", prefix + "/model", "ma2 | lotka_volterra | vilar | custom");
  option<std::vector<std::string>>(s, "--species", prefix + "/species", "Recorded species");
  option<double>(s, "--step", prefix + "/dt", "Sampling step");
  option<double>(s, "--t0", prefix + "/t0", "First sampling time");
  option<double>(s, "--t-end", prefix + "/t_end", "Last sampling time");
  option<std::size_t>(s, "--length", prefix + "/ma2_length", "MA(2) series length");
  option<std::string>(s, "--reaction-file", prefix + "/reaction_file", "Reaction network file (custom model)");
  option<double>(s, "--timeout", prefix + "/timeout_seconds", "Per-simulation wall-clock limit in seconds");
  option<std::uint64_t>(s, "--max-events", prefix + "/max_events", "Per-simulation SSA event budget");
}

void observed_flags(Sub& s) {
  option<std::string>(s, "--observed-dataset", "/observed/dataset", "Dataset holding the observed series");
  option<std::size_t>(s, "--observed-index", "/observed/index", "Entry of the observed dataset");
  option<std::vector<double>>(s, "--theta", "/observed/theta", "Simulate the observation at this parameter");
  option<std::uint64_t>(s, "--observed-seed", "/observed/seed", "Seed of the simulated observation");
}

void summary_flags(Sub& s) {
  option<std::string>(s, "--summary", "/summary/kind", "learned | statistics | linear | raw");
  option<std::string>(s, "--checkpoint", "/summary/checkpoint", "Trained model for a learned summary");
  option<std::vector<std::string>>(s, "--statistics", "/summary/statistics", "Pool statistics used by statistics/linear summaries");
  option<std::string>(s, "--summary-reference", "/summary/reference", "Dataset for statistic scales or the linear fit");
  option<std::size_t>(s, "--pilot-size", "/summary/pilot_size", "Pilot simulations when no reference is given");
}

void training_flags(Sub& s) {
  option<int>(s, "--approach", "/training/approach", "1: batch 512; 2: batch 32 then 4096");
  option<std::vector<std::size_t>>(s, "--batch-sizes", "/training/batch_sizes", "Batch size per stage");
  option<std::size_t>(s, "--patience", "/training/patience", "Early-stopping patience in epochs");
  option<std::size_t>(s, "--max-epochs", "/training/max_epochs", "Epoch cap per stage");
  option<double>(s, "--learning-rate", "/training/learning_rate", "Adam learning rate");
}

int fail(const std::string& name, const std::string& what, int code) {
  std::cerr << "error: " << name << ": " << what << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Likelihood-free inference toolkit: simulation, learned summaries and ABC", "lfi"};
  app.require_subcommand(1);
  std::map<std::string, std::unique_ptr<Sub>> subs;
  auto add = [&](const std::string& name, const std::string& help, lfi::cli::Command run) -> Sub& {
    auto s = std::make_unique<Sub>();
    s->app = app.add_subcommand(name, help);
    s->run = run;
    common(*s);
    return *subs.emplace(name, std::move(s)).first->second;
  };

  {
    Sub& s = add("generate", "Simulate a labelled dataset from the prior", lfi::cli::cmd_generate);
    model_flags(s);
    option<std::size_t>(s, "--n", "/n", "Number of (theta, series) pairs");
  }
  {
    Sub& s = add("train", "Train a regression network on a dataset", lfi::cli::cmd_train);
    option<std::string>(s, "--train", "/train", "Training dataset directory");
    option<std::string>(s, "--val", "/val", "Validation dataset directory");
    option<std::string>(s, "--arch", "/architecture", "CNN | DNN | PEN");
    option<std::string>(s, "--preset", "/preset", "setup1 | setup2 | ma2");
    option<std::size_t>(s, "--pen-order", "/pen_order", "PEN Markov order d");
    training_flags(s);
  }
  {
    Sub& s = add("eval", "E% of a trained model on a test set", lfi::cli::cmd_eval);
    option<std::string>(s, "--checkpoint", "/checkpoint", "Trained model file");
    option<std::string>(s, "--test", "/test", "Test dataset directory");
  }
  {
    Sub& s = add("select", "Approximate-sufficiency statistic selection", lfi::cli::cmd_select);
    option<std::string>(s, "--dataset", "/dataset", "Reference dataset directory");
    option<std::vector<std::string>>(s, "--statistics", "/statistics", "Candidate statistics per channel");
    option<std::size_t>(s, "--invocations", "/invocations", "Repeated selections with derived seeds");
    option<double>(s, "--epsilon-quantile", "/epsilon_quantile", "Accepted fraction of the reference table");
    option<double>(s, "--threshold", "/threshold", "Histogram change needed to keep a statistic");
    option<std::size_t>(s, "--bins", "/bins", "Histogram bins per parameter");
    observed_flags(s);
    model_flags(s);
  }
  {
    Sub& s = add("abc", "Rejection ABC on a reference table", lfi::cli::cmd_abc);
    option<std::string>(s, "--reference", "/reference", "Reference dataset directory");
    option<double>(s, "--ratio", "/ratio", "Accepted fraction of the reference table");
    summary_flags(s);
    observed_flags(s);
    model_flags(s);
  }
  {
    Sub& s = add("smc", "Sequential Monte Carlo ABC", lfi::cli::cmd_smc);
    option<std::size_t>(s, "--population", "/population", "Particles per round");
    option<std::size_t>(s, "--rounds", "/rounds", "Number of rounds");
    option<double>(s, "--epsilon-quantile", "/epsilon_quantile", "Quantile of the previous distances used as tolerance");
    option<std::size_t>(s, "--max-trials", "/max_trials_per_round", "Proposal budget per round");
    option<double>(s, "--kernel-scale", "/kernel_scale", "Kernel covariance multiplier");
    option<std::size_t>(s, "--block", "/block", "Proposals simulated per block");
    summary_flags(s);
    observed_flags(s);
    model_flags(s);
  }
  {
    Sub& s = add("exact_posterior", "Random-walk Metropolis on the exact MA(2) likelihood",
                 lfi::cli::cmd_exact_posterior);
    option<std::size_t>(s, "--steps", "/steps", "Chain length");
    option<double>(s, "--burn-in", "/burn_in_fraction", "Discarded leading fraction");
    option<std::size_t>(s, "--thin", "/thin", "Keep every k-th state");
    option<std::vector<double>>(s, "--proposal-scale", "/proposal_scale", "Random-walk standard deviations");
    option<std::vector<double>>(s, "--start", "/start", "Initial state");
    observed_flags(s);
    model_flags(s);
  }
  {
    Sub& s = add("experiment", "Train and evaluate architectures over repetitions and designs",
                 lfi::cli::cmd_experiment);
    model_flags(s);
    option<std::vector<std::string>>(s, "--arch", "/architectures", "Architectures to compare");
    option<std::string>(s, "--preset", "/preset", "setup1 | setup2 | ma2");
    option<std::size_t>(s, "--pen-order", "/pen_order", "PEN Markov order d");
    option<std::vector<std::size_t>>(s, "--train-sizes", "/train_sizes", "Training set sizes");
    option<std::size_t>(s, "--val-size", "/val_size", "Validation set size");
    option<std::size_t>(s, "--test-size", "/test_size", "Test set size");
    option<std::size_t>(s, "--repetitions", "/repetitions", "Independent repetitions");
    option<std::vector<double>>(s, "--grid-steps", "/steps", "Sampling steps of the design sweep");
    option<std::vector<double>>(s, "--grid-t-ends", "/t_ends", "End times of the design sweep");
    option<std::vector<double>>(s, "--theta-true", "/theta_true", "Fixed parameter for E%_true rows");
    option<std::size_t>(s, "--true-test-size", "/true_test_size", "Test series simulated at theta-true");
    option<std::string>(s, "--cache-dir", "/cache_dir", "Dataset cache directory (default $LFI_CACHE_DIR)");
    switch_flag(s, "--save-models", "/save_models", "Keep every trained model");
    switch_flag(s, "--verbose", "/verbose", "Log every epoch");
    training_flags(s);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  for (auto& [name, s] : subs) {
    if (!s->app->parsed()) continue;
    try {
      json config = s->config_path.empty() ? json::object() : lfi::cli::load_config(s->config_path);
      if (!config.is_object()) throw lfi::ConfigError("configuration must be a JSON object");
      config.merge_patch(s->patch);
      std::filesystem::create_directories(s->out);
      s->run(config, s->out);
    } catch (const lfi::Error& e) {
      return fail(e.name(), e.what(), e.numeric() ? 3 : 2);
    } catch (const std::filesystem::filesystem_error& e) {
      return fail("IoError", e.what(), 2);
    } catch (const std::exception& e) {
      return fail("InternalError", e.what(), 1);
    }
  }
  return 0;
}
