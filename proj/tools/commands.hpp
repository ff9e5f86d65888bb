#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

namespace lfi::cli {

/// A subcommand receives its merged configuration document (config file with
/// flag overrides applied) and the output directory. Each writes
/// config.resolved.json beside its artifacts.
using Command = void (*)(const nlohmann::json& config, const std::filesystem::path& out);

void cmd_generate(const nlohmann::json& config, const std::filesystem::path& out);
void cmd_train(const nlohmann::json& config, const std::filesystem::path& out);
void cmd_eval(const nlohmann::json& config, const std::filesystem::path& out);
void cmd_select(const nlohmann::json& config, const std::filesystem::path& out);
void cmd_abc(const nlohmann::json& config, const std::filesystem::path& out);
void cmd_smc(const nlohmann::json& config, const std::filesystem::path& out);
void cmd_exact_posterior(const nlohmann::json& config, const std::filesystem::path& out);
void cmd_experiment(const nlohmann::json& config, const std::filesystem::path& out);

/// Parses a JSON config file; syntax errors surface as ConfigError.
nlohmann::json load_config(const std::filesystem::path& path);

}  // namespace lfi::cli
