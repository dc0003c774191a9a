#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include <cssl/trainer.hpp>

namespace cssl::cli {

/// One training run: the dataset, where outputs go and the full TrainConfig.
/// Relative paths are resolved against the config file's directory.
struct RunConfig {
  std::filesystem::path dataset;
  std::filesystem::path output_dir;
  std::string preset;  // ablation row applied before the explicit keys; empty for none
  TrainConfig train;
  std::vector<std::string> ssl_keys_present;  // top-level keys only ssl mode reads
};

/// Strict parse: unknown keys and wrong types raise ConfigError with the JSON
/// pointer of the offending key.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// Every field with its effective value; parse_run_config(to_json(c)) == c.
nlohmann::json to_json(const RunConfig& cfg);

}  // namespace cssl::cli
