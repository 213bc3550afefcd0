#pragma once

#include "lcrank/solver.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace lcrank {

struct RunConfig {
  std::filesystem::path dataset_path;
  std::filesystem::path query_path;
  std::filesystem::path output_path;
  std::filesystem::path trace_path;
  Hyperparams<double> hyperparams;
  bool exclude_queries = false;

  /// Throws unless all four paths are set.
  void require_paths() const;
};

/// Keys accepted both as `--key value` flags and as `key = value` lines.
const std::vector<std::string>& config_keys();

/// Applies one setting; throws on an unknown key or an unparsable value.
void apply_setting(RunConfig& config, std::string_view key, std::string_view value);

/// Reads a flat `key = value` file (blank lines and `#` comments allowed).
void apply_config_file(RunConfig& config, const std::filesystem::path& path);

/// Parses `fit` arguments (without program or subcommand name).
/// Precedence is flag > config file > default. `LCRANK_THREADS` sets the
/// worker count. Hyperparameters are validated before returning.
RunConfig parse_config(const std::vector<std::string>& args);

}  // namespace lcrank
