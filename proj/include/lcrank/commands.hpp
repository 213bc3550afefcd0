#pragma once

#include "lcrank/config.hpp"
#include "lcrank/dataset_io.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace lcrank {

/// Gaussian mixture with unit-variance clusters; point i belongs to cluster
/// i mod `clusters` and has id `c<cluster>_<i>`.
struct SyntheticSet {
  DataSet data;
  std::vector<int> labels;
  std::string query_id;  // a random member of cluster 0
};

SyntheticSet generate_clusters(Index n, Index d, Index clusters, std::uint64_t seed);

/// Cluster label encoded in a generated id, or -1 if the id is not one.
int cluster_of(const std::string& id);

struct GenConfig {
  Index n = 40;
  Index d = 5;
  Index clusters = 2;
  std::uint64_t seed = 0;
  std::filesystem::path data_path;
  std::filesystem::path query_path;
};

struct RerankConfig {
  std::filesystem::path input_path;
  std::filesystem::path output_path;
  bool exclude_queries = false;
};

/// Load, fit, and write the ranking and trace. Returns the process exit code.
int cmd_fit(const RunConfig& config, std::ostream& out, std::ostream& err);

/// Re-sorts an existing ranking CSV, optionally dropping the query rows.
int cmd_rank(const RerankConfig& config, std::ostream& out, std::ostream& err);

int cmd_gen(const GenConfig& config, std::ostream& out, std::ostream& err);

/// Subcommand dispatcher behind the `lcrank` executable.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lcrank
