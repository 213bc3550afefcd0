#include "lcrank/commands.hpp"

#include "lcrank/solver.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <random>

namespace lcrank {

namespace {

std::filesystem::path staging_path(const std::filesystem::path& path) {
  auto staged = path;
  staged += ".partial";
  return staged;
}

void commit(const std::filesystem::path& staged, const std::filesystem::path& path) {
  std::error_code ec;
  std::filesystem::rename(staged, path, ec);
  if (ec) throw Error(path.string() + ": cannot move output into place: " + ec.message());
}

void discard(const std::filesystem::path& staged) {
  std::error_code ec;
  std::filesystem::remove(staged, ec);
}

std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

SyntheticSet generate_clusters(Index n, Index d, Index clusters, std::uint64_t seed) {
  if (d < 1) throw Error("gen: d must be >= 1");
  if (clusters < 1) throw Error("gen: clusters must be >= 1");
  if (n < clusters) throw Error("gen: n must be >= clusters");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  SyntheticSet out;
  out.data.points.resize(n, d);
  out.labels.resize(static_cast<std::size_t>(n));
  const int width = static_cast<int>(std::to_string(n - 1).size());
  for (Index i = 0; i < n; ++i) {
    const Index c = i % clusters;
    // Means 6(c+1) along axis c mod d: at least 6 apart pairwise.
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(d);
    mean(c % d) = 6.0 * static_cast<double>(c + 1);
    for (Index j = 0; j < d; ++j) out.data.points(i, j) = mean(j) + normal(rng);
    out.labels[static_cast<std::size_t>(i)] = static_cast<int>(c);
    std::string num = std::to_string(i);
    num.insert(0, static_cast<std::size_t>(width) - num.size(), '0');
    out.data.ids.push_back("c" + std::to_string(c) + "_" + num);
  }
  const Index members = (n + clusters - 1) / clusters;
  std::uniform_int_distribution<Index> pick(0, members - 1);
  out.query_id = out.data.ids[static_cast<std::size_t>(pick(rng) * clusters)];
  return out;
}

int cluster_of(const std::string& id) {
  if (id.size() < 3 || id[0] != 'c') return -1;
  const auto us = id.find('_');
  if (us == std::string::npos || us == 1) return -1;
  try {
    return std::stoi(id.substr(1, us - 1));
  } catch (const std::exception&) {
    return -1;
  }
}

int cmd_fit(const RunConfig& config, std::ostream& out, std::ostream& err) {
  const auto ranking_tmp = staging_path(config.output_path);
  const auto trace_tmp = staging_path(config.trace_path);
  try {
    config.require_paths();
    auto [data, queries] = load_dataset(config.dataset_path, config.query_path);
    const auto result = fit<double>(data, queries, config.hyperparams);
    for (const auto& w : result.trace.warnings) err << "warning: " << w << '\n';

    write_ranking(rank(result.state.f, queries, data.ids, config.exclude_queries), ranking_tmp);
    write_trace(result.trace.records(), trace_tmp);
    commit(ranking_tmp, config.output_path);
    commit(trace_tmp, config.trace_path);

    const auto& last = result.trace.rows.back();
    out << "iterations: " << result.state.iteration << (result.trace.converged ? " (converged)" : " (iteration limit)")
        << '\n'
        << "objective: " << fixed(last.terms.total) << '\n'
        << "  coding:  " << fixed(last.terms.coding) << '\n'
        << "  ranking: " << fixed(last.terms.ranking) << '\n'
        << "  query:   " << fixed(last.terms.query) << '\n';
    return 0;
  } catch (const std::exception& e) {
    discard(ranking_tmp);
    discard(trace_tmp);
    err << "lcrank fit: " << e.what() << '\n';
    return 1;
  }
}

int cmd_rank(const RerankConfig& config, std::ostream& out, std::ostream& err) {
  try {
    if (config.input_path.empty() || config.output_path.empty()) throw Error("rank needs --in and --out");
    RankedResult ranking = read_ranking(config.input_path);
    std::stable_sort(ranking.entries.begin(), ranking.entries.end(),
                     [](const RankedEntry& a, const RankedEntry& b) { return a.score > b.score; });
    if (config.exclude_queries) {
      std::erase_if(ranking.entries, [](const RankedEntry& e) { return e.is_query; });
      ranking.queries_excluded = true;
    }
    const auto tmp = staging_path(config.output_path);
    write_ranking(ranking, tmp);
    commit(tmp, config.output_path);
    out << "ranked " << ranking.entries.size() << " points\n";
    return 0;
  } catch (const std::exception& e) {
    err << "lcrank rank: " << e.what() << '\n';
    return 1;
  }
}

int cmd_gen(const GenConfig& config, std::ostream& out, std::ostream& err) {
  try {
    if (config.data_path.empty() || config.query_path.empty()) throw Error("gen needs --out-data and --out-queries");
    const auto set = generate_clusters(config.n, config.d, config.clusters, config.seed);
    write_dataset(set.data, config.data_path);
    write_query_ids({set.query_id}, config.query_path);
    out << "wrote " << set.data.size() << " points, query " << set.query_id << '\n';
    return 0;
  } catch (const std::exception& e) {
    err << "lcrank gen: " << e.what() << '\n';
    return 1;
  }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const std::string usage = "usage: lcrank <fit|rank|gen> [options]   (lcrank <command> --help for details)\n";
  if (args.empty()) {
    err << usage;
    return 2;
  }
  const std::string& command = args.front();
  const std::vector<std::string> rest(args.begin() + 1, args.end());
  const bool wants_help = std::find_if(rest.begin(), rest.end(), [](const std::string& a) {
                            return a == "--help" || a == "-h";
                          }) != rest.end();

  if (command == "fit") {
    if (wants_help) {
      out << "lcrank fit --data FILE --queries FILE --out FILE --trace FILE [--config FILE]\n"
             "           [--alpha A --beta B --gamma G --delta D --y Y --C C --m M --k K\n"
             "            --xi XI --T T --seed S] [--exclude-queries]\n"
             "LCRANK_THREADS=<n> enables n worker threads (0 = sequential).\n";
      return 0;
    }
    RunConfig config;
    try {
      config = parse_config(rest);
    } catch (const std::exception& e) {
      err << "lcrank fit: " << e.what() << '\n';
      return 2;
    }
    return cmd_fit(config, out, err);
  }

  CLI::App app{"lcrank " + command};
  std::vector<std::string> reversed(rest.rbegin(), rest.rend());
  if (command == "rank") {
    RerankConfig config;
    app.add_option("--in", config.input_path, "ranking CSV to re-sort")->required();
    app.add_option("--out", config.output_path, "output ranking CSV")->required();
    app.add_flag("--exclude-queries", config.exclude_queries);
    try {
      app.parse(reversed);
    } catch (const CLI::ParseError& e) {
      return app.exit(e, out, err);
    }
    return cmd_rank(config, out, err);
  }
  if (command == "gen") {
    GenConfig config;
    app.add_option("--n", config.n, "number of points")->capture_default_str();
    app.add_option("--d", config.d, "feature dimension")->capture_default_str();
    app.add_option("--clusters", config.clusters, "number of Gaussian clusters")->capture_default_str();
    app.add_option("--seed", config.seed)->capture_default_str();
    app.add_option("--out-data", config.data_path, "feature CSV to write")->required();
    app.add_option("--out-queries", config.query_path, "query id file to write")->required();
    try {
      app.parse(reversed);
    } catch (const CLI::ParseError& e) {
      return app.exit(e, out, err);
    }
    return cmd_gen(config, out, err);
  }
  err << "lcrank: unknown command `" << command << "`\n" << usage;
  return 2;
}

}  // namespace lcrank
