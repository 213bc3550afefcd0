#include "lcrank/config.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>

namespace lcrank {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  const auto v = trim(text);
  T value{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), value);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size())
    throw Error("cannot parse value `" + std::string(v) + "` for " + std::string(key));
  return value;
}

bool parse_flag(std::string_view key, std::string_view text) {
  const auto v = trim(text);
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw Error("cannot parse value `" + std::string(v) + "` for " + std::string(key) + " (expected true/false)");
}

}  // namespace

void RunConfig::require_paths() const {
  if (dataset_path.empty()) throw Error("missing dataset path (--data)");
  if (query_path.empty()) throw Error("missing query path (--queries)");
  if (output_path.empty()) throw Error("missing output path (--out)");
  if (trace_path.empty()) throw Error("missing trace path (--trace)");
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {"alpha", "beta", "gamma", "delta", "y",  "C",    "m",
                                                "k",     "xi",   "T",     "seed",  "data", "queries", "out",
                                                "trace", "exclude_queries"};
  return keys;
}

void apply_setting(RunConfig& config, std::string_view key, std::string_view value) {
  auto& hp = config.hyperparams;
  if (key == "alpha") hp.alpha = parse_number<double>(key, value);
  else if (key == "beta") hp.beta = parse_number<double>(key, value);
  else if (key == "gamma") hp.gamma = parse_number<double>(key, value);
  else if (key == "delta") hp.delta = parse_number<double>(key, value);
  else if (key == "y") hp.y = parse_number<double>(key, value);
  else if (key == "C") hp.C = parse_number<double>(key, value);
  else if (key == "m") hp.m = parse_number<Index>(key, value);
  else if (key == "k") hp.k = parse_number<Index>(key, value);
  else if (key == "xi") hp.xi = parse_number<double>(key, value);
  else if (key == "T") hp.T = parse_number<int>(key, value);
  else if (key == "seed") hp.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "data") config.dataset_path = std::string(trim(value));
  else if (key == "queries") config.query_path = std::string(trim(value));
  else if (key == "out") config.output_path = std::string(trim(value));
  else if (key == "trace") config.trace_path = std::string(trim(value));
  else if (key == "exclude_queries") config.exclude_queries = parse_flag(key, value);
  else throw Error("unknown configuration key `" + std::string(key) + "`");
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(path.string() + ": cannot open config file");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto text = std::string_view(line);
    if (const auto hash = text.find('#'); hash != std::string_view::npos) text = text.substr(0, hash);
    text = trim(text);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string_view::npos)
      throw Error(path.string() + ":" + std::to_string(line_no) + ": expected `key = value`");
    try {
      apply_setting(config, trim(text.substr(0, eq)), trim(text.substr(eq + 1)));
    } catch (const Error& e) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

RunConfig parse_config(const std::vector<std::string>& args) {
  CLI::App app{"lcrank fit"};
  std::map<std::string, std::optional<std::string>> flags;
  for (const auto& key : config_keys()) {
    if (key == "exclude_queries") continue;
    app.add_option("--" + key, flags[key]);
  }
  std::optional<std::string> config_file;
  app.add_option("--config", config_file, "flat key = value file");
  bool exclude = false;
  app.add_flag("--exclude-queries", exclude);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    throw Error(std::string("argument error: ") + e.what());
  }

  RunConfig config;
  if (config_file) apply_config_file(config, *config_file);
  for (const auto& key : config_keys())
    if (auto it = flags.find(key); it != flags.end() && it->second) apply_setting(config, key, *it->second);
  if (exclude) config.exclude_queries = true;

  if (const char* env = std::getenv("LCRANK_THREADS"); env && *env) {
    const int threads = parse_number<int>("LCRANK_THREADS", env);
    if (threads < 0) throw Error("LCRANK_THREADS must be >= 0");
    config.hyperparams.threads = threads;
  }
  config.hyperparams.validate();
  return config;
}

}  // namespace lcrank
