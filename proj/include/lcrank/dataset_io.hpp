#pragma once

#include "lcrank/types.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace lcrank {

/// n feature vectors (rows of `points`) with unique string ids.
struct DataSet {
  Eigen::MatrixXd points;
  std::vector<std::string> ids;

  Index size() const { return points.rows(); }
  Index dim() const { return points.cols(); }
};

struct RankedEntry {
  std::string id;
  double score = 0;
  bool is_query = false;
};

struct RankedResult {
  std::vector<RankedEntry> entries;
  bool queries_excluded = false;
};

struct TraceRecord {
  int iteration = 0;
  double objective = 0;
  std::optional<double> delta;
};

/// Raised for malformed input files; `line()` is 1-based, 0 when the problem
/// is not tied to one line.
class ParseError : public Error {
 public:
  ParseError(const std::filesystem::path& file, std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Reads the feature CSV (`id,f1,...,fd`) and the query id list.
std::pair<DataSet, QueryIndicator> load_dataset(const std::filesystem::path& path,
                                                const std::filesystem::path& query_path);

DataSet load_features(const std::filesystem::path& path);
QueryIndicator load_queries(const std::filesystem::path& query_path, const DataSet& data);

/// Throws if ids repeat, the set is empty, or any feature is NaN/Inf.
void validate(const DataSet& data);

void write_dataset(const DataSet& data, const std::filesystem::path& path);
void write_query_ids(const std::vector<std::string>& ids, const std::filesystem::path& path);

/// `rank,id,score,is_query`, ranks from 1, scores with 12 decimals.
void write_ranking(const RankedResult& result, const std::filesystem::path& path);
RankedResult read_ranking(const std::filesystem::path& path);

/// `iter,objective,delta`; a missing delta is written as an empty field.
void write_trace(const std::vector<TraceRecord>& trace, const std::filesystem::path& path);

std::string format_score(double score);

}  // namespace lcrank
