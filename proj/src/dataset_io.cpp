#include "lcrank/dataset_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string_view>
#include <unordered_map>
#include <unordered_set>

namespace lcrank {

namespace {

std::string where(const std::filesystem::path& file, std::size_t line) {
  std::string s = file.string();
  if (line > 0) s += ":" + std::to_string(line);
  return s;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      cells.push_back(line.substr(start));
      return cells;
    }
    cells.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_double(std::string_view cell) {
  cell = trim(cell);
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  double value = 0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size()) return std::nullopt;
  return value;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, 0, "cannot open file");
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(path.string() + ": cannot open file for writing");
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw Error(path.string() + ": write failed");
}

std::string format_general(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace

ParseError::ParseError(const std::filesystem::path& file, std::size_t line, const std::string& what)
    : Error(where(file, line) + ": " + what), line_(line) {}

DataSet load_features(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::string line;
  std::size_t line_no = 0;

  if (!std::getline(in, line)) throw ParseError(path, 1, "missing header `id,f1,...,fd`");
  ++line_no;
  const auto header = split(trim(line), ',');
  if (header.size() < 2 || trim(header[0]) != "id")
    throw ParseError(path, line_no, "header must be `id,f1,...,fd` with at least one feature column");
  const std::size_t columns = header.size();

  std::vector<std::string> ids;
  std::vector<double> values;
  std::unordered_map<std::string, std::size_t> seen;
  while (std::getline(in, line)) {
    ++line_no;
    const auto row = trim(line);
    if (row.empty()) continue;
    const auto cells = split(row, ',');
    if (cells.size() != columns)
      throw ParseError(path, line_no,
                       "malformed row: expected " + std::to_string(columns) + " columns, found " +
                           std::to_string(cells.size()));
    std::string id(trim(cells[0]));
    if (id.empty()) throw ParseError(path, line_no, "empty id");
    if (auto [it, fresh] = seen.emplace(id, line_no); !fresh)
      throw ParseError(path, line_no, "duplicate id `" + id + "` (first seen on line " + std::to_string(it->second) + ")");
    for (std::size_t c = 1; c < columns; ++c) {
      const auto value = parse_double(cells[c]);
      if (!value)
        throw ParseError(path, line_no,
                         "non-numeric cell `" + std::string(trim(cells[c])) + "` in column " + std::to_string(c + 1));
      if (!std::isfinite(*value))
        throw ParseError(path, line_no, "non-finite value in column " + std::to_string(c + 1));
      values.push_back(*value);
    }
    ids.push_back(std::move(id));
  }
  if (ids.empty()) throw ParseError(path, line_no, "no data rows");

  DataSet data;
  const auto n = static_cast<Index>(ids.size());
  const auto d = static_cast<Index>(columns - 1);
  data.points = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(values.data(), n, d);
  data.ids = std::move(ids);
  return data;
}

QueryIndicator load_queries(const std::filesystem::path& query_path, const DataSet& data) {
  std::unordered_map<std::string_view, Index> position;
  for (Index i = 0; i < data.size(); ++i) position.emplace(data.ids[static_cast<std::size_t>(i)], i);

  auto in = open_input(query_path);
  QueryIndicator q;
  q.lambda = Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(data.size(), false);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto id = trim(line);
    if (id.empty()) continue;
    const auto it = position.find(id);
    if (it == position.end()) throw ParseError(query_path, line_no, "unknown query id `" + std::string(id) + "`");
    q.lambda(it->second) = true;
  }
  if (q.count() == 0) throw ParseError(query_path, line_no, "empty query set: at least one query id is required");
  return q;
}

std::pair<DataSet, QueryIndicator> load_dataset(const std::filesystem::path& path,
                                                const std::filesystem::path& query_path) {
  DataSet data = load_features(path);
  validate(data);
  QueryIndicator q = load_queries(query_path, data);
  return {std::move(data), std::move(q)};
}

void validate(const DataSet& data) {
  if (data.size() < 1 || data.dim() < 1) throw Error("dataset must have n >= 1 points of dimension d >= 1");
  if (static_cast<Index>(data.ids.size()) != data.size())
    throw DimensionError("dataset has " + std::to_string(data.ids.size()) + " ids for " + std::to_string(data.size()) +
                         " points");
  if (!data.points.allFinite()) throw Error("dataset contains NaN or Inf features");
  std::unordered_set<std::string_view> seen;
  for (const auto& id : data.ids)
    if (!seen.insert(id).second) throw Error("duplicate id `" + id + "`");
}

void write_dataset(const DataSet& data, const std::filesystem::path& path) {
  validate(data);
  auto out = open_output(path);
  out << "id";
  for (Index c = 0; c < data.dim(); ++c) out << ",f" << (c + 1);
  out << '\n';
  char buf[64];
  for (Index i = 0; i < data.size(); ++i) {
    out << data.ids[static_cast<std::size_t>(i)];
    for (Index c = 0; c < data.dim(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", data.points(i, c));
      out << ',' << buf;
    }
    out << '\n';
  }
  finish(out, path);
}

void write_query_ids(const std::vector<std::string>& ids, const std::filesystem::path& path) {
  if (ids.empty()) throw Error("refusing to write an empty query file");
  auto out = open_output(path);
  for (const auto& id : ids) out << id << '\n';
  finish(out, path);
}

std::string format_score(double score) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%.12f", score);
  std::string s = buf;
  if (s.starts_with('-') && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

void write_ranking(const RankedResult& result, const std::filesystem::path& path) {
  if (result.entries.empty()) throw Error("write_ranking: result has no entries");
  for (std::size_t r = 1; r < result.entries.size(); ++r)
    if (result.entries[r].score > result.entries[r - 1].score)
      throw Error("write_ranking: scores are not in non-increasing order at rank " + std::to_string(r + 1));
  auto out = open_output(path);
  out << "rank,id,score,is_query\n";
  std::size_t rank = 0;
  for (const auto& e : result.entries)
    out << ++rank << ',' << e.id << ',' << format_score(e.score) << ',' << (e.is_query ? 1 : 0) << '\n';
  finish(out, path);
}

RankedResult read_ranking(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || trim(line) != "rank,id,score,is_query")
    throw ParseError(path, 1, "header must be `rank,id,score,is_query`");
  RankedResult result;
  std::unordered_set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    const auto row = trim(line);
    if (row.empty()) continue;
    const auto cells = split(row, ',');
    if (cells.size() != 4)
      throw ParseError(path, line_no, "malformed row: expected 4 columns, found " + std::to_string(cells.size()));
    RankedEntry e;
    e.id = std::string(trim(cells[1]));
    if (!seen.insert(e.id).second) throw ParseError(path, line_no, "duplicate id `" + e.id + "`");
    const auto score = parse_double(cells[2]);
    if (!score || !std::isfinite(*score)) throw ParseError(path, line_no, "non-numeric score");
    e.score = *score;
    const auto flag = trim(cells[3]);
    if (flag != "0" && flag != "1") throw ParseError(path, line_no, "is_query must be 0 or 1");
    e.is_query = flag == "1";
    result.entries.push_back(std::move(e));
  }
  if (result.entries.empty()) throw ParseError(path, line_no, "no ranking rows");
  return result;
}

void write_trace(const std::vector<TraceRecord>& trace, const std::filesystem::path& path) {
  if (trace.empty()) throw Error("write_trace: trace is empty");
  if (trace.front().iteration != 1) throw Error("write_trace: first iteration must be 1");
  for (std::size_t r = 1; r < trace.size(); ++r)
    if (trace[r].iteration <= trace[r - 1].iteration)
      throw Error("write_trace: iterations are not strictly increasing at row " + std::to_string(r + 1));
  auto out = open_output(path);
  out << "iter,objective,delta\n";
  for (const auto& row : trace) {
    out << row.iteration << ',' << format_general(row.objective) << ',';
    if (row.delta) out << format_general(*row.delta);
    out << '\n';
  }
  finish(out, path);
}

}  // namespace lcrank
