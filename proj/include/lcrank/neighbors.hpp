#pragma once

#include "lcrank/parallel.hpp"
#include "lcrank/types.hpp"

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

namespace lcrank {

/// Exact k-nearest-neighbor lists, one column per point.
///
/// Column i of `ids` is N_i in order of non-decreasing squared Euclidean
/// distance, starting with i itself. It is the sparse form of the n-by-k
/// indicator H_i: H_i(ids(j, i), j) = 1 and zero elsewhere.
struct NeighborhoodIndex {
  IndexMatrix ids;  // k x n

  Index k() const { return ids.rows(); }
  Index size() const { return ids.cols(); }
  auto list(Index i) const { return ids.col(i); }
};

/// Brute-force kNN over the rows of `points`. Ties in distance go to the
/// smaller index, so the result is a pure function of the input.
template <typename Derived>
NeighborhoodIndex build_knn(const Eigen::MatrixBase<Derived>& points, Index k, int threads = 0) {
  using Scalar = typename Derived::Scalar;
  const Index n = points.rows();
  if (n < 1) throw DimensionError("build_knn: empty point set");
  if (k < 1) throw Error("build_knn: k must be >= 1");
  if (k > n)
    throw Error("build_knn: k = " + std::to_string(k) + " exceeds the number of points n = " +
                std::to_string(n));

  NeighborhoodIndex index;
  index.ids.resize(k, n);
  parallel_for(n, threads, [&](Index i) {
    std::vector<std::pair<Scalar, Index>> candidates;
    candidates.reserve(static_cast<std::size_t>(n - 1));
    for (Index j = 0; j < n; ++j) {
      if (j == i) continue;
      candidates.emplace_back((points.row(i) - points.row(j)).squaredNorm(), j);
    }
    const auto keep = static_cast<std::ptrdiff_t>(k - 1);
    std::partial_sort(candidates.begin(), candidates.begin() + keep, candidates.end());
    index.ids(0, i) = i;
    for (Index j = 1; j < k; ++j) index.ids(j, i) = candidates[static_cast<std::size_t>(j - 1)].second;
  });
  return index;
}

/// For every point a, the list of neighborhoods j with a in N_j (ascending j).
inline std::vector<std::vector<Index>> owners(const NeighborhoodIndex& index) {
  std::vector<std::vector<Index>> result(static_cast<std::size_t>(index.size()));
  for (Index i = 0; i < index.size(); ++i)
    for (Index j = 0; j < index.k(); ++j) result[static_cast<std::size_t>(index.ids(j, i))].push_back(i);
  return result;
}

namespace detail {
inline void check_point(const NeighborhoodIndex& index, Index i, const char* where) {
  if (i < 0 || i >= index.size())
    throw DimensionError(std::string(where) + ": point index " + std::to_string(i) + " out of range");
}
}  // namespace detail

/// f_i = f H_i: the scores of the k members of N_i, in neighbor order.
template <typename Derived>
Vector<typename Derived::Scalar> gather_local_scores(const Eigen::MatrixBase<Derived>& f,
                                                     const NeighborhoodIndex& index, Index i) {
  detail::check_point(index, i, "gather_local_scores");
  if (f.size() != index.size()) throw DimensionError("gather_local_scores: score length differs from index size");
  return f(index.list(i));
}

/// S_i = S H_i: the m x k matrix of the codes of N_i's members.
template <typename Derived>
Matrix<typename Derived::Scalar> gather_local_codes(const Eigen::MatrixBase<Derived>& codes,
                                                    const NeighborhoodIndex& index, Index i) {
  detail::check_point(index, i, "gather_local_codes");
  if (codes.cols() != index.size()) throw DimensionError("gather_local_codes: code count differs from index size");
  return codes(Eigen::all, index.list(i));
}

}  // namespace lcrank
