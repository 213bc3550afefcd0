#pragma once

#include "lcrank/neighbors.hpp"
#include "lcrank/parallel.hpp"
#include "lcrank/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace lcrank {

/// Ranking scores f with the anchor y they were solved against.
template <typename Scalar>
struct ScoreVector {
  Vector<Scalar> f;
  Scalar y = Scalar(1);
  bool regularized = false;  // ridge fallback was needed
  Scalar ridge = Scalar(0);

  Index size() const { return f.size(); }
};

/// Per-neighborhood predictor operators Phi_i and regularizers L_i, plus the
/// assembled n x n matrix M = sum_i H_i L_i H_i'.
template <typename Scalar>
struct LocalRankingCache {
  std::vector<Matrix<Scalar>> phi;
  std::vector<Matrix<Scalar>> L;
  Matrix<Scalar> M;
};

/// Phi = (S S' + beta I)^-1 S, the map from local scores to the ridge
/// predictor w = Phi f.
template <typename Scalar>
Matrix<Scalar> compute_phi(const Matrix<Scalar>& local_codes, Scalar beta) {
  if (!(beta > Scalar(0))) throw Error("compute_phi: beta must be > 0");
  Matrix<Scalar> gram = local_codes * local_codes.transpose();
  gram.diagonal().array() += beta;
  Eigen::LLT<Matrix<Scalar>> llt(gram);
  if (llt.info() != Eigen::Success) throw NumericalError("compute_phi: S S' + beta I is not positive definite");
  return llt.solve(local_codes);
}

/// L = (I - Phi' S)(I - Phi' S)' + beta Phi' Phi, so that f L f' is the
/// local fit error with the predictor eliminated.
template <typename Scalar>
Matrix<Scalar> compute_local_L(const Matrix<Scalar>& local_codes, const Matrix<Scalar>& phi, Scalar beta) {
  if (phi.rows() != local_codes.rows() || phi.cols() != local_codes.cols())
    throw DimensionError("compute_local_L: Phi and S_i shapes differ");
  const Index k = local_codes.cols();
  const Matrix<Scalar> residual = Matrix<Scalar>::Identity(k, k) - phi.transpose() * local_codes;
  Matrix<Scalar> L = residual * residual.transpose() + beta * phi.transpose() * phi;
  return (L + L.transpose()) / Scalar(2);
}

/// Scatter-adds every L_i into the rows/columns named by N_i.
template <typename Scalar>
Matrix<Scalar> assemble_global(const std::vector<Matrix<Scalar>>& locals, const NeighborhoodIndex& index, Index n) {
  if (static_cast<Index>(locals.size()) != index.size() || index.size() != n)
    throw DimensionError("assemble_global: " + std::to_string(locals.size()) + " local matrices for an index of " +
                         std::to_string(index.size()) + " points (n = " + std::to_string(n) + ")");
  const Index k = index.k();
  Matrix<Scalar> M = Matrix<Scalar>::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    const auto& L = locals[static_cast<std::size_t>(i)];
    if (L.rows() != k || L.cols() != k) throw DimensionError("assemble_global: local matrix is not k x k");
    const auto ids = index.list(i);
    for (Index jj = 0; jj < k; ++jj)
      for (Index j = 0; j < k; ++j) M(ids(j), ids(jj)) += L(j, jj);
  }
  return M;
}

/// Builds Phi_i and L_i for every neighborhood from the codes S (m x n) and
/// assembles M.
template <typename Scalar>
LocalRankingCache<Scalar> build_local_cache(const Matrix<Scalar>& codes, const NeighborhoodIndex& index, Scalar beta,
                                            int threads = 0) {
  const Index n = index.size();
  LocalRankingCache<Scalar> cache;
  cache.phi.resize(static_cast<std::size_t>(n));
  cache.L.resize(static_cast<std::size_t>(n));
  parallel_for(n, threads, [&](Index i) {
    const Matrix<Scalar> S_i = gather_local_codes(codes, index, i);
    auto& phi = cache.phi[static_cast<std::size_t>(i)];
    phi = compute_phi(S_i, beta);
    cache.L[static_cast<std::size_t>(i)] = compute_local_L(S_i, phi, beta);
  });
  cache.M = assemble_global(cache.L, index, n);
  return cache;
}

/// Minimizer of h(f) = gamma f'Mf + delta (f - y)' diag(lambda) (f - y).
///
/// Solves (gamma M + delta diag(lambda)) f = delta y lambda by Cholesky. If
/// that system is singular, a ridge of 1e-10 * trace / n (more in single
/// precision) is added and the result is flagged.
template <typename Scalar>
ScoreVector<Scalar> solve_scores(const Matrix<Scalar>& M, const QueryIndicator& queries, Scalar y, Scalar gamma,
                                 Scalar delta) {
  const Index n = M.rows();
  if (M.cols() != n || queries.size() != n) throw DimensionError("solve_scores: M and lambda sizes differ");
  if (gamma < Scalar(0)) throw Error("solve_scores: gamma must be >= 0");
  if (!(delta > Scalar(0))) throw Error("solve_scores: delta must be > 0");

  const Vector<Scalar> lam = queries.template as<Scalar>();
  Matrix<Scalar> system = gamma * M;
  system.diagonal() += delta * lam;
  const Vector<Scalar> rhs = (delta * y) * lam;

  const Scalar eps = std::numeric_limits<Scalar>::epsilon();
  const Scalar residual_tol = std::sqrt(eps);
  ScoreVector<Scalar> out;
  out.y = y;
  auto accept = [&](const Eigen::LLT<Matrix<Scalar>>& llt) {
    if (llt.info() != Eigen::Success) return false;
    out.f = llt.solve(rhs);
    if (!out.f.allFinite()) return false;
    const Scalar scale = system.cwiseAbs().maxCoeff() * out.f.cwiseAbs().maxCoeff() + rhs.cwiseAbs().maxCoeff();
    return (system * out.f - rhs).cwiseAbs().maxCoeff() <= residual_tol * (Scalar(1) + scale);
  };
  if (accept(Eigen::LLT<Matrix<Scalar>>(system))) return out;

  out.regularized = true;
  out.ridge = std::max(Scalar(1e-10), Scalar(1e3) * eps) * system.trace() / static_cast<Scalar>(n);
  system.diagonal().array() += out.ridge;
  if (accept(Eigen::LLT<Matrix<Scalar>>(system))) return out;
  throw NumericalError("solve_scores: ranking system is singular even after ridge " +
                       std::to_string(static_cast<double>(out.ridge)));
}

/// w_i = Phi_i f_i for every neighborhood; column i of the result is w_i.
template <typename Scalar>
Matrix<Scalar> recover_predictors(const std::vector<Matrix<Scalar>>& phi, const Vector<Scalar>& f,
                                  const NeighborhoodIndex& index) {
  const Index n = index.size();
  if (static_cast<Index>(phi.size()) != n || f.size() != n)
    throw DimensionError("recover_predictors: Phi count, score length, and index size must agree");
  if (n == 0) return {};
  const Index m = phi.front().rows();
  Matrix<Scalar> W(m, n);
  for (Index i = 0; i < n; ++i) {
    const auto& P = phi[static_cast<std::size_t>(i)];
    if (P.rows() != m || P.cols() != index.k()) throw DimensionError("recover_predictors: Phi_i must be m x k");
    W.col(i).noalias() = P * gather_local_scores(f, index, i);
  }
  return W;
}

/// g(S_i, f_i, w_i) = ||f_i - S_i' w_i||^2 + beta ||w_i||^2.
template <typename Scalar>
Scalar local_objective(const Matrix<Scalar>& local_codes, const Vector<Scalar>& local_scores,
                       const Vector<Scalar>& predictor, Scalar beta) {
  if (local_codes.cols() != local_scores.size() || local_codes.rows() != predictor.size())
    throw DimensionError("local_objective: S_i is " + std::to_string(local_codes.rows()) + "x" +
                         std::to_string(local_codes.cols()) + ", f_i has " + std::to_string(local_scores.size()) +
                         " entries, w_i has " + std::to_string(predictor.size()));
  return (local_scores - local_codes.transpose() * predictor).squaredNorm() + beta * predictor.squaredNorm();
}

}  // namespace lcrank
