#pragma once

#include "lcrank/dataset_io.hpp"
#include "lcrank/local_ranker.hpp"
#include "lcrank/neighbors.hpp"
#include "lcrank/parallel.hpp"
#include "lcrank/sparse_coder.hpp"
#include "lcrank/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace lcrank {

/// Tradeoffs and sizes of the joint coding/ranking objective.
///
/// `m`, `k` and `xi` depend on the data when left unset: m = min(2d, n),
/// k = min(10, n), xi = 1e-6 * n.
template <typename Scalar>
struct Hyperparams {
  Scalar alpha = Scalar(0.1);  // L1 weight on codes
  Scalar beta = Scalar(1);     // ridge on local predictors
  Scalar gamma = Scalar(1);    // local ranking term
  Scalar delta = Scalar(10);   // query anchoring term
  Scalar y = Scalar(1);        // anchor value for query scores
  Scalar C = Scalar(1);        // codeword squared-norm bound
  std::optional<Index> m;
  std::optional<Index> k;
  std::optional<Scalar> xi;
  int T = 50;
  std::uint64_t seed = 0;

  Scalar coding_tol = Scalar(1e-9);
  Scalar dictionary_tol = Scalar(1e-9);
  int threads = 0;

  Index resolved_m(Index n, Index d) const { return m.value_or(std::min<Index>(2 * d, n)); }
  Index resolved_k(Index n) const { return k.value_or(std::min<Index>(10, n)); }
  Scalar resolved_xi(Index n) const { return xi.value_or(Scalar(1e-6) * static_cast<Scalar>(n)); }

  /// Throws Error naming the first field that violates its constraint.
  void validate() const {
    auto require = [](bool ok, const char* message) {
      if (!ok) throw Error(message);
    };
    require(alpha >= Scalar(0), "alpha must be >= 0");
    require(beta > Scalar(0), "beta must be > 0");
    require(gamma >= Scalar(0), "gamma must be >= 0");
    require(delta > Scalar(0), "delta must be > 0");
    require(y > Scalar(0), "y must be > 0");
    require(C > Scalar(0), "C must be > 0");
    require(!m || *m >= 1, "m must be >= 1");
    require(!k || *k >= 1, "k must be >= 1");
    require(!xi || *xi > Scalar(0), "xi must be > 0");
    require(T >= 1, "T must be >= 1");
    require(coding_tol > Scalar(0), "coding_tol must be > 0");
    require(dictionary_tol > Scalar(0), "dictionary_tol must be > 0");
    require(threads >= 0, "threads must be >= 0");
  }
};

template <typename Scalar>
struct ObjectiveTerms {
  Scalar coding = 0;   // sum ||x_i - D s_i||^2 + alpha ||s_i||_1
  Scalar ranking = 0;  // gamma * sum_i g(S_i, f_i, w_i)
  Scalar query = 0;    // delta * sum_i lambda_i (f_i - y)^2
  Scalar total = 0;
};

template <typename Scalar>
struct ModelState {
  Dictionary<Scalar> D;
  Matrix<Scalar> S;  // m x n codes
  ScoreVector<Scalar> f;
  Matrix<Scalar> W;  // m x n, column i is w_i
  int iteration = 0;
  Scalar objective = 0;
};

template <typename Scalar>
struct TraceRow {
  int iteration = 0;
  ObjectiveTerms<Scalar> terms;   // after the dictionary update
  std::optional<Scalar> delta;    // |O(t) - O(t-1)|, absent for t = 1
  Scalar after_predictors = 0;    // objective once f and w are updated
  Scalar after_codes = 0;         // objective once the codes are updated
  Scalar eliminated = 0;          // objective with w re-solved for the final codes
  bool scores_regularized = false;
  bool dictionary_degenerate = false;
};

template <typename Scalar>
struct ConvergenceTrace {
  Scalar initial_objective = 0;
  std::vector<TraceRow<Scalar>> rows;
  std::vector<std::string> warnings;
  bool converged = false;  // stopped on the tolerance rather than on T

  std::vector<TraceRecord> records() const {
    std::vector<TraceRecord> out;
    out.reserve(rows.size());
    for (const auto& r : rows) {
      TraceRecord rec;
      rec.iteration = r.iteration;
      rec.objective = static_cast<double>(r.terms.total);
      if (r.delta) rec.delta = static_cast<double>(*r.delta);
      out.push_back(rec);
    }
    return out;
  }
};

/// Full objective for the given state, with w taken from state.W as is.
template <typename Scalar>
ObjectiveTerms<Scalar> evaluate_objective(const ModelState<Scalar>& state, const Matrix<Scalar>& X,
                                          const QueryIndicator& queries, const NeighborhoodIndex& index,
                                          const Hyperparams<Scalar>& hp) {
  const Index n = X.cols();
  if (state.S.cols() != n || state.f.size() != n || queries.size() != n || index.size() != n ||
      state.W.cols() != n || state.W.rows() != state.S.rows())
    throw DimensionError("evaluate_objective: state, data, queries and index disagree on n or m");

  ObjectiveTerms<Scalar> t;
  t.coding = coding_objective(X, state.D, state.S, hp.alpha);
  if (hp.gamma != Scalar(0)) {
    Scalar sum = 0;
    for (Index i = 0; i < n; ++i)
      sum += local_objective<Scalar>(gather_local_codes(state.S, index, i), gather_local_scores(state.f.f, index, i),
                                     state.W.col(i), hp.beta);
    t.ranking = hp.gamma * sum;
  }
  const Vector<Scalar> lam = queries.template as<Scalar>();
  t.query = hp.delta * lam.dot((state.f.f.array() - hp.y).square().matrix());
  t.total = t.coding + t.ranking + t.query;
  return t;
}

template <typename Scalar>
ObjectiveTerms<Scalar> evaluate_objective(const ModelState<Scalar>& state, const DataSet& data,
                                          const QueryIndicator& queries, const NeighborhoodIndex& index,
                                          const Hyperparams<Scalar>& hp) {
  return evaluate_objective<Scalar>(state, data.points.transpose().cast<Scalar>(), queries, index, hp);
}

/// Starting point: codewords are m distinct data points drawn with `seed`
/// (scaled into the norm ball), codes solve the plain lasso, queries score y
/// and everything else 0, predictors are 0.
template <typename Scalar>
ModelState<Scalar> initialize(const DataSet& data, const QueryIndicator& queries, const Hyperparams<Scalar>& hp,
                              std::vector<std::string>* warnings = nullptr) {
  hp.validate();
  const Index n = data.size(), d = data.dim();
  if (n < 1 || d < 1) throw Error("initialize: dataset is empty");
  if (queries.size() != n) throw DimensionError("initialize: query indicator length differs from n");
  const Index m = hp.resolved_m(n, d);
  if (m < 1) throw Error("m must be >= 1");

  const Matrix<Scalar> X = data.points.transpose().cast<Scalar>();
  std::mt19937_64 rng(hp.seed);

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index(0));
  const Index picked = std::min(m, n);
  for (Index l = 0; l < picked; ++l) {
    std::uniform_int_distribution<Index> pick(l, n - 1);
    std::swap(order[static_cast<std::size_t>(l)], order[static_cast<std::size_t>(pick(rng))]);
  }

  ModelState<Scalar> state;
  state.D.C = hp.C;
  state.D.atoms.resize(d, m);
  for (Index l = 0; l < picked; ++l) state.D.atoms.col(l) = X.col(order[static_cast<std::size_t>(l)]);
  if (m > n) {
    if (warnings)
      warnings->push_back("m = " + std::to_string(m) + " exceeds n = " + std::to_string(n) +
                          "; extra codewords start as random directions");
    std::normal_distribution<double> normal;
    for (Index l = picked; l < m; ++l)
      for (Index r = 0; r < d; ++r) state.D.atoms(r, l) = static_cast<Scalar>(normal(rng));
  }
  for (Index l = 0; l < m; ++l) {
    const Scalar norm2 = state.D.atoms.col(l).squaredNorm();
    const Scalar target = l < picked ? std::min(norm2, hp.C) : hp.C;
    if (norm2 > Scalar(0) && norm2 != target) state.D.atoms.col(l) *= std::sqrt(target / norm2);
  }

  state.S.resize(m, n);
  parallel_for(n, hp.threads, [&](Index i) {
    const Vector<Scalar> x = X.col(i);
    state.S.col(i) = feature_sign_solve(build_plain_problem<Scalar>(x, state.D, hp.alpha), hp.coding_tol);
  });
  state.f.y = hp.y;
  state.f.f = hp.y * queries.template as<Scalar>();
  state.W = Matrix<Scalar>::Zero(m, n);
  return state;
}

/// Alternating minimization over (f, w), codes, and dictionary.
///
/// Each iteration runs, in order: local operators from the current codes,
/// ranking scores, local predictors, codes one point at a time with w and f
/// frozen, then the dictionary. The step methods are public so callers can
/// inspect the state between blocks.
template <typename Scalar>
class JointSolver {
 public:
  JointSolver(const DataSet& data, const QueryIndicator& queries, Hyperparams<Scalar> hp)
      : hp_(std::move(hp)), queries_(queries) {
    validate(data);
    hp_.validate();
    if (queries.size() != data.size()) throw DimensionError("query indicator length differs from n");
    if (queries.count() < 1) throw Error("at least one query is required");
    X_ = data.points.transpose().cast<Scalar>();
    index_ = build_knn(data.points, hp_.resolved_k(data.size()), hp_.threads);
    owners_ = owners(index_);
    state_ = initialize(data, queries, hp_, &trace_.warnings);
    trace_.initial_objective = objective().total;
    last_objective_ = trace_.initial_objective;
  }

  const ModelState<Scalar>& state() const { return state_; }
  const NeighborhoodIndex& index() const { return index_; }
  const LocalRankingCache<Scalar>& cache() const { return cache_; }
  const ConvergenceTrace<Scalar>& trace() const { return trace_; }
  const Hyperparams<Scalar>& hyperparams() const { return hp_; }
  const Matrix<Scalar>& points() const { return X_; }
  const QueryIndicator& queries() const { return queries_; }
  const DictionaryUpdate<Scalar>& last_dictionary_update() const { return last_dictionary_; }

  ObjectiveTerms<Scalar> objective() const { return evaluate_objective(state_, X_, queries_, index_, hp_); }

  /// Phi_i and L_i from the current codes, and the assembled M.
  void update_local_operators() { cache_ = build_local_cache(state_.S, index_, hp_.beta, hp_.threads); }

  void update_scores() { state_.f = solve_scores(cache_.M, queries_, hp_.y, hp_.gamma, hp_.delta); }

  void update_predictors() { state_.W = recover_predictors(cache_.phi, state_.f.f, index_); }

  /// Codes in index order; point i sees w_j for every j with i in N_j.
  void update_codes() {
    const Index n = X_.cols();
    parallel_for(n, hp_.threads, [&](Index i) {
      const auto& own = owners_[static_cast<std::size_t>(i)];
      const IndexVector oi = Eigen::Map<const IndexVector>(own.data(), static_cast<Index>(own.size()));
      const Matrix<Scalar> Wo = state_.W(Eigen::all, oi);
      const Vector<Scalar> x = X_.col(i);
      state_.S.col(i) = feature_sign_solve(
          build_augmented_problem<Scalar>(x, state_.D, hp_.alpha, hp_.gamma, state_.f.f(i), Wo), hp_.coding_tol);
    });
  }

  void update_dictionary() {
    last_dictionary_ = dictionary_update<Scalar>(X_, state_.S, hp_.C, hp_.dictionary_tol, state_.D.atoms);
    state_.D = last_dictionary_.dictionary;
  }

  /// One outer iteration. Returns true when the stopping rule fires.
  bool iterate() {
    const int t = state_.iteration + 1;
    TraceRow<Scalar> row;
    row.iteration = t;

    run_step(t, 1, "local operators", [&] {
      if (!cache_valid_) update_local_operators();
    });
    run_step(t, 2, "ranking scores", [&] { update_scores(); });
    run_step(t, 3, "local predictors", [&] { update_predictors(); });
    row.scores_regularized = state_.f.regularized;
    row.after_predictors = objective().total;
    run_step(t, 4, "sparse codes", [&] { update_codes(); });
    row.after_codes = objective().total;
    run_step(t, 5, "dictionary", [&] { update_dictionary(); });
    row.dictionary_degenerate = last_dictionary_.degenerate;

    row.terms = objective();
    state_.iteration = t;
    state_.objective = row.terms.total;

    // Next iteration's operators; also gives the objective with w re-solved.
    run_step(t, 1, "local operators", [&] { update_local_operators(); });
    cache_valid_ = true;
    const Vector<Scalar> lam = queries_.template as<Scalar>();
    row.eliminated = row.terms.coding + hp_.gamma * state_.f.f.dot(cache_.M * state_.f.f) +
                     hp_.delta * lam.dot((state_.f.f.array() - hp_.y).square().matrix());
    if (!trace_.rows.empty()) {
      const Scalar prev = trace_.rows.back().eliminated;
      if (row.eliminated > prev + Scalar(1e-8) * (Scalar(1) + std::abs(prev)))
        trace_.warnings.push_back("iteration " + std::to_string(t) + ": objective with re-solved predictors rose from " +
                                  std::to_string(static_cast<double>(prev)) + " to " +
                                  std::to_string(static_cast<double>(row.eliminated)));
    }

    bool stop = t >= hp_.T;
    if (t >= 2) {
      row.delta = std::abs(row.terms.total - last_objective_);
      if (*row.delta <= hp_.resolved_xi(X_.cols())) {
        stop = true;
        trace_.converged = true;
      }
    }
    last_objective_ = row.terms.total;
    trace_.rows.push_back(row);
    return stop;
  }

  void run() {
    while (!iterate()) {
    }
  }

 private:
  template <typename Step>
  void run_step(int iteration, int step, const char* name, Step&& body) {
    try {
      body();
    } catch (const NumericalError& e) {
      throw NumericalError("iteration " + std::to_string(iteration) + ", step " + std::to_string(step) + " (" + name +
                           "): " + e.what());
    } catch (const Error& e) {
      throw Error("iteration " + std::to_string(iteration) + ", step " + std::to_string(step) + " (" + name +
                  "): " + e.what());
    }
  }

  Hyperparams<Scalar> hp_;
  QueryIndicator queries_;
  Matrix<Scalar> X_;
  NeighborhoodIndex index_;
  std::vector<std::vector<Index>> owners_;
  ModelState<Scalar> state_;
  LocalRankingCache<Scalar> cache_;
  bool cache_valid_ = false;
  DictionaryUpdate<Scalar> last_dictionary_;
  ConvergenceTrace<Scalar> trace_;
  Scalar last_objective_ = 0;
};

template <typename Scalar>
struct FitResult {
  ModelState<Scalar> state;
  ConvergenceTrace<Scalar> trace;
  NeighborhoodIndex index;
};

template <typename Scalar = double>
FitResult<Scalar> fit(const DataSet& data, const QueryIndicator& queries, const Hyperparams<Scalar>& hp) {
  JointSolver<Scalar> solver(data, queries, hp);
  solver.run();
  return {solver.state(), solver.trace(), solver.index()};
}

/// Points sorted by score, highest first; equal scores keep index order.
template <typename Scalar>
RankedResult rank(const ScoreVector<Scalar>& scores, const QueryIndicator& queries, const std::vector<std::string>& ids,
                  bool exclude_queries) {
  const Index n = scores.size();
  if (queries.size() != n || static_cast<Index>(ids.size()) != n)
    throw DimensionError("rank: scores, queries and ids must have the same length");
  if (!scores.f.allFinite()) throw NumericalError("rank: scores contain NaN or Inf");
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index(0));
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return scores.f(a) > scores.f(b); });

  RankedResult result;
  result.queries_excluded = exclude_queries;
  for (Index i : order) {
    if (exclude_queries && queries(i)) continue;
    result.entries.push_back({ids[static_cast<std::size_t>(i)], static_cast<double>(scores.f(i)), queries(i)});
  }
  return result;
}

}  // namespace lcrank
