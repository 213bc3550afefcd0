#include "lcrank/sparse_coder.hpp"
#include "oracles.hpp"

#include <doctest.h>

using namespace lcrank;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

Dictionary<double> dict_of(const MatrixXd& atoms, double C = 1.0) { return {atoms, C}; }

QuadL1Problem<double> random_problem(std::mt19937_64& rng, Index m, double alpha) {
  const Index rows = oracle::uniform_index(rng, 1, m + 2);
  const MatrixXd G = oracle::random_matrix(rng, rows, m);
  const VectorXd x = oracle::random_vector(rng, rows, 2.0);
  QuadL1Problem<double> p;
  p.A = G.transpose() * G;
  p.b = G.transpose() * x;
  p.c = x.squaredNorm();
  p.alpha = alpha;
  return p;
}

}  // namespace

TEST_CASE("scalar shrinkage") {
  const auto p = build_plain_problem<double>((VectorXd(1) << 2).finished(), dict_of(MatrixXd::Ones(1, 1)), 1.0);
  CHECK(p.A(0, 0) == 1);
  CHECK(p.b(0) == 2);
  const VectorXd s = feature_sign_solve(p, 1e-12);
  CHECK(s(0) == doctest::Approx(1.5).epsilon(1e-14));
}

TEST_CASE("alpha = 0 with identity is plain least squares") {
  QuadL1Problem<double> p;
  p.A = MatrixXd::Identity(2, 2);
  p.b = (VectorXd(2) << 3, -1).finished();
  const VectorXd s = feature_sign_solve(p, 1e-12);
  CHECK(s(0) == doctest::Approx(3));
  CHECK(s(1) == doctest::Approx(-1));
}

TEST_CASE("large alpha gives the zero code") {
  std::mt19937_64 rng(1);
  const MatrixXd D = oracle::random_matrix(rng, 4, 6);
  const VectorXd x = oracle::random_vector(rng, 4);
  const double alpha = 2 * (D.transpose() * x).cwiseAbs().maxCoeff() + 1e-9;
  const VectorXd s = feature_sign_solve(build_plain_problem<double>(x, dict_of(D), alpha), 1e-10);
  CHECK(s.isZero(0));
}

TEST_CASE("feature-sign matches coordinate descent on a 4x6 coding problem") {
  std::mt19937_64 rng(42);
  const MatrixXd D = oracle::random_matrix(rng, 4, 6);
  const VectorXd x = oracle::random_vector(rng, 4);
  const auto p = build_plain_problem<double>(x, dict_of(D), 0.3);
  const VectorXd s = feature_sign_solve(p, 1e-10);
  const VectorXd ref = oracle::coordinate_descent(p.A, p.b, p.alpha);
  CHECK(std::abs(p.objective(s) - oracle::quad_l1(p.A, p.b, p.c, p.alpha, ref)) <= 1e-6);
  CHECK(oracle::subgradient_violation(p.A, p.b, p.alpha, s) <= 1e-7);
}

TEST_CASE("optimality conditions and objective bounds on random problems") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    const Index m = oracle::uniform_index(rng, 1, 8);
    const auto p = random_problem(rng, m, oracle::uniform(rng, 0.0, 3.0));
    const VectorXd s = feature_sign_solve(p, 1e-10);
    CHECK(oracle::subgradient_violation(p.A, p.b, p.alpha, s) <= 1e-7);
    CHECK(p.objective(s) <= p.objective(VectorXd::Zero(m)) + 1e-12);
    Eigen::LDLT<MatrixXd> ldlt(p.A);
    if (Eigen::SelfAdjointEigenSolver<MatrixXd>(p.A).eigenvalues().minCoeff() > 1e-6) {
      const VectorXd ls = ldlt.solve(p.b);
      CHECK(p.objective(s) <= p.objective(ls) + 1e-9);
    }
  }
}

TEST_CASE("feature-sign rejects bad input") {
  QuadL1Problem<double> p;
  p.A = (MatrixXd(2, 2) << 1, 0, 0, -1).finished();
  p.b = (VectorXd(2) << 0, 1).finished();
  p.alpha = 0.1;
  CHECK_THROWS_AS(feature_sign_solve(p, 1e-10), NumericalError);

  p.A = (MatrixXd(2, 2) << 1, 0.5, 0, 1).finished();
  CHECK_THROWS_AS(feature_sign_solve(p, 1e-10), NumericalError);

  p.A = MatrixXd::Identity(2, 2);
  CHECK_THROWS_AS(feature_sign_solve(p, 0.0), Error);
  p.alpha = -1;
  CHECK_THROWS_AS(feature_sign_solve(p, 1e-10), Error);
  p.alpha = 0;
  p.b = VectorXd::Zero(3);
  CHECK_THROWS_AS(feature_sign_solve(p, 1e-10), DimensionError);
}

TEST_CASE("build_plain_problem") {
  const auto p = build_plain_problem<double>((VectorXd(2) << 1, 2).finished(), dict_of(MatrixXd::Identity(2, 2)), 0.5);
  CHECK(p.A == MatrixXd::Identity(2, 2));
  CHECK(p.b == (VectorXd(2) << 1, 2).finished());
  CHECK(p.c == 5);
  CHECK(p.alpha == 0.5);

  std::mt19937_64 rng(3);
  const MatrixXd D = oracle::random_matrix(rng, 3, 5);
  const auto zero = build_plain_problem<double>(VectorXd::Zero(3), dict_of(D), 0.7);
  CHECK(zero.b.isZero(0));
  CHECK(feature_sign_solve(zero, 1e-12).isZero(0));
  CHECK_THROWS_AS(build_plain_problem<double>(VectorXd::Zero(4), dict_of(D), 0.1), DimensionError);
}

TEST_CASE("plain problem objective equals the direct reconstruction objective") {
  std::mt19937_64 rng(9);
  const MatrixXd D = oracle::random_matrix(rng, 5, 4);
  const VectorXd x = oracle::random_vector(rng, 5);
  const double alpha = 0.4;
  const auto p = build_plain_problem<double>(x, dict_of(D), alpha);
  for (int trial = 0; trial < 100; ++trial) {
    const VectorXd s = oracle::random_vector(rng, 4);
    const double direct = (x - D * s).squaredNorm() + alpha * s.lpNorm<1>();
    CHECK(std::abs(p.objective(s) - direct) <= 1e-10 * (1 + direct));
  }
}

TEST_CASE("augmented problem") {
  const auto dict = dict_of(MatrixXd::Ones(1, 1), 10.0);
  const VectorXd x = VectorXd::Ones(1);

  SUBCASE("no owners or gamma = 0 is the plain problem") {
    const auto plain = build_plain_problem<double>(x, dict, 0.2);
    const auto none = build_augmented_problem<double>(x, dict, 0.2, 2.0, 3.0, MatrixXd(1, 0));
    const auto g0 = build_augmented_problem<double>(x, dict, 0.2, 0.0, 3.0, MatrixXd::Ones(1, 2));
    for (const auto* p : {&none, &g0}) {
      CHECK(p->A == plain.A);
      CHECK(p->b == plain.b);
      CHECK(p->c == plain.c);
    }
  }

  SUBCASE("scalar quadratic with one owner") {
    const auto p = build_augmented_problem<double>(x, dict, 0.0, 2.0, 3.0, MatrixXd::Ones(1, 1));
    CHECK(p.A(0, 0) == 3);
    CHECK(p.b(0) == 7);
    CHECK(feature_sign_solve(p, 1e-12)(0) == doctest::Approx(7.0 / 3.0).epsilon(1e-14));
  }

  SUBCASE("quadratic form equals the explicit ranking-augmented sum") {
    std::mt19937_64 rng(13);
    const Index d = 4, m = 5, owners = 3;
    const auto D = dict_of(oracle::random_matrix(rng, d, m));
    const VectorXd xi = oracle::random_vector(rng, d);
    const MatrixXd W = oracle::random_matrix(rng, m, owners);
    const double alpha = 0.3, gamma = 1.7, fi = 0.8;
    const auto p = build_augmented_problem<double>(xi, D, alpha, gamma, fi, W);
    for (int trial = 0; trial < 100; ++trial) {
      const VectorXd s = oracle::random_vector(rng, m);
      double direct = (xi - D.atoms * s).squaredNorm() + alpha * s.lpNorm<1>();
      for (Index j = 0; j < owners; ++j) direct += gamma * std::pow(fi - W.col(j).dot(s), 2);
      CHECK(std::abs(p.objective(s) - direct) <= 1e-10 * (1 + direct));
    }
  }

  CHECK_THROWS_AS(build_augmented_problem<double>(x, dict, 0.1, 1.0, 1.0, MatrixXd::Ones(2, 1)), DimensionError);
}

TEST_CASE("coding objective") {
  std::mt19937_64 rng(21);
  const MatrixXd X = oracle::random_matrix(rng, 3, 6);
  const auto D = dict_of(oracle::random_matrix(rng, 3, 4));
  CHECK(coding_objective<double>(X, D, MatrixXd::Zero(4, 6), 0.5) == doctest::Approx(X.squaredNorm()));
  CHECK(coding_objective<double>(X, dict_of(MatrixXd::Identity(3, 3)), X, 0.0) == 0.0);

  const MatrixXd S = oracle::random_matrix(rng, 4, 6);
  double naive = 0;
  for (Index i = 0; i < 6; ++i) naive += (X.col(i) - D.atoms * S.col(i)).squaredNorm() + 0.25 * S.col(i).lpNorm<1>();
  CHECK(std::abs(coding_objective<double>(X, D, S, 0.25) - naive) <= 1e-12 * (1 + naive));
  CHECK_THROWS_AS(coding_objective<double>(X, D, MatrixXd::Zero(3, 6), 0.1), DimensionError);
}

namespace {

void check_kkt(const DictionaryUpdate<double>& u, double C, double tol) {
  for (Index l = 0; l < u.dictionary.size(); ++l) {
    const double norm2 = u.dictionary.atoms.col(l).squaredNorm();
    CHECK(u.multipliers(l) >= 0);
    CHECK(norm2 <= C + tol);
    CHECK(std::abs(u.multipliers(l) * (norm2 - C)) <= tol);
  }
}

}  // namespace

TEST_CASE("dictionary update with an inactive constraint reproduces X") {
  std::mt19937_64 rng(31);
  const MatrixXd X = oracle::random_matrix(rng, 3, 4);
  const double C = X.colwise().squaredNorm().maxCoeff() + 1.0;
  const auto u = dictionary_update<double>(X, MatrixXd::Identity(4, 4), C, 1e-10);
  CHECK((u.dictionary.atoms - X).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK(u.multipliers.isZero(0));
  check_kkt(u, C, 1e-9);
}

TEST_CASE("dictionary update projects a single codeword onto the ball") {
  const VectorXd x = (VectorXd(3) << 3, 4, 12).finished();  // norm 13
  const double C = 4;
  const auto u = dictionary_update<double>(MatrixXd(x), MatrixXd::Ones(1, 1), C, 1e-10);
  const VectorXd expected = x * std::sqrt(C) / x.norm();
  CHECK((u.dictionary.atoms.col(0) - expected).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK(u.multipliers(0) == doctest::Approx(13.0 / 2.0 - 1.0).epsilon(1e-8));
}

TEST_CASE("dictionary update matches the projected-gradient oracle") {
  std::mt19937_64 rng(37);
  for (int trial = 0; trial < 10; ++trial) {
    const MatrixXd X = oracle::random_matrix(rng, 3, 8, 2.0);
    const MatrixXd S = oracle::random_matrix(rng, 4, 8);
    const auto u = dictionary_update<double>(X, S, 1.0, 1e-10);
    check_kkt(u, 1.0, 1e-8);
    const MatrixXd ref = oracle::projected_gradient_dictionary(X, S, 1.0, 50000);
    CHECK(oracle::reconstruction(X, u.dictionary.atoms, S) <= oracle::reconstruction(X, ref, S) + 1e-5);
    CHECK(std::abs(oracle::reconstruction(X, u.dictionary.atoms, S) - oracle::reconstruction(X, ref, S)) <= 1e-5);
  }
}

TEST_CASE("bisection fallback reaches the same dictionary") {
  std::mt19937_64 rng(41);
  const MatrixXd X = oracle::random_matrix(rng, 3, 8, 2.0);
  const MatrixXd S = oracle::random_matrix(rng, 4, 8);
  DictionaryUpdateOptions opts;
  opts.force_bisection = true;
  const auto bis = dictionary_update<double>(X, S, 1.0, 1e-10, MatrixXd(), opts);
  const auto newton = dictionary_update<double>(X, S, 1.0, 1e-10);
  CHECK(bis.used_bisection);
  CHECK(!newton.used_bisection);
  check_kkt(bis, 1.0, 1e-8);
  CHECK(std::abs(oracle::reconstruction(X, bis.dictionary.atoms, S) - oracle::reconstruction(X, newton.dictionary.atoms, S)) <=
        1e-7);
}

TEST_CASE("codewords without data keep their previous value") {
  std::mt19937_64 rng(43);
  const MatrixXd X = oracle::random_matrix(rng, 3, 6);
  MatrixXd S = oracle::random_matrix(rng, 3, 6);
  S.row(1).setZero();
  const MatrixXd previous = oracle::random_matrix(rng, 3, 3) * 0.1;
  const auto u = dictionary_update<double>(X, S, 1.0, 1e-10, previous);
  CHECK(u.dictionary.atoms.col(1) == previous.col(1));
  CHECK(u.multipliers(1) == 0);
  CHECK(!u.degenerate);

  const auto fresh = dictionary_update<double>(X, S, 1.0, 1e-10);
  CHECK(fresh.dictionary.atoms.col(1).isZero(0));
}

TEST_CASE("rank-deficient codes are reported and still feasible") {
  std::mt19937_64 rng(47);
  const MatrixXd X = oracle::random_matrix(rng, 3, 2);
  const MatrixXd S = oracle::random_matrix(rng, 4, 2);  // S S' has rank 2 < 4
  const auto u = dictionary_update<double>(X, S, 100.0, 1e-9);
  CHECK(u.degenerate);
  CHECK(u.dictionary.atoms.allFinite());
  for (Index l = 0; l < 4; ++l) CHECK(u.dictionary.atoms.col(l).squaredNorm() <= 100.0 + 1e-9);
  // Inactive constraint and exact fit: the ridge solution reconstructs X.
  CHECK(oracle::reconstruction(X, u.dictionary.atoms, S) <= 1e-6);
}

TEST_CASE("dictionary update never increases the reconstruction error") {
  std::mt19937_64 rng(53);
  for (int trial = 0; trial < 20; ++trial) {
    const Index d = oracle::uniform_index(rng, 1, 5), m = oracle::uniform_index(rng, 1, 6);
    const Index n = oracle::uniform_index(rng, m, 12);
    const MatrixXd X = oracle::random_matrix(rng, d, n, 2.0);
    const MatrixXd S = oracle::random_matrix(rng, m, n);
    const double C = oracle::uniform(rng, 0.2, 3.0);
    MatrixXd prev = oracle::random_matrix(rng, d, m);
    for (Index l = 0; l < m; ++l) prev.col(l) *= std::sqrt(C) / prev.col(l).norm() * oracle::uniform(rng, 0.1, 1.0);
    const auto u = dictionary_update<double>(X, S, C, 1e-10, prev);
    check_kkt(u, C, 1e-7);
    CHECK(oracle::reconstruction(X, u.dictionary.atoms, S) <= oracle::reconstruction(X, prev, S) + 1e-9);
  }
}

TEST_CASE("dictionary update argument checks") {
  const MatrixXd X = MatrixXd::Ones(2, 3);
  CHECK_THROWS_AS(dictionary_update<double>(X, MatrixXd::Ones(2, 4), 1.0, 1e-9), DimensionError);
  CHECK_THROWS_AS(dictionary_update<double>(X, MatrixXd::Ones(2, 3), 0.0, 1e-9), Error);
  CHECK_THROWS_AS(dictionary_update<double>(X, MatrixXd::Ones(2, 3), 1.0, 1e-9, MatrixXd::Ones(3, 3)),
                  DimensionError);
}
