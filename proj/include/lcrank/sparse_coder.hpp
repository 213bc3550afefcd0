#pragma once

#include "lcrank/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace lcrank {

/// d x m codebook whose columns obey ||d_l||^2 <= C.
template <typename Scalar>
struct Dictionary {
  Matrix<Scalar> atoms;
  Scalar C = Scalar(1);

  Index dim() const { return atoms.rows(); }
  Index size() const { return atoms.cols(); }
};

/// Canonical coding problem: minimize s'As - 2b's + c + alpha*||s||_1.
///
/// Both the plain reconstruction problem and the ranking-augmented one reduce
/// to this form, so a single feature-sign solver serves both.
template <typename Scalar>
struct QuadL1Problem {
  Matrix<Scalar> A;
  Vector<Scalar> b;
  Scalar c = Scalar(0);
  Scalar alpha = Scalar(0);

  Index size() const { return b.size(); }

  template <typename Derived>
  Scalar objective(const Eigen::MatrixBase<Derived>& s) const {
    return s.dot(A * s) - Scalar(2) * b.dot(s) + c + alpha * s.template lpNorm<1>();
  }

  /// Gradient of the smooth part, 2(As - b).
  template <typename Derived>
  Vector<Scalar> gradient(const Eigen::MatrixBase<Derived>& s) const {
    return Scalar(2) * (A * s - b);
  }
};

template <typename Scalar>
QuadL1Problem<Scalar> build_plain_problem(const Vector<Scalar>& x, const Dictionary<Scalar>& dict, Scalar alpha) {
  if (x.size() != dict.dim())
    throw DimensionError("build_plain_problem: point has dimension " + std::to_string(x.size()) +
                         " but dictionary has " + std::to_string(dict.dim()));
  QuadL1Problem<Scalar> p;
  p.A.noalias() = dict.atoms.transpose() * dict.atoms;
  p.b.noalias() = dict.atoms.transpose() * x;
  p.c = x.squaredNorm();
  p.alpha = alpha;
  return p;
}

/// Coding problem for point i with the local predictors frozen.
///
/// `owner_predictors` holds one column w_j per neighborhood N_j containing
/// point i. Equivalent to stacking rows sqrt(gamma)*w_j' under D with targets
/// sqrt(gamma)*f_i under x.
template <typename Scalar>
QuadL1Problem<Scalar> build_augmented_problem(const Vector<Scalar>& x, const Dictionary<Scalar>& dict, Scalar alpha,
                                              Scalar gamma, Scalar score, const Matrix<Scalar>& owner_predictors) {
  auto p = build_plain_problem(x, dict, alpha);
  if (owner_predictors.cols() == 0 || gamma == Scalar(0)) return p;
  if (owner_predictors.rows() != dict.size())
    throw DimensionError("build_augmented_problem: predictor length " + std::to_string(owner_predictors.rows()) +
                         " differs from dictionary size " + std::to_string(dict.size()));
  const auto count = static_cast<Scalar>(owner_predictors.cols());
  p.A.noalias() += gamma * owner_predictors * owner_predictors.transpose();
  p.b.noalias() += (gamma * score) * owner_predictors.rowwise().sum();
  p.c += gamma * count * score * score;
  return p;
}

namespace detail {

template <typename Scalar>
Scalar sign(Scalar v) {
  return v > Scalar(0) ? Scalar(1) : (v < Scalar(0) ? Scalar(-1) : Scalar(0));
}

/// Largest |2(As-b)_j + alpha*sign(s_j)| over the nonzero coefficients.
template <typename Scalar>
Scalar nonzero_violation(const QuadL1Problem<Scalar>& p, const Vector<Scalar>& s, const Vector<Scalar>& grad) {
  Scalar worst = 0;
  for (Index j = 0; j < s.size(); ++j)
    if (s(j) != Scalar(0)) worst = std::max(worst, std::abs(grad(j) + p.alpha * sign(s(j))));
  return worst;
}

/// One feature-sign step on the active set. Returns false when no
/// objective-decreasing move exists.
template <typename Scalar>
bool feature_sign_step(const QuadL1Problem<Scalar>& p, Vector<Scalar>& s, Vector<Scalar>& theta,
                       std::vector<Index>& active) {
  const auto na = static_cast<Index>(active.size());
  const IndexVector idx = Eigen::Map<const IndexVector>(active.data(), na);
  const Matrix<Scalar> A_aa = p.A(idx, idx);
  const Vector<Scalar> s_a = s(idx);
  const Vector<Scalar> th = theta(idx);
  const Vector<Scalar> rhs = p.b(idx) - (p.alpha / Scalar(2)) * th;

  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(A_aa);
  if (eig.info() != Eigen::Success) throw NumericalError("feature_sign_solve: eigendecomposition failed");
  const Vector<Scalar>& ev = eig.eigenvalues();
  const Matrix<Scalar>& U = eig.eigenvectors();
  const Scalar scale = std::max(Scalar(1), ev.cwiseAbs().maxCoeff());
  const Scalar rank_tol = Scalar(10) * std::numeric_limits<Scalar>::epsilon() * scale * static_cast<Scalar>(na);
  if (ev.minCoeff() < -rank_tol)
    throw NumericalError("feature_sign_solve: quadratic term is not positive semidefinite (eigenvalue " +
                         std::to_string(static_cast<double>(ev.minCoeff())) + " on the active set)");

  // Split the face into the range of A_aa and its null space.
  Vector<Scalar> null_theta = Vector<Scalar>::Zero(na);
  Vector<Scalar> null_s = Vector<Scalar>::Zero(na);
  Vector<Scalar> target = Vector<Scalar>::Zero(na);
  for (Index q = 0; q < na; ++q) {
    const auto u = U.col(q);
    if (ev(q) > rank_tol) {
      target += (u.dot(rhs) / ev(q)) * u;
    } else {
      null_theta += u.dot(th) * u;
      null_s += u.dot(s_a) * u;
    }
  }

  std::vector<Vector<Scalar>> candidates;
  if (p.alpha * null_theta.norm() > rank_tol) {
    // The sign-linearized objective is unbounded along -null_theta: it falls
    // linearly until a coefficient reaches zero.
    const Vector<Scalar> dir = -null_theta;
    Scalar t_hit = std::numeric_limits<Scalar>::infinity();
    Index hit = -1;
    for (Index j = 0; j < na; ++j) {
      if (th(j) * dir(j) >= Scalar(0)) continue;
      const Scalar t = -s_a(j) / dir(j);
      if (t < t_hit) {
        t_hit = t;
        hit = j;
      }
    }
    if (hit < 0 || !(t_hit > Scalar(0))) {
      // Stuck on the face boundary: drop the blocking coefficient.
      if (hit < 0) return false;
      s(idx(hit)) = 0;
      theta(idx(hit)) = 0;
      active.erase(active.begin() + hit);
      return true;
    }
    Vector<Scalar> next = s_a + t_hit * dir;
    next(hit) = 0;
    candidates.push_back(std::move(next));
  } else {
    const Vector<Scalar> s_new = target + null_s;
    candidates.push_back(s_new);
    for (Index j = 0; j < na; ++j) {
      if (s_a(j) == Scalar(0) || sign(s_new(j)) == sign(s_a(j))) continue;
      const Scalar t = s_a(j) / (s_a(j) - s_new(j));
      Vector<Scalar> mid = s_a + t * (s_new - s_a);
      mid(j) = 0;
      candidates.push_back(std::move(mid));
    }
  }

  Vector<Scalar> trial = s;
  const Scalar current = p.objective(s);
  Scalar best_value = current;
  Index best = -1;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    trial(idx) = candidates[c];
    const Scalar value = p.objective(trial);
    if (value < best_value) {
      best_value = value;
      best = static_cast<Index>(c);
    }
  }
  if (best < 0) return false;

  s(idx) = candidates[static_cast<std::size_t>(best)];
  std::vector<Index> still_active;
  for (Index j : active) {
    theta(j) = sign(s(j));
    if (s(j) != Scalar(0)) still_active.push_back(j);
  }
  active.swap(still_active);
  return true;
}

}  // namespace detail

/// Feature-sign search for the quadratic-plus-L1 problem.
///
/// Returns s with |2(As-b)_j| <= alpha + tol where s_j = 0 and
/// |2(As-b)_j + alpha*sign(s_j)| <= tol elsewhere. `tol` is raised to a
/// small multiple of machine precision times the problem scale.
template <typename Scalar>
Vector<Scalar> feature_sign_solve(const QuadL1Problem<Scalar>& p, Scalar tol) {
  const Index m = p.size();
  if (p.A.rows() != m || p.A.cols() != m) throw DimensionError("feature_sign_solve: A must be m x m with m = |b|");
  if (!(tol > Scalar(0))) throw Error("feature_sign_solve: tol must be > 0");
  if (p.alpha < Scalar(0)) throw Error("feature_sign_solve: alpha must be >= 0");
  const Scalar a_scale = std::max(Scalar(1), p.A.cwiseAbs().maxCoeff());
  if ((p.A - p.A.transpose()).cwiseAbs().maxCoeff() > Scalar(1e-10) * a_scale)
    throw NumericalError("feature_sign_solve: A is not symmetric");

  const Scalar b_scale = m > 0 ? p.b.cwiseAbs().maxCoeff() : Scalar(0);
  tol = std::max(tol, Scalar(100) * std::numeric_limits<Scalar>::epsilon() * (a_scale + b_scale + p.alpha) *
                          static_cast<Scalar>(std::max<Index>(m, 1)));

  Vector<Scalar> s = Vector<Scalar>::Zero(m);
  Vector<Scalar> theta = Vector<Scalar>::Zero(m);
  std::vector<Index> active;
  const Index max_sweeps = std::max<Index>(10 * m, 10);

  for (Index sweep = 0; sweep < max_sweeps; ++sweep) {
    Vector<Scalar> grad = p.gradient(s);
    Index pick = -1;
    Scalar pick_value = 0;
    for (Index j = 0; j < m; ++j) {
      if (s(j) != Scalar(0)) continue;
      if (std::abs(grad(j)) > pick_value) {
        pick_value = std::abs(grad(j));
        pick = j;
      }
    }
    if (pick < 0 || pick_value <= p.alpha + tol) return s;

    theta(pick) = grad(pick) > Scalar(0) ? Scalar(-1) : Scalar(1);
    if (std::find(active.begin(), active.end(), pick) == active.end()) active.push_back(pick);

    bool settled = false;
    for (Index step = 0; step < max_sweeps; ++step) {
      if (active.empty()) {
        settled = true;
        break;
      }
      const bool moved = detail::feature_sign_step(p, s, theta, active);
      grad = p.gradient(s);
      if (detail::nonzero_violation(p, s, grad) <= tol) {
        settled = true;
        break;
      }
      if (!moved) break;
    }
    if (!settled)
      throw NumericalError("feature_sign_solve: active-set step did not converge (sweep " + std::to_string(sweep) +
                           ")");
    // Drop activated-but-zero coefficients before the next selection.
    std::erase_if(active, [&](Index j) { return s(j) == Scalar(0); });
    for (Index j = 0; j < m; ++j)
      if (s(j) == Scalar(0)) theta(j) = 0;
  }
  throw NumericalError("feature_sign_solve: no convergence after " + std::to_string(max_sweeps) + " sweeps");
}

/// sum_i ||x_i - D s_i||^2 + alpha*||s_i||_1 over the columns of X and S.
template <typename Scalar>
Scalar coding_objective(const Matrix<Scalar>& X, const Dictionary<Scalar>& dict, const Matrix<Scalar>& S, Scalar alpha) {
  if (X.rows() != dict.dim() || S.rows() != dict.size() || X.cols() != S.cols())
    throw DimensionError("coding_objective: X is " + std::to_string(X.rows()) + "x" + std::to_string(X.cols()) +
                         ", D is " + std::to_string(dict.dim()) + "x" + std::to_string(dict.size()) + ", S is " +
                         std::to_string(S.rows()) + "x" + std::to_string(S.cols()));
  return (X - dict.atoms * S).squaredNorm() + alpha * S.cwiseAbs().sum();
}

template <typename Scalar>
struct DictionaryUpdate {
  Dictionary<Scalar> dictionary;
  Vector<Scalar> multipliers;  // one per codeword; zero for codewords with no data
  bool degenerate = false;     // ridge added because S S' was singular
  bool used_bisection = false;
  int iterations = 0;
};

struct DictionaryUpdateOptions {
  int max_newton_iterations = 100;
  int max_bisection_sweeps = 2000;
  bool force_bisection = false;
};

namespace detail {

/// Lagrange dual of min ||X - D S||_F^2 s.t. ||d_l||^2 <= C, restricted to
/// codewords with nonzero code rows. The primal solution for multipliers
/// lam is D = P (G + diag(lam))^-1 with P = X S', G = S S'.
template <typename Scalar>
class DictionaryDual {
 public:
  DictionaryDual(Matrix<Scalar> P, Matrix<Scalar> G, Scalar C) : P_(std::move(P)), G_(std::move(G)), C_(C) {}

  Index size() const { return G_.rows(); }

  /// Factor B = G + diag(lam); false if B is not positive definite.
  bool evaluate(const Vector<Scalar>& lam) {
    const Matrix<Scalar> B = G_ + Matrix<Scalar>(lam.asDiagonal());
    llt_.compute(B);
    if (llt_.info() != Eigen::Success) return false;
    const Matrix<Scalar> Binv = llt_.solve(Matrix<Scalar>::Identity(size(), size()));
    if (!Binv.allFinite()) return false;
    B_inv_ = Binv;
    D_.noalias() = P_ * B_inv_;
    norms_ = D_.colwise().squaredNorm().transpose();
    // Negated dual (up to the constant ||X||^2): tr(P B^-1 P') + C sum(lam).
    value_ = (P_ * B_inv_).cwiseProduct(P_).sum() + C_ * lam.sum();
    return std::isfinite(static_cast<double>(value_));
  }

  Scalar value() const { return value_; }
  Vector<Scalar> gradient() const { return Vector<Scalar>::Constant(size(), C_) - norms_; }
  Matrix<Scalar> hessian() const { return Scalar(2) * B_inv_.cwiseProduct(D_.transpose() * D_); }
  const Matrix<Scalar>& atoms() const { return D_; }
  const Vector<Scalar>& norms() const { return norms_; }

 private:
  Matrix<Scalar> P_, G_;
  Scalar C_;
  Eigen::LLT<Matrix<Scalar>> llt_;
  Matrix<Scalar> B_inv_, D_;
  Vector<Scalar> norms_;
  Scalar value_ = 0;
};

template <typename Scalar>
Scalar projected_gradient_norm(const Vector<Scalar>& lam, const Vector<Scalar>& grad) {
  Scalar worst = 0;
  for (Index l = 0; l < lam.size(); ++l)
    worst = std::max(worst, lam(l) > Scalar(0) ? std::abs(grad(l)) : std::max(Scalar(0), -grad(l)));
  return worst;
}

template <typename Scalar>
bool kkt_satisfied(const Vector<Scalar>& lam, const Vector<Scalar>& grad, Scalar tol) {
  for (Index l = 0; l < lam.size(); ++l) {
    if (grad(l) < -tol) return false;                   // ||d_l||^2 > C + tol
    if (lam(l) * std::abs(grad(l)) > tol) return false;  // complementary slackness
  }
  return true;
}

/// Projected Newton on the negated dual over lam >= 0. Returns false on
/// line-search failure so the caller can fall back to bisection.
template <typename Scalar>
bool solve_dual_newton(DictionaryDual<Scalar>& dual, Vector<Scalar>& lam, Scalar tol, int max_iterations,
                       int& iterations) {
  const Index r = dual.size();
  const Scalar inner_tol = tol * Scalar(1e-3);
  if (!dual.evaluate(lam)) return false;
  for (iterations = 0; iterations < max_iterations; ++iterations) {
    const Vector<Scalar> grad = dual.gradient();
    const Scalar pg = projected_gradient_norm(lam, grad);
    if (pg <= inner_tol && kkt_satisfied(lam, grad, inner_tol)) return true;

    const Scalar eps = std::min(Scalar(1e-3), pg);
    std::vector<Index> free;
    for (Index l = 0; l < r; ++l)
      if (!(lam(l) <= eps && grad(l) > Scalar(0))) free.push_back(l);

    Vector<Scalar> dir = -grad;
    if (!free.empty()) {
      const IndexVector fi = Eigen::Map<const IndexVector>(free.data(), static_cast<Index>(free.size()));
      Matrix<Scalar> H = dual.hessian()(fi, fi);
      const Vector<Scalar> g_free = grad(fi);
      // Damped Newton: raise the shift until the reduced Hessian factors.
      Scalar shift = 0;
      const Scalar h_scale = std::max(H.diagonal().cwiseAbs().maxCoeff(), std::numeric_limits<Scalar>::min());
      Eigen::LLT<Matrix<Scalar>> llt;
      for (int attempt = 0; attempt < 30; ++attempt) {
        llt.compute(H + shift * Matrix<Scalar>::Identity(H.rows(), H.cols()));
        if (llt.info() == Eigen::Success) break;
        shift = shift == Scalar(0) ? h_scale * Scalar(1e-12) : shift * Scalar(10);
      }
      if (llt.info() != Eigen::Success) return false;
      dir(fi) = -llt.solve(g_free);
    }

    const Scalar value = dual.value();
    const Vector<Scalar> lam_old = lam;
    bool accepted = false;
    Scalar t = 1;
    for (int ls = 0; ls < 60; ++ls, t *= Scalar(0.5)) {
      Vector<Scalar> trial = (lam_old + t * dir).cwiseMax(Scalar(0));
      if (!dual.evaluate(trial)) continue;
      const Scalar slack = Scalar(64) * std::numeric_limits<Scalar>::epsilon() * (std::abs(value) + Scalar(1));
      if (dual.value() <= value + Scalar(1e-4) * grad.dot(trial - lam_old) + slack) {
        lam = trial;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      dual.evaluate(lam_old);
      lam = lam_old;
      return kkt_satisfied(lam, dual.gradient(), tol);
    }
  }
  return kkt_satisfied(lam, dual.gradient(), tol);
}

/// Coordinate-wise ascent on the dual: each multiplier is set by bisection
/// so that ||d_l||^2 = C, or to zero when the constraint is slack there.
template <typename Scalar>
bool solve_dual_bisection(DictionaryDual<Scalar>& dual, Vector<Scalar>& lam, Scalar C, Scalar tol, int max_sweeps,
                          int& sweeps) {
  const Index r = dual.size();
  auto norm_at = [&](Index l, Scalar v) {
    Vector<Scalar> trial = lam;
    trial(l) = v;
    if (!dual.evaluate(trial)) return std::numeric_limits<Scalar>::infinity();
    return dual.norms()(l);
  };
  for (sweeps = 0; sweeps < max_sweeps; ++sweeps) {
    Scalar change = 0;
    for (Index l = 0; l < r; ++l) {
      const Scalar before = lam(l);
      if (norm_at(l, Scalar(0)) <= C) {
        lam(l) = 0;
      } else {
        Scalar lo = 0, hi = std::max(Scalar(1), before);
        while (norm_at(l, hi) > C) {
          lo = hi;
          hi *= Scalar(2);
          if (!std::isfinite(static_cast<double>(hi))) return false;
        }
        for (int it = 0; it < 200 && hi - lo > std::numeric_limits<Scalar>::epsilon() * hi; ++it) {
          const Scalar mid = (lo + hi) / Scalar(2);
          (norm_at(l, mid) > C ? lo : hi) = mid;
        }
        lam(l) = hi;
      }
      change = std::max(change, std::abs(lam(l) - before));
    }
    if (!dual.evaluate(lam)) return false;
    if (kkt_satisfied(lam, dual.gradient(), tol * Scalar(1e-2)) &&
        change <= std::numeric_limits<Scalar>::epsilon() * (Scalar(1) + lam.cwiseAbs().maxCoeff()) * Scalar(1e4))
      return true;
  }
  return kkt_satisfied(lam, dual.gradient(), tol);
}

}  // namespace detail

/// Norm-constrained least-squares dictionary via the Lagrange dual.
///
/// Codewords whose code row is entirely zero do not influence the
/// reconstruction; they keep their column from `previous` (or zero when
/// `previous` is empty).
template <typename Scalar>
DictionaryUpdate<Scalar> dictionary_update(const Matrix<Scalar>& X, const Matrix<Scalar>& S, Scalar C, Scalar tol,
                                           const Matrix<Scalar>& previous = Matrix<Scalar>(),
                                           const DictionaryUpdateOptions& options = {}) {
  const Index d = X.rows(), n = X.cols(), m = S.rows();
  if (S.cols() != n) throw DimensionError("dictionary_update: X and S have different point counts");
  if (!(C > Scalar(0))) throw Error("dictionary_update: C must be > 0");
  if (!(tol > Scalar(0))) throw Error("dictionary_update: tol must be > 0");
  if (previous.size() != 0 && (previous.rows() != d || previous.cols() != m))
    throw DimensionError("dictionary_update: previous dictionary has the wrong shape");

  DictionaryUpdate<Scalar> out;
  out.dictionary.C = C;
  out.dictionary.atoms = previous.size() != 0 ? previous : Matrix<Scalar>::Zero(d, m);
  out.multipliers = Vector<Scalar>::Zero(m);

  std::vector<Index> live;
  for (Index l = 0; l < m; ++l)
    if (S.row(l).squaredNorm() > Scalar(0)) live.push_back(l);
  if (live.empty()) return out;
  const IndexVector li = Eigen::Map<const IndexVector>(live.data(), static_cast<Index>(live.size()));
  const Index r = li.size();

  const Matrix<Scalar> S_live = S(li, Eigen::all);
  Matrix<Scalar> G = S_live * S_live.transpose();
  Matrix<Scalar> P = X * S_live.transpose();

  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(G, Eigen::EigenvaluesOnly);
  const Scalar g_scale = std::max(Scalar(1), G.trace() / static_cast<Scalar>(r));
  if (eig.eigenvalues().minCoeff() <= Scalar(1e-12) * g_scale) {
    G.diagonal().array() += Scalar(1e-10) * g_scale;
    out.degenerate = true;
  }

  detail::DictionaryDual<Scalar> dual(std::move(P), std::move(G), C);
  Vector<Scalar> lam = Vector<Scalar>::Ones(r);
  bool ok = false;
  if (!options.force_bisection) ok = detail::solve_dual_newton(dual, lam, tol, options.max_newton_iterations, out.iterations);
  if (!ok) {
    out.used_bisection = true;
    if (!options.force_bisection) lam = Vector<Scalar>::Ones(r);
    ok = detail::solve_dual_bisection(dual, lam, C, tol, options.max_bisection_sweeps, out.iterations);
  }
  if (!ok || !dual.evaluate(lam))
    throw NumericalError("dictionary_update: Lagrange dual did not converge after " + std::to_string(out.iterations) +
                         " iterations");

  Matrix<Scalar> atoms = dual.atoms();
  // Remove rounding-level excess over the norm bound.
  for (Index q = 0; q < r; ++q) {
    const Scalar norm2 = atoms.col(q).squaredNorm();
    if (norm2 > C) atoms.col(q) *= std::sqrt(C / norm2);
  }
  out.dictionary.atoms(Eigen::all, li) = atoms;
  out.multipliers(li) = lam;
  return out;
}

}  // namespace lcrank
