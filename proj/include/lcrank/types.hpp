#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace lcrank {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Column i holds the neighbor list of point i.
using IndexMatrix = Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic>;
using IndexVector = Eigen::Matrix<Index, Eigen::Dynamic, 1>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Non-convergence, loss of definiteness, or an otherwise unusable linear system.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Binary query indicator: entry i is true iff point i is a user query.
struct QueryIndicator {
  Eigen::Array<bool, Eigen::Dynamic, 1> lambda;

  Index size() const { return lambda.size(); }
  Index count() const { return lambda.count(); }
  bool operator()(Index i) const { return lambda(i); }

  template <typename Scalar>
  Vector<Scalar> as() const {
    return lambda.template cast<Scalar>().matrix();
  }
};

}  // namespace lcrank
