#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace bmk {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

/// Shape mismatch between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input outside the mathematical domain of an operation (NaN, Inf, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

inline void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols()) {
    throw DimensionError(std::string(what) + ": expected square matrix, got " +
                         std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()));
  }
}

inline void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) {
    throw DomainError(std::string(what) + ": non-finite entries");
  }
}

}  // namespace bmk
