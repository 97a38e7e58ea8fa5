#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cascs {

/// Luminance image, H rows by W columns.
using Image = Eigen::MatrixXd;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using IntGrid = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class BudgetError : public Error {
 public:
  using Error::Error;
};

/// Internal contract was broken. Indicates a bug, not bad input.
class InvariantError : public Error {
 public:
  using Error::Error;
};

inline constexpr const char* kVersion = "0.3.0";

}  // namespace cascs
