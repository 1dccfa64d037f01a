#pragma once

#include <Eigen/Dense>

namespace shapguard {

// Samples are stored one per row throughout the library.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

}  // namespace shapguard
