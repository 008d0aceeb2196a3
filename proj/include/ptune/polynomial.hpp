#pragma once

#include <Eigen/Dense>
#include <span>

namespace ptune::poly {

/// Horner evaluation of sum_i c_i s^i.
double horner(std::span<const double> coeffs, double s) noexcept;

/// Legendre values P_0..P_degree at s mapped affinely from [lo, hi] onto [-1, 1].
Eigen::VectorXd legendre_values(int degree, double s, double lo, double hi);

/// T with monomial = T * legendre for the basis P_j(affine(s)) on [lo, hi].
Eigen::MatrixXd legendre_to_monomial(int degree, double lo, double hi);

}  // namespace ptune::poly
