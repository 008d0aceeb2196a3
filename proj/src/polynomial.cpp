#include "ptune/polynomial.hpp"

namespace ptune::poly {

double horner(std::span<const double> coeffs, double s) noexcept {
  double acc = 0.0;
  for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * s + *it;
  return acc;
}

Eigen::VectorXd legendre_values(int degree, double s, double lo, double hi) {
  const double x = 2.0 * (s - lo) / (hi - lo) - 1.0;
  Eigen::VectorXd p(degree + 1);
  p(0) = 1.0;
  if (degree >= 1) p(1) = x;
  for (int j = 1; j < degree; ++j) p(j + 1) = ((2.0 * j + 1.0) * x * p(j) - j * p(j - 1)) / (j + 1.0);
  return p;
}

Eigen::MatrixXd legendre_to_monomial(int degree, double lo, double hi) {
  // x = alpha s + beta
  const double alpha = 2.0 / (hi - lo);
  const double beta = -(hi + lo) / (hi - lo);
  const int n = degree + 1;
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(n, n);  // column j: monomial coeffs of P_j
  T(0, 0) = 1.0;
  if (degree >= 1) {
    T(0, 1) = beta;
    T(1, 1) = alpha;
  }
  for (int j = 1; j < degree; ++j) {
    // (j+1) P_{j+1} = (2j+1) x P_j - j P_{j-1}
    Eigen::VectorXd xp = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
      if (T(i, j) == 0.0) continue;
      xp(i) += beta * T(i, j);
      if (i + 1 < n) xp(i + 1) += alpha * T(i, j);
    }
    T.col(j + 1) = ((2.0 * j + 1.0) * xp - j * T.col(j - 1)) / (j + 1.0);
  }
  return T;
}

}  // namespace ptune::poly
