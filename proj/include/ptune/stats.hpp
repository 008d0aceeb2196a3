#pragma once

#include <span>

namespace ptune::stats {

/// Regularized incomplete beta I_x(a, b), continued-fraction evaluation (~1e-14).
double incomplete_beta(double a, double b, double x);

/// CDF of Student's t with `dof` degrees of freedom.
double student_t_cdf(double t, double dof);

struct TTest {
  double t = 0.0;
  double p = 0.5;
  double dof = 0.0;
};

/// Paired t-test of H1: mean(a) < mean(b). Zero-variance differences resolve by sign:
/// all-zero -> (0, 0.5); all negative -> (-inf, 0); all positive -> (+inf, 1).
TTest paired_t_one_tailed(std::span<const double> a, std::span<const double> b);

double mean(std::span<const double> x);

}  // namespace ptune::stats
