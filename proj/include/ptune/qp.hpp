#pragma once

#include <Eigen/Dense>
#include <vector>

namespace ptune::qp {

/// minimize 0.5 x'Hx + g'x  subject to  A x >= b.
struct Problem {
  Eigen::MatrixXd H;
  Eigen::VectorXd g;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  double constant = 0.0;

  double objective(const Eigen::VectorXd& x) const { return 0.5 * x.dot(H * x) + g.dot(x) + constant; }
};

struct Options {
  double tolerance = 1e-8;
  int max_iterations = 500;

  bool operator==(const Options&) const = default;
};

struct KktReport {
  double stationarity = 0.0;        // ||Hx + g - A'λ||_inf
  double projected_gradient = 0.0;  // ||Z'(Hx + g)||_2 over the active null space
  double dual_infeasibility = 0.0;  // max(0, -min λ)
  double complementarity = 0.0;     // max |λ_i (a_i x - b_i)|
  double primal_violation = 0.0;    // max(0, max(b - Ax))

  double worst() const;
};

struct Solution {
  Eigen::VectorXd x;
  Eigen::VectorXd multipliers;  // one per constraint row, zero when inactive
  std::vector<int> active;      // working set at termination, in insertion order
  int iterations = 0;
  double objective = 0.0;
  KktReport kkt;
};

/// Elastic phase 1: a feasible point close to `hint` (returned as-is when strictly feasible).
/// Throws InfeasibleConstraints.
Eigen::VectorXd find_feasible_point(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Options& options = {},
                                    const Eigen::VectorXd* hint = nullptr);

/// Primal active-set from a feasible start. H must be positive definite on the feasible directions.
/// Throws NonConvergence when the iteration cap is hit.
Solution solve(const Problem& problem, const Eigen::VectorXd& feasible_start, const Options& options = {});

/// Dual active-set (Goldfarb-Idnani) from the unconstrained minimizer; needs no feasible start.
/// H must be positive definite. Throws InfeasibleConstraints or NonConvergence.
Solution solve(const Problem& problem, const Options& options = {});

/// KKT residuals of (x, λ) with the given active rows.
KktReport evaluate_kkt(const Problem& problem, const Eigen::VectorXd& x, const Eigen::VectorXd& multipliers,
                       const std::vector<int>& active);

}  // namespace ptune::qp
