#include "ptune/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ptune/error.hpp"

namespace ptune::qp {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Rows of A restricted to `rows`, as columns (n x k).
MatrixXd active_columns(const MatrixXd& A, const std::vector<int>& rows) {
  MatrixXd out(A.cols(), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = A.row(rows[k]).transpose();
  return out;
}

// Orthonormal basis of the null space of A_W (columns), and Q1 / R for multiplier recovery.
struct Factorization {
  MatrixXd Z;
  MatrixXd Q1;
  MatrixXd R;
};

Factorization factor(const MatrixXd& A, const std::vector<int>& working) {
  const auto n = A.cols();
  const auto k = static_cast<Eigen::Index>(working.size());
  Factorization f;
  if (k == 0) {
    f.Z = MatrixXd::Identity(n, n);
    return f;
  }
  const MatrixXd AW = active_columns(A, working);
  Eigen::HouseholderQR<MatrixXd> qr(AW);
  const MatrixXd Q = qr.householderQ() * MatrixXd::Identity(n, n);
  f.Q1 = Q.leftCols(k);
  f.Z = Q.rightCols(n - k);
  f.R = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  return f;
}

bool independent_of(const MatrixXd& A, const std::vector<int>& working, int candidate) {
  const VectorXd a = A.row(candidate).transpose();
  const double norm = a.norm();
  if (norm == 0.0) return false;
  if (working.empty()) return true;
  if (static_cast<Eigen::Index>(working.size()) >= A.cols()) return false;
  const MatrixXd AW = active_columns(A, working);
  const VectorXd coeff = AW.colPivHouseholderQr().solve(a);
  return (a - AW * coeff).norm() > 1e-9 * norm;
}

// Single-variable rows, returned as the column index (or -1).
int bound_column(const MatrixXd& A, int row) {
  int col = -1;
  for (Eigen::Index j = 0; j < A.cols(); ++j) {
    if (A(row, j) != 0.0) {
      if (col >= 0) return -1;
      col = static_cast<int>(j);
    }
  }
  return col;
}

struct CoreResult {
  VectorXd y;
  VectorXd lambda;  // per row
  std::vector<int> working;
  int iterations = 0;
};

// Primal active-set iterations on a well-scaled problem (unit-norm constraint rows).
CoreResult active_set_core(const MatrixXd& H, const VectorXd& g, const MatrixXd& A, const VectorXd& b, VectorXd y,
                           const Options& options) {
  const auto m = A.rows();
  const double active_tol = 1e-10;
  std::vector<int> working;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double slack = A.row(i).dot(y) - b(i);
    if (std::abs(slack) <= active_tol * (1.0 + std::abs(b(i))) && independent_of(A, working, static_cast<int>(i))) {
      working.push_back(static_cast<int>(i));
    }
  }

  CoreResult out;
  // Set after an unblocked full step: y already minimizes over the current working set.
  bool at_subspace_minimum = false;
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    out.iterations = iter + 1;
    const VectorXd grad = H * y + g;
    const Factorization f = factor(A, working);
    VectorXd p = VectorXd::Zero(y.size());
    if (f.Z.cols() > 0 && !at_subspace_minimum) {
      const MatrixXd reduced = f.Z.transpose() * H * f.Z;
      Eigen::LDLT<MatrixXd> ldlt(reduced);
      if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() <= 0.0).any()) {
        throw Error(ErrorCode::NonConvergence, "reduced Hessian is not positive definite");
      }
      p = -f.Z * ldlt.solve(f.Z.transpose() * grad);
    }

    const double step_scale = 1.0 + y.cwiseAbs().maxCoeff();
    if (p.cwiseAbs().maxCoeff() <= 1e-13 * step_scale) {
      VectorXd lw;
      if (!working.empty()) {
        lw = f.R.triangularView<Eigen::Upper>().solve(f.Q1.transpose() * grad);
      }
      int drop = -1;
      double most_negative = -options.tolerance * 1e-3;
      for (std::size_t k = 0; k < working.size(); ++k) {
        if (lw(static_cast<Eigen::Index>(k)) < most_negative) {
          most_negative = lw(static_cast<Eigen::Index>(k));
          drop = static_cast<int>(k);
        }
      }
      if (drop < 0) {
        out.y = y;
        out.lambda = VectorXd::Zero(m);
        for (std::size_t k = 0; k < working.size(); ++k) {
          out.lambda(working[k]) = std::max(0.0, lw(static_cast<Eigen::Index>(k)));
        }
        out.working = working;
        return out;
      }
      working.erase(working.begin() + drop);
      at_subspace_minimum = false;
      continue;
    }

    double alpha = 1.0;
    int block = -1;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (std::find(working.begin(), working.end(), static_cast<int>(i)) != working.end()) continue;
      const double ap = A.row(i).dot(p);
      if (ap >= -1e-14 * p.norm()) continue;
      const double slack = A.row(i).dot(y) - b(i);
      const double ratio = std::max(0.0, slack) / -ap;
      if (ratio < alpha) {
        alpha = ratio;
        block = static_cast<int>(i);
      }
    }
    y += alpha * p;
    if (block >= 0) working.push_back(block);
    at_subspace_minimum = block < 0;
  }
  throw Error(ErrorCode::NonConvergence,
              "active-set iteration cap reached (" + std::to_string(options.max_iterations) + ")");
}

// Goldfarb-Idnani: keeps (x, u) optimal for the working set with u >= 0 and adds the most violated row.
CoreResult dual_active_set(const MatrixXd& H, const VectorXd& g, const MatrixXd& A, const VectorXd& b,
                           const Options& options) {
  const auto n = H.rows();
  const auto m = A.rows();
  Eigen::LLT<MatrixXd> llt(H);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::NonConvergence, "Hessian is not positive definite");
  // H^-1 = J J'
  const MatrixXd J = llt.matrixU().solve(MatrixXd::Identity(n, n));
  const double feasibility_tol = 1e-12;

  VectorXd x = -llt.solve(g);
  std::vector<int> working;
  std::vector<double> u;
  int iterations = 0;
  auto count = [&] {
    if (++iterations > options.max_iterations) {
      throw Error(ErrorCode::NonConvergence,
                  "active-set iteration cap reached (" + std::to_string(options.max_iterations) + ")");
    }
  };

  for (;;) {
    int p = -1;
    double worst = -feasibility_tol;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (std::find(working.begin(), working.end(), static_cast<int>(i)) != working.end()) continue;
      const double slack = A.row(i).dot(x) - b(i);
      if (slack < worst * (1.0 + std::abs(b(i)))) {
        worst = slack / (1.0 + std::abs(b(i)));
        p = static_cast<int>(i);
      }
    }
    if (p < 0) break;
    count();

    const VectorXd np = A.row(p).transpose();
    double u_p = 0.0;
    for (;;) {
      const auto q = static_cast<Eigen::Index>(working.size());
      const VectorXd d_full = J.transpose() * np;
      VectorXd z;
      VectorXd r(q);
      if (q == 0) {
        z = J * d_full;
      } else {
        const MatrixXd M = J.transpose() * active_columns(A, working);
        Eigen::HouseholderQR<MatrixXd> qr(M);
        const MatrixXd Q = qr.householderQ() * MatrixXd::Identity(n, n);
        const VectorXd d = Q.transpose() * d_full;
        z = J * (Q.rightCols(n - q) * d.tail(n - q));
        const MatrixXd R = qr.matrixQR().topLeftCorner(q, q).triangularView<Eigen::Upper>();
        r = R.triangularView<Eigen::Upper>().solve(d.head(q));
      }

      // Largest dual step keeping the working multipliers non-negative.
      double t1 = std::numeric_limits<double>::infinity();
      int leave = -1;
      for (Eigen::Index k = 0; k < q; ++k) {
        if (r(k) > 0.0 && u[static_cast<std::size_t>(k)] / r(k) < t1) {
          t1 = u[static_cast<std::size_t>(k)] / r(k);
          leave = static_cast<int>(k);
        }
      }
      // Primal step that makes row p active.
      const double zn = z.dot(np);
      const double slack_p = np.dot(x) - b(p);
      const double t2 = zn > 1e-14 * z.norm() * np.norm() && z.norm() > 1e-14 ? -slack_p / zn
                                                                             : std::numeric_limits<double>::infinity();
      const double t = std::min(t1, t2);
      if (!std::isfinite(t)) {
        throw Error(ErrorCode::InfeasibleConstraints, "no point satisfies the constraints");
      }

      if (std::isfinite(t2)) x += t * z;
      for (Eigen::Index k = 0; k < q; ++k) u[static_cast<std::size_t>(k)] -= t * r(k);
      u_p += t;
      if (t2 <= t1) {
        working.push_back(p);
        u.push_back(u_p);
        break;
      }
      count();
      working.erase(working.begin() + leave);
      u.erase(u.begin() + leave);
    }
  }

  CoreResult out;
  out.y = x;
  out.lambda = VectorXd::Zero(m);
  for (std::size_t k = 0; k < working.size(); ++k) out.lambda(working[k]) = std::max(0.0, u[k]);
  out.working = working;
  out.iterations = iterations;
  return out;
}

// Normalizes rows to unit length; zero rows must be trivially satisfied.
void normalize_rows(MatrixXd& A, VectorXd& b, VectorXd& row_norm) {
  row_norm.resize(A.rows());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    const double r = A.row(i).norm();
    if (r == 0.0) {
      if (b(i) > 0.0) throw Error(ErrorCode::InfeasibleConstraints, "zero constraint row with positive bound");
      row_norm(i) = 1.0;
      continue;
    }
    A.row(i) /= r;
    b(i) /= r;
    row_norm(i) = r;
  }
}

}  // namespace

double KktReport::worst() const {
  return std::max({stationarity, projected_gradient, dual_infeasibility, complementarity, primal_violation});
}

KktReport evaluate_kkt(const Problem& problem, const VectorXd& x, const VectorXd& multipliers,
                       const std::vector<int>& active) {
  KktReport r;
  const VectorXd grad = problem.H * x + problem.g;
  r.stationarity = (grad - problem.A.transpose() * multipliers).cwiseAbs().maxCoeff();
  const Factorization f = factor(problem.A, active);
  r.projected_gradient = f.Z.cols() > 0 ? (f.Z.transpose() * grad).norm() : 0.0;
  if (multipliers.size() > 0) r.dual_infeasibility = std::max(0.0, -multipliers.minCoeff());
  const VectorXd slack = problem.A * x - problem.b;
  for (Eigen::Index i = 0; i < slack.size(); ++i) {
    r.complementarity = std::max(r.complementarity, std::abs(multipliers(i) * slack(i)));
    r.primal_violation = std::max(r.primal_violation, -slack(i));
  }
  return r;
}

VectorXd find_feasible_point(const MatrixXd& A_in, const VectorXd& b_in, const Options& options,
                             const VectorXd* hint) {
  MatrixXd A = A_in;
  VectorXd b = b_in;
  VectorXd row_norm;
  normalize_rows(A, b, row_norm);
  const auto n = A.cols();
  const auto m = A.rows();
  const VectorXd centre = hint != nullptr ? *hint : VectorXd::Zero(n);
  if (centre.size() != n) throw Error(ErrorCode::InvalidArgument, "feasibility hint has the wrong size");
  if (m == 0 || (A * centre - b).minCoeff() > 1e-9) return centre;

  // Variables (x, t): minimize t + eps/2 (|x - centre|^2 + t^2) s.t. A x + t >= b, t >= 0.
  constexpr double eps = 1e-8;
  MatrixXd A1 = MatrixXd::Zero(m + 1, n + 1);
  A1.topLeftCorner(m, n) = A;
  A1.col(n).head(m).setOnes();
  A1(m, n) = 1.0;
  VectorXd b1 = VectorXd::Zero(m + 1);
  b1.head(m) = b;
  // The t column has norm sqrt(2) in the coupled rows; rescale to keep rows unit length.
  for (Eigen::Index i = 0; i < m; ++i) {
    const double r = A1.row(i).norm();
    A1.row(i) /= r;
    b1(i) /= r;
  }

  const MatrixXd H1 = eps * MatrixXd::Identity(n + 1, n + 1);
  VectorXd g1 = VectorXd::Zero(n + 1);
  g1.head(n) = -eps * centre;
  g1(n) = 1.0;
  VectorXd z0 = VectorXd::Zero(n + 1);
  z0.head(n) = centre;
  z0(n) = std::max(0.0, (b - A * centre).maxCoeff()) + 1.0;

  Options phase1 = options;
  phase1.max_iterations = std::max(options.max_iterations, 4 * static_cast<int>(m + n));
  CoreResult r = active_set_core(H1, g1, A1, b1, z0, phase1);
  VectorXd x = r.y.head(n);
  const double violation = (b - A * x).maxCoeff();
  if (violation > 1e-9) {
    throw Error(ErrorCode::InfeasibleConstraints,
                "no point satisfies the constraints (max violation " + std::to_string(violation) + ")");
  }
  return x;
}

namespace {

void check_dimensions(const Problem& problem) {
  const auto n = problem.H.rows();
  if (problem.H.cols() != n || problem.g.size() != n || problem.A.cols() != n || problem.b.size() != problem.A.rows()) {
    throw Error(ErrorCode::InvalidArgument, "QP dimensions are inconsistent");
  }
}

// Diagonal equilibration x = D y with unit-norm constraint rows.
struct Scaled {
  VectorXd d;
  MatrixXd H;
  VectorXd g;
  MatrixXd A;
  VectorXd b;
  VectorXd row_norm;

  explicit Scaled(const Problem& problem) {
    const auto n = problem.H.rows();
    d.resize(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const double h = problem.H(j, j);
      d(j) = h > 0.0 ? 1.0 / std::sqrt(h) : 1.0;
    }
    H = d.asDiagonal() * problem.H * d.asDiagonal();
    g = d.asDiagonal() * problem.g;
    A = problem.A * d.asDiagonal();
    b = problem.b;
    normalize_rows(A, b, row_norm);
  }
};

Solution finish(const Problem& problem, const Scaled& scaled, const CoreResult& core) {
  Solution s;
  s.x = scaled.d.asDiagonal() * core.y;
  for (int row : core.working) {
    const int col = bound_column(problem.A, row);
    if (col >= 0) s.x(col) = problem.b(row) / problem.A(row, col);
  }
  s.multipliers = core.lambda.cwiseQuotient(scaled.row_norm);
  s.active = core.working;
  s.iterations = core.iterations;
  s.objective = problem.objective(s.x);
  s.kkt = evaluate_kkt(problem, s.x, s.multipliers, s.active);
  return s;
}

}  // namespace

Solution solve(const Problem& problem, const VectorXd& feasible_start, const Options& options) {
  check_dimensions(problem);
  if (feasible_start.size() != problem.H.rows()) throw Error(ErrorCode::InvalidArgument, "QP dimensions are inconsistent");
  const Scaled scaled(problem);
  const VectorXd y0 = feasible_start.cwiseQuotient(scaled.d);
  return finish(problem, scaled, active_set_core(scaled.H, scaled.g, scaled.A, scaled.b, y0, options));
}

Solution solve(const Problem& problem, const Options& options) {
  check_dimensions(problem);
  const Scaled scaled(problem);
  return finish(problem, scaled, dual_active_set(scaled.H, scaled.g, scaled.A, scaled.b, options));
}

}  // namespace ptune::qp
