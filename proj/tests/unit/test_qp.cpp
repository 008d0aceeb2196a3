#include <doctest.h>

#include <cmath>
#include <vector>

#include "ptune/error.hpp"
#include "ptune/impedance.hpp"
#include "ptune/qp.hpp"

using namespace ptune;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Quadratic penalty, damped Newton per penalty weight. Independent of the active-set code.
VectorXd penalty_oracle(const qp::Problem& p, double rho_max = 1e10) {
  VectorXd x = p.H.ldlt().solve(-p.g);
  for (double rho = 1.0; rho <= rho_max; rho *= 10.0) {
    const auto value = [&](const VectorXd& y) {
      const VectorXd v = (p.b - p.A * y).cwiseMax(0.0);
      return p.objective(y) + 0.5 * rho * v.squaredNorm();
    };
    for (int it = 0; it < 100; ++it) {
      const VectorXd v = (p.b - p.A * x).cwiseMax(0.0);
      const VectorXd grad = p.H * x + p.g - rho * p.A.transpose() * v;
      MatrixXd M = p.H;
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (v(i) > 0.0) M += rho * p.A.row(i).transpose() * p.A.row(i);
      }
      const VectorXd d = -M.ldlt().solve(grad);
      const double f0 = value(x);
      double t = 1.0;
      while (t > 1e-12 && value(x + t * d) > f0 + 1e-4 * t * grad.dot(d)) t *= 0.5;
      x += t * d;
      if (std::abs(grad.dot(d)) < 1e-22) break;
    }
  }
  return x;
}

// Stance samples from a truth whose damping exceeds b_max and whose K(0) sits below the heel-strike floor.
std::vector<fitting::Sample> toy_samples() {
  std::vector<fitting::Sample> out;
  for (std::size_t i = 0; i < kPhasePoints; ++i) {
    const double s = phase_at(i);
    if (s > 0.6) break;
    const double angle = 0.3 * std::sin(5.0 * s) - 0.1;
    const double velocity = 1.5 * std::cos(5.0 * s) + 0.2;
    const double k = 0.8 + 2.0 * s - 1.5 * s * s;
    const double e = 0.05 - 0.2 * s;
    const double b = 0.3 - 0.1 * s;
    // high-frequency ripple the degree-4 model cannot absorb keeps the optimum away from zero
    const double ripple = 0.05 * std::sin(41.0 * s) + 0.03 * std::cos(67.0 * s);
    out.push_back({s, angle, velocity, impedance_torque(k, e, b, angle, velocity) + ripple, 0.0});
  }
  return out;
}

std::vector<fitting::PhaseBound> five_bounds() {
  std::vector<fitting::PhaseBound> out;
  for (double s : {0.0, 0.15, 0.3, 0.45, 0.6}) out.push_back({s, s == 0.0 ? 1.0 : 0.2, 0.0, 0.15});
  return out;
}

}  // namespace

TEST_SUITE("qp") {
  TEST_CASE("two-variable problem with a known answer") {
    // min (x-1)^2 + (y-2)^2  s.t. x + y <= 2  ->  (0.5, 1.5)
    qp::Problem p;
    p.H = 2.0 * MatrixXd::Identity(2, 2);
    p.g = VectorXd(2);
    p.g << -2.0, -4.0;
    p.A = MatrixXd(1, 2);
    p.A << -1.0, -1.0;
    p.b = VectorXd::Constant(1, -2.0);
    p.constant = 5.0;
    const qp::Solution s = qp::solve(p);
    CHECK(s.x(0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(s.x(1) == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(s.multipliers(0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.objective == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(s.kkt.worst() <= 1e-12);
  }

  TEST_CASE("five-phase toy fit against the penalty oracle") {
    const auto samples = toy_samples();
    const auto bounds = five_bounds();
    fitting::Spec spec;
    const qp::Problem p = fitting::build_problem(samples, bounds, spec);

    const qp::Solution dual = qp::solve(p);
    const VectorXd oracle = penalty_oracle(p);
    const double f_oracle = p.objective(oracle);
    INFO("active-set " << dual.objective << " oracle " << f_oracle);
    CHECK(std::abs(dual.objective - f_oracle) <= 1e-4 * std::abs(f_oracle));
    CHECK(dual.kkt.worst() <= 1e-8);
    CHECK(!dual.active.empty());
    CHECK((p.A * dual.x - p.b).minCoeff() >= -1e-9);

    // primal path from a feasible start lands on the same optimum
    const VectorXd start = fitting::feasible_point(bounds, spec);
    CHECK((p.A * start - p.b).minCoeff() >= -1e-12);
    const qp::Solution primal = qp::solve(p, start);
    CHECK(std::abs(primal.objective - dual.objective) <= 1e-9 * std::abs(dual.objective));
    CHECK(primal.kkt.worst() <= 1e-8);
  }

  TEST_CASE("infeasible constraints are detected") {
    // x >= 1 and -x >= 0
    qp::Problem p;
    p.H = MatrixXd::Identity(1, 1);
    p.g = VectorXd::Zero(1);
    p.A = MatrixXd(2, 1);
    p.A << 1.0, -1.0;
    p.b = VectorXd(2);
    p.b << 1.0, 0.0;
    try {
      qp::solve(p);
      FAIL("expected InfeasibleConstraints");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InfeasibleConstraints);
    }
    CHECK_THROWS_AS(qp::find_feasible_point(p.A, p.b), Error);
  }

  TEST_CASE("iteration cap raises NonConvergence") {
    const auto samples = toy_samples();
    const qp::Problem p = fitting::build_problem(samples, five_bounds(), fitting::Spec{});
    qp::Options o;
    o.max_iterations = 1;
    try {
      qp::solve(p, o);
      FAIL("expected NonConvergence");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NonConvergence);
    }
  }

  TEST_CASE("kkt report flags a perturbed point") {
    const auto samples = toy_samples();
    const qp::Problem p = fitting::build_problem(samples, five_bounds(), fitting::Spec{});
    const qp::Solution s = qp::solve(p);
    VectorXd off = s.x;
    off(0) += 1e-3;
    CHECK(qp::evaluate_kkt(p, off, s.multipliers, s.active).worst() > 1e-6);
  }
}
