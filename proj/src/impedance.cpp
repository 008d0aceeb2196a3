#include "ptune/impedance.hpp"

#include <cmath>
#include <spdlog/spdlog.h>

#include "ptune/error.hpp"
#include "ptune/polynomial.hpp"

namespace ptune {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr int kP = kImpedanceDegree + 1;  // coefficients per phase polynomial
constexpr int kW = kProductDegree + 1;    // coefficients per product polynomial

struct Layout {
  int k0 = 0;
  int w1 = kP;
  int w2 = -1;
  int b0 = 0;
  int size = 0;

  explicit Layout(bool second) {
    if (second) {
      w2 = w1 + kW;
      b0 = w2 + kW;
    } else {
      b0 = w1 + kW;
    }
    size = b0 + kP;
  }
};

Coeffs to_monomial(const VectorXd& legendre) {
  static const MatrixXd T = poly::legendre_to_monomial(kImpedanceDegree, 0.0, 1.0);
  const VectorXd m = T * legendre;
  Coeffs out{};
  for (int i = 0; i < kP; ++i) out[static_cast<std::size_t>(i)] = m(i);
  return out;
}

VectorXd to_legendre(const Coeffs& monomial) {
  static const MatrixXd Tinv = poly::legendre_to_monomial(kImpedanceDegree, 0.0, 1.0).inverse();
  return Tinv * Eigen::Map<const VectorXd>(monomial.data(), kP);
}

void check_phase(double s) {
  if (!(s >= 0.0 && s <= 1.0)) throw Error(ErrorCode::PhaseOutOfRange, "phase " + std::to_string(s) + " outside [0, 1]");
}

}  // namespace

ImpedanceValues eval_impedance(const ImpedancePolynomials& p, double s) {
  check_phase(s);
  return {poly::horner(p.k, s), poly::horner(p.e, s), poly::horner(p.b, s)};
}

ConstraintProfile ConstraintProfile::flat(double k_min, double heel_strike_k_min, double b_min, double b_max) {
  ConstraintProfile c;
  c.k_min.fill(k_min);
  c.b_min.fill(b_min);
  c.b_max.fill(b_max);
  c.heel_strike_k_min = heel_strike_k_min;
  return c;
}

void ConstraintProfile::validate() const {
  for (std::size_t i = 0; i < kPhasePoints; ++i) {
    if (b_min[i] > b_max[i]) {
      throw Error(ErrorCode::InfeasibleConstraints,
                  "b_min > b_max at phase index " + std::to_string(i + 1));
    }
    if (!(k_min[i] > 0.0)) {
      throw Error(ErrorCode::InvalidArgument, "k_min must be positive (phase index " + std::to_string(i + 1) + ")");
    }
  }
  if (heel_strike_k_min < k_min[0]) {
    throw Error(ErrorCode::InvalidArgument, "heel_strike_k_min below k_min at heel strike");
  }
}

ConstraintProfile default_constraint_profile() { return ConstraintProfile::flat(0.2, 1.0, 0.0, 0.15); }

double vaf(std::span<const double> reference, std::span<const double> predicted) {
  if (reference.size() != predicted.size()) throw Error(ErrorCode::LengthMismatch, "VAF operands differ in length");
  if (reference.empty()) throw Error(ErrorCode::EmptyInput, "VAF of empty series");
  const double n = static_cast<double>(reference.size());
  double mr = 0.0, md = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    mr += reference[i];
    md += reference[i] - predicted[i];
  }
  mr /= n;
  md /= n;
  double vr = 0.0, vd = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double r = reference[i] - mr;
    const double d = (reference[i] - predicted[i]) - md;
    vr += r * r;
    vd += d * d;
  }
  if (vr == 0.0) throw Error(ErrorCode::ZeroVarianceReference, "reference has zero variance");
  return 1.0 - vd / vr;
}

double vaf(const PhaseSeries& reference, const PhaseSeries& predicted) { return vaf(reference.span(), predicted.span()); }

namespace fitting {

void build_constraints(std::span<const PhaseBound> bounds, const Spec& spec, MatrixXd& A, VectorXd& b) {
  const Layout layout(spec.second_equilibrium);
  const auto m = static_cast<Eigen::Index>(3 * bounds.size());
  A = MatrixXd::Zero(m, layout.size);
  b = VectorXd::Zero(m);
  Eigen::Index row = 0;
  for (const auto& bound : bounds) {
    if (bound.b_min > bound.b_max) {
      throw Error(ErrorCode::InfeasibleConstraints, "b_min > b_max at phase " + std::to_string(bound.phase));
    }
    const VectorXd p = poly::legendre_values(kImpedanceDegree, bound.phase, 0.0, 1.0);
    A.row(row).segment(layout.k0, kP) = p.transpose();
    b(row++) = bound.k_min;
    A.row(row).segment(layout.b0, kP) = p.transpose();
    b(row++) = bound.b_min;
    A.row(row).segment(layout.b0, kP) = -p.transpose();
    b(row++) = -bound.b_max;
  }
}

Eigen::VectorXd feasible_point(std::span<const PhaseBound> bounds, const Spec& spec) {
  const Layout layout(spec.second_equilibrium);
  MatrixXd A;
  VectorXd b;
  build_constraints(bounds, spec, A, b);

  // Constant stiffness above every bound, damping fit to the middle of its band.
  VectorXd hint = VectorXd::Zero(layout.size);
  double k_top = 0.0;
  for (const auto& bound : bounds) k_top = std::max(k_top, bound.k_min);
  hint(layout.k0) = 1.5 * k_top + 0.1;
  if (!bounds.empty()) {
    MatrixXd P(static_cast<Eigen::Index>(bounds.size()), kP);
    VectorXd mid(static_cast<Eigen::Index>(bounds.size()));
    for (std::size_t i = 0; i < bounds.size(); ++i) {
      P.row(static_cast<Eigen::Index>(i)) = poly::legendre_values(kImpedanceDegree, bounds[i].phase, 0.0, 1.0).transpose();
      mid(static_cast<Eigen::Index>(i)) = 0.5 * (bounds[i].b_min + bounds[i].b_max);
    }
    hint.segment(layout.b0, kP) = P.colPivHouseholderQr().solve(mid);
  }
  return qp::find_feasible_point(A, b, spec.qp, &hint);
}

qp::Problem build_problem(std::span<const Sample> samples, std::span<const PhaseBound> bounds, const Spec& spec,
                          bool* ridge_applied) {
  if (samples.empty()) throw Error(ErrorCode::EmptyInput, "no training samples in the fit window");
  const Layout layout(spec.second_equilibrium);
  const auto n = static_cast<Eigen::Index>(samples.size());

  MatrixXd X(n, layout.size);
  VectorXd tau(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& smp = samples[static_cast<std::size_t>(r)];
    const VectorXd p = poly::legendre_values(kImpedanceDegree, smp.phase, 0.0, 1.0);
    const VectorXd q = poly::legendre_values(kProductDegree, smp.phase, 0.0, spec.window_end);
    X.row(r).segment(layout.k0, kP) = -smp.angle * p.transpose();
    X.row(r).segment(layout.w1, kW) = q.transpose();
    if (spec.second_equilibrium) X.row(r).segment(layout.w2, kW) = smp.blend * q.transpose();
    X.row(r).segment(layout.b0, kP) = -smp.velocity * p.transpose();
    tau(r) = smp.torque;
  }

  qp::Problem problem;
  const double scale = 2.0 / static_cast<double>(n);
  problem.H = scale * (X.transpose() * X);
  problem.g = -scale * (X.transpose() * tau);
  problem.constant = tau.squaredNorm() / static_cast<double>(n);

  VectorXd d(layout.size);
  for (int j = 0; j < layout.size; ++j) {
    const double h = problem.H(j, j);
    d(j) = h > 0.0 ? 1.0 / std::sqrt(h) : 0.0;
  }
  const MatrixXd Hn = d.asDiagonal() * problem.H * d.asDiagonal();
  const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(Hn, Eigen::EigenvaluesOnly);
  const double lmax = eig.eigenvalues().maxCoeff();
  const double lmin = eig.eigenvalues().minCoeff();
  const bool singular = !(lmax > 0.0) || lmin < spec.singular_ratio * lmax;
  if (singular) {
    for (int j = layout.w1; j < layout.size; ++j) problem.H(j, j) += spec.ridge;
    // K columns can also vanish (theta == 0 everywhere); keep the problem strictly convex.
    for (int j = layout.k0; j < layout.k0 + kP; ++j) {
      if (problem.H(j, j) < spec.ridge) problem.H(j, j) += spec.ridge;
    }
  }
  if (ridge_applied) *ridge_applied = singular;

  build_constraints(bounds, spec, problem.A, problem.b);
  return problem;
}

namespace {

struct State {
  Coeffs k{}, e1{}, e2{}, b{};
};

double equilibrium_at(const State& st, const Sample& smp) {
  return poly::horner(st.e1, smp.phase) + smp.blend * poly::horner(st.e2, smp.phase);
}

double mean_squared_residual(std::span<const Sample> samples, const State& st) {
  double ss = 0.0;
  for (const auto& smp : samples) {
    const double r = smp.torque - impedance_torque(poly::horner(st.k, smp.phase), equilibrium_at(st, smp),
                                                   poly::horner(st.b, smp.phase), smp.angle, smp.velocity);
    ss += r * r;
  }
  return ss / static_cast<double>(samples.size());
}

// Active bounds at s = 0 hold exactly on the monomial constant term.
void snap_initial_bounds(std::span<const PhaseBound> bounds, State& st) {
  for (const auto& bound : bounds) {
    if (bound.phase != 0.0) continue;
    if (st.k[0] < bound.k_min && bound.k_min - st.k[0] <= 1e-9) st.k[0] = bound.k_min;
    if (st.b[0] < bound.b_min && bound.b_min - st.b[0] <= 1e-9) st.b[0] = bound.b_min;
    if (st.b[0] > bound.b_max && st.b[0] - bound.b_max <= 1e-9) st.b[0] = bound.b_max;
  }
}

// Linear least squares in e1 (and e2) with K and B fixed.
void refit_equilibrium(std::span<const Sample> samples, const Spec& spec, State& st) {
  const int ne = spec.second_equilibrium ? 2 * kP : kP;
  const auto n = static_cast<Eigen::Index>(samples.size());
  MatrixXd E(n, ne);
  VectorXd target(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& smp = samples[static_cast<std::size_t>(r)];
    const double K = poly::horner(st.k, smp.phase);
    const double B = poly::horner(st.b, smp.phase);
    const VectorXd p = poly::legendre_values(kImpedanceDegree, smp.phase, 0.0, 1.0);
    E.row(r).head(kP) = K * p.transpose();
    if (spec.second_equilibrium) E.row(r).tail(kP) = smp.blend * K * p.transpose();
    target(r) = smp.torque + K * smp.angle + B * smp.velocity;
  }
  const VectorXd e = E.colPivHouseholderQr().solve(target);
  st.e1 = to_monomial(e.head(kP));
  st.e2 = spec.second_equilibrium ? to_monomial(e.tail(kP)) : Coeffs{};
}

// Convex QP in (K, B) with the equilibrium fixed.
qp::Solution refit_stiffness_damping(std::span<const Sample> samples, std::span<const PhaseBound> bounds,
                                     const Spec& spec, State& st) {
  const auto n = static_cast<Eigen::Index>(samples.size());
  MatrixXd X(n, 2 * kP);
  VectorXd tau(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& smp = samples[static_cast<std::size_t>(r)];
    const VectorXd p = poly::legendre_values(kImpedanceDegree, smp.phase, 0.0, 1.0);
    X.row(r).head(kP) = -(smp.angle - equilibrium_at(st, smp)) * p.transpose();
    X.row(r).tail(kP) = -smp.velocity * p.transpose();
    tau(r) = smp.torque;
  }
  qp::Problem problem;
  const double scale = 2.0 / static_cast<double>(n);
  problem.H = scale * (X.transpose() * X);
  problem.g = -scale * (X.transpose() * tau);
  problem.constant = tau.squaredNorm() / static_cast<double>(n);
  VectorXd d(2 * kP);
  for (int j = 0; j < 2 * kP; ++j) d(j) = problem.H(j, j) > 0.0 ? 1.0 / std::sqrt(problem.H(j, j)) : 0.0;
  const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(d.asDiagonal() * problem.H * d.asDiagonal(),
                                                    Eigen::EigenvaluesOnly);
  const double lmax = eig.eigenvalues().maxCoeff();
  if (!(lmax > 0.0) || eig.eigenvalues().minCoeff() < spec.singular_ratio * lmax) {
    problem.H.diagonal().array() += spec.ridge;
  }

  Spec single = spec;
  single.second_equilibrium = false;
  MatrixXd A;
  VectorXd b;
  build_constraints(bounds, single, A, b);
  const Layout layout(false);
  problem.A = MatrixXd(A.rows(), 2 * kP);
  problem.A << A.middleCols(layout.k0, kP), A.middleCols(layout.b0, kP);
  problem.b = b;

  const qp::Solution sol = qp::solve(problem, spec.qp);
  st.k = to_monomial(sol.x.head(kP));
  st.b = to_monomial(sol.x.tail(kP));
  snap_initial_bounds(bounds, st);
  return sol;
}

// Damped Gauss-Newton on (K, e1[, e2], B) in Legendre coordinates. Each step is a convex QP
// that keeps the stiffness and damping bounds; steps are accepted only if the residual drops.
int refine(std::span<const Sample> samples, std::span<const PhaseBound> bounds, const Spec& spec, State& st,
           int* qp_iterations) {
  const bool two = spec.second_equilibrium;
  const int nv = (two ? 4 : 3) * kP;
  const int e1 = kP, e2 = 2 * kP, b0 = nv - kP;
  const auto n = static_cast<Eigen::Index>(samples.size());

  MatrixXd P(n, kP);
  VectorXd theta(n), vel(n), tau(n), f(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& smp = samples[static_cast<std::size_t>(r)];
    P.row(r) = poly::legendre_values(kImpedanceDegree, smp.phase, 0.0, 1.0).transpose();
    theta(r) = smp.angle;
    vel(r) = smp.velocity;
    tau(r) = smp.torque;
    f(r) = smp.blend;
  }

  VectorXd x = VectorXd::Zero(nv);
  x.segment(0, kP) = to_legendre(st.k);
  x.segment(e1, kP) = to_legendre(st.e1);
  if (two) x.segment(e2, kP) = to_legendre(st.e2);
  x.segment(b0, kP) = to_legendre(st.b);

  const auto equilibrium = [&](const VectorXd& v) -> VectorXd {
    VectorXd eq = P * v.segment(e1, kP);
    if (two) eq.array() += f.array() * (P * v.segment(e2, kP)).array();
    return eq;
  };
  const auto residual = [&](const VectorXd& v) -> VectorXd {
    const VectorXd K = P * v.segment(0, kP);
    const VectorXd B = P * v.segment(b0, kP);
    return (tau.array() + K.array() * (theta - equilibrium(v)).array() + B.array() * vel.array()).matrix();
  };

  Spec single = spec;
  single.second_equilibrium = false;
  MatrixXd Akb;
  VectorXd bkb;
  build_constraints(bounds, single, Akb, bkb);
  const Layout lay(false);
  MatrixXd A = MatrixXd::Zero(Akb.rows(), nv);
  A.middleCols(0, kP) = Akb.middleCols(lay.k0, kP);
  A.middleCols(b0, kP) = Akb.middleCols(lay.b0, kP);

  VectorXd r = residual(x);
  double current = r.squaredNorm() / static_cast<double>(n);
  double mu = 1e-3;
  int accepted = 0;
  MatrixXd J(n, nv);
  for (int round = 0; round < spec.refine_rounds && current > 0.0; ++round) {
    const VectorXd K = P * x.segment(0, kP);
    const VectorXd dev = theta - equilibrium(x);
    J.middleCols(0, kP) = dev.asDiagonal() * P;
    J.middleCols(e1, kP) = -(K.asDiagonal() * P);
    if (two) J.middleCols(e2, kP) = -((K.array() * f.array()).matrix().asDiagonal() * P);
    J.middleCols(b0, kP) = vel.asDiagonal() * P;
    const MatrixXd JtJ = J.transpose() * J;
    const VectorXd Jtr = J.transpose() * r;

    bool stepped = false;
    while (mu < 1e10) {
      qp::Problem step;
      const double scale = 2.0 / static_cast<double>(n);
      step.H = scale * JtJ;
      for (int j = 0; j < nv; ++j) step.H(j, j) += scale * std::max(mu * JtJ(j, j), spec.ridge);
      step.g = scale * Jtr;
      step.A = A;
      step.b = bkb - A * x;
      const qp::Solution sol = qp::solve(step, spec.qp);
      *qp_iterations += sol.iterations;
      const VectorXd trial = x + sol.x;
      const VectorXd rt = residual(trial);
      const double candidate = rt.squaredNorm() / static_cast<double>(n);
      if (candidate < current) {
        const double gain = (current - candidate) / current;
        x = trial;
        r = rt;
        current = candidate;
        mu = std::max(mu / 3.0, 1e-12);
        ++accepted;
        stepped = gain >= spec.refine_tolerance;
        break;
      }
      mu *= 4.0;
    }
    if (!stepped) break;
  }

  st.k = to_monomial(x.segment(0, kP));
  st.e1 = to_monomial(x.segment(e1, kP));
  st.e2 = two ? to_monomial(x.segment(e2, kP)) : Coeffs{};
  st.b = to_monomial(x.segment(b0, kP));
  snap_initial_bounds(bounds, st);
  return accepted;
}

}  // namespace

Result fit(std::span<const Sample> samples, std::span<const PhaseBound> bounds, const Spec& spec,
           const std::optional<VectorXd>& feasible_start) {
  const Layout layout(spec.second_equilibrium);
  Result out;
  bool ridge = false;
  const qp::Problem problem = build_problem(samples, bounds, spec, &ridge);
  out.ridge_applied = ridge;
  if (ridge) {
    out.warnings.push_back("SingularFit: degenerate angle/velocity excitation, ridge-regularized");
    spdlog::debug("impedance fit: degenerate excitation, ridge lambda = {}", spec.ridge);
  }

  // Convex relaxation over (K, w = K theta_eq, B).
  const qp::Solution relaxed =
      feasible_start ? qp::solve(problem, *feasible_start, spec.qp) : qp::solve(problem, spec.qp);
  out.relaxation_objective = relaxed.objective;
  out.iterations = relaxed.iterations;

  State st;
  st.k = to_monomial(relaxed.x.segment(layout.k0, kP));
  st.b = to_monomial(relaxed.x.segment(layout.b0, kP));
  snap_initial_bounds(bounds, st);
  refit_equilibrium(samples, spec, st);

  out.refine_rounds = refine(samples, bounds, spec, st, &out.iterations);

  // Reported KKT residuals: the (K, B) problem with the final equilibrium held fixed.
  qp::Solution last;
  last = refit_stiffness_damping(samples, bounds, spec, st);
  out.iterations += last.iterations;
  out.kkt = last.kkt;
  out.k = st.k;
  out.b = st.b;
  out.e1 = st.e1;
  out.e2 = st.e2;
  out.objective = mean_squared_residual(samples, st);

  std::vector<double> reference(samples.size()), predicted(samples.size());
  for (std::size_t r = 0; r < samples.size(); ++r) {
    const auto& smp = samples[r];
    predicted[r] = impedance_torque(poly::horner(st.k, smp.phase), equilibrium_at(st, smp),
                                    poly::horner(st.b, smp.phase), smp.angle, smp.velocity);
    reference[r] = smp.torque;
  }
  out.vaf = vaf(reference, predicted);
  out.residual_rms = std::sqrt(out.objective);

  for (const auto& bound : bounds) {
    const double K = poly::horner(out.k, bound.phase);
    const double B = poly::horner(out.b, bound.phase);
    out.constraint_violation_max =
        std::max({out.constraint_violation_max, bound.k_min - K, bound.b_min - B, B - bound.b_max});
  }
  return out;
}

std::vector<PhaseBound> grid_bounds(const ConstraintProfile& constraints) {
  constraints.validate();
  std::vector<PhaseBound> bounds(kPhasePoints);
  for (std::size_t i = 0; i < kPhasePoints; ++i) {
    bounds[i] = PhaseBound{phase_at(i), constraints.k_lower(i), constraints.b_min[i], constraints.b_max[i]};
  }
  return bounds;
}

}  // namespace fitting

ImpedanceFitter::ImpedanceFitter(ConstraintProfile constraints, FitOptions options)
    : constraints_(constraints), options_(options), bounds_(fitting::grid_bounds(constraints_)) {}

FitResult ImpedanceFitter::fit(const StrideSet& strides) const {
  if (strides.strides.empty()) throw Error(ErrorCode::EmptyInput, "impedance fit needs at least one stride");
  std::vector<fitting::Sample> samples;
  for (const auto& stride : strides.strides) {
    for (std::size_t i = 0; i < kPhasePoints; ++i) {
      const double s = phase_at(i);
      if (s > options_.stance_end + 1e-12) break;
      samples.push_back({s, stride.angle[i], stride.velocity[i], stride.torque[i], 0.0});
    }
  }
  fitting::Spec spec;
  spec.window_end = options_.stance_end;
  spec.ridge = options_.ridge;
  spec.singular_ratio = options_.singular_ratio;
  spec.qp = options_.qp;
  const fitting::Result r = fitting::fit(samples, bounds_, spec);

  FitResult out;
  out.polynomials.k = r.k;
  out.polynomials.e = r.e1;
  out.polynomials.b = r.b;
  out.polynomials.task = strides.task;
  out.polynomials.joint = strides.joint;
  out.vaf = r.vaf;
  out.residual_rms = r.residual_rms;
  out.constraint_violation_max = r.constraint_violation_max;
  out.objective = r.objective;
  out.kkt = r.kkt;
  out.iterations = r.iterations;
  out.ridge_applied = r.ridge_applied;
  out.warnings = r.warnings;
  return out;
}

FitResult fit_impedance(const StrideSet& strides, const ConstraintProfile& constraints, double stance_end) {
  FitOptions options;
  options.stance_end = stance_end;
  return ImpedanceFitter(constraints, options).fit(strides);
}

PhaseSeries predicted_torque(const ImpedancePolynomials& poly, const Stride& stride) {
  PhaseSeries::Values v{};
  for (std::size_t i = 0; i < kPhasePoints; ++i) {
    const auto p = eval_impedance(poly, phase_at(i));
    v[i] = impedance_torque(p.stiffness, p.equilibrium, p.damping, stride.angle[i], stride.velocity[i]);
  }
  return PhaseSeries(SignalKind::torque, v);
}

}  // namespace ptune
