#include "ptune/kinematics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <spdlog/spdlog.h>

#include "ptune/error.hpp"
#include "ptune/impedance.hpp"

namespace ptune {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double clamp_unit(double x, const char* what) {
  if (x >= 0.0 && x <= 1.0) return x;
  spdlog::warn("{} {} outside [0, 1], clamped", what, x);
  return std::clamp(x, 0.0, 1.0);
}

// Tensor Bernstein regressors at normalized (x, y), index i * (dy + 1) + j.
std::vector<double> tensor_row(int dx, int dy, double x, double y) {
  const auto bx = bernstein_basis(dx, x);
  const auto by = bernstein_basis(dy, y);
  std::vector<double> row;
  row.reserve(bx.size() * by.size());
  for (double u : bx) {
    for (double v : by) row.push_back(u * v);
  }
  return row;
}

const MatrixXd& fourier_design() {
  static const MatrixXd F = [] {
    MatrixXd m(static_cast<Eigen::Index>(kPhasePoints), static_cast<Eigen::Index>(kFourierCoeffs));
    for (std::size_t i = 0; i < kPhasePoints; ++i) {
      const auto row = fourier_row(phase_at(i));
      for (std::size_t c = 0; c < kFourierCoeffs; ++c) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = row[c];
    }
    return m;
  }();
  return F;
}

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace

FourierCoeffs fourier_row(double s) {
  FourierCoeffs row{};
  row[0] = 1.0;
  for (int j = 1; j <= kFourierDegree; ++j) {
    // Reducing j*s modulo 1 makes s = 0 and s = 1 produce identical arguments.
    const double js = static_cast<double>(j) * s;
    const double angle = 2.0 * std::numbers::pi * (js - std::floor(js));
    row[static_cast<std::size_t>(2 * j - 1)] = std::cos(angle);
    row[static_cast<std::size_t>(2 * j)] = std::sin(angle);
  }
  return row;
}

double eval_fourier(const FourierCoeffs& coeffs, double s) {
  const auto row = fourier_row(s);
  double sum = 0.0;
  for (std::size_t c = 0; c < kFourierCoeffs; ++c) sum += coeffs[c] * row[c];
  return sum;
}

std::vector<double> bernstein_basis(int degree, double x) {
  if (degree < 0) throw Error(ErrorCode::InvalidArgument, "Bernstein degree must be non-negative");
  std::vector<double> out(static_cast<std::size_t>(degree + 1));
  for (int j = 0; j <= degree; ++j) {
    out[static_cast<std::size_t>(j)] = binomial(degree, j) * std::pow(x, j) * std::pow(1.0 - x, degree - j);
  }
  return out;
}

double eval_bernstein(std::span<const double> coeffs, double x) {
  if (coeffs.empty()) throw Error(ErrorCode::InvalidArgument, "Bernstein evaluation needs at least one coefficient");
  x = clamp_unit(x, "Bernstein argument");
  // de Casteljau: convex combinations keep constant coefficients constant.
  std::vector<double> c(coeffs.begin(), coeffs.end());
  for (std::size_t level = c.size() - 1; level > 0; --level) {
    for (std::size_t j = 0; j < level; ++j) c[j] = (1.0 - x) * c[j] + x * c[j + 1];
  }
  return c[0];
}

std::array<double, 2> TaskNormalization::operator()(const Task& task) const {
  const double x = speed_hi > speed_lo ? (task.speed - speed_lo) / (speed_hi - speed_lo) : 0.0;
  const double y = incline_hi > incline_lo ? (task.incline - incline_lo) / (incline_hi - incline_lo) : 0.0;
  return {x, y};
}

std::vector<double> task_weights(const KinematicModel& model, const Task& task) {
  auto [x, y] = model.normalization(task);
  x = clamp_unit(x, "normalized speed");
  y = clamp_unit(y, "normalized incline");
  const auto row = tensor_row(model.speed_degree, model.incline_degree, x, y);
  std::vector<double> w(model.bases.size(), 0.0);
  for (std::size_t k = 0; k < model.bases.size(); ++k) {
    const auto& coeffs = model.task_coeffs[k];
    for (std::size_t p = 0; p < row.size(); ++p) w[k] += coeffs[p] * row[p];
  }
  return w;
}

double eval_model(const KinematicModel& model, double s, const Task& task) {
  if (!(s >= 0.0 && s <= 1.0)) throw Error(ErrorCode::PhaseOutOfRange, "phase " + std::to_string(s) + " outside [0, 1]");
  const auto w = task_weights(model, task);
  double sum = 0.0;
  for (std::size_t k = 0; k < model.bases.size(); ++k) sum += eval_fourier(model.bases[k], s) * w[k];
  return sum;
}

PhaseSeries eval_model(const KinematicModel& model, const Task& task) {
  const auto w = task_weights(model, task);
  PhaseSeries::Values v{};
  for (std::size_t i = 0; i < kPhasePoints; ++i) {
    const auto row = fourier_row(phase_at(i));
    double sum = 0.0;
    for (std::size_t k = 0; k < model.bases.size(); ++k) {
      double b = 0.0;
      for (std::size_t c = 0; c < kFourierCoeffs; ++c) b += model.bases[k][c] * row[c];
      sum += b * w[k];
    }
    v[i] = sum;
  }
  return PhaseSeries(SignalKind::angle, v);
}

KinematicOptions default_kinematic_options(Joint joint) {
  KinematicOptions o;
  o.speed_degree = 2;
  o.incline_degree = joint == Joint::knee ? 3 : 2;
  return o;
}

KinematicModel fit_kinematic_model(const std::map<Task, PhaseSeries>& targets, Joint joint,
                                   const KinematicOptions& options) {
  if (targets.empty()) throw Error(ErrorCode::EmptyInput, "kinematic fit needs at least one task");
  if (options.speed_degree < 0 || options.incline_degree < 0) {
    throw Error(ErrorCode::InvalidArgument, "Bernstein degrees must be non-negative");
  }
  std::set<double> speeds, inclines;
  for (const auto& [task, _] : targets) {
    speeds.insert(task.speed);
    inclines.insert(task.incline);
  }
  if (static_cast<int>(speeds.size()) < options.speed_degree + 1 ||
      static_cast<int>(inclines.size()) < options.incline_degree + 1) {
    throw Error(ErrorCode::RankDeficientTaskGrid,
                std::to_string(speeds.size()) + " speeds x " + std::to_string(inclines.size()) +
                    " inclines cannot identify Bernstein degrees (" + std::to_string(options.speed_degree) + ", " +
                    std::to_string(options.incline_degree) + ")");
  }

  KinematicModel model;
  model.joint = joint;
  model.speed_degree = options.speed_degree;
  model.incline_degree = options.incline_degree;
  model.normalization = {*speeds.begin(), *speeds.rbegin(), *inclines.begin(), *inclines.rbegin()};

  const auto T = static_cast<Eigen::Index>(targets.size());
  const auto P = static_cast<Eigen::Index>((options.speed_degree + 1) * (options.incline_degree + 1));
  const auto C = static_cast<Eigen::Index>(kFourierCoeffs);

  // Per-task Fourier coefficients.
  static const Eigen::HouseholderQR<MatrixXd> fourier_qr(fourier_design());
  MatrixXd Y(static_cast<Eigen::Index>(kPhasePoints), T);
  MatrixXd Phi(T, P);
  Eigen::Index t = 0;
  for (const auto& [task, series] : targets) {
    if (series.kind() != SignalKind::angle) throw Error(ErrorCode::KindMismatch, "kinematic targets must be angles");
    for (std::size_t i = 0; i < kPhasePoints; ++i) Y(static_cast<Eigen::Index>(i), t) = series[i];
    const auto [x, y] = model.normalization(task);
    const auto row = tensor_row(options.speed_degree, options.incline_degree, x, y);
    for (Eigen::Index p = 0; p < P; ++p) Phi(t, p) = row[static_cast<std::size_t>(p)];
    ++t;
  }
  const MatrixXd Fc = fourier_qr.solve(Y).transpose();  // T x C

  Eigen::ColPivHouseholderQR<MatrixXd> task_qr(Phi);
  if (task_qr.rank() < P) {
    throw Error(ErrorCode::RankDeficientTaskGrid, "task design has rank " + std::to_string(task_qr.rank()) + " < " +
                                                      std::to_string(P));
  }
  const MatrixXd W = task_qr.solve(Fc);  // P x C

  Eigen::JacobiSVD<MatrixXd> svd(W, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorXd& sigma = svd.singularValues();
  const auto available = static_cast<std::size_t>(sigma.size());
  std::size_t keep = 0;
  if (options.basis_count) {
    keep = std::min(*options.basis_count, available);
  } else {
    const double total = sigma.squaredNorm();
    double acc = 0.0;
    while (keep < available && (total == 0.0 ? keep < 1 : acc < options.energy * total)) {
      acc += sigma(static_cast<Eigen::Index>(keep)) * sigma(static_cast<Eigen::Index>(keep));
      ++keep;
    }
  }
  keep = std::max<std::size_t>(keep, 1);

  for (std::size_t k = 0; k < keep; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    FourierCoeffs basis{};
    for (Eigen::Index c = 0; c < C; ++c) basis[static_cast<std::size_t>(c)] = sigma(kk) * svd.matrixV()(c, kk);
    std::vector<double> coeffs(static_cast<std::size_t>(P));
    for (Eigen::Index p = 0; p < P; ++p) coeffs[static_cast<std::size_t>(p)] = svd.matrixU()(p, kk);
    model.bases.push_back(basis);
    model.task_coeffs.push_back(std::move(coeffs));
  }

  for (const auto& [task, series] : targets) {
    const PhaseSeries fitted = eval_model(model, task);
    model.task_vaf[task] = series.max() > series.min() ? vaf(series, fitted) : 1.0;
  }
  return model;
}

KinematicModel fit_kinematic_model(const Dataset& dataset, Joint joint, const TrainingOverrides& overrides,
                                   const std::optional<KinematicOptions>& options) {
  std::map<Task, PhaseSeries> targets;
  for (const Task& task : dataset.walking_tasks()) {
    if (dataset.subjects_with(task, joint).empty()) continue;
    targets.emplace(task, population_mean(dataset, task, joint, SignalKind::angle));
  }
  for (const auto& [task, offset] : overrides) {
    auto it = targets.find(task);
    if (it == targets.end()) throw Error(ErrorCode::InvalidArgument, "override for unknown task " + task.label());
    PhaseSeries::Values v = it->second.values();
    for (std::size_t i = 0; i < kPhasePoints; ++i) v[i] += offset[i];
    it->second = PhaseSeries(SignalKind::angle, v);
  }
  return fit_kinematic_model(targets, joint, options.value_or(default_kinematic_options(joint)));
}

}  // namespace ptune
