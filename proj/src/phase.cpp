#include "ptune/phase.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>

#include "ptune/error.hpp"

namespace ptune {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::NonFiniteSample: return "NonFiniteSample";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::InsufficientSubjects: return "InsufficientSubjects";
    case ErrorCode::InsufficientStrides: return "InsufficientStrides";
    case ErrorCode::KindMismatch: return "KindMismatch";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::PhaseOutOfRange: return "PhaseOutOfRange";
    case ErrorCode::InfeasibleConstraints: return "InfeasibleConstraints";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::ZeroVarianceReference: return "ZeroVarianceReference";
    case ErrorCode::RankDeficientTaskGrid: return "RankDeficientTaskGrid";
    case ErrorCode::DegenerateCalibration: return "DegenerateCalibration";
    case ErrorCode::SeparationExceeded: return "SeparationExceeded";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::MissingBaselineTask: return "MissingBaselineTask";
    case ErrorCode::RegenerationRejected: return "RegenerationRejected";
    case ErrorCode::MissingModel: return "MissingModel";
    case ErrorCode::UnmatchedPairs: return "UnmatchedPairs";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::ValidationFailed: return "ValidationFailed";
    case ErrorCode::DirtyBundle: return "DirtyBundle";
    case ErrorCode::DigestMismatch: return "DigestMismatch";
    case ErrorCode::VersionUnsupported: return "VersionUnsupported";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Busy: return "Busy";
  }
  return "Unknown";
}

std::size_t nearest_index(double s) noexcept {
  const double clamped = std::clamp(s, 0.0, 1.0);
  return static_cast<std::size_t>(std::lround(clamped * static_cast<double>(kPhasePoints - 1)));
}

std::string_view to_string(SignalKind kind) {
  switch (kind) {
    case SignalKind::angle: return "angle";
    case SignalKind::velocity: return "velocity";
    case SignalKind::torque: return "torque";
  }
  return "unknown";
}

std::string_view to_string(Joint joint) {
  switch (joint) {
    case Joint::ankle: return "ankle";
    case Joint::knee: return "knee";
    case Joint::hip: return "hip";
  }
  return "unknown";
}

Joint joint_from_string(std::string_view name) {
  if (name == "ankle") return Joint::ankle;
  if (name == "knee") return Joint::knee;
  if (name == "hip") return Joint::hip;
  throw Error(ErrorCode::InvalidArgument, "unknown joint '" + std::string(name) + "'");
}

PhaseSeries::PhaseSeries(SignalKind kind, const Values& values) : kind_(kind), values_(values) {}

PhaseSeries PhaseSeries::constant(SignalKind kind, double value) {
  Values v;
  v.fill(value);
  return PhaseSeries(kind, v);
}

double PhaseSeries::max() const noexcept { return *std::max_element(values_.begin(), values_.end()); }
double PhaseSeries::min() const noexcept { return *std::min_element(values_.begin(), values_.end()); }

std::string Task::label() const {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g m/s, %+.3g deg", speed, incline);
  return buf;
}

namespace {
double parse_double(std::string_view text) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error(ErrorCode::InvalidArgument, "not a number: '" + std::string(text) + "'");
  }
  return v;
}
}  // namespace

Task parse_task(std::string_view text) {
  const auto sep = text.find_first_of(",:");
  if (sep == std::string_view::npos) {
    throw Error(ErrorCode::InvalidArgument, "task must be 'speed,incline', got '" + std::string(text) + "'");
  }
  return Task{parse_double(text.substr(0, sep)), parse_double(text.substr(sep + 1))};
}

}  // namespace ptune
