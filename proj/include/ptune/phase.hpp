#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <string_view>

namespace ptune {

/// Samples per normalized gait cycle (or sit-stand motion).
inline constexpr std::size_t kPhasePoints = 150;

/// Phase of grid sample i (0-based): s_i = i / 149, so s spans [0, 1] inclusive.
constexpr double phase_at(std::size_t i) noexcept {
  return static_cast<double>(i) / static_cast<double>(kPhasePoints - 1);
}

/// Nearest grid index for a phase in [0, 1].
std::size_t nearest_index(double s) noexcept;

inline constexpr double kDegToRad = std::numbers::pi / 180.0;

enum class SignalKind { angle, velocity, torque };
enum class Joint { ankle, knee, hip };

std::string_view to_string(SignalKind kind);
std::string_view to_string(Joint joint);
Joint joint_from_string(std::string_view name);

/// A signal sampled on the canonical phase grid.
class PhaseSeries {
 public:
  using Values = std::array<double, kPhasePoints>;

  PhaseSeries() = default;
  PhaseSeries(SignalKind kind, const Values& values);

  static PhaseSeries constant(SignalKind kind, double value);
  static PhaseSeries zeros(SignalKind kind) { return constant(kind, 0.0); }

  SignalKind kind() const noexcept { return kind_; }
  const Values& values() const noexcept { return values_; }
  std::span<const double> span() const noexcept { return values_; }

  double operator[](std::size_t i) const noexcept { return values_[i]; }
  double& at_mut(std::size_t i) { return values_.at(i); }

  std::size_t size() const noexcept { return kPhasePoints; }

  double max() const noexcept;
  double min() const noexcept;

  bool operator==(const PhaseSeries&) const = default;

 private:
  SignalKind kind_ = SignalKind::angle;
  Values values_{};
};

/// A walking task: speed in m/s, incline in degrees.
struct Task {
  double speed = 1.0;
  double incline = 0.0;

  auto operator<=>(const Task&) const = default;
  bool operator==(const Task&) const = default;

  std::string label() const;
};

/// Reserved task under which sit-stand motions are stored.
inline constexpr Task kSitStandTask{0.0, 0.0};

/// Parses "1.0,0" or "1.0:0" into a Task.
Task parse_task(std::string_view text);

}  // namespace ptune
