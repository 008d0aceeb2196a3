#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <spdlog/spdlog.h>
#include <string>

#include "ptune/synthetic.hpp"
#include "ptune/tuning.hpp"

namespace test {

// Dataset and bundles are expensive enough to share between test cases.
inline const ptune::Dataset& dataset() {
  static const ptune::Dataset d = [] {
    spdlog::set_level(spdlog::level::err);
    ptune::synthetic::Options o;
    o.subjects = 6;
    o.strides_per_task = 8;
    o.sitstand_motions = 6;
    return ptune::synthetic::make_dataset(o);
  }();
  return d;
}

inline const ptune::ModelBundle& baseline() {
  static const ptune::ModelBundle b = ptune::build_baseline_bundle(dataset());
  return b;
}

inline double max_abs_diff(const ptune::PhaseSeries& a, const ptune::PhaseSeries& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < ptune::kPhasePoints; ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline ptune::PhaseSeries series(ptune::SignalKind kind, auto f) {
  ptune::PhaseSeries::Values v{};
  for (std::size_t i = 0; i < ptune::kPhasePoints; ++i) v[i] = f(ptune::phase_at(i));
  return ptune::PhaseSeries(kind, v);
}

// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  TempDir() {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() / ("ptune-test-" + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

}  // namespace test
