#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "ptune/error.hpp"
#include "ptune/stats.hpp"

using namespace ptune;

namespace {

// Student-t density, integrated with composite Simpson from 0 to t.
double t_density(double x, double nu) {
  const double c = std::exp(std::lgamma((nu + 1.0) / 2.0) - std::lgamma(nu / 2.0)) / std::sqrt(nu * std::numbers::pi);
  return c * std::pow(1.0 + x * x / nu, -(nu + 1.0) / 2.0);
}

double t_cdf_oracle(double t, double nu) {
  const int n = 200000;
  const double h = t / n;
  double acc = t_density(0.0, nu) + t_density(t, nu);
  for (int i = 1; i < n; ++i) acc += (i % 2 ? 4.0 : 2.0) * t_density(i * h, nu);
  return 0.5 + acc * h / 3.0;
}

double beta_oracle(double a, double b, double x) {
  auto integrand = [&](double lo, double hi) {
    const int n = 200000;
    const double h = (hi - lo) / n;
    auto f = [&](double y) { return std::pow(y, a - 1.0) * std::pow(1.0 - y, b - 1.0); };
    double acc = f(lo) + f(hi);
    for (int i = 1; i < n; ++i) acc += (i % 2 ? 4.0 : 2.0) * f(lo + i * h);
    return acc * h / 3.0;
  };
  const double full = std::exp(std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
  return integrand(0.0, x) / full;
}

}  // namespace

TEST_SUITE("stats") {
  TEST_CASE("t CDF matches numeric integration") {
    for (double nu : {1.0, 2.0, 4.0, 9.0, 29.0, 134.0}) {
      for (double t : {-4.5, -2.1, -0.3, 0.0, 0.8, 1.7, 3.9}) {
        const double oracle = t >= 0 ? t_cdf_oracle(t, nu) : 1.0 - t_cdf_oracle(-t, nu);
        CHECK(std::abs(stats::student_t_cdf(t, nu) - oracle) <= 1e-10);
      }
    }
  }

  TEST_CASE("incomplete beta matches numeric integration") {
    for (auto [a, b] : std::vector<std::pair<double, double>>{{2.0, 3.0}, {4.5, 1.5}, {1.0, 1.0}, {7.0, 12.0}}) {
      for (double x : {0.05, 0.3, 0.5, 0.77, 0.95}) {
        CHECK(std::abs(stats::incomplete_beta(a, b, x) - beta_oracle(a, b, x)) <= 1e-10);
      }
    }
    CHECK(stats::incomplete_beta(2.0, 3.0, 0.0) == 0.0);
    CHECK(stats::incomplete_beta(2.0, 3.0, 1.0) == 1.0);
  }

  TEST_CASE("paired t-test degenerate cases") {
    const std::vector<double> a{0.1, 0.4, 0.2, 0.9, 0.5};
    SUBCASE("a == b") {
      const auto r = stats::paired_t_one_tailed(a, a);
      CHECK(r.t == 0.0);
      CHECK(r.p == 0.5);
    }
    SUBCASE("a = b - 1") {
      std::vector<double> b = a;
      std::vector<double> lower = a;
      for (auto& v : lower) v -= 1.0;
      const auto r = stats::paired_t_one_tailed(lower, b);
      CHECK(r.p < 0.001);
      CHECK(std::isinf(r.t));
      CHECK(r.t < 0);
    }
    SUBCASE("a = b + 1") {
      std::vector<double> higher = a;
      for (auto& v : higher) v += 1.0;
      CHECK(stats::paired_t_one_tailed(higher, a).p == 1.0);
    }
    SUBCASE("errors") {
      CHECK_THROWS_AS(stats::paired_t_one_tailed(std::vector<double>{1.0}, std::vector<double>{2.0}), Error);
      CHECK_THROWS_AS(stats::paired_t_one_tailed(a, std::vector<double>{1.0, 2.0}), Error);
    }
  }

  TEST_CASE("paired t-test on seeded samples") {
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> a(12), b(12);
    for (std::size_t i = 0; i < a.size(); ++i) {
      b[i] = n(rng);
      a[i] = b[i] - 0.4 + 0.5 * n(rng);
    }
    double md = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) md += a[i] - b[i];
    md /= 12.0;
    double ss = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) ss += (a[i] - b[i] - md) * (a[i] - b[i] - md);
    const double t = md / std::sqrt(ss / 11.0 / 12.0);

    const auto r = stats::paired_t_one_tailed(a, b);
    CHECK(r.dof == 11.0);
    CHECK(std::abs(r.t - t) <= 1e-12 * std::abs(t));
    const double p = t >= 0 ? t_cdf_oracle(t, 11.0) : 1.0 - t_cdf_oracle(-t, 11.0);
    CHECK(std::abs(r.p - p) <= 1e-10);
  }
}
