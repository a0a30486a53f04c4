#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "wfrflow/error.hpp"
#include "wfrflow/geometry.hpp"

using namespace wfrflow;

namespace {

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

struct Draw {
  double m0, m1, delta;
  Vec x0, x1;
};

Draw random_draw(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mass(0.05, 5.0), unit(0.0, 1.0), dir(-1.0, 1.0);
  Draw d;
  d.m0 = mass(rng);
  d.m1 = mass(rng);
  d.delta = 0.2 + 5.0 * unit(rng);
  const int dim = 1 + static_cast<int>(rng() % 4);
  d.x0 = Vec(dim);
  Vec heading(dim);
  for (int k = 0; k < dim; ++k) {
    d.x0[k] = 10.0 * dir(rng);
    heading[k] = dir(rng);
  }
  if (heading.norm() == 0.0) heading[0] = 1.0;
  const double dist = 0.9 * std::numbers::pi * d.delta * unit(rng);
  d.x1 = d.x0 + dist * heading.normalized();
  return d;
}

// Independent action oracle: integrate 1/2 (|omega|^2 / m + delta^2 m'^2 / m)
// along the traveling Dirac, with constants recomputed from first principles.
double action_integral(const Draw& d, int steps) {
  const double dist = (d.x1 - d.x0).norm();
  const double tau = std::tan(dist / (2.0 * d.delta));
  const double c = std::sqrt(d.m0 * d.m1 / (1.0 + tau * tau));
  const double A = d.m0 + d.m1 - 2.0 * c;
  const double B = d.m0 - c;
  const double omega = 2.0 * d.delta * tau * c;
  double sum = 0.0;
  const double h = 1.0 / steps;
  for (int k = 0; k < steps; ++k) {
    const double t = (k + 0.5) * h;
    const double m = A * t * t - 2.0 * B * t + d.m0;
    const double mp = 2.0 * A * t - 2.0 * B;
    sum += 0.5 * (omega * omega / m + d.delta * d.delta * mp * mp / m);
  }
  return sum * h;
}

}  // namespace

TEST_CASE("geodesic constants for coincident unit Diracs vanish") {
  const auto p = geodesic_constants(1.0, 1.0, v2(0.3, -1.0), v2(0.3, -1.0), 1.0);
  CHECK(p.A == 0.0);
  CHECK(p.B == 0.0);
  CHECK(p.tau == 0.0);
  CHECK(p.omega0.norm() == 0.0);
}

TEST_CASE("geodesic constants for pure annihilation") {
  const auto p = geodesic_constants(1.0, 0.0, v2(0, 0), v2(1, 2), 1.0);
  CHECK(p.A == 1.0);
  CHECK(p.B == 1.0);
  CHECK(p.omega0.norm() == 0.0);
}

TEST_CASE("in-place growth from 1 to 4 follows (1+t)^2") {
  const auto p = geodesic_constants(1.0, 4.0, v2(1, 1), v2(1, 1), 1.0);
  CHECK(p.tau == 0.0);
  CHECK(p.A == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(p.B == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(p.omega0.norm() == 0.0);
  for (double t : {0.0, 0.25, 0.5, 1.0}) CHECK(path_mass(p, t) == doctest::Approx((1 + t) * (1 + t)).epsilon(1e-14));
  const auto tgt = conditional_targets(p, 0.0, v2(1, 1), 0.1);
  CHECK(tgt.g == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(tgt.m == 1.0);
  CHECK(tgt.u.norm() == 0.0);
  const double h = 1e-6;
  const double fd = (std::log(path_mass(p, h)) - std::log(path_mass(p, -h))) / (2 * h);
  CHECK(std::abs(fd - tgt.g) < 1e-5);
}

TEST_CASE("geodesic constants reject invalid input") {
  CHECK_THROWS_AS(geodesic_constants(1, 1, v2(0, 0), v2(1, 0), 0.0), InvalidArgument);
  CHECK_THROWS_AS(geodesic_constants(1, 1, v2(0, 0), v2(1, 0), -2.0), InvalidArgument);
  CHECK_THROWS_AS(geodesic_constants(-1, 1, v2(0, 0), v2(1, 0), 1.0), InvalidArgument);
  CHECK_THROWS_AS(geodesic_constants(1, -0.5, v2(0, 0), v2(1, 0), 1.0), InvalidArgument);
  CHECK_THROWS_AS(geodesic_constants(1, 1, v2(0, 0), Vec::Zero(3), 1.0), InvalidArgument);
  CHECK_THROWS_AS(wfr_dd_distance_sq(1, v2(0, 0), 1, Vec::Zero(3), 1.0), InvalidArgument);
  CHECK_THROWS_AS(wfr_dd_distance_sq(1, v2(0, 0), 1, v2(0, 0), 0.0), InvalidArgument);
}

TEST_CASE("distance examples") {
  CHECK(wfr_dd_distance_sq(1, v2(2, 3), 1, v2(2, 3), 1.0) == 0.0);
  CHECK(wfr_dd_distance_sq(1, v2(0, 0), 0, v2(5, 1), 1.0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(wfr_dd_distance_sq(1, v2(0, 0), 1, v2(std::numbers::pi, 0), 1.0) == doctest::Approx(4.0).epsilon(1e-15));
  // Past the clamp the cosine stays at zero.
  CHECK(wfr_dd_distance_sq(1, v2(0, 0), 1, v2(10, 0), 1.0) == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("distance matches the numerically integrated action for m0=1, m1=2, |dx|=1") {
  Draw d{1.0, 2.0, 1.0, v2(0, 0), v2(1, 0)};
  const double action = action_integral(d, 100000);
  const double dist = wfr_dd_distance_sq(d.m0, d.x0, d.m1, d.x1, d.delta);
  CHECK(std::abs(dist - action) / action < 1e-4);
}

TEST_CASE("traveling Gaussian mean examples") {
  const auto p = geodesic_constants(1.3, 0.7, v2(1, 2), v2(2, 0.5), 2.0);
  const Vec e0 = traveling_gaussian_mean(p, 0.0);
  CHECK(e0[0] == 1.0);
  CHECK(e0[1] == 2.0);

  const auto still = geodesic_constants(2.0, 0.5, v2(1, 2), v2(1, 2), 1.0);
  CHECK(still.degenerate);
  for (double t : {0.1, 0.6, 1.0}) CHECK((traveling_gaussian_mean(still, t) - still.x0).norm() == 0.0);

  const auto q = geodesic_constants(1.0, 1.0, v2(0, 0), v2(1, 0), 10.0);
  const Vec e1 = traveling_gaussian_mean(q, 1.0);
  CHECK(std::abs(e1[0] - 1.0) < 1e-9);
  CHECK(std::abs(e1[1]) < 1e-9);
}

TEST_CASE("mean integrates omega0 / m along the path") {
  // Independent check: trapezoid-integrate omega0/m(t) and compare with eta_t.
  const auto p = geodesic_constants(1.0, 2.0, v2(-1, 0.5), v2(0.5, 1.5), 1.5);
  const int steps = 200000;
  Vec x = p.x0;
  const double h = 0.7 / steps;
  for (int k = 0; k < steps; ++k) {
    const double t = k * h;
    x += 0.5 * h * (p.omega0 / path_mass(p, t) + p.omega0 / path_mass(p, t + h));
  }
  CHECK((x - traveling_gaussian_mean(p, 0.7)).norm() < 1e-9);
}

TEST_CASE("conditional targets examples") {
  const auto p = geodesic_constants(1.0, 1.0, v2(3, 3), v2(3, 3), 1.0);
  for (double t : {0.0, 0.5, 0.9}) {
    const auto tgt = conditional_targets(p, t, v2(3.1, 2.9), 0.1);
    CHECK(tgt.u.norm() == 0.0);
    CHECK(tgt.g == 0.0);
    CHECK(tgt.m == 1.0);
  }
  const Vec x0 = v2(0.2, -0.4), x1 = v2(1.1, 0.3);
  const double delta = 1.0;
  const auto q = geodesic_constants(1.0, 2.0, x0, x1, delta);
  const auto tgt = conditional_targets(q, 0.5, x1, 0.1);
  const double tau = std::tan((x1 - x0).norm() / (2 * delta));
  const Vec omega = 2 * delta * tau * std::sqrt(2.0 / (1 + tau * tau)) * (x1 - x0).normalized();
  CHECK((tgt.u * tgt.m - omega).norm() < 1e-12);
}

TEST_CASE("mass floor is signalled for a pure-death path at t=1") {
  const auto p = geodesic_constants(1.0, 0.0, v2(0, 0), v2(0, 0), 1.0);
  CHECK_THROWS_AS(conditional_targets(p, 1.0, v2(0, 0), 0.1), MassFloorError);
  CHECK_NOTHROW(conditional_targets(p, 1.0 - 1e-3, v2(0, 0), 0.1));
  CHECK_THROWS_AS(conditional_targets(p, 0.5, v2(0, 0), -1.0), InvalidArgument);
}

TEST_CASE("conditional sampling") {
  const auto p = geodesic_constants(1.0, 1.5, v2(0.5, -0.5), v2(1.5, 0.0), 1.0);
  const Vec exact = traveling_gaussian_mean(p, 0.3);
  CHECK((sample_conditional_point(p, 0.3, 0.0, 7) - exact).norm() == 0.0);
  CHECK((sample_conditional_point(p, 0.3, 0.1, 42) - sample_conditional_point(p, 0.3, 0.1, 42)).norm() == 0.0);

  std::mt19937_64 rng(123);
  const int n = 100000;
  Vec mean = Vec::Zero(2);
  for (int k = 0; k < n; ++k) mean += sample_conditional_point(p, 0.0, 0.1, rng);
  mean /= n;
  for (int c = 0; c < 2; ++c) CHECK(std::abs(mean[c] - p.x0[c]) < 3 * 0.1 / std::sqrt(double(n)));
}

TEST_CASE("property: geodesic invariants over random draws") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto d = random_draw(rng);
    const auto p = geodesic_constants(d.m0, d.m1, d.x0, d.x1, d.delta);
    CAPTURE(trial);
    CHECK(path_mass(p, 0.0) == d.m0);
    CHECK(std::abs(path_mass(p, 1.0) - d.m1) <= 1e-12 * d.m1);
    CHECK((traveling_gaussian_mean(p, 0.0) - d.x0).cwiseAbs().maxCoeff() == 0.0);
    CHECK((traveling_gaussian_mean(p, 1.0) - d.x1).cwiseAbs().maxCoeff() < 1e-9);

    const double lhs = d.m0 * p.A - p.B * p.B;
    const double rhs = d.m0 * d.m1 * p.tau * p.tau / (1 + p.tau * p.tau);
    CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max({std::abs(rhs), d.m0 * d.m0, d.m0 * d.m1}));
    const double omega = 2 * d.delta * p.tau * std::sqrt(d.m0 * d.m1 / (1 + p.tau * p.tau));
    CHECK(std::abs(p.omega0.norm() - omega) <= 1e-12 * std::max(1.0, omega));

    for (int k = 0; k <= 99; ++k) {
      const double t = k / 99.0;
      const auto tgt = conditional_targets(p, t, d.x0, 0.1);
      CHECK((tgt.u * tgt.m - p.omega0).cwiseAbs().maxCoeff() <= 1e-10 * std::max(1.0, p.omega0.norm()));
      if (tgt.m > 1e-3 && t > 1e-5 && t < 1 - 1e-5) {
        const double h = 1e-6;
        const double fd = (std::log(path_mass(p, t + h)) - std::log(path_mass(p, t - h))) / (2 * h);
        CHECK(std::abs(fd - tgt.g) < 1e-5);
      }
    }
    CHECK(wfr_dd_distance_sq(d.m0, d.x0, d.m1, d.x1, d.delta) ==
          wfr_dd_distance_sq(d.m1, d.x1, d.m0, d.x0, d.delta));
  }
}

TEST_CASE("property: distance equals the action integral over random draws") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const auto d = random_draw(rng);
    const double action = action_integral(d, 100000);
    const double dist = wfr_dd_distance_sq(d.m0, d.x0, d.m1, d.x1, d.delta);
    CAPTURE(trial);
    CHECK(std::abs(dist - action) <= 1e-4 * action);
  }
}
