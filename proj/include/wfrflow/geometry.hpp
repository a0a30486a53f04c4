#pragma once

// Closed-form Wasserstein-Fisher-Rao geometry between two weighted Diracs:
// distance, traveling-Dirac constants, and the traveling-Gaussian targets used
// by flow matching. Everything here works in normalized time t in [0, 1].

#include <cstdint>
#include <random>

#include "wfrflow/types.hpp"

namespace wfrflow {

// Paths whose mass drops below this are reported instead of differentiated.
inline constexpr double kMassFloor = 1e-8;
// tan() argument clamp just below the pole at pi/2.
inline constexpr double kTangentClamp = 1.5707963267948966 - 1e-6;

struct GeodesicParams {
  double m0 = 0.0;
  double m1 = 0.0;
  Vec x0;
  Vec x1;
  double delta = 1.0;
  double A = 0.0;
  double B = 0.0;
  Vec omega0;
  double tau = 0.0;
  // sqrt(m0*A - B^2); zero on the stationary (degenerate) branch.
  double arc_scale = 0.0;
  bool degenerate = true;

  int dim() const { return static_cast<int>(x0.size()); }
};

struct PathTarget {
  double t = 0.0;
  Vec x;
  Vec u;
  double g = 0.0;
  double m = 0.0;
};

GeodesicParams geodesic_constants(double m0, double m1, const Vec& x0, const Vec& x1, double delta);

// 2 delta^2 (m0 + m1 - 2 sqrt(m0 m1) cosbar(|x0 - x1| / (2 delta))).
double wfr_dd_distance_sq(double m0, const Vec& x0, double m1, const Vec& x1, double delta);

// m(t) = A t^2 - 2 B t + m0.
inline double path_mass(const GeodesicParams& p, double t) { return (p.A * t - 2.0 * p.B) * t + p.m0; }

// d/dt m(t).
inline double path_mass_rate(const GeodesicParams& p, double t) { return 2.0 * p.A * t - 2.0 * p.B; }

Vec traveling_gaussian_mean(const GeodesicParams& p, double t);

// Targets at (t, x). sigma is constant in t, so u carries no (x - eta) term.
// Throws MassFloorError when m(t) < kMassFloor.
PathTarget conditional_targets(const GeodesicParams& p, double t, const Vec& x, double sigma);

Vec sample_conditional_point(const GeodesicParams& p, double t, double sigma, std::uint64_t seed);
Vec sample_conditional_point(const GeodesicParams& p, double t, double sigma, std::mt19937_64& rng);

}  // namespace wfrflow
