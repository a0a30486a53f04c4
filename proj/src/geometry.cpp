#include "wfrflow/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "wfrflow/error.hpp"

namespace wfrflow {

namespace {

void check_inputs(double m0, double m1, const Vec& x0, const Vec& x1, double delta) {
  if (!(delta > 0.0) || !std::isfinite(delta)) throw InvalidArgument("delta must be positive and finite");
  if (!(m0 >= 0.0) || !(m1 >= 0.0) || !std::isfinite(m0) || !std::isfinite(m1))
    throw InvalidArgument("Dirac masses must be non-negative and finite");
  if (x0.size() != x1.size()) throw InvalidArgument("endpoint dimension mismatch");
}

}  // namespace

GeodesicParams geodesic_constants(double m0, double m1, const Vec& x0, const Vec& x1, double delta) {
  check_inputs(m0, m1, x0, x1, delta);
  GeodesicParams p;
  p.m0 = m0;
  p.m1 = m1;
  p.x0 = x0;
  p.x1 = x1;
  p.delta = delta;

  const Vec diff = x1 - x0;
  const double dist = diff.norm();
  const double angle = std::min(dist / (2.0 * delta), kTangentClamp);
  p.tau = std::tan(angle);

  const double cos_angle = std::cos(angle);  // 1 / sqrt(1 + tau^2)
  const double root = std::sqrt(m0 * m1) * cos_angle;
  p.A = m0 + m1 - 2.0 * root;
  p.B = m0 - root;

  p.omega0 = Vec::Zero(x0.size());
  if (dist > 0.0) p.omega0 = (2.0 * delta * p.tau * root / dist) * diff;

  // m0*A - B^2 = m0*m1*sin^2(angle); the direct form avoids cancellation.
  const double det = m0 * m1 * std::sin(angle) * std::sin(angle);
  p.degenerate = !(det > 1e-12 * m0 * (m0 + m1));
  p.arc_scale = p.degenerate ? 0.0 : std::sqrt(det);
  return p;
}

double wfr_dd_distance_sq(double m0, const Vec& x0, double m1, const Vec& x1, double delta) {
  check_inputs(m0, m1, x0, x1, delta);
  const double arg = std::min((x0 - x1).norm() / (2.0 * delta), std::numbers::pi / 2.0);
  return 2.0 * delta * delta * (m0 + m1 - 2.0 * std::sqrt(m0 * m1) * std::cos(arg));
}

Vec traveling_gaussian_mean(const GeodesicParams& p, double t) {
  if (p.degenerate) return p.x0;
  const double s = p.arc_scale;
  const double phase = std::atan((p.A * t - p.B) / s) - std::atan(-p.B / s);
  return p.x0 + (phase / s) * p.omega0;
}

PathTarget conditional_targets(const GeodesicParams& p, double t, const Vec& x, double sigma) {
  if (!(sigma >= 0.0)) throw InvalidArgument("sigma must be non-negative");
  if (x.size() != p.x0.size()) throw InvalidArgument("sample dimension mismatch");
  const double m = path_mass(p, t);
  if (!(m >= kMassFloor)) throw MassFloorError("path mass below floor at t=" + std::to_string(t), m);
  PathTarget out;
  out.t = t;
  out.x = x;
  out.m = m;
  out.u = p.omega0 / m;
  out.g = path_mass_rate(p, t) / m;
  return out;
}

Vec sample_conditional_point(const GeodesicParams& p, double t, double sigma, std::mt19937_64& rng) {
  Vec x = traveling_gaussian_mean(p, t);
  if (sigma > 0.0) {
    std::normal_distribution<double> normal(0.0, sigma);
    for (Eigen::Index k = 0; k < x.size(); ++k) x[k] += normal(rng);
  }
  return x;
}

Vec sample_conditional_point(const GeodesicParams& p, double t, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_conditional_point(p, t, sigma, rng);
}

}  // namespace wfrflow
