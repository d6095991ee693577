#pragma once

#include <cmath>
#include <memory>

#include "lprt/geometry.hpp"
#include "lprt/phase_space.hpp"

namespace lprt::test {

inline constexpr double kPi = 3.14159265358979323846;

inline std::shared_ptr<const PhaseSpace> ball_space(int cells, int order, double radius = 1.0) {
  const Domain d = Domain::ball({}, radius);
  return PhaseSpace::make(d, SpatialGrid::lattice(d, cells), VelocityQuadrature::sphere(order));
}

/// Unit cube with a single ordinate along +z; nodes form one column.
inline std::shared_ptr<const PhaseSpace> slab_space(int layers, double weight = 1.0) {
  const Domain d = Domain::box({0, 0, 0}, {1, 1, 1});
  return PhaseSpace::make(d, SpatialGrid::lattice(d, std::array<int, 3>{1, 1, layers}),
                          VelocityQuadrature::custom({{0, 0, 1}}, {weight}));
}

/// Chord length and inflow distance by marching with bisection on membership;
/// independent of the closed-form intersection code.
struct MarchedChord {
  double back = 0.0;
  double forward = 0.0;
  double length() const { return back + forward; }
};

inline double march(const Domain& d, const Vec3& r, const Vec3& u) {
  double lo = 0.0, hi = 1.0;
  while (d.contains(r + hi * u, 0.0)) {
    lo = hi;
    hi *= 2.0;
  }
  for (int k = 0; k < 200 && hi - lo > 1e-13; ++k) {
    const double mid = 0.5 * (lo + hi);
    (d.contains(r + mid * u, 0.0) ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline MarchedChord marched_chord(const Domain& d, const Vec3& r, const Vec3& v) {
  const Vec3 u = normalized(v);
  return {march(d, r, -u), march(d, r, u)};
}

}  // namespace lprt::test
