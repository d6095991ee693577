#pragma once

// Randomized property suites shared by the unit tests and the acceptance run.
// Each suite draws `cases` independent random inputs from a fixed seed and
// counts the cases that violate the property at the stated tolerance.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lprt/coefficients.hpp"
#include "lprt/geometry.hpp"
#include "lprt/operators.hpp"
#include "lprt/phase_space.hpp"

namespace lprt::test {

struct PropertyResult {
  std::string name;
  int cases = 0;
  int failures = 0;
  double worst = 0.0;  ///< largest violation measure seen
  std::string first_failure;

  void record(bool ok, double measure, const std::string& what) {
    ++cases;
    worst = std::max(worst, measure);
    if (!ok && failures++ == 0) first_failure = what;
  }
};

namespace detail {

inline Vec3 random_direction(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (;;) {
    const Vec3 v{n(rng), n(rng), n(rng)};
    const double r = norm(v);
    if (r > 1e-3) return v * (1.0 / r);
  }
}

inline std::vector<Domain> test_domains() {
  const double s = 1.0 / std::sqrt(3.0);
  return {Domain::ball({0.2, -0.1, 0.3}, 1.3), Domain::box({0, 0, 0}, {2, 1, 0.5}),
          Domain::halfspaces({{{-1, 0, 0}, 0}, {{0, -1, 0}, 0}, {{0, 0, -1}, 0}, {{s, s, s}, s}})};
}

/// Uniform point strictly inside the domain by rejection from the bounding box.
inline Vec3 random_interior(const Domain& d, std::mt19937_64& rng) {
  const Box& b = d.bounds();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (;;) {
    const Vec3 r{b.lo.x + u(rng) * (b.hi.x - b.lo.x), b.lo.y + u(rng) * (b.hi.y - b.lo.y),
                 b.lo.z + u(rng) * (b.hi.z - b.lo.z)};
    if (d.boundary_gap(r) < -1e-6) return r;
  }
}

inline void fill(PhaseField& f, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& x : f.values()) x = u(rng);
}

inline double max_abs(const PhaseField& f) { return lp_norm(f, kInfinity); }

/// Small ball phase space shared by the operator suites.
inline std::shared_ptr<const PhaseSpace> operator_space() {
  static const auto space = [] {
    const Domain d = Domain::ball({0, 0, 0}, 1.0);
    return PhaseSpace::make(d, SpatialGrid::lattice(d, 3), VelocityQuadrature::sphere(2));
  }();
  return space;
}

inline RayRule operator_rule() {
  RayRule r;
  r.fixed_intervals = 6;
  return r;
}

inline PhaseFunction random_separable(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return separable(scale * (0.1 + u(rng)), u(rng), 2.0 * u(rng) - 1.0, {u(rng) - 0.5, u(rng) - 0.5, 0.0});
}

}  // namespace detail

/// K, L and J are linear in their data: T(a x + b y) = a T x + b T y to 1e-12
/// relative to the size of the terms.
inline PropertyResult operator_linearity(int cases, std::uint64_t seed = 101) {
  PropertyResult res{"operator linearity"};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coef(-3.0, 3.0);
  const auto space = detail::operator_space();
  const RayRule rule = detail::operator_rule();
  for (int c = 0; c < cases; ++c) {
    const double a = coef(rng), b = coef(rng);
    const PhaseFunction sigma = detail::random_separable(rng, 2.0);
    PhaseField x(space), y(space);
    detail::fill(x, rng, -1.0, 1.0);
    detail::fill(y, rng, -1.0, 1.0);
    const PhaseField comb = a * x + b * y;
    PhaseField lhs(space), rhs(space);
    const char* op = "";
    switch (c % 3) {
      case 0: {
        op = "K";
        const auto kernel = ScatteringKernel::linear_anisotropic(detail::random_separable(rng, 1.0), 0.5);
        lhs = apply_K(kernel, comb);
        rhs = a * apply_K(kernel, x) + b * apply_K(kernel, y);
        break;
      }
      case 1:
        op = "L";
        lhs = apply_L(sigma, comb, rule);
        rhs = a * apply_L(sigma, x, rule) + b * apply_L(sigma, y, rule);
        break;
      default: {
        op = "J";
        const PhaseFunction g1 = detail::random_separable(rng, 1.0);
        const PhaseFunction g2 = detail::random_separable(rng, 1.0);
        const PhaseFunction g = PhaseFunction::point(
            [=](const Vec3& r, const Vec3& v) { return a * g1(r, v) + b * g2(r, v); }, "combination");
        lhs = apply_J(sigma, g, space, rule);
        rhs = a * apply_J(sigma, g1, space, rule) + b * apply_J(sigma, g2, space, rule);
        break;
      }
    }
    const double scale = std::max(1.0, detail::max_abs(rhs));
    const double err = detail::max_abs(lhs - rhs) / scale;
    std::ostringstream what;
    what << op << " case " << c << ": relative deviation " << err;
    res.record(err <= 1e-12, err, what.str());
  }
  return res;
}

/// Nonnegative data give nonnegative K phi, L f, J g and LK phi.
inline PropertyResult positivity_preservation(int cases, std::uint64_t seed = 202) {
  PropertyResult res{"positivity preservation"};
  std::mt19937_64 rng(seed);
  const auto space = detail::operator_space();
  const RayRule rule = detail::operator_rule();
  for (int c = 0; c < cases; ++c) {
    const PhaseFunction sigma = detail::random_separable(rng, 2.0);
    const auto kernel = ScatteringKernel::isotropic(detail::random_separable(rng, 1.0));
    PhaseField phi(space);
    detail::fill(phi, rng, 0.0, 1.0);
    double lowest = 0.0;
    const char* op = "";
    auto scan = [&](const PhaseField& f, const char* name) {
      for (double x : f.values()) {
        if (x < lowest) {
          lowest = x;
          op = name;
        }
      }
    };
    switch (c % 3) {
      case 0:
        scan(apply_L(sigma, apply_K(kernel, phi), rule), "LK");
        break;
      case 1:
        scan(apply_L(sigma, phi, rule), "L");
        break;
      default:
        scan(apply_J(sigma, detail::random_separable(rng, 1.0), space, rule), "J");
        break;
    }
    std::ostringstream what;
    what << op << " case " << c << ": value " << lowest;
    res.record(lowest >= 0.0, -lowest, what.str());
  }
  return res;
}

/// Weighted L^p norms are absolutely homogeneous (1e-10 relative) and satisfy
/// the triangle inequality (1e-12 relative), for p in {1, 1.5, 2, 3, 7, inf}.
inline PropertyResult norm_axioms(int cases, std::uint64_t seed = 303) {
  PropertyResult res{"norm homogeneity and triangle inequality"};
  std::mt19937_64 rng(seed);
  const double ps[] = {1.0, 1.5, 2.0, 3.0, 7.0, kInfinity};
  std::uniform_real_distribution<double> coef(-10.0, 10.0);
  std::uniform_real_distribution<double> expo(-1.0, 1.0);
  const auto space = detail::operator_space();
  for (int c = 0; c < cases; ++c) {
    const double p = ps[c % 6];
    const NodeWeight w = chord_power(space, expo(rng));
    PhaseField x(space), y(space);
    detail::fill(x, rng, -2.0, 2.0);
    detail::fill(y, rng, -2.0, 2.0);
    const double s = coef(rng);
    const double nx = weighted_lp_norm(x, w, p), ny = weighted_lp_norm(y, w, p);
    const double homog = std::abs(weighted_lp_norm(s * x, w, p) - std::abs(s) * nx) / (std::abs(s) * nx);
    const double tri = (weighted_lp_norm(x + y, w, p) - (nx + ny)) / (nx + ny);
    std::ostringstream what;
    what << "case " << c << " p=" << p << ": homogeneity " << homog << ", triangle excess " << tri;
    res.record(homog <= 1e-10 && tri <= 1e-12, std::max(homog, tri), what.str());
  }
  return res;
}

/// chord(r, -v) has the same length with t -> l - t, and every point on the
/// chord reports the same length (1e-9), across ball, box and half-space domains.
inline PropertyResult chord_symmetry(int cases, std::uint64_t seed = 404) {
  PropertyResult res{"chord symmetry and consistency"};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto domains = detail::test_domains();
  for (int c = 0; c < cases; ++c) {
    const Domain& d = domains[c % domains.size()];
    const Vec3 r = detail::random_interior(d, rng);
    const Vec3 v = detail::random_direction(rng) * (0.2 + 2.0 * u(rng));
    const Chord fwd = chord(d, r, v);
    const Chord bwd = chord(d, r, -v);
    const Vec3 r2 = fwd.ray.point((0.05 + 0.9 * u(rng)) * fwd.ray.length);
    const Chord other = chord(d, r2, v);
    const double err = std::max({std::abs(fwd.ray.length - bwd.ray.length),
                                 std::abs(fwd.t - (bwd.ray.length - bwd.t)),
                                 std::abs(other.ray.length - fwd.ray.length)});
    std::ostringstream what;
    what << "case " << c << ": deviation " << err;
    res.record(err <= 1e-9, err, what.str());
  }
  return res;
}

/// classify(bp, v) = inflow iff classify(bp, -v) = outflow, at boundary points
/// reached along random chords, with a share of exactly tangential directions.
inline PropertyResult antipodal_classification(int cases, std::uint64_t seed = 505) {
  PropertyResult res{"antipodal classification symmetry"};
  std::mt19937_64 rng(seed);
  const auto domains = detail::test_domains();
  for (int c = 0; c < cases; ++c) {
    const Domain& d = domains[c % domains.size()];
    const Vec3 r = detail::random_interior(d, rng);
    const Chord ch = chord(d, r, detail::random_direction(rng));
    const Vec3 x = (c % 2) ? ch.ray.r_minus : ch.ray.exit_point();
    const BoundaryPoint bp{x, d.outward_normal(x)};
    Vec3 v = detail::random_direction(rng);
    if (c % 10 == 0) v = normalized(cross(bp.n, v));  // tangential
    const BoundaryClass a = classify_boundary(bp, v);
    const BoundaryClass b = classify_boundary(bp, -v);
    const bool ok = (a == BoundaryClass::inflow) == (b == BoundaryClass::outflow) &&
                    (a == BoundaryClass::outflow) == (b == BoundaryClass::inflow) &&
                    (a == BoundaryClass::tangential) == (b == BoundaryClass::tangential);
    std::ostringstream what;
    what << "case " << c << ": n.v = " << dot(bp.n, v);
    res.record(ok, ok ? 0.0 : 1.0, what.str());
  }
  return res;
}

inline std::vector<PropertyResult> all_properties(int cases) {
  return {operator_linearity(cases), positivity_preservation(cases), norm_axioms(cases), chord_symmetry(cases),
          antipodal_classification(cases)};
}

}  // namespace lprt::test
