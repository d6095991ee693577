#pragma once

#include <optional>
#include <variant>
#include <vector>

#include "lprt/vec3.hpp"

namespace lprt {

struct Ball {
  Vec3 center;
  double radius = 1.0;
};

struct Box {
  Vec3 lo;
  Vec3 hi;
};

/// Closed half-space { x : normal . x <= offset } with unit outward normal.
struct HalfSpace {
  Vec3 normal;
  double offset = 0.0;
};

struct HalfSpaces {
  std::vector<HalfSpace> faces;
};

/// Parameter interval [enter, exit] of a line p + s d inside a closed region.
struct LineInterval {
  double enter = 0.0;
  double exit = 0.0;
};

/// Bounded convex region with nonempty interior.
///
/// Construction validates the description and throws GeometryError for
/// degenerate input. All queries are const and thread-safe.
class Domain {
 public:
  using Shape = std::variant<Ball, Box, HalfSpaces>;

  static Domain ball(const Vec3& center, double radius);
  static Domain box(const Vec3& lo, const Vec3& hi);
  static Domain halfspaces(std::vector<HalfSpace> faces);

  const Shape& shape() const { return shape_; }
  const Box& bounds() const { return bounds_; }

  /// Closed-set membership; points within `tol` of the boundary count as inside.
  bool contains(const Vec3& r, double tol = 1e-12) const;

  /// Intersection of the line r + s d (d need not be unit) with the closed region.
  std::optional<LineInterval> line_interval(const Vec3& r, const Vec3& d) const;

  /// Outward unit normal at (or nearest to) a boundary point.
  Vec3 outward_normal(const Vec3& boundary_point) const;

  /// Signed distance-like violation: > 0 outside, <= 0 inside. Exact for ball and box faces.
  double boundary_gap(const Vec3& r) const;

  /// Exact volume for ball and box; empty for half-space intersections.
  std::optional<double> exact_volume() const;

  double diameter() const;

 private:
  explicit Domain(Shape shape, Box bounds) : shape_(std::move(shape)), bounds_(bounds) {}

  Shape shape_;
  Box bounds_;
};

/// A characteristic: inflow point, unit direction and chord length.
struct Ray {
  Vec3 r_minus;
  Vec3 direction;
  double length = 0.0;

  Vec3 point(double s) const { return r_minus + s * direction; }
  Vec3 exit_point() const { return point(length); }
  /// The same segment traversed in the opposite direction.
  Ray reversed() const { return {exit_point(), -direction, length}; }
};

/// Result of a chord query: the full characteristic and the backward distance
/// from its inflow point to the query point.
struct Chord {
  Ray ray;
  double t = 0.0;
};

/// Maximal segment through interior point r in direction v.
/// Throws PointOutsideDomain if r is not in the closed domain.
Chord chord(const Domain& domain, const Vec3& r, const Vec3& v);

/// Chord entering the domain at boundary point r_b in direction v (inflow side).
/// Returns an empty optional when the line only grazes the domain.
std::optional<Ray> ray_from_boundary(const Domain& domain, const Vec3& r_b, const Vec3& v);

struct BoundaryPoint {
  Vec3 r;
  Vec3 n;
};

enum class BoundaryClass { inflow, outflow, tangential };

inline constexpr double kTangentialThreshold = 1e-10;

BoundaryClass classify_boundary(const BoundaryPoint& bp, const Vec3& v,
                                double tau_tan = kTangentialThreshold);

/// Boundary point together with the surface area it represents.
struct SurfaceNode {
  BoundaryPoint point;
  double area = 0.0;
};

/// Surface quadrature of the boundary.
///
/// Balls use the centers of an antipodally symmetric equal-area partition with
/// 2*resolution^2 regions; boxes use a tensor midpoint rule with about
/// resolution cells along the longest edge of each face; half-space
/// intersections use the same midpoint rule on each facet, keeping cell
/// centers that lie on the facet.
std::vector<SurfaceNode> surface_nodes(const Domain& domain, int resolution);

/// Unit vectors of an equal-area partition of the upper hemisphere (z > 0)
/// into `regions` cells, one point per cell.
std::vector<Vec3> equal_area_hemisphere(int regions);

/// 2*regions unit vectors: the hemisphere partition and its antipodes.
/// Entry i + regions is the antipode of entry i.
std::vector<Vec3> antipodal_sphere_points(int regions);

}  // namespace lprt
