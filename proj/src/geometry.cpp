#include "lprt/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "lprt/errors.hpp"

namespace lprt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kUnitTol = 1e-12;

Box vertex_bounds(const std::vector<Vec3>& vertices) {
  Box b{{kInf, kInf, kInf}, {-kInf, -kInf, -kInf}};
  for (const auto& v : vertices) {
    for (int a = 0; a < 3; ++a) {
      b.lo[a] = std::min(b.lo[a], v[a]);
      b.hi[a] = std::max(b.hi[a], v[a]);
    }
  }
  return b;
}

double halfspace_gap(const HalfSpaces& hs, const Vec3& r) {
  double g = -kInf;
  for (const auto& f : hs.faces) g = std::max(g, dot(f.normal, r) - f.offset);
  return g;
}

std::optional<LineInterval> clip_halfspaces(const HalfSpaces& hs, const Vec3& r, const Vec3& d) {
  double enter = -kInf;
  double exit = kInf;
  for (const auto& f : hs.faces) {
    const double nd = dot(f.normal, d);
    const double slack = f.offset - dot(f.normal, r);
    if (std::abs(nd) < 1e-300) {
      if (slack < -kUnitTol) return std::nullopt;
      continue;
    }
    const double s = slack / nd;
    if (nd > 0.0) {
      exit = std::min(exit, s);
    } else {
      enter = std::max(enter, s);
    }
  }
  if (!(enter <= exit) || !std::isfinite(enter) || !std::isfinite(exit)) return std::nullopt;
  return LineInterval{enter, exit};
}

std::optional<LineInterval> clip_ball(const Ball& b, const Vec3& r, const Vec3& d) {
  const Vec3 o = r - b.center;
  const double a = dot(d, d);
  const double half_b = dot(o, d);
  const double c = dot(o, o) - b.radius * b.radius;
  const double disc = half_b * half_b - a * c;
  if (disc < 0.0) return std::nullopt;
  const double sq = std::sqrt(disc);
  // Numerically stable pair of roots.
  const double q = half_b >= 0.0 ? -(half_b + sq) : -(half_b - sq);
  if (q == 0.0) return LineInterval{0.0, 0.0};
  double s0 = q / a;
  double s1 = c / q;
  if (s0 > s1) std::swap(s0, s1);
  return LineInterval{s0, s1};
}

std::optional<LineInterval> clip_box(const Box& b, const Vec3& r, const Vec3& d) {
  double enter = -kInf;
  double exit = kInf;
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0.0) {
      if (r[a] < b.lo[a] - kUnitTol || r[a] > b.hi[a] + kUnitTol) return std::nullopt;
      continue;
    }
    double s0 = (b.lo[a] - r[a]) / d[a];
    double s1 = (b.hi[a] - r[a]) / d[a];
    if (s0 > s1) std::swap(s0, s1);
    enter = std::max(enter, s0);
    exit = std::min(exit, s1);
  }
  if (!(enter <= exit)) return std::nullopt;
  return LineInterval{enter, exit};
}

void check_unit(const Vec3& n) {
  if (std::abs(norm(n) - 1.0) > kUnitTol) {
    std::ostringstream os;
    os << "half-space normal " << n << " is not a unit vector";
    throw GeometryError(os.str());
  }
}

std::vector<Vec3> enumerate_vertices(const HalfSpaces& hs) {
  std::vector<Vec3> out;
  const auto& f = hs.faces;
  const std::size_t n = f.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      for (std::size_t k = j + 1; k < n; ++k) {
        const Vec3 c_jk = cross(f[j].normal, f[k].normal);
        const double det = dot(f[i].normal, c_jk);
        if (std::abs(det) < 1e-12) continue;
        const Vec3 x = (f[i].offset * c_jk + f[j].offset * cross(f[k].normal, f[i].normal) +
                        f[k].offset * cross(f[i].normal, f[j].normal)) *
                       (1.0 / det);
        if (halfspace_gap(hs, x) <= 1e-9) out.push_back(x);
      }
    }
  }
  return out;
}

// A pointed polyhedron is bounded iff its recession cone {d : N d <= 0} has no
// extreme ray; in 3D every extreme ray is +-(n_i x n_j) for some pair.
bool recession_cone_trivial(const HalfSpaces& hs) {
  const auto& f = hs.faces;
  for (std::size_t i = 0; i < f.size(); ++i) {
    for (std::size_t j = i + 1; j < f.size(); ++j) {
      const Vec3 c = cross(f[i].normal, f[j].normal);
      if (norm(c) < 1e-12) continue;
      for (const Vec3& d : {c, -c}) {
        const Vec3 u = normalized(d);
        bool feasible = true;
        for (const auto& g : f) {
          if (dot(g.normal, u) > 1e-12) {
            feasible = false;
            break;
          }
        }
        if (feasible) return false;
      }
    }
  }
  return true;
}

}  // namespace

Domain Domain::ball(const Vec3& center, double radius) {
  if (!(radius > 0.0) || !std::isfinite(radius)) throw GeometryError("ball radius must be positive");
  const Vec3 ext{radius, radius, radius};
  return Domain(Ball{center, radius}, Box{center - ext, center + ext});
}

Domain Domain::box(const Vec3& lo, const Vec3& hi) {
  for (int a = 0; a < 3; ++a) {
    if (!(lo[a] < hi[a])) throw GeometryError("box requires lo < hi componentwise");
  }
  return Domain(Box{lo, hi}, Box{lo, hi});
}

Domain Domain::halfspaces(std::vector<HalfSpace> faces) {
  if (faces.size() < 4) throw GeometryError("a bounded half-space intersection needs at least 4 faces");
  for (const auto& f : faces) check_unit(f.normal);
  HalfSpaces hs{std::move(faces)};
  const auto vertices = enumerate_vertices(hs);
  if (vertices.size() < 4) throw GeometryError("half-space intersection is empty or degenerate");
  if (!recession_cone_trivial(hs)) throw GeometryError("half-space intersection is unbounded");
  Vec3 centroid{};
  for (const auto& v : vertices) centroid += v;
  centroid *= 1.0 / static_cast<double>(vertices.size());
  if (!(halfspace_gap(hs, centroid) < -1e-9)) throw GeometryError("half-space intersection has empty interior");
  const Box bounds = vertex_bounds(vertices);
  return Domain(std::move(hs), bounds);
}

double Domain::boundary_gap(const Vec3& r) const {
  return std::visit(
      [&](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Ball>) {
          return norm(r - s.center) - s.radius;
        } else if constexpr (std::is_same_v<T, Box>) {
          double g = -kInf;
          for (int a = 0; a < 3; ++a) g = std::max({g, s.lo[a] - r[a], r[a] - s.hi[a]});
          return g;
        } else {
          return halfspace_gap(s, r);
        }
      },
      shape_);
}

bool Domain::contains(const Vec3& r, double tol) const { return boundary_gap(r) <= tol; }

std::optional<LineInterval> Domain::line_interval(const Vec3& r, const Vec3& d) const {
  return std::visit(
      [&](const auto& s) -> std::optional<LineInterval> {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Ball>) {
          return clip_ball(s, r, d);
        } else if constexpr (std::is_same_v<T, Box>) {
          return clip_box(s, r, d);
        } else {
          return clip_halfspaces(s, r, d);
        }
      },
      shape_);
}

Vec3 Domain::outward_normal(const Vec3& p) const {
  return std::visit(
      [&](const auto& s) -> Vec3 {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Ball>) {
          return normalized(p - s.center);
        } else if constexpr (std::is_same_v<T, Box>) {
          double best = -kInf;
          Vec3 n{};
          for (int a = 0; a < 3; ++a) {
            if (s.lo[a] - p[a] > best) {
              best = s.lo[a] - p[a];
              n = Vec3{};
              n[a] = -1.0;
            }
            if (p[a] - s.hi[a] > best) {
              best = p[a] - s.hi[a];
              n = Vec3{};
              n[a] = 1.0;
            }
          }
          return n;
        } else {
          double best = -kInf;
          Vec3 n{};
          for (const auto& f : s.faces) {
            const double g = dot(f.normal, p) - f.offset;
            if (g > best) {
              best = g;
              n = f.normal;
            }
          }
          return n;
        }
      },
      shape_);
}

std::optional<double> Domain::exact_volume() const {
  if (const auto* b = std::get_if<Ball>(&shape_)) {
    return 4.0 / 3.0 * std::numbers::pi * b->radius * b->radius * b->radius;
  }
  if (const auto* b = std::get_if<Box>(&shape_)) {
    return (b->hi.x - b->lo.x) * (b->hi.y - b->lo.y) * (b->hi.z - b->lo.z);
  }
  return std::nullopt;
}

double Domain::diameter() const {
  if (const auto* b = std::get_if<Ball>(&shape_)) return 2.0 * b->radius;
  if (const auto* b = std::get_if<Box>(&shape_)) return norm(b->hi - b->lo);
  const auto vertices = enumerate_vertices(std::get<HalfSpaces>(shape_));
  double d = 0.0;
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    for (std::size_t j = i + 1; j < vertices.size(); ++j) d = std::max(d, norm(vertices[i] - vertices[j]));
  }
  return d;
}

Chord chord(const Domain& domain, const Vec3& r, const Vec3& v) {
  if (!domain.contains(r, 1e-9)) {
    std::ostringstream os;
    os << "chord query point " << r << " is outside the domain";
    throw PointOutsideDomain(os.str());
  }
  const Vec3 d = normalized(v);
  const auto iv = domain.line_interval(r, d);
  if (!iv) throw PointOutsideDomain("chord query line misses the domain");
  const double enter = std::min(iv->enter, 0.0);
  const double exit = std::max(iv->exit, 0.0);
  return Chord{Ray{r + enter * d, d, exit - enter}, -enter};
}

std::optional<Ray> ray_from_boundary(const Domain& domain, const Vec3& r_b, const Vec3& v) {
  const Vec3 d = normalized(v);
  const auto iv = domain.line_interval(r_b, d);
  if (!iv) return std::nullopt;
  const double length = iv->exit - iv->enter;
  if (!(length > 1e-14)) return std::nullopt;
  return Ray{r_b + iv->enter * d, d, length};
}

BoundaryClass classify_boundary(const BoundaryPoint& bp, const Vec3& v, double tau_tan) {
  const double c = dot(bp.n, normalized(v));
  if (c < -tau_tan) return BoundaryClass::inflow;
  if (c > tau_tan) return BoundaryClass::outflow;
  return BoundaryClass::tangential;
}

namespace {

// Tensor midpoint cells on the planar patch spanned by e1, e2 around origin.
void planar_cells(const Vec3& origin, const Vec3& e1, double len1, const Vec3& e2, double len2, int resolution,
                  double max_len, const Vec3& normal, const Domain* clip_to, std::vector<SurfaceNode>& out) {
  const int n1 = std::max(1, static_cast<int>(std::lround(resolution * len1 / max_len)));
  const int n2 = std::max(1, static_cast<int>(std::lround(resolution * len2 / max_len)));
  const double h1 = len1 / n1;
  const double h2 = len2 / n2;
  for (int i = 0; i < n1; ++i) {
    for (int j = 0; j < n2; ++j) {
      const Vec3 r = origin + ((i + 0.5) * h1) * e1 + ((j + 0.5) * h2) * e2;
      if (clip_to != nullptr && !clip_to->contains(r, 1e-9)) continue;
      out.push_back({{r, normal}, h1 * h2});
    }
  }
}

}  // namespace

std::vector<SurfaceNode> surface_nodes(const Domain& domain, int resolution) {
  resolution = std::max(1, resolution);
  std::vector<SurfaceNode> out;
  if (const auto* b = std::get_if<Ball>(&domain.shape())) {
    const int regions = resolution * resolution;
    const auto dirs = antipodal_sphere_points(regions);
    const double area = 4.0 * std::numbers::pi * b->radius * b->radius / static_cast<double>(dirs.size());
    out.reserve(dirs.size());
    for (const auto& u : dirs) out.push_back({{b->center + b->radius * u, u}, area});
    return out;
  }
  if (const auto* b = std::get_if<Box>(&domain.shape())) {
    const Vec3 ext = b->hi - b->lo;
    const double max_len = std::max({ext.x, ext.y, ext.z});
    for (int a = 0; a < 3; ++a) {
      const int a1 = (a + 1) % 3;
      const int a2 = (a + 2) % 3;
      Vec3 e1{}, e2{};
      e1[a1] = 1.0;
      e2[a2] = 1.0;
      for (int side = 0; side < 2; ++side) {
        Vec3 origin = b->lo;
        Vec3 n{};
        n[a] = side == 0 ? -1.0 : 1.0;
        if (side == 1) origin[a] = b->hi[a];
        planar_cells(origin, e1, ext[a1], e2, ext[a2], resolution, max_len, n, nullptr, out);
      }
    }
    return out;
  }
  const auto& hs = std::get<HalfSpaces>(domain.shape());
  const Box& bb = domain.bounds();
  const Vec3 ext = bb.hi - bb.lo;
  const double max_len = std::max({ext.x, ext.y, ext.z});
  for (const auto& f : hs.faces) {
    const Vec3 helper = std::abs(f.normal.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
    const Vec3 e1 = normalized(cross(f.normal, helper));
    const Vec3 e2 = cross(f.normal, e1);
    const Vec3 p0 = f.offset * f.normal;
    double u0 = kInf, u1 = -kInf, w0 = kInf, w1 = -kInf;
    for (int c = 0; c < 8; ++c) {
      const Vec3 corner{(c & 1) ? bb.hi.x : bb.lo.x, (c & 2) ? bb.hi.y : bb.lo.y, (c & 4) ? bb.hi.z : bb.lo.z};
      const double u = dot(corner - p0, e1);
      const double w = dot(corner - p0, e2);
      u0 = std::min(u0, u);
      u1 = std::max(u1, u);
      w0 = std::min(w0, w);
      w1 = std::max(w1, w);
    }
    planar_cells(p0 + u0 * e1 + w0 * e2, e1, u1 - u0, e2, w1 - w0, resolution, max_len, f.normal, &domain, out);
  }
  return out;
}

std::vector<Vec3> equal_area_hemisphere(int regions) {
  const int m = std::max(1, regions);
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(m));
  out.push_back({0.0, 0.0, 1.0});
  if (m == 1) return out;

  const double pi = std::numbers::pi;
  const double cell_area = 2.0 * pi / m;
  const double theta_cap = std::acos(1.0 - 1.0 / m);
  const double ideal_angle = std::sqrt(cell_area);
  const int collars = std::max(1, static_cast<int>(std::lround((pi / 2 - theta_cap) / ideal_angle)));
  const double fit_angle = (pi / 2 - theta_cap) / collars;

  // Cell counts per collar, rounded with carried discrepancy so the total is m - 1.
  std::vector<int> counts(static_cast<std::size_t>(collars));
  double carry = 0.0;
  int assigned = 0;
  for (int i = 0; i < collars; ++i) {
    const double top = theta_cap + i * fit_angle;
    const double bottom = theta_cap + (i + 1) * fit_angle;
    const double ideal = 2.0 * pi * (std::cos(top) - std::cos(bottom)) / cell_area;
    int c = (i + 1 == collars) ? (m - 1 - assigned) : static_cast<int>(std::lround(ideal + carry));
    c = std::max(c, 0);
    carry += ideal - c;
    counts[static_cast<std::size_t>(i)] = c;
    assigned += c;
  }

  // Collar boundaries follow from the exact cumulative area.
  int cumulative = 1;
  double z_top = 1.0 - 1.0 / m;
  for (int i = 0; i < collars; ++i) {
    const int c = counts[static_cast<std::size_t>(i)];
    if (c == 0) continue;
    cumulative += c;
    const double z_bottom = 1.0 - static_cast<double>(cumulative) / m;
    const double z = 0.5 * (z_top + z_bottom);
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double offset = (i % 2 == 0) ? 0.0 : 0.5;
    for (int j = 0; j < c; ++j) {
      const double phi = 2.0 * pi * (j + 0.5 + offset) / c;
      out.push_back({rho * std::cos(phi), rho * std::sin(phi), z});
    }
    z_top = z_bottom;
  }
  return out;
}

std::vector<Vec3> antipodal_sphere_points(int regions) {
  auto upper = equal_area_hemisphere(regions);
  const std::size_t m = upper.size();
  upper.reserve(2 * m);
  for (std::size_t i = 0; i < m; ++i) upper.push_back(-upper[i]);
  return upper;
}

}  // namespace lprt
