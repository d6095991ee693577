#include "lprt/phase_space.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <deque>
#include <numbers>
#include <sstream>

#include "lprt/errors.hpp"

namespace lprt {

double parse_exponent(const std::string& text) {
  std::string t;
  for (char c : text) {
    if (!std::isspace(static_cast<unsigned char>(c))) t.push_back(static_cast<char>(std::tolower(c)));
  }
  if (t == "inf" || t == "infinity") return kInfinity;
  std::size_t used = 0;
  double p = 0.0;
  try {
    p = std::stod(t, &used);
  } catch (const std::exception&) {
    throw InvalidExponent("cannot parse exponent '" + text + "'");
  }
  if (used != t.size()) throw InvalidExponent("cannot parse exponent '" + text + "'");
  if (!(p >= 1.0)) throw InvalidExponent("exponent must be >= 1, got '" + text + "'");
  return p;
}

std::string format_exponent(double p) {
  if (std::isinf(p)) return "inf";
  std::ostringstream os;
  os << p;
  return os.str();
}

namespace {

void check_exponent(double p) {
  if (!(p >= 1.0)) throw InvalidExponent("norm exponent must satisfy p >= 1");
}

// Gauss-Legendre nodes and weights on [0, 1].
void gauss_legendre_unit(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(static_cast<std::size_t>(n), 0.0);
  w.assign(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 1; j <= n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / j;
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    x[static_cast<std::size_t>(i)] = 0.5 * (1.0 - z);
    w[static_cast<std::size_t>(i)] = 1.0 / ((1.0 - z * z) * dp * dp);
  }
}

}  // namespace

// ---------------------------------------------------------------- velocities

VelocityQuadrature::VelocityQuadrature(std::vector<VelocityNode> nodes, std::string descriptor)
    : nodes_(std::move(nodes)), antipodes_(nodes_.size()), descriptor_(std::move(descriptor)) {
  for (std::size_t m = 0; m < nodes_.size(); ++m) {
    for (std::size_t k = 0; k < nodes_.size(); ++k) {
      if (norm(nodes_[m].velocity + nodes_[k].velocity) <= 1e-12 * norm(nodes_[m].velocity)) {
        antipodes_[m] = k;
        break;
      }
    }
  }
}

VelocityQuadrature VelocityQuadrature::sphere(int order) {
  order = std::max(1, order);
  const auto dirs = antipodal_sphere_points(order * order);
  const double w = 4.0 * std::numbers::pi / static_cast<double>(dirs.size());
  std::vector<VelocityNode> nodes;
  nodes.reserve(dirs.size());
  for (const auto& d : dirs) nodes.push_back({d, d, w});
  return VelocityQuadrature(std::move(nodes), "sphere(order=" + std::to_string(order) + ")");
}

VelocityQuadrature VelocityQuadrature::shell(int order, double r_min, double r_max, int radial_points) {
  if (!(r_min > 0.0 && r_min < r_max)) throw std::invalid_argument("shell requires 0 < r_min < r_max");
  const auto sphere_rule = sphere(order);
  std::vector<double> x, w;
  gauss_legendre_unit(std::max(1, radial_points), x, w);
  std::vector<VelocityNode> nodes;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double speed = r_min + (r_max - r_min) * x[j];
    const double radial_weight = (r_max - r_min) * w[j] * speed * speed;
    for (const auto& n : sphere_rule.nodes()) nodes.push_back({speed * n.direction, n.direction, n.weight * radial_weight});
  }
  std::ostringstream os;
  os << "shell(order=" << order << ", r_min=" << r_min << ", r_max=" << r_max << ", radial=" << radial_points << ")";
  return VelocityQuadrature(std::move(nodes), os.str());
}

VelocityQuadrature VelocityQuadrature::custom(std::vector<Vec3> velocities, std::vector<double> weights) {
  if (velocities.size() != weights.size() || velocities.empty()) {
    throw std::invalid_argument("custom velocity rule needs matching, nonempty node and weight lists");
  }
  std::vector<VelocityNode> nodes;
  for (std::size_t m = 0; m < velocities.size(); ++m) {
    if (!(norm(velocities[m]) > 0.0)) throw std::invalid_argument("velocity nodes must be nonzero");
    if (!(weights[m] > 0.0)) throw std::invalid_argument("velocity weights must be positive");
    nodes.push_back({velocities[m], normalized(velocities[m]), weights[m]});
  }
  return VelocityQuadrature(std::move(nodes), "custom(" + std::to_string(nodes.size()) + ")");
}

double VelocityQuadrature::total_weight() const {
  std::vector<double> w;
  w.reserve(nodes_.size());
  for (const auto& n : nodes_) w.push_back(n.weight);
  return pairwise_sum(w);
}

bool VelocityQuadrature::antipodally_closed() const {
  return std::all_of(antipodes_.begin(), antipodes_.end(), [](const auto& a) { return a.has_value(); });
}

// -------------------------------------------------------------- spatial grid

SpatialGrid SpatialGrid::lattice(const Domain& domain, std::array<int, 3> cells) {
  SpatialGrid g;
  const Box& bb = domain.bounds();
  for (int a = 0; a < 3; ++a) {
    cells[static_cast<std::size_t>(a)] = std::max(1, cells[static_cast<std::size_t>(a)]);
    g.spacing_[a] = (bb.hi[a] - bb.lo[a]) / cells[static_cast<std::size_t>(a)];
  }
  g.cells_ = cells;
  g.origin_ = bb.lo;
  g.cell_volume_ = g.spacing_.x * g.spacing_.y * g.spacing_.z;

  const std::size_t total = static_cast<std::size_t>(cells[0]) * cells[1] * cells[2];
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  g.nearest_.assign(total, kNone);
  std::deque<std::array<int, 3>> frontier;
  for (int iz = 0; iz < cells[2]; ++iz) {
    for (int iy = 0; iy < cells[1]; ++iy) {
      for (int ix = 0; ix < cells[0]; ++ix) {
        const Vec3 c{g.origin_.x + (ix + 0.5) * g.spacing_.x, g.origin_.y + (iy + 0.5) * g.spacing_.y,
                     g.origin_.z + (iz + 0.5) * g.spacing_.z};
        if (domain.contains(c, -1e-12)) {
          g.nearest_[g.lattice_index(ix, iy, iz)] = g.points_.size();
          g.points_.push_back(c);
          frontier.push_back({ix, iy, iz});
        }
      }
    }
  }
  if (g.points_.empty()) throw GeometryError("spatial lattice has no cell centers inside the domain");

  // Breadth-first fill of empty cells with the nearest collocation point.
  while (!frontier.empty()) {
    const auto [ix, iy, iz] = frontier.front();
    frontier.pop_front();
    const std::size_t src = g.nearest_[g.lattice_index(ix, iy, iz)];
    for (int dz = -1; dz <= 1; ++dz) {
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int jx = ix + dx, jy = iy + dy, jz = iz + dz;
          if (jx < 0 || jy < 0 || jz < 0 || jx >= cells[0] || jy >= cells[1] || jz >= cells[2]) continue;
          auto& slot = g.nearest_[g.lattice_index(jx, jy, jz)];
          if (slot == kNone) {
            slot = src;
            frontier.push_back({jx, jy, jz});
          }
        }
      }
    }
  }

  // Cut-cell volumes: fully inside cells count whole, cells touching the
  // boundary are sub-sampled on a 6^3 midpoint lattice.
  constexpr int kSub = 6;
  g.volumes_.assign(g.points_.size(), 0.0);
  for (int iz = 0; iz < cells[2]; ++iz) {
    for (int iy = 0; iy < cells[1]; ++iy) {
      for (int ix = 0; ix < cells[0]; ++ix) {
        const Vec3 lo{g.origin_.x + ix * g.spacing_.x, g.origin_.y + iy * g.spacing_.y, g.origin_.z + iz * g.spacing_.z};
        int corners_in = 0;
        for (int c = 0; c < 8; ++c) {
          const Vec3 x{lo.x + ((c & 1) ? g.spacing_.x : 0.0), lo.y + ((c & 2) ? g.spacing_.y : 0.0),
                       lo.z + ((c & 4) ? g.spacing_.z : 0.0)};
          corners_in += domain.contains(x, 0.0) ? 1 : 0;
        }
        double fraction = 1.0;
        if (corners_in < 8) {
          int inside = 0;
          for (int a = 0; a < kSub; ++a) {
            for (int b = 0; b < kSub; ++b) {
              for (int c = 0; c < kSub; ++c) {
                const Vec3 x{lo.x + (a + 0.5) / kSub * g.spacing_.x, lo.y + (b + 0.5) / kSub * g.spacing_.y,
                             lo.z + (c + 0.5) / kSub * g.spacing_.z};
                inside += domain.contains(x, 0.0) ? 1 : 0;
              }
            }
          }
          fraction = static_cast<double>(inside) / (kSub * kSub * kSub);
        }
        if (fraction > 0.0) g.volumes_[g.nearest_[g.lattice_index(ix, iy, iz)]] += fraction * g.cell_volume_;
      }
    }
  }
  return g;
}

double SpatialGrid::total_volume() const { return pairwise_sum(volumes_); }

SpatialGrid SpatialGrid::lattice(const Domain& domain, int cells) {
  const Box& bb = domain.bounds();
  const Vec3 ext = bb.hi - bb.lo;
  const double longest = std::max({ext.x, ext.y, ext.z});
  std::array<int, 3> n{};
  for (int a = 0; a < 3; ++a) {
    n[static_cast<std::size_t>(a)] = std::max(1, static_cast<int>(std::lround(cells * ext[a] / longest)));
  }
  return lattice(domain, n);
}

double SpatialGrid::min_spacing() const { return std::min({spacing_.x, spacing_.y, spacing_.z}); }

void SpatialGrid::stencil(const Vec3& x, std::array<std::size_t, 8>& index, std::array<double, 8>& weight) const {
  std::array<int, 3> lo{};
  std::array<int, 3> hi{};
  std::array<double, 3> frac{};
  for (int a = 0; a < 3; ++a) {
    const int n = cells_[static_cast<std::size_t>(a)];
    double u = (x[a] - origin_[a]) / spacing_[a] - 0.5;
    u = std::clamp(u, 0.0, static_cast<double>(n - 1));
    int i0 = static_cast<int>(std::floor(u));
    i0 = std::min(i0, std::max(0, n - 2));
    lo[static_cast<std::size_t>(a)] = i0;
    hi[static_cast<std::size_t>(a)] = std::min(i0 + 1, n - 1);
    frac[static_cast<std::size_t>(a)] = n == 1 ? 0.0 : u - i0;
  }
  for (int c = 0; c < 8; ++c) {
    const int ix = (c & 1) ? hi[0] : lo[0];
    const int iy = (c & 2) ? hi[1] : lo[1];
    const int iz = (c & 4) ? hi[2] : lo[2];
    const double wx = (c & 1) ? frac[0] : 1.0 - frac[0];
    const double wy = (c & 2) ? frac[1] : 1.0 - frac[1];
    const double wz = (c & 4) ? frac[2] : 1.0 - frac[2];
    index[static_cast<std::size_t>(c)] = nearest_[lattice_index(ix, iy, iz)];
    weight[static_cast<std::size_t>(c)] = wx * wy * wz;
  }
}

// --------------------------------------------------------------- phase space

PhaseSpace::PhaseSpace(Domain domain, SpatialGrid grid, VelocityQuadrature velocities)
    : domain_(std::move(domain)), grid_(std::move(grid)), velocities_(std::move(velocities)) {
  chords_.resize(grid_.size() * velocities_.size());
  for (std::size_t i = 0; i < grid_.size(); ++i) {
    for (std::size_t m = 0; m < velocities_.size(); ++m) {
      const Chord c = chord(domain_, grid_.point(i), velocities_[m].direction);
      chords_[i * velocities_.size() + m] = {c.t, c.ray.length};
    }
  }
}

Ray PhaseSpace::ray(std::size_t i, std::size_t m) const {
  const auto& c = chords_[i * velocity_size() + m];
  const Vec3& d = velocities_[m].direction;
  return Ray{grid_.point(i) - c.t * d, d, c.length};
}

// ---------------------------------------------------------------- PhaseField

PhaseField::PhaseField(std::shared_ptr<const PhaseSpace> space, double fill)
    : space_(std::move(space)), values_(space_->size(), fill) {}

void PhaseField::require_compatible(const PhaseField& other) const {
  if (!compatible(other)) throw GridMismatch("phase fields live on different phase-space discretizations");
}

PhaseField& PhaseField::operator+=(const PhaseField& other) {
  require_compatible(other);
  for (std::size_t k = 0; k < values_.size(); ++k) values_[k] += other.values_[k];
  return *this;
}

PhaseField& PhaseField::operator-=(const PhaseField& other) {
  require_compatible(other);
  for (std::size_t k = 0; k < values_.size(); ++k) values_[k] -= other.values_[k];
  return *this;
}

PhaseField& PhaseField::operator*=(double s) {
  for (double& v : values_) v *= s;
  return *this;
}

PhaseField& PhaseField::axpy(double a, const PhaseField& x) {
  require_compatible(x);
  for (std::size_t k = 0; k < values_.size(); ++k) values_[k] += a * x.values_[k];
  return *this;
}

bool PhaseField::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

// --------------------------------------------------------------------- norms

double weighted_lp_norm(const PhaseField& field, const NodeWeight& weight, double p) {
  check_exponent(p);
  const PhaseSpace& s = *field.space();
  if (std::isinf(p)) {
    double mx = 0.0;
    for (double v : field.values()) mx = std::max(mx, std::abs(v));
    return mx;
  }
  std::vector<double> terms(s.size());
  for (std::size_t i = 0; i < s.spatial_size(); ++i) {
    for (std::size_t m = 0; m < s.velocity_size(); ++m) {
      const double u = std::abs(field(i, m));
      const double w = weight ? weight(i, m) : 1.0;
      terms[i * s.velocity_size() + m] = u == 0.0 ? 0.0 : s.measure(i, m) * w * std::pow(u, p);
    }
  }
  return std::pow(pairwise_sum(terms), 1.0 / p);
}

double scaled_lp_norm(const PhaseField& field, const NodeWeight& scale, double p) {
  check_exponent(p);
  const PhaseSpace& s = *field.space();
  if (std::isinf(p)) {
    double mx = 0.0;
    for (std::size_t i = 0; i < s.spatial_size(); ++i) {
      for (std::size_t m = 0; m < s.velocity_size(); ++m) {
        mx = std::max(mx, std::abs((scale ? scale(i, m) : 1.0) * field(i, m)));
      }
    }
    return mx;
  }
  std::vector<double> terms(s.size());
  for (std::size_t i = 0; i < s.spatial_size(); ++i) {
    for (std::size_t m = 0; m < s.velocity_size(); ++m) {
      const double u = std::abs((scale ? scale(i, m) : 1.0) * field(i, m));
      terms[i * s.velocity_size() + m] = u == 0.0 ? 0.0 : s.measure(i, m) * std::pow(u, p);
    }
  }
  return std::pow(pairwise_sum(terms), 1.0 / p);
}

double lp_norm(const PhaseField& field, double p) { return scaled_lp_norm(field, nullptr, p); }

NodeWeight chord_power(std::shared_ptr<const PhaseSpace> space, double exponent) {
  return [space = std::move(space), exponent](std::size_t i, std::size_t m) {
    return std::pow(space->chord_length(i, m), exponent);
  };
}

double energy_norm(const PhaseField& phi, const PhaseField& dphi, double p) {
  phi.require_compatible(dphi);
  check_exponent(p);
  const auto& space = phi.space();
  if (std::isinf(p)) {
    return std::max(lp_norm(phi, p), scaled_lp_norm(dphi, chord_power(space, 1.0), p));
  }
  const double a = scaled_lp_norm(phi, chord_power(space, -1.0 / p), p);
  const double b = scaled_lp_norm(dphi, chord_power(space, 1.0 - 1.0 / p), p);
  return std::pow(std::pow(a, p) + std::pow(b, p), 1.0 / p);
}

// ------------------------------------------------------------------ boundary

BoundaryQuadrature BoundaryQuadrature::build(const Domain& domain, const VelocityQuadrature& velocities,
                                             int resolution, BoundarySide side, double tau_tan) {
  BoundaryQuadrature q;
  q.side_ = side;
  const auto surface = surface_nodes(domain, resolution);
  for (const auto& node : surface) {
    for (std::size_t m = 0; m < velocities.size(); ++m) {
      const Vec3& d = velocities[m].direction;
      const BoundaryClass kind = classify_boundary(node.point, d, tau_tan);
      const bool wanted = side == BoundarySide::inflow ? kind == BoundaryClass::inflow : kind == BoundaryClass::outflow;
      BoundaryEntry e;
      e.point = node.point;
      e.velocity = m;
      e.cosine = dot(node.point.n, d);
      e.kind = kind;
      if (kind == BoundaryClass::tangential) {
        e.ray = Ray{node.point.r, d, 0.0};
        q.entries_.push_back(e);
        continue;
      }
      if (!wanted) continue;
      std::optional<Ray> ray = side == BoundarySide::inflow ? ray_from_boundary(domain, node.point.r, d)
                                                            : ray_from_boundary(domain, node.point.r, -d);
      if (!ray) {
        // Grazes an edge or corner; treat as measure-zero.
        e.kind = BoundaryClass::tangential;
        e.ray = Ray{node.point.r, d, 0.0};
        q.entries_.push_back(e);
        continue;
      }
      if (side == BoundarySide::outflow) ray = ray->reversed();
      e.ray = *ray;
      e.weight = node.area * velocities[m].weight * std::abs(e.cosine);
      q.entries_.push_back(e);
    }
  }
  return q;
}

double BoundaryQuadrature::ray_integral(const std::function<double(const Vec3&, std::size_t)>& h,
                                        int points_per_ray) const {
  std::vector<double> x, w;
  gauss_legendre_unit(std::max(1, points_per_ray), x, w);
  std::vector<double> terms;
  terms.reserve(entries_.size());
  for (const auto& e : entries_) {
    if (e.weight == 0.0) continue;
    double s = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) s += w[j] * h(e.ray.point(x[j] * e.ray.length), e.velocity);
    terms.push_back(e.weight * e.ray.length * s);
  }
  return pairwise_sum(terms);
}

BoundaryQuadrature inflow_quadrature(const Domain& domain, const VelocityQuadrature& velocities, int resolution) {
  return BoundaryQuadrature::build(domain, velocities, resolution, BoundarySide::inflow);
}

BoundaryQuadrature outflow_quadrature(const Domain& domain, const VelocityQuadrature& velocities, int resolution) {
  return BoundaryQuadrature::build(domain, velocities, resolution, BoundarySide::outflow);
}

double boundary_lp_norm(const BoundaryField& field, double p) {
  check_exponent(p);
  const auto& entries = field.quadrature->entries();
  if (field.values.size() != entries.size()) throw GridMismatch("boundary field does not match its quadrature");
  if (std::isinf(p)) {
    double mx = 0.0;
    for (std::size_t k = 0; k < entries.size(); ++k) {
      if (entries[k].weight > 0.0) mx = std::max(mx, std::abs(field.values[k]));
    }
    return mx;
  }
  std::vector<double> terms(entries.size());
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const double u = std::abs(field.values[k]);
    terms[k] = u == 0.0 ? 0.0 : entries[k].weight * std::pow(u, p);
  }
  return std::pow(pairwise_sum(terms), 1.0 / p);
}

}  // namespace lprt
