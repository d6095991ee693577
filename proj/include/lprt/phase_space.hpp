#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lprt/geometry.hpp"
#include "lprt/numerics.hpp"

namespace lprt {

struct VelocityNode {
  Vec3 velocity;
  Vec3 direction;  ///< velocity / |velocity|
  double weight = 0.0;
};

/// Quadrature rule on the velocity space.
class VelocityQuadrature {
 public:
  /// Unit sphere, 2*order^2 equal-weight nodes closed under v -> -v.
  static VelocityQuadrature sphere(int order);

  /// Spherical shell r_min < |v| < r_max: sphere rule times Gauss-Legendre in |v|
  /// (weight includes the |v|^2 Jacobian).
  static VelocityQuadrature shell(int order, double r_min, double r_max, int radial_points);

  /// Arbitrary nodes and positive weights (e.g. a single ordinate).
  static VelocityQuadrature custom(std::vector<Vec3> velocities, std::vector<double> weights);

  std::size_t size() const { return nodes_.size(); }
  const VelocityNode& operator[](std::size_t m) const { return nodes_[m]; }
  std::span<const VelocityNode> nodes() const { return nodes_; }
  double total_weight() const;

  /// Index of the node with velocity -v, if present.
  std::optional<std::size_t> antipode(std::size_t m) const { return antipodes_[m]; }
  bool antipodally_closed() const;

  const std::string& descriptor() const { return descriptor_; }

 private:
  VelocityQuadrature(std::vector<VelocityNode> nodes, std::string descriptor);

  std::vector<VelocityNode> nodes_;
  std::vector<std::optional<std::size_t>> antipodes_;
  std::string descriptor_;
};

/// Cell-centered Cartesian lattice over the domain's bounding box. Only cells
/// whose centers lie in the domain become collocation points. Each point
/// carries the inside volume of every lattice cell assigned to it (its own
/// cell and any empty neighbours that fall back to it), so the weights sum to
/// the domain volume up to the cut-cell sub-sampling error.
class SpatialGrid {
 public:
  static SpatialGrid lattice(const Domain& domain, std::array<int, 3> cells);
  /// `cells` along the longest bounding-box edge, proportionally fewer elsewhere.
  static SpatialGrid lattice(const Domain& domain, int cells);

  std::size_t size() const { return points_.size(); }
  const Vec3& point(std::size_t i) const { return points_[i]; }
  double volume(std::size_t i) const { return volumes_[i]; }
  double total_volume() const;
  std::array<int, 3> cells() const { return cells_; }
  const Vec3& spacing() const { return spacing_; }
  double min_spacing() const;

  /// Trilinear interpolation stencil. Lattice corners without a collocation
  /// point borrow the value of the nearest one.
  void stencil(const Vec3& x, std::array<std::size_t, 8>& index, std::array<double, 8>& weight) const;

 private:
  SpatialGrid() = default;
  std::size_t lattice_index(int ix, int iy, int iz) const {
    return (static_cast<std::size_t>(iz) * cells_[1] + iy) * cells_[0] + ix;
  }

  std::vector<Vec3> points_;
  std::array<int, 3> cells_{};
  Vec3 origin_;
  Vec3 spacing_;
  double cell_volume_ = 0.0;
  std::vector<double> volumes_;
  std::vector<std::size_t> nearest_;  ///< lattice cell -> collocation point
};

/// Domain, spatial grid and velocity rule together with the backward chord of
/// every (point, velocity) node. Immutable after construction.
class PhaseSpace {
 public:
  PhaseSpace(Domain domain, SpatialGrid grid, VelocityQuadrature velocities);

  static std::shared_ptr<const PhaseSpace> make(Domain domain, SpatialGrid grid, VelocityQuadrature velocities) {
    return std::make_shared<const PhaseSpace>(std::move(domain), std::move(grid), std::move(velocities));
  }

  const Domain& domain() const { return domain_; }
  const SpatialGrid& grid() const { return grid_; }
  const VelocityQuadrature& velocities() const { return velocities_; }

  std::size_t spatial_size() const { return grid_.size(); }
  std::size_t velocity_size() const { return velocities_.size(); }
  std::size_t size() const { return spatial_size() * velocity_size(); }

  /// Quadrature measure of node (i, m): cell volume times velocity weight.
  double measure(std::size_t i, std::size_t m) const { return grid_.volume(i) * velocities_[m].weight; }

  double chord_length(std::size_t i, std::size_t m) const { return chords_[i * velocity_size() + m].length; }
  /// Backward distance from the inflow point to node i along direction m.
  double inflow_distance(std::size_t i, std::size_t m) const { return chords_[i * velocity_size() + m].t; }
  /// Full characteristic through node (i, m), oriented along direction m.
  Ray ray(std::size_t i, std::size_t m) const;

 private:
  struct ChordData {
    double t;
    double length;
  };

  Domain domain_;
  SpatialGrid grid_;
  VelocityQuadrature velocities_;
  std::vector<ChordData> chords_;
};

/// Real values on the nodes of a PhaseSpace, stored point-major.
class PhaseField {
 public:
  explicit PhaseField(std::shared_ptr<const PhaseSpace> space, double fill = 0.0);

  const std::shared_ptr<const PhaseSpace>& space() const { return space_; }
  std::size_t spatial_size() const { return space_->spatial_size(); }
  std::size_t velocity_size() const { return space_->velocity_size(); }

  double& operator()(std::size_t i, std::size_t m) { return values_[i * velocity_size() + m]; }
  double operator()(std::size_t i, std::size_t m) const { return values_[i * velocity_size() + m]; }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  bool compatible(const PhaseField& other) const { return space_ == other.space_; }
  /// Throws GridMismatch unless both fields share the same PhaseSpace.
  void require_compatible(const PhaseField& other) const;

  PhaseField& operator+=(const PhaseField& other);
  PhaseField& operator-=(const PhaseField& other);
  PhaseField& operator*=(double s);
  /// this += a * x
  PhaseField& axpy(double a, const PhaseField& x);

  friend PhaseField operator+(PhaseField a, const PhaseField& b) { return a += b; }
  friend PhaseField operator-(PhaseField a, const PhaseField& b) { return a -= b; }
  friend PhaseField operator*(double s, PhaseField a) { return a *= s; }

  bool all_finite() const;

 private:
  std::shared_ptr<const PhaseSpace> space_;
  std::vector<double> values_;
};

/// Pointwise weight on phase-space nodes, e.g. a power of the chord length.
using NodeWeight = std::function<double(std::size_t node, std::size_t velocity)>;

/// (sum measure * weight * |u|^p)^(1/p) for p < inf; max |u| for p = inf.
/// Throws InvalidExponent for p < 1.
double weighted_lp_norm(const PhaseField& field, const NodeWeight& weight, double p);

/// ||scale * u||_p with the quadrature measure; for p = inf the max of |scale * u|.
double scaled_lp_norm(const PhaseField& field, const NodeWeight& scale, double p);

/// Unweighted L^p norm.
double lp_norm(const PhaseField& field, double p);

/// NodeWeight returning chord_length^exponent.
NodeWeight chord_power(std::shared_ptr<const PhaseSpace> space, double exponent);

/// Energy norm: (||l^{-1/p} phi||_p^p + ||l^{1-1/p} dphi||_p^p)^(1/p), and for
/// p = inf the max of ||phi||_inf and ||l dphi||_inf.
double energy_norm(const PhaseField& phi, const PhaseField& dphi, double p);

enum class BoundarySide { inflow, outflow };

struct BoundaryEntry {
  BoundaryPoint point;
  std::size_t velocity = 0;
  /// area * velocity weight * |n . v|; zero for tangential pairs
  double weight = 0.0;
  double cosine = 0.0;  ///< n . v_hat
  BoundaryClass kind = BoundaryClass::tangential;
  /// Characteristic through the boundary point oriented along the velocity.
  Ray ray;
};

/// Boundary phase-space quadrature on one side (inflow or outflow).
class BoundaryQuadrature {
 public:
  static BoundaryQuadrature build(const Domain& domain, const VelocityQuadrature& velocities, int resolution,
                                  BoundarySide side, double tau_tan = kTangentialThreshold);

  BoundarySide side() const { return side_; }
  std::span<const BoundaryEntry> entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  const BoundaryEntry& operator[](std::size_t k) const { return entries_[k]; }

  /// sum w * int_0^l h(r_- + t v_hat, m) dt with a fixed Gauss-Legendre rule per ray.
  double ray_integral(const std::function<double(const Vec3&, std::size_t)>& h, int points_per_ray = 8) const;

 private:
  BoundarySide side_ = BoundarySide::inflow;
  std::vector<BoundaryEntry> entries_;
};

/// Inflow quadrature: weights carry surface measure and |n . v_hat|.
BoundaryQuadrature inflow_quadrature(const Domain& domain, const VelocityQuadrature& velocities, int resolution);
BoundaryQuadrature outflow_quadrature(const Domain& domain, const VelocityQuadrature& velocities, int resolution);

/// Values on the entries of a BoundaryQuadrature.
struct BoundaryField {
  std::shared_ptr<const BoundaryQuadrature> quadrature;
  std::vector<double> values;
};

/// (sum w |g|^p)^(1/p); for p = inf the max over non-tangential entries.
double boundary_lp_norm(const BoundaryField& field, double p);

}  // namespace lprt
