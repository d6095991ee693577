#pragma once

#include <memory>

#include "lprt/coefficients.hpp"
#include "lprt/phase_space.hpp"

namespace lprt {

/// Sub-interval rule for path integrals along a backward characteristic of
/// length t with optical depth d:
///   n = clamp(ceil(per_unit_depth * d + t / max_step), min_intervals, max_intervals),
/// or `fixed_intervals` when positive. Each sub-interval attenuates exactly
/// with sigma frozen at its midpoint.
struct RayRule {
  int per_unit_depth = 64;
  int min_intervals = 1;
  int max_intervals = 4096;
  int fixed_intervals = 0;
  double max_step = 0.0;  ///< 0 disables the geometric term

  int intervals(double depth, double length) const;
  /// Every resolution parameter scaled by `factor`.
  RayRule refined(int factor) const;
};

/// Half the smallest lattice spacing: the default max_step for a grid.
double default_max_step(const SpatialGrid& grid);

/// Optical depth of [0, t] along the ray with the midpoint rule on n sub-intervals.
double optical_depth(const PhaseFunction& sigma, const Ray& ray, double t, int n);

/// sigma sampled at every node.
PhaseField sample(const PhaseFunction& fn, std::shared_ptr<const PhaseSpace> space);

/// Trilinear interpolation of the velocity-m slice of a field at x.
double interpolate(const PhaseField& field, std::size_t m, const Vec3& x);

/// Scattering operator. Isotropic and linearly anisotropic kernels use the
/// first angular moments; general kernels the full velocity sum; the flip
/// kernel pairs each node with its antipode (throws QuadratureMismatch when
/// the velocity rule is not antipodally closed).
PhaseField apply_K(const ScatteringKernel& kernel, const PhaseField& phi);

/// Boundary extension: exp(-depth(0, t)) g(r_-, v) on every node.
PhaseField apply_J(const PhaseFunction& sigma, const PhaseFunction& g, std::shared_ptr<const PhaseSpace> space,
                   const RayRule& rule);

/// Lifting of an analytic source along every backward characteristic.
PhaseField apply_L(const PhaseFunction& sigma, const PhaseFunction& f, std::shared_ptr<const PhaseSpace> space,
                   const RayRule& rule);

/// Lifting of a grid field; off-node values come from trilinear interpolation
/// at fixed velocity index.
PhaseField apply_L(const PhaseFunction& sigma, const PhaseField& f, const RayRule& rule);

/// v . grad(phi) from the transport equation: K phi - sigma phi + f.
PhaseField directional_derivative(const PhaseField& phi, const PhaseField& sigma_nodes, const PhaseField& k_phi,
                                  const PhaseField& f_nodes);
PhaseField directional_derivative(const PhaseField& phi, const PhaseFunction& sigma, const ScatteringKernel& kernel,
                                  const PhaseFunction& f);

/// Outflow trace by one sweep of the fixed-point representation along each
/// outflow characteristic: J g + L(K phi + f) at the exit point.
BoundaryField trace_outflow(const PhaseFunction& sigma, const ScatteringKernel& kernel, const PhaseFunction& f,
                            const PhaseFunction& g, const PhaseField& phi,
                            std::shared_ptr<const BoundaryQuadrature> outflow, const RayRule& rule);

/// Boundary data sampled on a quadrature (zero on tangential entries).
BoundaryField sample_boundary(const PhaseFunction& g, std::shared_ptr<const BoundaryQuadrature> quadrature);

}  // namespace lprt
