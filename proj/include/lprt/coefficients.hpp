#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lprt/geometry.hpp"
#include "lprt/phase_space.hpp"

namespace lprt {

/// A real function of position and direction, used for cross sections,
/// volume sources and boundary data.
///
/// Besides pointwise evaluation it may carry a cheaper evaluation along a
/// known characteristic (avoids a chord query per sample) and an analytic
/// value of sup(value * chord length) when sampling would miss the maximum.
class PhaseFunction {
 public:
  using PointFn = std::function<double(const Vec3& r, const Vec3& dir)>;
  using RayFn = std::function<double(const Ray& ray, double s)>;

  PhaseFunction() : PhaseFunction(constant(0.0)) {}

  static PhaseFunction constant(double c);
  static PhaseFunction point(PointFn fn, std::string descriptor);
  /// `along` must agree with `fn` at ray.point(s) for every ray through the domain.
  static PhaseFunction with_rays(PointFn fn, RayFn along, std::string descriptor);

  double operator()(const Vec3& r, const Vec3& dir) const {
    return constant_ ? *constant_ : point_(r, dir);
  }
  double along(const Ray& ray, double s) const {
    if (constant_) return *constant_;
    if (ray_) return ray_(ray, s);
    return point_(ray.point(s), ray.direction);
  }

  std::optional<double> constant_value() const { return constant_; }
  bool is_zero() const { return constant_ && *constant_ == 0.0; }

  std::optional<double> sup_times_chord() const { return sup_times_chord_; }
  PhaseFunction& set_sup_times_chord(double value) {
    sup_times_chord_ = value;
    return *this;
  }

  const std::string& descriptor() const { return descriptor_; }

 private:
  PhaseFunction(std::optional<double> c, PointFn fn, RayFn along, std::string descriptor)
      : constant_(c), point_(std::move(fn)), ray_(std::move(along)), descriptor_(std::move(descriptor)) {}

  std::optional<double> constant_;
  PointFn point_;
  RayFn ray_;
  std::optional<double> sup_times_chord_;
  std::string descriptor_;
};

/// base * (1 + radial |r - center|^2) * (1 + directional * dir_z); nonnegative
/// when radial >= 0 and |directional| <= 1.
PhaseFunction separable(double base, double radial, double directional, const Vec3& center = {});

/// Piecewise-constant table: value of the nearest (point, direction) entry.
PhaseFunction nearest_table(std::vector<Vec3> points, std::vector<Vec3> directions, std::vector<double> values);

/// One-parameter chord family s(tau) = kappa (1 - tau)^power, tau in [0, 1] the
/// normalized distance from the inflow point along a chord.
struct ChordProfile {
  double kappa = 1.0;
  double power = 1.0;

  double rate(double tau) const;
  /// Exact integral of rate over [0, tau].
  double depth(double tau) const;
  double solution(double tau) const;  ///< 1 - exp(-depth(tau))
  /// rate(tau) * exp(-depth(1 - tau))
  double source(double tau) const;
  /// d/dtau of solution
  double solution_slope(double tau) const;
};

/// Cross section sigma(r, v) = s(tau) / l(r, v); sup sigma l = kappa.
PhaseFunction chord_profile_cross_section(const Domain& domain, ChordProfile profile);
/// Source f(r, v) = s(tau) exp(-S(1 - tau)) / l(r, v) paired with the cross section
/// above under the flip kernel; the exact solution is 1 - exp(-S(tau)).
PhaseFunction chord_profile_source(const Domain& domain, ChordProfile profile);
/// The exact solution 1 - exp(-S(tau)) of the flip problem above.
PhaseFunction chord_profile_solution(const Domain& domain, ChordProfile profile);

class ScatteringKernel {
 public:
  enum class Kind { none, isotropic, linear_anisotropic, flip, general };
  /// k(r, v_in, v_out): rate density of scattering from v_in into v_out.
  using DensityFn = std::function<double(const Vec3& r, const Vec3& v_in, const Vec3& v_out)>;

  static ScatteringKernel none();
  /// k = a(r) / (4 pi).
  static ScatteringKernel isotropic(PhaseFunction amplitude);
  /// k = a(r) (1 + mu v_in . v_out) / (4 pi), with |mu| <= 1.
  static ScatteringKernel linear_anisotropic(PhaseFunction amplitude, double mu);
  /// K phi(r, v) = sigma(r, v) phi(r, -v).
  static ScatteringKernel flip(PhaseFunction sigma);
  static ScatteringKernel general(DensityFn density, std::string descriptor, bool symmetric = false);

  Kind kind() const { return kind_; }
  bool is_none() const { return kind_ == Kind::none; }
  /// Amplitude a(r) for isotropic and anisotropic kernels; sigma for the flip kernel.
  const PhaseFunction& amplitude() const { return amplitude_; }
  double mu() const { return mu_; }
  bool symmetric() const { return symmetric_; }
  const std::string& descriptor() const { return descriptor_; }

  /// Density value. Throws std::logic_error for the flip kernel, which has none.
  double density(const Vec3& r, const Vec3& v_in, const Vec3& v_out) const;

 private:
  ScatteringKernel() = default;

  Kind kind_ = Kind::none;
  PhaseFunction amplitude_;
  double mu_ = 0.0;
  DensityFn density_;
  bool symmetric_ = true;
  std::string descriptor_ = "none";
};

/// Out-scattering rate: integral of k(r, v, .) over the velocity rule. Flip: sigma(r, v).
double sigma_s(const ScatteringKernel& kernel, const VelocityQuadrature& vq, const Vec3& r, const Vec3& v);
/// In-scattering rate: integral of k(r, ., v) over the velocity rule. Flip: sigma(r, v).
double sigma_s_prime(const ScatteringKernel& kernel, const VelocityQuadrature& vq, const Vec3& r, const Vec3& v);

struct AssumptionViolation {
  std::string what;  ///< "sigma<0", "sigma-sigma_s<0", "sigma-sigma_s'<0", "k<0"
  Vec3 r;
  Vec3 v;
  double value = 0.0;
};

struct ValidationReport {
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  double min_sigma = 0.0;
  double min_sigma_minus_sigma_s = 0.0;
  double min_sigma_minus_sigma_s_prime = 0.0;
  double sup_sigma_ell = 0.0;
  double sup_sigma_s_ell = 0.0;
  double sup_sigma_s_prime_ell = 0.0;
  /// sup sigma_s / sigma and sup sigma_s' / sigma over samples with sigma > 0
  double sup_ratio_s = 0.0;
  double sup_ratio_s_prime = 0.0;
  std::size_t violation_count = 0;
  std::vector<AssumptionViolation> violations;  ///< first few offenders

  bool passed() const { return violation_count == 0; }
};

/// Checks sigma >= 0, sigma - sigma_s >= 0, sigma - sigma_s' >= 0 on every
/// grid x velocity node and on `sample_count` extra quasi-random interior
/// points (Halton sequence offset by `seed`) at every velocity node.
///
/// Sups of (.) * l use the maximum of the sampled value and, when available,
/// an analytic value: the function's sup_times_chord hint, or value * diameter
/// when the sampled values are constant.
ValidationReport validate_assumptions(const PhaseFunction& sigma, const ScatteringKernel& kernel,
                                      const Domain& domain, const VelocityQuadrature& vq,
                                      const SpatialGrid& grid, std::size_t sample_count,
                                      std::uint64_t seed = 42);

struct BoundConstants {
  double p = 1.0;
  double sup_sigma_s_ell = 0.0;
  double sup_sigma_s_prime_ell = 0.0;
  double sup_sigma_ell = 0.0;
  double C_p = 0.0;
  double escape_probability = 0.0;  ///< 1 - exp(-C_p)
  std::optional<double> nu;         ///< absorption margin, when min sigma > 0 and it is positive
  std::optional<double> c;          ///< sup sigma_s / sigma
  std::optional<double> c_prime;    ///< sup sigma_s' / sigma
};

/// C_p = sup(sigma_s l) / p + (p - 1) / p sup(sigma_s' l), with the limits at p = 1 and p = inf.
double stability_constant(double sup_sigma_s_ell, double sup_sigma_s_prime_ell, double p);

BoundConstants compute_bound_constants(const ValidationReport& report, double p);
BoundConstants compute_bound_constants(const PhaseFunction& sigma, const ScatteringKernel& kernel,
                                       const Domain& domain, const VelocityQuadrature& vq,
                                       const SpatialGrid& grid, double p, std::size_t sample_count,
                                       std::uint64_t seed = 42);

}  // namespace lprt
