#include "lprt/coefficients.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "lprt/errors.hpp"

namespace lprt {

namespace {

constexpr double kFourPi = 4.0 * std::numbers::pi;
constexpr std::size_t kMaxReportedViolations = 16;

std::string format_number(double x) {
  std::ostringstream os;
  os << x;
  return os.str();
}

double radical_inverse(std::uint64_t index, std::uint64_t base) {
  double inv = 1.0 / static_cast<double>(base);
  double f = inv;
  double r = 0.0;
  while (index > 0) {
    r += f * static_cast<double>(index % base);
    index /= base;
    f *= inv;
  }
  return r;
}

}  // namespace

// ------------------------------------------------------------ PhaseFunction

PhaseFunction PhaseFunction::constant(double c) {
  return PhaseFunction(c, nullptr, nullptr, "constant(" + format_number(c) + ")");
}

PhaseFunction PhaseFunction::point(PointFn fn, std::string descriptor) {
  if (!fn) throw std::invalid_argument("phase function needs an evaluator");
  return PhaseFunction(std::nullopt, std::move(fn), nullptr, std::move(descriptor));
}

PhaseFunction PhaseFunction::with_rays(PointFn fn, RayFn along, std::string descriptor) {
  if (!fn || !along) throw std::invalid_argument("phase function needs point and ray evaluators");
  return PhaseFunction(std::nullopt, std::move(fn), std::move(along), std::move(descriptor));
}

PhaseFunction separable(double base, double radial, double directional, const Vec3& center) {
  std::ostringstream os;
  os << "separable(" << base << ", " << radial << ", " << directional << ")";
  return PhaseFunction::point(
      [=](const Vec3& r, const Vec3& d) {
        const Vec3 x = r - center;
        return base * (1.0 + radial * dot(x, x)) * (1.0 + directional * d.z);
      },
      os.str());
}

PhaseFunction nearest_table(std::vector<Vec3> points, std::vector<Vec3> directions, std::vector<double> values) {
  if (points.empty() || points.size() != directions.size() || points.size() != values.size()) {
    throw std::invalid_argument("table needs equally many points, directions and values");
  }
  auto data = std::make_shared<std::tuple<std::vector<Vec3>, std::vector<Vec3>, std::vector<double>>>(
      std::move(points), std::move(directions), std::move(values));
  const std::size_t n = std::get<0>(*data).size();
  return PhaseFunction::point(
      [data](const Vec3& r, const Vec3& d) {
        const auto& [ps, ds, vs] = *data;
        std::size_t best = 0;
        double best_dist = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < ps.size(); ++k) {
          const double dist = norm(ps[k] - r) + norm(ds[k] - d);
          if (dist < best_dist) {
            best_dist = dist;
            best = k;
          }
        }
        return vs[best];
      },
      "table(" + std::to_string(n) + ")");
}

// ------------------------------------------------------------- ChordProfile

double ChordProfile::rate(double tau) const {
  const double u = std::clamp(1.0 - tau, 0.0, 1.0);
  return kappa * std::pow(u, power);
}

double ChordProfile::depth(double tau) const {
  const double x = std::clamp(tau, 0.0, 1.0);
  if (x >= 1.0) return kappa / (power + 1.0);
  // 1 - (1 - x)^(power+1) without cancellation near x = 0.
  return -kappa * std::expm1((power + 1.0) * std::log1p(-x)) / (power + 1.0);
}

double ChordProfile::solution(double tau) const { return -std::expm1(-depth(tau)); }

double ChordProfile::source(double tau) const { return rate(tau) * std::exp(-depth(1.0 - tau)); }

double ChordProfile::solution_slope(double tau) const { return rate(tau) * std::exp(-depth(tau)); }

namespace {

std::string profile_name(const char* what, const ChordProfile& p) {
  std::ostringstream os;
  os << what << "(kappa=" << p.kappa << ", power=" << p.power << ")";
  return os.str();
}

template <class F>
PhaseFunction chord_function(const Domain& domain, const char* what, ChordProfile profile, F per_tau) {
  return PhaseFunction::with_rays(
      [domain, profile, per_tau](const Vec3& r, const Vec3& d) {
        const Chord c = chord(domain, r, d);
        return per_tau(profile, c.t / c.ray.length, c.ray.length);
      },
      [profile, per_tau](const Ray& ray, double s) { return per_tau(profile, s / ray.length, ray.length); },
      profile_name(what, profile));
}

}  // namespace

PhaseFunction chord_profile_cross_section(const Domain& domain, ChordProfile profile) {
  auto fn = chord_function(domain, "chord_profile_sigma", profile,
                           [](const ChordProfile& p, double tau, double len) { return p.rate(tau) / len; });
  fn.set_sup_times_chord(profile.kappa);
  return fn;
}

PhaseFunction chord_profile_source(const Domain& domain, ChordProfile profile) {
  auto fn = chord_function(domain, "chord_profile_source", profile,
                           [](const ChordProfile& p, double tau, double len) { return p.source(tau) / len; });
  // s(tau) e^{-S(1-tau)} is maximal somewhere in [0, 1]; a fine scan bounds it.
  double mx = 0.0;
  for (int j = 0; j <= 100000; ++j) mx = std::max(mx, profile.source(j / 100000.0));
  fn.set_sup_times_chord(mx);
  return fn;
}

PhaseFunction chord_profile_solution(const Domain& domain, ChordProfile profile) {
  return chord_function(domain, "chord_profile_solution", profile,
                        [](const ChordProfile& p, double tau, double) { return p.solution(tau); });
}

// --------------------------------------------------------- ScatteringKernel

ScatteringKernel ScatteringKernel::none() { return ScatteringKernel(); }

ScatteringKernel ScatteringKernel::isotropic(PhaseFunction amplitude) {
  ScatteringKernel k;
  k.kind_ = Kind::isotropic;
  k.descriptor_ = "isotropic(" + amplitude.descriptor() + ")";
  k.amplitude_ = std::move(amplitude);
  return k;
}

ScatteringKernel ScatteringKernel::linear_anisotropic(PhaseFunction amplitude, double mu) {
  if (std::abs(mu) > 1.0) throw std::invalid_argument("anisotropy parameter must satisfy |mu| <= 1");
  ScatteringKernel k;
  k.kind_ = Kind::linear_anisotropic;
  k.mu_ = mu;
  k.descriptor_ = "linear_anisotropic(" + amplitude.descriptor() + ", mu=" + format_number(mu) + ")";
  k.amplitude_ = std::move(amplitude);
  return k;
}

ScatteringKernel ScatteringKernel::flip(PhaseFunction sigma) {
  ScatteringKernel k;
  k.kind_ = Kind::flip;
  k.symmetric_ = false;
  k.descriptor_ = "flip(" + sigma.descriptor() + ")";
  k.amplitude_ = std::move(sigma);
  return k;
}

ScatteringKernel ScatteringKernel::general(DensityFn density, std::string descriptor, bool symmetric) {
  if (!density) throw std::invalid_argument("general kernel needs a density");
  ScatteringKernel k;
  k.kind_ = Kind::general;
  k.density_ = std::move(density);
  k.symmetric_ = symmetric;
  k.descriptor_ = std::move(descriptor);
  return k;
}

double ScatteringKernel::density(const Vec3& r, const Vec3& v_in, const Vec3& v_out) const {
  switch (kind_) {
    case Kind::none:
      return 0.0;
    case Kind::isotropic:
      return amplitude_(r, normalized(v_out)) / kFourPi;
    case Kind::linear_anisotropic:
      return amplitude_(r, normalized(v_out)) * (1.0 + mu_ * dot(normalized(v_in), normalized(v_out))) / kFourPi;
    case Kind::flip:
      throw std::logic_error("the flip kernel has no density");
    case Kind::general:
      return density_(r, v_in, v_out);
  }
  return 0.0;
}

double sigma_s(const ScatteringKernel& kernel, const VelocityQuadrature& vq, const Vec3& r, const Vec3& v) {
  if (kernel.is_none()) return 0.0;
  if (kernel.kind() == ScatteringKernel::Kind::flip) return kernel.amplitude()(r, normalized(v));
  double s = 0.0;
  for (const auto& n : vq.nodes()) s += n.weight * kernel.density(r, v, n.velocity);
  return s;
}

double sigma_s_prime(const ScatteringKernel& kernel, const VelocityQuadrature& vq, const Vec3& r, const Vec3& v) {
  if (kernel.is_none()) return 0.0;
  if (kernel.kind() == ScatteringKernel::Kind::flip) return kernel.amplitude()(r, normalized(v));
  double s = 0.0;
  for (const auto& n : vq.nodes()) s += n.weight * kernel.density(r, n.velocity, v);
  return s;
}

// ---------------------------------------------------------------- validation

namespace {

struct RunningSup {
  double max = -std::numeric_limits<double>::infinity();
  double min = std::numeric_limits<double>::infinity();
  double max_times_ell = 0.0;

  void add(double value, double ell) {
    max = std::max(max, value);
    min = std::min(min, value);
    max_times_ell = std::max(max_times_ell, value * ell);
  }

  // Constant values attain value * diameter in the limit of diametral chords.
  double sup_times_ell(double diameter, std::optional<double> hint) const {
    double s = max_times_ell;
    if (max >= min && max - min <= 1e-14 * std::max(1.0, std::abs(max))) s = std::max(s, max * diameter);
    if (hint) s = std::max(s, *hint);
    return s;
  }
};

std::optional<double> kernel_hint(const ScatteringKernel& kernel) {
  if (kernel.kind() == ScatteringKernel::Kind::flip) return kernel.amplitude().sup_times_chord();
  return std::nullopt;
}

}  // namespace

ValidationReport validate_assumptions(const PhaseFunction& sigma, const ScatteringKernel& kernel,
                                      const Domain& domain, const VelocityQuadrature& vq,
                                      const SpatialGrid& grid, std::size_t sample_count, std::uint64_t seed) {
  ValidationReport rep;
  rep.seed = seed;
  rep.min_sigma = std::numeric_limits<double>::infinity();
  rep.min_sigma_minus_sigma_s = std::numeric_limits<double>::infinity();
  rep.min_sigma_minus_sigma_s_prime = std::numeric_limits<double>::infinity();

  std::vector<Vec3> points(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) points[i] = grid.point(i);
  const Box& bb = domain.bounds();
  std::uint64_t index = seed + 1;
  std::size_t added = 0;
  const std::size_t attempts_cap = 1000 * std::max<std::size_t>(sample_count, 1);
  for (std::size_t attempt = 0; added < sample_count && attempt < attempts_cap; ++attempt, ++index) {
    const Vec3 x{bb.lo.x + (bb.hi.x - bb.lo.x) * radical_inverse(index, 2),
                 bb.lo.y + (bb.hi.y - bb.lo.y) * radical_inverse(index, 3),
                 bb.lo.z + (bb.hi.z - bb.lo.z) * radical_inverse(index, 5)};
    if (domain.boundary_gap(x) < -1e-9) {
      points.push_back(x);
      ++added;
    }
  }

  RunningSup sig, sig_s, sig_sp;
  auto flag = [&](const char* what, const Vec3& r, const Vec3& v, double value) {
    ++rep.violation_count;
    if (rep.violations.size() < kMaxReportedViolations) rep.violations.push_back({what, r, v, value});
  };

  for (const Vec3& r : points) {
    for (const auto& node : vq.nodes()) {
      const Vec3& v = node.velocity;
      const double ell = chord(domain, r, node.direction).ray.length;
      const double s = sigma(r, node.direction);
      const double ss = sigma_s(kernel, vq, r, v);
      const double ssp = sigma_s_prime(kernel, vq, r, v);
      sig.add(s, ell);
      sig_s.add(ss, ell);
      sig_sp.add(ssp, ell);
      ++rep.samples;
      rep.min_sigma = std::min(rep.min_sigma, s);
      rep.min_sigma_minus_sigma_s = std::min(rep.min_sigma_minus_sigma_s, s - ss);
      rep.min_sigma_minus_sigma_s_prime = std::min(rep.min_sigma_minus_sigma_s_prime, s - ssp);
      if (s > 0.0) {
        rep.sup_ratio_s = std::max(rep.sup_ratio_s, ss / s);
        rep.sup_ratio_s_prime = std::max(rep.sup_ratio_s_prime, ssp / s);
      }
      // Relative round-off allowance so that sigma = sigma_s passes.
      const double tol = 1e-12 * std::max(1.0, std::abs(s));
      if (s < 0.0) flag("sigma<0", r, v, s);
      if (s - ss < -tol) flag("sigma-sigma_s<0", r, v, s - ss);
      if (s - ssp < -tol) flag("sigma-sigma_s'<0", r, v, s - ssp);
      if (kernel.kind() == ScatteringKernel::Kind::general) {
        for (const auto& other : vq.nodes()) {
          const double k = kernel.density(r, other.velocity, v);
          if (k < 0.0) flag("k<0", r, v, k);
        }
      }
    }
  }

  const double diam = domain.diameter();
  rep.sup_sigma_ell = sig.sup_times_ell(diam, sigma.sup_times_chord());
  rep.sup_sigma_s_ell = sig_s.sup_times_ell(diam, kernel_hint(kernel));
  rep.sup_sigma_s_prime_ell = sig_sp.sup_times_ell(diam, kernel_hint(kernel));
  return rep;
}

double stability_constant(double sup_sigma_s_ell, double sup_sigma_s_prime_ell, double p) {
  if (!(p >= 1.0)) throw InvalidExponent("exponent must satisfy p >= 1");
  if (std::isinf(p)) return sup_sigma_s_prime_ell;
  return sup_sigma_s_ell / p + (p - 1.0) / p * sup_sigma_s_prime_ell;
}

BoundConstants compute_bound_constants(const ValidationReport& report, double p) {
  BoundConstants bc;
  bc.p = p;
  bc.sup_sigma_s_ell = report.sup_sigma_s_ell;
  bc.sup_sigma_s_prime_ell = report.sup_sigma_s_prime_ell;
  bc.sup_sigma_ell = report.sup_sigma_ell;
  bc.C_p = stability_constant(bc.sup_sigma_s_ell, bc.sup_sigma_s_prime_ell, p);
  bc.escape_probability = -std::expm1(-bc.C_p);
  if (report.samples > 0 && report.min_sigma > 0.0) {
    bc.c = report.sup_ratio_s;
    bc.c_prime = report.sup_ratio_s_prime;
    const double nu = 1.0 - std::max(report.sup_ratio_s, report.sup_ratio_s_prime);
    if (nu > 1e-12) bc.nu = std::min(nu, 1.0);
  }
  return bc;
}

BoundConstants compute_bound_constants(const PhaseFunction& sigma, const ScatteringKernel& kernel,
                                       const Domain& domain, const VelocityQuadrature& vq,
                                       const SpatialGrid& grid, double p, std::size_t sample_count,
                                       std::uint64_t seed) {
  return compute_bound_constants(validate_assumptions(sigma, kernel, domain, vq, grid, sample_count, seed), p);
}

}  // namespace lprt
