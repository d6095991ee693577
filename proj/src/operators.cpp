#include "lprt/operators.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lprt/errors.hpp"

namespace lprt {

int RayRule::intervals(double depth, double length) const {
  if (fixed_intervals > 0) return fixed_intervals;
  double n = per_unit_depth * std::max(depth, 0.0);
  if (max_step > 0.0) n += length / max_step;
  const double capped = std::clamp(std::ceil(n), static_cast<double>(std::max(1, min_intervals)),
                                   static_cast<double>(std::max(1, max_intervals)));
  return static_cast<int>(capped);
}

RayRule RayRule::refined(int factor) const {
  RayRule r = *this;
  r.per_unit_depth *= factor;
  r.min_intervals *= factor;
  r.max_intervals *= factor;
  r.fixed_intervals *= factor;
  r.max_step /= factor;
  return r;
}

double default_max_step(const SpatialGrid& grid) { return 0.5 * grid.min_spacing(); }

double optical_depth(const PhaseFunction& sigma, const Ray& ray, double t, int n) {
  if (t <= 0.0) return 0.0;
  if (auto c = sigma.constant_value()) return *c * t;
  const double h = t / n;
  double d = 0.0;
  for (int j = 0; j < n; ++j) d += sigma.along(ray, (j + 0.5) * h);
  return d * h;
}

namespace {

int interval_count(const PhaseFunction& sigma, const Ray& ray, double t, const RayRule& rule) {
  if (rule.fixed_intervals > 0) return rule.fixed_intervals;
  const double depth = sigma.constant_value() ? *sigma.constant_value() * t : optical_depth(sigma, ray, t, 8);
  return rule.intervals(depth, t);
}

// Exponential-integrator sweep of V' = -sigma V + q from V(0) = start to V(t),
// sigma frozen at each sub-interval midpoint and q sampled there.
template <class Q>
double sweep(const PhaseFunction& sigma, const Ray& ray, double t, int n, double start, Q&& q) {
  if (t <= 0.0) return start;
  const double h = t / n;
  const auto c = sigma.constant_value();
  const double att_c = c ? std::exp(-*c * h) : 0.0;
  const double w_c = c ? h * one_minus_exp_over(*c * h) : 0.0;
  double v = start;
  for (int j = 0; j < n; ++j) {
    const double s = (j + 0.5) * h;
    if (c) {
      v = v * att_c + q(s) * w_c;
    } else {
      const double d = sigma.along(ray, s) * h;
      v = v * std::exp(-d) + q(s) * h * one_minus_exp_over(d);
    }
  }
  return v;
}

}  // namespace

PhaseField sample(const PhaseFunction& fn, std::shared_ptr<const PhaseSpace> space) {
  PhaseField out(space);
  for (std::size_t i = 0; i < space->spatial_size(); ++i) {
    for (std::size_t m = 0; m < space->velocity_size(); ++m) {
      out(i, m) = fn(space->grid().point(i), space->velocities()[m].direction);
    }
  }
  return out;
}

double interpolate(const PhaseField& field, std::size_t m, const Vec3& x) {
  std::array<std::size_t, 8> idx{};
  std::array<double, 8> w{};
  field.space()->grid().stencil(x, idx, w);
  double v = 0.0;
  for (int c = 0; c < 8; ++c) v += w[static_cast<std::size_t>(c)] * field(idx[static_cast<std::size_t>(c)], m);
  return v;
}

PhaseField apply_K(const ScatteringKernel& kernel, const PhaseField& phi) {
  const auto& space = phi.space();
  PhaseField out(space);
  if (kernel.is_none()) return out;
  const auto& vq = space->velocities();
  const std::size_t nv = vq.size();
  constexpr double kFourPi = 4.0 * std::numbers::pi;

  switch (kernel.kind()) {
    case ScatteringKernel::Kind::none:
      break;
    case ScatteringKernel::Kind::isotropic:
    case ScatteringKernel::Kind::linear_anisotropic: {
      const double mu = kernel.kind() == ScatteringKernel::Kind::isotropic ? 0.0 : kernel.mu();
      const auto amp_const = kernel.amplitude().constant_value();
      for (std::size_t i = 0; i < space->spatial_size(); ++i) {
        double m0 = 0.0;
        Vec3 m1;
        for (std::size_t m = 0; m < nv; ++m) {
          const double wp = vq[m].weight * phi(i, m);
          m0 += wp;
          if (mu != 0.0) m1 += wp * vq[m].direction;
        }
        for (std::size_t m = 0; m < nv; ++m) {
          const double a =
              amp_const ? *amp_const : kernel.amplitude()(space->grid().point(i), vq[m].direction);
          out(i, m) = a * (m0 + mu * dot(vq[m].direction, m1)) / kFourPi;
        }
      }
      break;
    }
    case ScatteringKernel::Kind::flip: {
      if (!vq.antipodally_closed()) throw QuadratureMismatch("flip kernel needs an antipodally closed velocity rule");
      for (std::size_t i = 0; i < space->spatial_size(); ++i) {
        for (std::size_t m = 0; m < nv; ++m) {
          const double s = kernel.amplitude()(space->grid().point(i), vq[m].direction);
          out(i, m) = s * phi(i, *vq.antipode(m));
        }
      }
      break;
    }
    case ScatteringKernel::Kind::general: {
      for (std::size_t i = 0; i < space->spatial_size(); ++i) {
        const Vec3& r = space->grid().point(i);
        for (std::size_t m = 0; m < nv; ++m) {
          double s = 0.0;
          for (std::size_t mp = 0; mp < nv; ++mp) {
            s += vq[mp].weight * kernel.density(r, vq[mp].velocity, vq[m].velocity) * phi(i, mp);
          }
          out(i, m) = s;
        }
      }
      break;
    }
  }
  return out;
}

PhaseField apply_J(const PhaseFunction& sigma, const PhaseFunction& g, std::shared_ptr<const PhaseSpace> space,
                   const RayRule& rule) {
  PhaseField out(space);
  if (g.is_zero()) return out;
  for (std::size_t i = 0; i < space->spatial_size(); ++i) {
    for (std::size_t m = 0; m < space->velocity_size(); ++m) {
      const Ray ray = space->ray(i, m);
      const double t = space->inflow_distance(i, m);
      const double g0 = g(ray.r_minus, ray.direction);
      if (g0 == 0.0) continue;
      const int n = interval_count(sigma, ray, t, rule);
      out(i, m) = std::exp(-optical_depth(sigma, ray, t, n)) * g0;
    }
  }
  return out;
}

PhaseField apply_L(const PhaseFunction& sigma, const PhaseFunction& f, std::shared_ptr<const PhaseSpace> space,
                   const RayRule& rule) {
  PhaseField out(space);
  if (f.is_zero()) return out;
  for (std::size_t i = 0; i < space->spatial_size(); ++i) {
    for (std::size_t m = 0; m < space->velocity_size(); ++m) {
      const Ray ray = space->ray(i, m);
      const double t = space->inflow_distance(i, m);
      const int n = interval_count(sigma, ray, t, rule);
      out(i, m) = sweep(sigma, ray, t, n, 0.0, [&](double s) { return f.along(ray, s); });
    }
  }
  return out;
}

PhaseField apply_L(const PhaseFunction& sigma, const PhaseField& f, const RayRule& rule) {
  const auto& space = f.space();
  PhaseField out(space);
  for (std::size_t i = 0; i < space->spatial_size(); ++i) {
    for (std::size_t m = 0; m < space->velocity_size(); ++m) {
      const Ray ray = space->ray(i, m);
      const double t = space->inflow_distance(i, m);
      const int n = interval_count(sigma, ray, t, rule);
      out(i, m) = sweep(sigma, ray, t, n, 0.0, [&](double s) { return interpolate(f, m, ray.point(s)); });
    }
  }
  return out;
}

PhaseField directional_derivative(const PhaseField& phi, const PhaseField& sigma_nodes, const PhaseField& k_phi,
                                  const PhaseField& f_nodes) {
  phi.require_compatible(sigma_nodes);
  phi.require_compatible(k_phi);
  phi.require_compatible(f_nodes);
  PhaseField out(phi.space());
  auto o = out.values();
  auto p = phi.values();
  auto s = sigma_nodes.values();
  auto k = k_phi.values();
  auto f = f_nodes.values();
  for (std::size_t n = 0; n < o.size(); ++n) o[n] = k[n] - s[n] * p[n] + f[n];
  return out;
}

PhaseField directional_derivative(const PhaseField& phi, const PhaseFunction& sigma, const ScatteringKernel& kernel,
                                  const PhaseFunction& f) {
  return directional_derivative(phi, sample(sigma, phi.space()), apply_K(kernel, phi), sample(f, phi.space()));
}

BoundaryField trace_outflow(const PhaseFunction& sigma, const ScatteringKernel& kernel, const PhaseFunction& f,
                            const PhaseFunction& g, const PhaseField& phi,
                            std::shared_ptr<const BoundaryQuadrature> outflow, const RayRule& rule) {
  const PhaseField k_phi = apply_K(kernel, phi);
  const bool scattering = !kernel.is_none();
  BoundaryField out{outflow, std::vector<double>(outflow->size(), 0.0)};
  for (std::size_t e = 0; e < outflow->size(); ++e) {
    const BoundaryEntry& entry = (*outflow)[e];
    if (entry.weight == 0.0) continue;
    const Ray& ray = entry.ray;
    const std::size_t m = entry.velocity;
    const int n = interval_count(sigma, ray, ray.length, rule);
    out.values[e] = sweep(sigma, ray, ray.length, n, g(ray.r_minus, ray.direction), [&](double s) {
      double q = f.is_zero() ? 0.0 : f.along(ray, s);
      if (scattering) q += interpolate(k_phi, m, ray.point(s));
      return q;
    });
  }
  return out;
}

BoundaryField sample_boundary(const PhaseFunction& g, std::shared_ptr<const BoundaryQuadrature> quadrature) {
  BoundaryField out{quadrature, std::vector<double>(quadrature->size(), 0.0)};
  for (std::size_t e = 0; e < quadrature->size(); ++e) {
    const BoundaryEntry& entry = (*quadrature)[e];
    if (entry.weight == 0.0) continue;
    out.values[e] = g(entry.point.r, entry.ray.direction);
  }
  return out;
}

}  // namespace lprt
