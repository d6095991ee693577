#include "lprt/analysis.hpp"

#include <algorithm>
#include <cmath>

#include "lprt/errors.hpp"
#include "lprt/operators.hpp"

namespace lprt {

BoundReport make_report(std::string name, double p, double lhs, double rhs, double constant,
                        const SlackModel& slack) {
  BoundReport r;
  r.name = std::move(name);
  r.p = p;
  r.lhs = lhs;
  r.rhs = rhs;
  r.constant = constant;
  r.delta = slack.delta(lhs, rhs);
  r.holds = std::isfinite(lhs) && lhs <= rhs + r.delta;
  return r;
}

namespace {

/// Compensated (Neumaier) running sum; deterministic for a fixed input order.
struct CompensatedSum {
  double sum = 0.0;
  double carry = 0.0;

  void add(double x) {
    const double t = sum + x;
    carry += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
    sum = t;
  }
  double value() const { return sum + carry; }
};

class NormAccumulator {
 public:
  explicit NormAccumulator(double p) : p_(p) {}

  void add(double weight, double value) {
    if (weight <= 0.0) return;
    const double a = std::abs(value);
    if (std::isinf(p_)) {
      max_ = std::max(max_, a);
    } else if (a != 0.0) {
      sum_.add(weight * (p_ == 1.0 ? a : std::pow(a, p_)));
    }
  }

  double value() const {
    if (std::isinf(p_)) return max_;
    const double s = sum_.value();
    return p_ == 1.0 ? s : std::pow(s, 1.0 / p_);
  }

 private:
  double p_;
  CompensatedSum sum_;
  double max_ = 0.0;
};

/// s^e u, with 0^e u = inf for e < 0 and u != 0.
double power_scaled(double u, double s, double e) {
  if (e == 0.0) return u;
  if (s == 0.0) return e < 0.0 && u != 0.0 ? INFINITY : 0.0;
  return std::pow(s, e) * u;
}

struct NormSet {
  double p;
  double inv;
  NormAccumulator phi_ell, phi_sigma, f_ell, f_sigma, dphi_ell, dphi_sigma, dphi_l1, f_l1, dphi_ell_inf,
      f_ell_inf, w_l1, inflow, outflow;

  explicit NormSet(double p_)
      : p(p_), inv(std::isinf(p_) ? 0.0 : 1.0 / p_), phi_ell(p_), phi_sigma(p_), f_ell(p_), f_sigma(p_),
        dphi_ell(p_), dphi_sigma(p_), dphi_l1(1.0), f_l1(1.0), dphi_ell_inf(INFINITY), f_ell_inf(INFINITY),
        w_l1(1.0), inflow(p_), outflow(p_) {}

  void add_volume(double weight, double ell, double sigma, double phi, double f, double k_phi,
                  std::optional<double> w) {
    const double d = k_phi - sigma * phi + f;
    phi_ell.add(weight, std::pow(ell, -inv) * phi);
    phi_sigma.add(weight, power_scaled(phi, sigma, inv));
    f_ell.add(weight, std::pow(ell, 1.0 - inv) * f);
    f_sigma.add(weight, power_scaled(f, sigma, inv - 1.0));
    dphi_ell.add(weight, std::pow(ell, 1.0 - inv) * d);
    dphi_sigma.add(weight, power_scaled(d, sigma, inv - 1.0));
    dphi_l1.add(weight, d);
    f_l1.add(weight, f);
    dphi_ell_inf.add(weight, ell * d);
    f_ell_inf.add(weight, ell * f);
    if (w) w_l1.add(weight, *w);
  }
};

}  // namespace

SolutionNorms solution_norms(const TransportSystem& system, const PhaseField& phi, double p,
                             const BoundaryQuadrature& inflow, NormQuadrature quadrature, const PhaseField* w) {
  const TransportProblem& pr = system.problem();
  const auto& space = system.space();
  if (phi.space() != space) throw GridMismatch("solution lives on a different phase space");
  if (w && w->space() != space) throw GridMismatch("w lives on a different phase space");
  const PhaseField k_phi = system.apply_K(phi);
  const PhaseField f_nodes = sample(pr.source, space);
  const PhaseField sigma_nodes = sample(pr.sigma, space);
  std::optional<PhaseField> w_minus_f;
  if (w) {
    w_minus_f = *w;
    *w_minus_f -= f_nodes;
  }
  const bool scattering = !pr.kernel.is_none();
  const auto sigma_const = pr.sigma.constant_value();
  NormSet n(p);

  if (quadrature == NormQuadrature::nodes) {
    for (std::size_t i = 0; i < space->spatial_size(); ++i) {
      for (std::size_t m = 0; m < space->velocity_size(); ++m) {
        std::optional<double> wv;
        if (w) wv = (*w)(i, m);
        n.add_volume(space->measure(i, m), space->chord_length(i, m), sigma_nodes(i, m), phi(i, m), f_nodes(i, m),
                     k_phi(i, m), wv);
      }
    }
  }

  const bool volume = quadrature == NormQuadrature::characteristics;
  // A fixed solver interval count does not apply here: Simpson steps follow the optical depth.
  RayRule norm_rule = pr.rule;
  norm_rule.fixed_intervals = 0;
  std::vector<double> t, sig, q, kv, fv;
  for (const BoundaryEntry& e : inflow.entries()) {
    if (e.weight <= 0.0) continue;
    const Ray& ray = e.ray;
    const std::size_t m = e.velocity;
    const double len = ray.length;
    const double depth = sigma_const ? *sigma_const * len : optical_depth(pr.sigma, ray, len, 16);
    const int half = std::max({norm_rule.intervals(depth, len), static_cast<int>(std::ceil(4.0 * depth)), 8});
    const int steps = 2 * half;
    const double h = len / steps;
    t.resize(steps + 1);
    sig.resize(steps + 1);
    q.resize(steps + 1);
    kv.resize(steps + 1);
    fv.resize(steps + 1);
    for (int j = 0; j <= steps; ++j) {
      const double s = j * h;
      const Vec3 x = ray.point(s);
      t[j] = s;
      sig[j] = sigma_const ? *sigma_const : pr.sigma.along(ray, s);
      fv[j] = pr.source.is_zero() ? 0.0 : pr.source.along(ray, s);
      kv[j] = scattering ? interpolate(k_phi, m, x) : 0.0;
      q[j] = fv[j] + kv[j];
    }
    const double g = pr.boundary(ray.r_minus, ray.direction);
    n.inflow.add(e.weight, g);
    double v = g;
    for (int j = 0; j <= steps; ++j) {
      if (j > 0) {
        const double sm = sigma_const ? *sigma_const : pr.sigma.along(ray, t[j] - 0.5 * h);
        const double tau = sm * h;
        v = v * std::exp(-tau) + 0.5 * (q[j - 1] + q[j]) * h * one_minus_exp_over(tau);
      }
      if (!volume) continue;
      const double simpson = (j == 0 || j == steps) ? 1.0 : (j % 2 ? 4.0 : 2.0);
      std::optional<double> wv;
      if (w_minus_f) wv = interpolate(*w_minus_f, m, ray.point(t[j])) + fv[j];
      n.add_volume(e.weight * simpson * h / 3.0, len, sig[j], v, fv[j], kv[j], wv);
    }
    n.outflow.add(e.weight, v);
  }

  SolutionNorms out;
  out.p = p;
  out.phi_ell = n.phi_ell.value();
  out.phi_sigma = n.phi_sigma.value();
  out.f_ell = n.f_ell.value();
  out.f_sigma = n.f_sigma.value();
  out.dphi_ell = n.dphi_ell.value();
  out.dphi_sigma = n.dphi_sigma.value();
  out.dphi_l1 = n.dphi_l1.value();
  out.f_l1 = n.f_l1.value();
  out.dphi_ell_inf = n.dphi_ell_inf.value();
  out.f_ell_inf = n.f_ell_inf.value();
  if (w) out.w_l1 = n.w_l1.value();
  out.inflow = n.inflow.value();
  out.outflow = n.outflow.value();
  return out;
}

double fubini_mismatch(const PhaseSpace& space, const BoundaryQuadrature& inflow) {
  std::vector<double> vol, inv;
  for (std::size_t i = 0; i < space.spatial_size(); ++i) {
    for (std::size_t m = 0; m < space.velocity_size(); ++m) {
      vol.push_back(space.measure(i, m));
      inv.push_back(space.measure(i, m) / space.chord_length(i, m));
    }
  }
  std::vector<double> bvol, barea;
  for (const auto& e : inflow.entries()) {
    bvol.push_back(e.weight * e.ray.length);
    barea.push_back(e.weight);
  }
  const double v_grid = pairwise_sum(vol), a_grid = pairwise_sum(inv);
  const double v_bnd = pairwise_sum(bvol), a_bnd = pairwise_sum(barea);
  double eps = 0.0;
  if (v_bnd > 0.0) eps = std::max(eps, std::abs(v_grid - v_bnd) / v_bnd);
  if (a_bnd > 0.0) eps = std::max(eps, std::abs(a_grid - a_bnd) / a_bnd);
  return eps;
}

double boundary_volume_error(const PhaseSpace& space, const BoundaryQuadrature& inflow) {
  std::vector<double> bvol;
  for (const auto& e : inflow.entries()) bvol.push_back(e.weight * e.ray.length);
  const double v_bnd = pairwise_sum(bvol);
  const double v_ref =
      space.domain().exact_volume().value_or(space.grid().total_volume()) * space.velocities().total_weight();
  return v_ref > 0.0 ? std::abs(v_bnd - v_ref) / v_ref : 0.0;
}

namespace {

double inv_p(double p) { return std::isinf(p) ? 0.0 : 1.0 / p; }

const double& require_nu(const BoundConstants& c, const char* what) {
  if (!c.nu) throw HypothesesNotMet(std::string(what) + " needs a positive absorption margin");
  return *c.nu;
}

}  // namespace

BoundReport check_thm1_bound(const SolutionNorms& n, const BoundConstants& c, const SlackModel& slack) {
  const double e = std::exp(c.C_p);
  return make_report("thm1-estimate", c.p, n.phi_ell, e * (n.f_ell + n.inflow), e, slack);
}

BoundReport check_thm2_bound(const SolutionNorms& n, const BoundConstants& c, const SlackModel& slack) {
  const double nu = require_nu(c, "the sigma-weighted estimate");
  const double rhs = n.f_sigma / nu + std::pow(nu, -inv_p(c.p)) * n.inflow;
  return make_report("thm2-apriori", c.p, n.phi_sigma, rhs, 1.0 / nu, slack);
}

BoundReport check_derivative_bounds(const SolutionNorms& n, const BoundConstants& c, bool strong,
                                    const SlackModel& slack) {
  if (strong) {
    const double nu = require_nu(c, "the strong derivative estimate");
    const double rhs = 2.0 / nu * n.f_sigma + 2.0 * std::pow(nu, -inv_p(c.p)) * n.inflow;
    return make_report("derivative-strong", c.p, n.dphi_sigma, rhs, 2.0 / nu, slack);
  }
  const double constant = 2.0 * (1.0 + c.sup_sigma_ell) * std::exp(c.C_p);
  return make_report("derivative-weak", c.p, n.dphi_ell, constant * (n.f_ell + n.inflow), constant, slack);
}

BoundReport check_derivative_endpoint(const SolutionNorms& n, const BoundConstants& c, const SlackModel& slack) {
  if (c.p == 1.0) {
    const double constant = 2.0 * std::exp(c.sup_sigma_s_ell);
    return make_report("derivative-endpoint", 1.0, n.dphi_l1, constant * (n.f_l1 + n.inflow), constant, slack);
  }
  if (std::isinf(c.p)) {
    const double constant = (1.0 + 2.0 * c.sup_sigma_ell) * std::exp(c.sup_sigma_s_prime_ell);
    return make_report("derivative-endpoint", c.p, n.dphi_ell_inf, constant * (n.f_ell_inf + n.inflow), constant,
                       slack);
  }
  throw HypothesesNotMet("endpoint derivative estimates exist for p = 1 and p = inf only");
}

BoundReport check_trace_bound(const SolutionNorms& n, const BoundConstants& c, const SlackModel& slack) {
  const double nu = require_nu(c, "the trace inequality");
  const double p = c.p;
  if (std::isinf(p)) throw HypothesesNotMet("the trace inequality is stated for finite p");
  const double lhs = nu * std::pow(n.phi_sigma, p) + std::pow(n.outflow, p);
  const double rhs = std::pow(nu, 1.0 - p) * std::pow(n.f_sigma, p) + std::pow(n.inflow, p);
  return make_report("trace", p, lhs, rhs, std::pow(nu, 1.0 - p), slack);
}

BoundReport check_w_bound(const SolutionNorms& n, const BoundConstants& c, const SlackModel& slack) {
  if (!n.w_l1) throw std::invalid_argument("w bound needs the w-form solution");
  const double s = c.sup_sigma_s_ell;
  const double rhs = std::exp(s) * (n.f_l1 - std::expm1(-s) * n.inflow);
  return make_report("w-l1-bound", 1.0, *n.w_l1, rhs, std::exp(s), slack);
}

namespace {

double ell_norm(const PhaseField& u, double exponent, double p) {
  return scaled_lp_norm(u, chord_power(u.space(), exponent), p);
}

}  // namespace

BoundReport check_isomorphism_norm(const PhaseField& phi, const PhaseField& dphi, const PhaseField& sigma_nodes,
                                   const PhaseField& k_phi, double sup_sigma_ell, double p, const SlackModel& slack) {
  phi.require_compatible(dphi);
  phi.require_compatible(sigma_nodes);
  phi.require_compatible(k_phi);
  PhaseField op(phi.space());
  for (std::size_t n = 0; n < op.values().size(); ++n) {
    op.values()[n] = dphi.values()[n] + sigma_nodes.values()[n] * phi.values()[n] - k_phi.values()[n];
  }
  const double lhs = ell_norm(op, 1.0 - inv_p(p), p);
  const double constant = 1.0 + 2.0 * sup_sigma_ell;
  const double rhs = constant * energy_norm(phi, dphi, p);
  return make_report("isomorphism", p, lhs, rhs, constant, slack);
}

// ---------------------------------------------------------------- sharpness family

namespace {

struct Family {
  int l;
  double k;
  double kappa;

  explicit Family(int l_) : l(l_), k(std::ldexp(1.0, l_ + 3)), kappa(std::pow(std::ldexp(1.0, l_ + 3), l_)) {}

  /// S(t) = kappa (1 - (1-t)^{k+1}) / (k+1), accurate for small t.
  double depth(double t) const {
    if (t >= 1.0) return kappa / (k + 1.0);
    if (t <= 0.0) return 0.0;
    return -kappa * std::expm1((k + 1.0) * std::log1p(-t)) / (k + 1.0);
  }
  double log_sigma(double t) const { return std::log(kappa) + k * std::log1p(-t); }
};

}  // namespace

CounterexampleValues closed_form_counterexample(int l, double t) {
  const Family fam(l);
  CounterexampleValues v;
  v.l = l;
  v.k = fam.k;
  v.kappa = fam.kappa;
  v.below_family_range = l < 3;
  t = std::clamp(t, 0.0, 1.0);
  v.sigma_plus = fam.kappa * std::pow(1.0 - t, fam.k);
  v.sigma_minus = fam.kappa * std::pow(t, fam.k);
  const double s_t = fam.depth(t);
  const double s_1mt = fam.depth(1.0 - t);
  v.log_f_plus = (t >= 1.0 ? -INFINITY : fam.log_sigma(t)) - s_1mt;
  v.log_f_minus = (t <= 0.0 ? -INFINITY : fam.log_sigma(1.0 - t)) - s_t;
  v.phi_plus = std::clamp(-std::expm1(-s_t), 0.0, 1.0);
  v.phi_minus = std::clamp(-std::expm1(-s_1mt), 0.0, 1.0);
  v.log_one_minus_phi_plus = -s_t;
  v.log_one_minus_phi_minus = -s_1mt;
  return v;
}

std::vector<SharpnessRecord> sharpness_experiment(std::span<const int> l_values, int simpson_intervals) {
  std::vector<SharpnessRecord> out;
  for (int l : l_values) {
    const Family fam(l);
    SharpnessRecord r;
    r.l = l;
    r.k = fam.k;

    // sup of sigma l over the chord: sampled, with t = 0 included.
    double sup_sigma = 0.0;
    for (int j = 0; j <= 100000; ++j) {
      const double t = j / 100000.0;
      sup_sigma = std::max(sup_sigma, fam.kappa * std::pow(1.0 - t, fam.k));
    }
    r.sup_sigma_ell = sup_sigma;

    // sup of log(l f^+) over t in [0, 1): scan eps = 1 - t on a log grid, then golden-section refinement.
    auto h = [&](double u) {
      const double eps = std::exp(u);
      return std::log(fam.kappa) + fam.k * u - fam.depth(eps);
    };
    const double u_lo = -745.0, u_hi = 0.0;
    const int scan = 200000;
    int best = scan;
    double best_val = h(u_hi);
    for (int j = 0; j <= scan; ++j) {
      const double u = u_lo + (u_hi - u_lo) * j / scan;
      const double val = h(u);
      if (val > best_val) {
        best_val = val;
        best = j;
      }
    }
    double a = u_lo + (u_hi - u_lo) * std::max(0, best - 1) / scan;
    double b = u_lo + (u_hi - u_lo) * std::min(scan, best + 1) / scan;
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - gr * (b - a), d = a + gr * (b - a);
    for (int it = 0; it < 200; ++it) {
      if (h(c) > h(d)) {
        b = d;
      } else {
        a = c;
      }
      c = b - gr * (b - a);
      d = a + gr * (b - a);
    }
    const double u_star = 0.5 * (a + b);
    r.log_sup_ell_f = std::max(best_val, h(u_star));
    r.argmax_t = -std::expm1(u_star);

    const double x = fam.kappa / (fam.k + 1.0);
    r.a = -std::expm1(-x);
    r.log_a = std::log1p(-std::exp(-x));
    const double exponent = std::ldexp(1.0, l * (l + 3) - (l + 4));
    r.log_intermediate_bound = -(1.0 - 1.0 / l) * exponent;
    r.log_b = fam.kappa + r.log_intermediate_bound;
    r.log_lhs = r.log_a;
    r.log_rhs = r.sup_sigma_ell + r.log_sup_ell_f;
    r.gap = r.log_lhs - r.log_rhs;
    r.log_f_at_inflow = std::log(fam.kappa) - x;
    r.intermediate_holds = r.log_f_at_inflow <= r.log_intermediate_bound;
    r.gap_with_inflow_value = r.log_lhs - (r.sup_sigma_ell + r.log_f_at_inflow);

    // Composite Simpson for S(1) against the closed form kappa / (k + 1).
    const int n = std::max(2, simpson_intervals + simpson_intervals % 2);
    const double hs = 1.0 / n;
    double sum = 0.0;
    for (int j = 0; j <= n; ++j) {
      const double w = (j == 0 || j == n) ? 1.0 : (j % 2 ? 4.0 : 2.0);
      sum += w * std::pow(1.0 - j * hs, fam.k);
    }
    const double simpson = fam.kappa * sum * hs / 3.0;
    r.depth_quadrature_error = std::abs(simpson - x) / x;
    out.push_back(r);
  }
  return out;
}

}  // namespace lprt
