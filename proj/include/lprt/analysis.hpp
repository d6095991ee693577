#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lprt/coefficients.hpp"
#include "lprt/phase_space.hpp"
#include "lprt/solver.hpp"

namespace lprt {

/// Slack budget delta = relative * (|lhs| + |rhs|) + absolute.
///
/// `relative` collects the solver tolerance, the ray-quadrature error and the
/// mismatch between the volume grid and the boundary-ray quadrature, all as
/// fractions of the norms involved.
struct SlackModel {
  double relative = 0.0;
  double absolute = 1e-9;

  double delta(double lhs, double rhs) const { return relative * (std::abs(lhs) + std::abs(rhs)) + absolute; }
};

struct BoundReport {
  std::string scenario;
  std::string name;
  double p = 1.0;
  double lhs = 0.0;
  double rhs = 0.0;
  double constant = 0.0;
  double delta = 0.0;
  bool holds = false;
};

BoundReport make_report(std::string name, double p, double lhs, double rhs, double constant, const SlackModel& slack);

/// Where volume norms of the solution are integrated.
///
/// `nodes`: the grid collocation points with cut-cell weights.
/// `characteristics`: Fubini form over the inflow boundary quadrature; on each
/// inflow characteristic the solution is rebuilt from g and the converged
/// K phi + f (interpolated) with exact exponential attenuation and integrated
/// with Simpson's rule on steps of optical depth <= 1/8. Resolves boundary
/// layers that the grid cannot.
enum class NormQuadrature { nodes, characteristics };

/// Every norm the bound checks use, at one exponent p. The derivative is the
/// algebraic identity v . grad(phi) = K phi - sigma phi + f.
struct SolutionNorms {
  double p = 1.0;
  double phi_ell = 0.0;       ///< ||l^{-1/p} phi||_p
  double phi_sigma = 0.0;     ///< ||sigma^{1/p} phi||_p
  double f_ell = 0.0;         ///< ||l^{1-1/p} f||_p
  double f_sigma = 0.0;       ///< ||sigma^{1/p-1} f||_p (inf when sigma vanishes where f does not)
  double dphi_ell = 0.0;      ///< ||l^{1-1/p} v.grad phi||_p
  double dphi_sigma = 0.0;    ///< ||sigma^{1/p-1} v.grad phi||_p
  double dphi_l1 = 0.0;       ///< ||v.grad phi||_1
  double f_l1 = 0.0;          ///< ||f||_1
  double dphi_ell_inf = 0.0;  ///< ||l v.grad phi||_inf
  double f_ell_inf = 0.0;     ///< ||l f||_inf
  std::optional<double> w_l1; ///< ||w||_1
  double inflow = 0.0;        ///< ||g||_p on the inflow boundary
  double outflow = 0.0;       ///< ||phi||_p on the outflow boundary
};

/// Norms of `phi` (node values of a converged solution of `system`). `w`,
/// when given, are node values of w = K phi + f from the w-form. The outflow
/// trace comes from the characteristic sweep in both modes.
SolutionNorms solution_norms(const TransportSystem& system, const PhaseField& phi, double p,
                             const BoundaryQuadrature& inflow, NormQuadrature quadrature,
                             const PhaseField* w = nullptr);

/// Relative mismatch between the node quadrature and the boundary-ray
/// quadrature for the two integrands that matter most: 1 (volume) and 1/l
/// (boundary measure).
double fubini_mismatch(const PhaseSpace& space, const BoundaryQuadrature& inflow);

/// Relative error of the boundary-ray quadrature for the phase-space volume,
/// against the exact volume when known and the cut-cell grid volume otherwise.
double boundary_volume_error(const PhaseSpace& space, const BoundaryQuadrature& inflow);

/// ||l^{-1/p} phi||_p <= e^{C_p} (||l^{1-1/p} f||_p + ||g||_p)
BoundReport check_thm1_bound(const SolutionNorms& n, const BoundConstants& constants, const SlackModel& slack);
/// ||sigma^{1/p} phi||_p <= nu^{-1} ||sigma^{1/p-1} f||_p + nu^{-1/p} ||g||_p; throws HypothesesNotMet without nu.
BoundReport check_thm2_bound(const SolutionNorms& n, const BoundConstants& constants, const SlackModel& slack);
/// Weak: ||l^{1-1/p} v.grad phi||_p <= 2 (1 + ||sigma l||) e^{C_p} (||l^{1-1/p} f||_p + ||g||_p).
/// Strong: ||sigma^{1/p-1} v.grad phi||_p <= 2 nu^{-1} ||sigma^{1/p-1} f||_p + 2 nu^{-1/p} ||g||_p.
BoundReport check_derivative_bounds(const SolutionNorms& n, const BoundConstants& constants, bool strong,
                                    const SlackModel& slack);
/// Endpoint versions: p = 1, ||v.grad phi||_1 <= 2 e^{||sigma_s l||} (||f||_1 + ||g||_1);
/// p = inf, ||l v.grad phi||_inf <= (1 + 2 ||sigma l||) e^{||sigma_s' l||} (||l f||_inf + ||g||_inf).
/// Throws HypothesesNotMet for other p.
BoundReport check_derivative_endpoint(const SolutionNorms& n, const BoundConstants& constants,
                                      const SlackModel& slack);
/// nu ||sigma^{1/p} phi||^p + ||phi||^p_{Gamma+} <= nu^{1-p} ||sigma^{(1-p)/p} f||^p + ||g||^p, finite p.
BoundReport check_trace_bound(const SolutionNorms& n, const BoundConstants& constants, const SlackModel& slack);
/// ||w||_1 <= e^{||sigma_s l||} (||f||_1 + (1 - e^{-||sigma_s l||}) ||g||_1).
BoundReport check_w_bound(const SolutionNorms& n, const BoundConstants& constants, const SlackModel& slack);
/// ||l^{1-1/p} (dphi + sigma phi - K phi)||_p <= (1 + 2 ||sigma l||) ||phi||_{W^p} for any field.
BoundReport check_isomorphism_norm(const PhaseField& phi, const PhaseField& dphi, const PhaseField& sigma_nodes,
                                   const PhaseField& k_phi, double sup_sigma_ell, double p, const SlackModel& slack);

/// Values of the sharpness family at chord parameter t (kappa = k^l, k = 2^{l+3}).
struct CounterexampleValues {
  int l = 3;
  double k = 0.0;
  double kappa = 0.0;
  double sigma_plus = 0.0;
  double sigma_minus = 0.0;
  double log_f_plus = 0.0;
  double log_f_minus = 0.0;
  double phi_plus = 0.0;
  double phi_minus = 0.0;
  double log_one_minus_phi_plus = 0.0;   ///< -S(t)
  double log_one_minus_phi_minus = 0.0;  ///< -S(1-t)
  bool below_family_range = false;       ///< l < 3
};

/// Closed forms of the family with exact depth S(t) = kappa (1 - (1-t)^{k+1}) / (k+1).
CounterexampleValues closed_form_counterexample(int l, double t);

struct SharpnessRecord {
  int l = 3;
  double k = 0.0;
  double a = 0.0;             ///< 1 - exp(-k^l / (k+1))
  double log_a = 0.0;
  double log_b = 0.0;         ///< k^l - (1 - 1/l) 2^{l(l+3)-(l+4)}
  double sup_sigma_ell = 0.0; ///< sampled sup of sigma l over the chord
  double log_sup_ell_f = 0.0; ///< sup over t of log(l f), by search
  double log_lhs = 0.0;       ///< log ||phi||_inf
  double log_rhs = 0.0;       ///< sup sigma l + log ||l f||_inf
  double gap = 0.0;           ///< log_lhs - log_rhs
  double log_f_at_inflow = 0.0;        ///< log f^+(0)
  double log_intermediate_bound = 0.0; ///< -(1 - 1/l) 2^{l(l+3)-(l+4)}
  bool intermediate_holds = false;     ///< log f^+(0) <= log_intermediate_bound
  double gap_with_inflow_value = 0.0;  ///< gap if ||l f|| is taken as f^+(0)
  double depth_quadrature_error = 0.0; ///< relative error of composite Simpson for S(1)
  double argmax_t = 0.0;               ///< location of the sup of l f
};

/// Log-domain sharpness study for each l.
std::vector<SharpnessRecord> sharpness_experiment(std::span<const int> l_values, int simpson_intervals = 1000000);

}  // namespace lprt
