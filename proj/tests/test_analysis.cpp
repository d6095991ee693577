#include <cmath>
#include <random>

#include "doctest.h"
#include "lprt/analysis.hpp"
#include "lprt/errors.hpp"
#include "support.hpp"

using namespace lprt;

namespace {

struct Solved {
  std::unique_ptr<GridSystem> system;
  SolveResult result;
  BoundaryQuadrature inflow;
  BoundConstants constants;
};

Solved solve_isotropic(std::shared_ptr<const PhaseSpace> space, double amplitude, double f, double g, double p) {
  TransportProblem pr;
  pr.space = space;
  pr.sigma = PhaseFunction::constant(1.0);
  pr.kernel = amplitude > 0 ? ScatteringKernel::isotropic(PhaseFunction::constant(amplitude))
                            : ScatteringKernel::none();
  pr.source = PhaseFunction::constant(f);
  pr.boundary = PhaseFunction::constant(g);
  pr.rule.max_step = default_max_step(space->grid());
  auto sys = std::make_unique<GridSystem>(pr);
  SolveResult r = solve_phi_form(*sys, {p, 1e-11, 1000});
  auto inflow = inflow_quadrature(space->domain(), space->velocities(), 12);
  const auto c = compute_bound_constants(pr.sigma, pr.kernel, space->domain(), space->velocities(), space->grid(), p,
                                         32);
  return {std::move(sys), std::move(r), std::move(inflow), c};
}

}  // namespace

TEST_SUITE("analysis") {
  TEST_CASE("zero data gives zero on both sides") {
    SolutionNorms n;
    BoundConstants c;
    c.nu = 0.5;
    const SlackModel slack;
    for (double p : {1.0, 2.0, kInfinity}) {
      n.p = p;
      c.p = p;
      for (const BoundReport& r : {check_thm1_bound(n, c, slack), check_thm2_bound(n, c, slack),
                                   check_derivative_bounds(n, c, false, slack),
                                   check_derivative_bounds(n, c, true, slack)}) {
        CHECK(r.lhs == 0.0);
        CHECK(r.rhs == 0.0);
        CHECK(r.holds);
      }
    }
    n.p = 2.0;
    c.p = 2.0;
    CHECK(check_trace_bound(n, c, slack).holds);
    n.p = 1.0;
    c.p = 1.0;
    n.w_l1 = 0.0;
    CHECK(check_w_bound(n, c, slack).holds);
  }

  TEST_CASE("hypotheses are enforced") {
    SolutionNorms n;
    BoundConstants c;
    const SlackModel slack;
    CHECK_THROWS_AS(check_thm2_bound(n, c, slack), HypothesesNotMet);
    CHECK_THROWS_AS(check_derivative_bounds(n, c, true, slack), HypothesesNotMet);
    CHECK_THROWS_AS(check_trace_bound(n, c, slack), HypothesesNotMet);
    n.p = 2.0;
    c.p = 2.0;
    CHECK_THROWS_AS(check_derivative_endpoint(n, c, slack), HypothesesNotMet);
  }

  TEST_CASE("report arithmetic") {
    SlackModel slack{0.1, 0.0};
    const BoundReport r = make_report("x", 1.0, 1.05, 1.0, 2.0, slack);
    CHECK(r.delta == doctest::Approx(0.205));
    CHECK(r.holds);
    CHECK_FALSE(make_report("x", 1.0, 1.5, 1.0, 2.0, slack).holds);
  }

  TEST_CASE("pure-absorption slab at p = inf") {
    const auto space = test::slab_space(64);
    TransportProblem pr;
    pr.space = space;
    pr.sigma = PhaseFunction::constant(1.0);
    pr.boundary = PhaseFunction::constant(1.0);
    pr.rule.fixed_intervals = 4096;
    GridSystem sys(pr);
    const SolveResult r = solve_phi_form(sys, {kInfinity, 1e-12, 10});
    const auto inflow = inflow_quadrature(space->domain(), space->velocities(), 8);
    const auto c = compute_bound_constants(pr.sigma, pr.kernel, space->domain(), space->velocities(), space->grid(),
                                           kInfinity, 16);
    CHECK(c.C_p == 0.0);
    const SolutionNorms n = solution_norms(sys, r.phi, kInfinity, inflow, NormQuadrature::nodes);
    const BoundReport thm1 = check_thm1_bound(n, c, SlackModel{});
    CHECK(thm1.holds);
    CHECK(thm1.rhs == 1.0);
    CHECK(thm1.lhs == doctest::Approx(std::exp(-0.5 / 64)).epsilon(1e-12));
    const BoundReport d = check_derivative_bounds(n, c, false, SlackModel{});
    CHECK(d.holds);
    // |l dphi| = exp(-t) on the grid
    CHECK(n.dphi_ell_inf == doctest::Approx(std::exp(-0.5 / 64)).epsilon(1e-12));
  }

  TEST_CASE("absorption margin bounds on a scattering ball") {
    const auto space = test::ball_space(6, 4);
    for (double p : {1.0, 2.0}) {
      Solved s = solve_isotropic(space, 0.5, 1.0, 0.0, p);
      REQUIRE(s.result.converged);
      REQUIRE(s.constants.nu.has_value());
      CHECK(*s.constants.nu == doctest::Approx(0.5).epsilon(1e-8));
      const auto n = solution_norms(*s.system, s.result.phi, p, s.inflow, NormQuadrature::characteristics);
      const SlackModel slack{0.02, 1e-9};
      const BoundReport thm2 = check_thm2_bound(n, s.constants, slack);
      CHECK(thm2.holds);
      if (p == 1.0) CHECK(thm2.lhs <= 2.0 * n.f_l1 * 1.02);
      CHECK(check_trace_bound(n, s.constants, slack).holds);
      CHECK(check_derivative_bounds(n, s.constants, true, slack).holds);
    }
  }

  TEST_CASE("free streaming with absorption satisfies the trace inequality") {
    const auto space = test::ball_space(6, 4);
    Solved s = solve_isotropic(space, 0.0, 0.0, 1.0, 2.0);
    const auto n = solution_norms(*s.system, s.result.phi, 2.0, s.inflow, NormQuadrature::characteristics);
    const BoundReport tr = check_trace_bound(n, s.constants, SlackModel{0.01, 1e-9});
    CHECK(tr.holds);
    CHECK(n.outflow < n.inflow);
  }

  TEST_CASE("the first bound is invariant under scaling the data") {
    const auto space = test::ball_space(5, 3);
    for (double p : {1.0, 2.0, kInfinity}) {
      Solved a = solve_isotropic(space, 0.7, 1.0, 0.5, p);
      Solved b = solve_isotropic(space, 0.7, 3.0, 1.5, p);
      const auto na = solution_norms(*a.system, a.result.phi, p, a.inflow, NormQuadrature::nodes);
      const auto nb = solution_norms(*b.system, b.result.phi, p, b.inflow, NormQuadrature::nodes);
      const BoundReport ra = check_thm1_bound(na, a.constants, SlackModel{});
      const BoundReport rb = check_thm1_bound(nb, b.constants, SlackModel{});
      CHECK(ra.lhs / ra.rhs == doctest::Approx(rb.lhs / rb.rhs).epsilon(1e-8));
    }
  }

  TEST_CASE("isomorphism inequality") {
    const auto space = test::ball_space(5, 3);
    const PhaseField zero(space);
    const PhaseField sigma = sample(PhaseFunction::constant(1.0), space);
    const auto r0 = check_isomorphism_norm(zero, zero, sigma, zero, 2.0, 2.0, SlackModel{});
    CHECK(r0.lhs == 0.0);
    CHECK(r0.holds);

    const auto kernel = ScatteringKernel::isotropic(PhaseFunction::constant(0.5));
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (double p : {1.0, 2.0, kInfinity}) {
      PhaseField phi(space), dphi(space);
      for (double& x : phi.values()) x = u(rng);
      for (double& x : dphi.values()) x = u(rng);
      CHECK(check_isomorphism_norm(phi, dphi, sigma, apply_K(kernel, phi), 2.0, p, SlackModel{}).holds);
    }
  }

  TEST_CASE("closed-form counterexample") {
    for (int l : {3, 4, 5}) CHECK(closed_form_counterexample(l, 0.0).phi_plus == 0.0);
    const auto end = closed_form_counterexample(3, 1.0);
    CHECK(end.k == 64.0);
    CHECK(end.log_one_minus_phi_plus == doctest::Approx(-262144.0 / 65.0).epsilon(1e-12));
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 100; ++k) {
      const double t = u(rng);
      CHECK(std::abs(closed_form_counterexample(3, 1.0 - t).phi_minus - closed_form_counterexample(3, t).phi_plus) <=
            1e-14);
    }
    CHECK(closed_form_counterexample(2, 0.5).below_family_range);
  }

  TEST_CASE("sharpness records") {
    const int ls[] = {3, 4, 5};
    const auto recs = sharpness_experiment(ls, 100000);
    REQUIRE(recs.size() == 3);
    for (const auto& r : recs) {
      CHECK(r.gap <= 0.0);
      CHECK(r.intermediate_holds);
      CHECK(r.sup_sigma_ell == doctest::Approx(std::pow(r.k, r.l)).epsilon(1e-12));
      CHECK(r.depth_quadrature_error < 1e-8);
    }
    CHECK(recs[0].log_b == doctest::Approx(262144.0 - 4096.0 / 3.0).epsilon(1e-12));
  }
}
