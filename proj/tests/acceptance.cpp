// Acceptance run: one PASS/FAIL line per criterion with the measured numbers.
// Exit status is nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "lprt/analysis.hpp"
#include "lprt/phase_space.hpp"
#include "lprt/scenario.hpp"
#include "properties.hpp"

using namespace lprt;

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string suite(const std::string& file) { return std::string(LPRT_SUITE_DIR) + "/" + file; }

Scenario find(const std::string& file, const std::string& id) {
  for (auto& s : load_scenarios(suite(file))) {
    if (s.id == id) return s;
  }
  throw std::runtime_error("scenario " + id + " not found in " + file);
}

std::vector<ScenarioOutcome> run_file(const std::string& file, const std::vector<std::string>& stages,
                                      int refine_factor = 1) {
  std::vector<ScenarioOutcome> out;
  for (const auto& s : load_scenarios(suite(file))) out.push_back(run_scenario(refine(s, refine_factor), stages));
  return out;
}

double max_error(const ScenarioOutcome& o, const std::string& quantity) {
  double e = -1.0;
  for (const auto& row : o.errors) {
    if (row.quantity == quantity) e = std::max(e, row.max_error);
  }
  return e;
}

// Shared between criteria 6-8: the bound suite over every shipped scenario file.
struct SuiteRun {
  std::vector<ScenarioOutcome> outcomes;
  std::map<std::string, double> scenario_seconds;
  double seconds = 0.0;
};

SuiteRun& bound_suite() {
  static SuiteRun run = [] {
    SuiteRun r;
    const auto start = std::chrono::steady_clock::now();
    const std::vector<std::string> stages{"validate", "solve", "bounds"};
    for (const char* file : {"pure_absorption.cfg", "isotropic_ball.cfg", "flip_kernel_scaled.cfg"}) {
      for (const auto& sc : load_scenarios(suite(file))) {
        const auto t0 = std::chrono::steady_clock::now();
        r.outcomes.push_back(run_scenario(sc, stages));
        r.scenario_seconds[sc.id] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      }
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
  }();
  return run;
}

bool is_derivative_or_trace(const std::string& name) {
  return name.rfind("derivative", 0) == 0 || name == "trace" || name == "isomorphism";
}

// ---------------------------------------------------------------- criteria

Verdict fubini_identity() {
  const double exact = 16.0 * kPi * kPi / 3.0;
  const Scenario s = find("isotropic_ball.cfg", "isotropic_nu0");
  auto error_at = [&](const Scenario& sc) {
    const auto q = inflow_quadrature(*sc.domain, build_velocities(sc.velocities), sc.boundary_resolution);
    std::vector<double> terms;
    for (const auto& e : q.entries()) terms.push_back(e.weight * e.ray.length);
    return std::abs(pairwise_sum(terms) - exact) / exact;
  };
  const double e1 = error_at(s);
  const double e2 = error_at(refine(s, 2));
  const double order = std::log2(e1 / e2);
  return {e1 <= 1e-2 && e2 <= 2.5e-3 && order >= 1.0,
          fmt::format("rel err {:.3e} (res {}) <= 1e-2, {:.3e} (res {}) <= 2.5e-3, order {:.2f} >= 1", e1,
                      s.boundary_resolution, e2, refine(s, 2).boundary_resolution, order)};
}

Verdict pure_absorption() {
  double worst = 0.0;
  std::string parts;
  for (const auto& o : run_file("pure_absorption.cfg", {"solve"})) {
    const double e = max_error(o, "phi");
    if (e < 0.0) return {false, "no closed-form comparison for " + o.id};
    worst = std::max(worst, e);
    parts += fmt::format(" {}={:.2e}", o.id, e);
  }
  return {worst <= 1e-6, fmt::format("max |phi - exp(-t)|:{} <= 1e-6", parts)};
}

Verdict sharpness() {
  bool closed = true;
  std::string detail;
  for (int l : {3, 4, 5}) {
    const double k = std::ldexp(1.0, l + 3);
    const double expected = -std::pow(k, l) / (k + 1.0);
    const auto at0 = closed_form_counterexample(l, 0.0);
    const auto at1 = closed_form_counterexample(l, 1.0);
    const double rel = std::abs(at1.log_one_minus_phi_plus - expected) / std::abs(expected);
    closed = closed && at0.phi_plus == 0.0 && rel <= 1e-12;
  }
  const int ls[] = {3, 4, 5};
  const auto recs = sharpness_experiment(ls);
  bool upper = true, within = true, decreasing = true;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto& r = recs[i];
    upper = upper && r.gap <= 0.0;
    const double span = std::abs(r.log_a - r.log_b);
    within = within && std::abs(r.gap) <= span + 1e-6;
    if (i > 0) decreasing = decreasing && std::abs(r.gap) < std::abs(recs[i - 1].gap);
    detail += fmt::format(" l={}: gap={:.6g} |log a - log b|={:.6g};", r.l, r.gap, span);
  }
  detail = fmt::format("closed forms {}, gap<=0 {}, |gap|<=|log a-log b|+1e-6 {}, |gap| decreasing {};{}",
                       closed ? "ok" : "FAIL", upper ? "ok" : "FAIL", within ? "ok" : "FAIL",
                       decreasing ? "ok" : "FAIL", detail);
  return {closed && upper && within && decreasing, detail};
}

Verdict flip_kernel() {
  const auto base = run_file("flip_kernel_scaled.cfg", {"solve"}, 1);
  const auto fine = run_file("flip_kernel_scaled.cfg", {"solve"}, 2);
  bool ok = !base.empty();
  std::string detail;
  for (std::size_t i = 0; i < base.size(); ++i) {
    const double e1 = max_error(base[i], "phi");
    const double e2 = max_error(fine[i], "phi");
    ok = ok && e1 >= 0.0 && e1 <= 1e-3 && e2 < e1;
    detail += fmt::format("{}: max err {:.3e} <= 1e-3, refined {:.3e}", base[i].id, e1, e2);
  }
  return {ok, detail};
}

Verdict spectral_bound() {
  bool ok = true;
  int rows = 0;
  double worst_margin = -1e300;
  std::string detail;
  for (const auto& o : run_file("spectral_sweep.cfg", {"spectral"})) {
    for (const auto& row : o.spectral) {
      const double limit = row.bound + row.delta_quad + 0.02;
      ok = ok && row.rho <= limit;
      worst_margin = std::max(worst_margin, row.rho - limit);
      ++rows;
      if (std::isinf(row.p)) detail += fmt::format(" {}: rho={:.4f} bound={:.4f};", row.scenario, row.rho, row.bound);
    }
  }
  return {ok && rows > 0,
          fmt::format("{} rows, max(rho - bound - delta - 0.02) = {:.4f} (p=inf:{})", rows, worst_margin, detail)};
}

Verdict zero_absorption() {
  bool ok = true;
  int found = 0;
  std::string detail;
  for (const auto& o : bound_suite().outcomes) {
    if (o.id != "isotropic_nu0") continue;
    for (const auto& b : o.bounds) {
      if (b.name != "contraction-factor") continue;
      ++found;
      ok = ok && b.holds;
      detail += fmt::format(" p={}: q={:.4f} <= {:.4f}+{:.1e};", format_exponent(b.p), b.lhs, b.rhs, b.delta);
    }
  }
  return {ok && found == 3, fmt::format("{} factors:{}", found, detail)};
}

Verdict bound_suites(bool derivative_family) {
  int total = 0, failed = 0;
  std::string first;
  std::map<std::string, int> per_name;
  for (const auto& o : bound_suite().outcomes) {
    for (const auto& b : o.bounds) {
      if (derivative_family != is_derivative_or_trace(b.name)) continue;
      if (b.name == "sharpness-gap") continue;
      ++total;
      ++per_name[b.name];
      if (!b.holds && failed++ == 0) first = fmt::format(" first violation {}:{} p={}", b.scenario, b.name, b.p);
    }
  }
  std::string counts;
  for (const auto& [name, n] : per_name) counts += fmt::format(" {}={}", name, n);
  std::string detail = fmt::format("{} reports, {} violated;{}{}", total, failed, counts, first);
  bool ok = failed == 0 && total > 0;
  if (derivative_family) {
    double worst = -1.0;
    for (const auto& o : bound_suite().outcomes) {
      if (o.id == "slab" || o.id == "ball") worst = std::max(worst, max_error(o, "derivative"));
    }
    ok = ok && worst >= 0.0 && worst <= 1e-5;
    detail += fmt::format("; derivative vs closed form {:.2e} <= 1e-5", worst);
  }
  return {ok, detail};
}

Verdict property_suites() {
  bool ok = true;
  std::string detail;
  for (const auto& r : test::all_properties(10000)) {
    ok = ok && r.failures == 0 && r.cases == 10000;
    detail += fmt::format(" {}: {}/{} failed;", r.name, r.failures, r.cases);
    if (r.failures) detail += " (" + r.first_failure + ")";
  }
  return {ok, detail};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    double budget_seconds;
    std::function<Verdict()> check;
  };
  const std::vector<Criterion> criteria{
      {1, 30, fubini_identity},
      {2, 60, pure_absorption},
      {3, 10, sharpness},
      {4, 300, flip_kernel},
      {5, 300, spectral_bound},
      {6, 120, zero_absorption},
      {7, 600, [] { return bound_suites(false); }},
      {8, 600, [] { return bound_suites(true); }},
      {9, 600, property_suites},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    // criteria 6-8 share one run of the bound suite
    if (c.id == 6) seconds = bound_suite().scenario_seconds.at("isotropic_nu0");
    if (c.id == 7 || c.id == 8) seconds = bound_suite().seconds;
    const bool in_time = seconds <= c.budget_seconds;
    const bool pass = v.pass && in_time;
    if (!pass) ++failures;
    std::printf("AC%d %s %s [%.1f s, budget %.0f s%s]\n", c.id, pass ? "PASS" : "FAIL", v.detail.c_str(), seconds,
                c.budget_seconds, in_time ? "" : ", over budget");
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
