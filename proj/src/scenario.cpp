#include "lprt/scenario.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "lprt/errors.hpp"
#include "lprt/numerics.hpp"

namespace lprt {

namespace {

// ---------------------------------------------------------------- YAML helpers

class Reader {
 public:
  Reader(const YAML::Node& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.IsMap()) fail("expected a mapping");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    const YAML::Node& n = node_;
    return static_cast<bool>(n[key]);
  }

  YAML::Node get(const std::string& key) {
    seen_.insert(key);
    const YAML::Node& n = node_;
    return n[key];
  }

  std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

  template <typename T>
  void read(const std::string& k, T& out) {
    if (!has(k)) return;
    try {
      out = get(k).as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError("invalid value for '" + key(k) + "'");
    }
  }

  /// Rejects keys that were never asked for.
  void finish() const {
    for (const auto& kv : node_) {
      const std::string k = kv.first.as<std::string>();
      if (!seen_.count(k)) throw ConfigError("unknown key '" + key(k) + "'");
    }
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("'" + (path_.empty() ? std::string("<root>") : path_) + "': " + what);
  }

 private:
  YAML::Node node_;
  std::string path_;
  std::set<std::string> seen_;
};

Vec3 read_vec(const YAML::Node& n, const std::string& key) {
  if (!n.IsSequence() || n.size() != 3) throw ConfigError("'" + key + "' must be a list of three numbers");
  try {
    return {n[0].as<double>(), n[1].as<double>(), n[2].as<double>()};
  } catch (const YAML::Exception&) {
    throw ConfigError("'" + key + "' must be a list of three numbers");
  }
}

double read_exponent(const YAML::Node& n, const std::string& key) {
  try {
    return parse_exponent(n.as<std::string>());
  } catch (const InvalidExponent& e) {
    throw ConfigError("'" + key + "': " + e.what());
  } catch (const YAML::Exception&) {
    throw ConfigError("'" + key + "' must be a number >= 1 or inf");
  }
}

Domain read_domain(const YAML::Node& n, const std::string& path) {
  Reader r(n, path);
  std::string type;
  r.read("type", type);
  try {
    if (type == "ball") {
      Vec3 c;
      double radius = 1.0;
      if (r.has("center")) c = read_vec(r.get("center"), r.key("center"));
      r.read("radius", radius);
      r.finish();
      return Domain::ball(c, radius);
    }
    if (type == "box") {
      if (!r.has("lo") || !r.has("hi")) r.fail("box needs lo and hi");
      const Vec3 lo = read_vec(r.get("lo"), r.key("lo"));
      const Vec3 hi = read_vec(r.get("hi"), r.key("hi"));
      r.finish();
      return Domain::box(lo, hi);
    }
    if (type == "halfspaces") {
      const YAML::Node faces = r.get("faces");
      if (!faces || !faces.IsSequence()) r.fail("halfspaces needs a list of faces");
      std::vector<HalfSpace> hs;
      for (std::size_t k = 0; k < faces.size(); ++k) {
        Reader f(faces[k], r.key("faces[" + std::to_string(k) + "]"));
        HalfSpace h;
        if (!f.has("normal")) f.fail("face needs a normal");
        h.normal = read_vec(f.get("normal"), f.key("normal"));
        f.read("offset", h.offset);
        f.finish();
        hs.push_back(h);
      }
      r.finish();
      return Domain::halfspaces(std::move(hs));
    }
  } catch (const GeometryError& e) {
    throw ConfigError("'" + path + "': " + e.what());
  }
  throw ConfigError("'" + r.key("type") + "': unknown domain type '" + type + "'");
}

FunctionSpec read_function(const YAML::Node& n, const std::string& path) {
  FunctionSpec s;
  if (n.IsScalar()) {
    try {
      s.value = n.as<double>();
    } catch (const YAML::Exception&) {
      throw ConfigError("'" + path + "' must be a number or a mapping");
    }
    return s;
  }
  Reader r(n, path);
  r.read("type", s.type);
  if (s.type == "constant") {
    r.read("value", s.value);
  } else if (s.type == "separable") {
    r.read("value", s.value);
    r.read("radial", s.radial);
    r.read("directional", s.directional);
    if (r.has("center")) s.center = read_vec(r.get("center"), r.key("center"));
  } else if (s.type == "chord_profile") {
    r.read("kappa", s.kappa);
    r.read("power", s.power);
  } else {
    throw ConfigError("'" + r.key("type") + "': unknown function type '" + s.type + "'");
  }
  r.finish();
  return s;
}

KernelSpec read_kernel(const YAML::Node& n, const std::string& path) {
  KernelSpec k;
  Reader r(n, path);
  r.read("type", k.type);
  if (k.type == "isotropic" || k.type == "linear_anisotropic") {
    if (!r.has("amplitude")) r.fail("kernel needs an amplitude");
    k.amplitude = read_function(r.get("amplitude"), r.key("amplitude"));
    if (k.type == "linear_anisotropic") r.read("mu", k.mu);
  } else if (k.type != "none" && k.type != "flip") {
    throw ConfigError("'" + r.key("type") + "': unknown kernel type '" + k.type + "'");
  }
  r.finish();
  return k;
}

VelocitySpec read_velocities(const YAML::Node& n, const std::string& path) {
  VelocitySpec v;
  Reader r(n, path);
  r.read("type", v.type);
  if (v.type == "sphere") {
    r.read("order", v.order);
  } else if (v.type == "shell") {
    r.read("order", v.order);
    r.read("r_min", v.r_min);
    r.read("r_max", v.r_max);
    r.read("radial_points", v.radial_points);
  } else if (v.type == "custom") {
    const YAML::Node nodes = r.get("nodes");
    if (!nodes || !nodes.IsSequence()) r.fail("custom velocities need a list of nodes");
    for (std::size_t k = 0; k < nodes.size(); ++k) v.nodes.push_back(read_vec(nodes[k], r.key("nodes")));
    if (r.has("weights")) {
      try {
        v.weights = r.get("weights").as<std::vector<double>>();
      } catch (const YAML::Exception&) {
        throw ConfigError("invalid value for '" + r.key("weights") + "'");
      }
    } else {
      v.weights.assign(v.nodes.size(), 1.0);
    }
    if (v.weights.size() != v.nodes.size()) r.fail("weights and nodes differ in length");
  } else {
    throw ConfigError("'" + r.key("type") + "': unknown velocity type '" + v.type + "'");
  }
  r.finish();
  return v;
}

Scenario read_scenario(const YAML::Node& n, const std::string& path) {
  Scenario s;
  Reader r(n, path);
  r.read("id", s.id);
  if (s.id.empty()) r.fail("scenario needs an id");
  const std::string base = path + "(" + s.id + ")";
  auto key = [&](const std::string& k) { return base + "." + k; };

  if (r.has("domain")) s.domain = read_domain(r.get("domain"), key("domain"));
  if (r.has("velocities")) s.velocities = read_velocities(r.get("velocities"), key("velocities"));
  if (r.has("grid")) {
    Reader g(r.get("grid"), key("grid"));
    if (g.has("cells")) {
      const YAML::Node c = g.get("cells");
      try {
        if (c.IsScalar()) {
          s.cells_longest = c.as<int>();
        } else {
          const auto v = c.as<std::vector<int>>();
          if (v.size() != 3) g.fail("cells must be one number or three");
          s.cells = {v[0], v[1], v[2]};
        }
      } catch (const YAML::Exception&) {
        throw ConfigError("invalid value for '" + g.key("cells") + "'");
      }
    }
    g.finish();
  }
  if (r.has("sigma")) s.sigma = read_function(r.get("sigma"), key("sigma"));
  if (r.has("kernel")) s.kernel = read_kernel(r.get("kernel"), key("kernel"));
  if (r.has("source")) s.source = read_function(r.get("source"), key("source"));
  if (r.has("boundary")) s.boundary = read_function(r.get("boundary"), key("boundary"));
  if (r.has("p")) {
    const YAML::Node ps = r.get("p");
    if (!ps.IsSequence() || ps.size() == 0) throw ConfigError("'" + key("p") + "' must be a nonempty list");
    s.p.clear();
    for (std::size_t k = 0; k < ps.size(); ++k) s.p.push_back(read_exponent(ps[k], key("p")));
  }
  if (r.has("rays")) {
    Reader g(r.get("rays"), key("rays"));
    g.read("per_unit_depth", s.rays.per_unit_depth);
    g.read("min_intervals", s.rays.min_intervals);
    g.read("max_intervals", s.rays.max_intervals);
    g.read("fixed", s.rays.fixed_intervals);
    if (g.has("max_step")) {
      const YAML::Node m = g.get("max_step");
      if (m.IsScalar() && m.as<std::string>() == "auto") {
        s.auto_max_step = true;
      } else {
        g.read("max_step", s.rays.max_step);
        s.auto_max_step = false;
      }
    }
    g.finish();
  }
  r.read("boundary_resolution", s.boundary_resolution);
  r.read("chord_intervals", s.chord_intervals);
  r.read("backend", s.backend);
  r.read("norm_quadrature", s.norm_quadrature);
  r.read("grid_slack", s.grid_slack);
  if (s.norm_quadrature != "characteristics" && s.norm_quadrature != "nodes") {
    throw ConfigError("'" + key("norm_quadrature") + "': unknown norm quadrature '" + s.norm_quadrature + "'");
  }
  if (s.backend != "auto" && s.backend != "grid" && s.backend != "chord") {
    throw ConfigError("'" + key("backend") + "': unknown backend '" + s.backend + "'");
  }
  if (r.has("solver")) {
    Reader g(r.get("solver"), key("solver"));
    g.read("tol", s.tol);
    g.read("max_iter", s.max_iter);
    if (g.has("p")) s.solve_p = read_exponent(g.get("p"), g.key("p"));
    g.read("w_form", s.w_form);
    g.finish();
  }
  if (r.has("spectral")) {
    Reader g(r.get("spectral"), key("spectral"));
    g.read("steps", s.spectral_steps);
    g.finish();
  }
  if (r.has("validation")) {
    Reader g(r.get("validation"), key("validation"));
    g.read("samples", s.samples);
    g.read("seed", s.seed);
    g.finish();
  }
  r.read("reference", s.reference);
  if (s.reference != "none" && s.reference != "attenuation" && s.reference != "chord_profile") {
    throw ConfigError("'" + key("reference") + "': unknown reference '" + s.reference + "'");
  }
  if (r.has("sharpness")) {
    Reader g(r.get("sharpness"), key("sharpness"));
    g.read("l", s.sharpness_l);
    g.finish();
  }
  r.finish();

  if (s.boundary_resolution < 1) throw ConfigError("'" + key("boundary_resolution") + "' must be >= 1");
  if (s.chord_intervals < 2) throw ConfigError("'" + key("chord_intervals") + "' must be >= 2");
  if (s.tol <= 0.0) throw ConfigError("'" + key("solver.tol") + "' must be positive");
  if (s.spectral_steps < 5) throw ConfigError("'" + key("spectral.steps") + "' must be >= 5");
  return s;
}

}  // namespace

std::vector<Scenario> parse_scenarios(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  Reader r(root, "");
  int version = 0;
  r.read("schema_version", version);
  if (version != kSchemaVersion) {
    throw ConfigError("'schema_version' must be " + std::to_string(kSchemaVersion));
  }
  const YAML::Node list = r.get("scenarios");
  if (!list || !list.IsSequence() || list.size() == 0) throw ConfigError("'scenarios' must be a nonempty list");
  r.finish();
  std::vector<Scenario> out;
  std::set<std::string> ids;
  for (std::size_t k = 0; k < list.size(); ++k) {
    out.push_back(read_scenario(list[k], "scenarios[" + std::to_string(k) + "]"));
    if (!ids.insert(out.back().id).second) throw ConfigError("duplicate scenario id '" + out.back().id + "'");
  }
  return out;
}

std::vector<Scenario> load_scenarios(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read scenario file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenarios(ss.str());
}

Scenario refine(const Scenario& s, int factor) {
  if (factor < 1) throw ConfigError("refinement factor must be >= 1");
  Scenario r = s;
  if (factor == 1) return r;
  for (int& c : r.cells) c *= factor;
  r.cells_longest *= factor;
  r.rays = r.rays.refined(factor);
  r.chord_intervals *= factor;
  r.boundary_resolution *= factor;
  return r;
}

// ---------------------------------------------------------------- builders

PhaseFunction build_function(const FunctionSpec& spec, const Domain& domain) {
  if (spec.type == "constant") return PhaseFunction::constant(spec.value);
  if (spec.type == "separable") return separable(spec.value, spec.radial, spec.directional, spec.center);
  if (spec.type == "chord_profile") return chord_profile_cross_section(domain, {spec.kappa, spec.power});
  throw ConfigError("unknown function type '" + spec.type + "'");
}

ScatteringKernel build_kernel(const KernelSpec& spec, const PhaseFunction& sigma, const Domain& domain) {
  if (spec.type == "none") return ScatteringKernel::none();
  if (spec.type == "flip") return ScatteringKernel::flip(sigma);
  const PhaseFunction amp = build_function(spec.amplitude, domain);
  if (spec.type == "isotropic") return ScatteringKernel::isotropic(amp);
  if (spec.type == "linear_anisotropic") return ScatteringKernel::linear_anisotropic(amp, spec.mu);
  throw ConfigError("unknown kernel type '" + spec.type + "'");
}

VelocityQuadrature build_velocities(const VelocitySpec& spec) {
  try {
    if (spec.type == "sphere") return VelocityQuadrature::sphere(spec.order);
    if (spec.type == "shell") return VelocityQuadrature::shell(spec.order, spec.r_min, spec.r_max, spec.radial_points);
    if (spec.type == "custom") return VelocityQuadrature::custom(spec.nodes, spec.weights);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("velocities: ") + e.what());
  }
  throw ConfigError("unknown velocity type '" + spec.type + "'");
}

namespace {

/// The source paired with a chord-profile cross section is the matching
/// profile source; any other source spec is built as usual.
PhaseFunction build_source(const Scenario& s, const Domain& domain) {
  if (s.source.type == "chord_profile") return chord_profile_source(domain, {s.source.kappa, s.source.power});
  return build_function(s.source, domain);
}

}  // namespace

ScenarioSetup build_setup(const Scenario& s) {
  if (!s.domain) throw ConfigError("scenario '" + s.id + "' has no domain");
  const Domain& domain = *s.domain;
  VelocityQuadrature vq = build_velocities(s.velocities);
  SpatialGrid grid = (s.cells[0] > 0 || s.cells[1] > 0 || s.cells[2] > 0)
                         ? SpatialGrid::lattice(domain, s.cells)
                         : SpatialGrid::lattice(domain, s.cells_longest);
  RayRule rule = s.rays;
  if (s.auto_max_step) rule.max_step = default_max_step(grid);

  ScenarioSetup setup;
  setup.space = PhaseSpace::make(domain, std::move(grid), vq);
  TransportProblem problem;
  problem.space = setup.space;
  problem.sigma = build_function(s.sigma, domain);
  problem.kernel = build_kernel(s.kernel, problem.sigma, domain);
  problem.source = build_source(s, domain);
  problem.boundary = build_function(s.boundary, domain);
  problem.rule = rule;
  setup.problem = problem;

  const Backend backend = s.backend == "grid" ? Backend::grid : s.backend == "chord" ? Backend::chord : Backend::automatic;
  setup.system = make_system(problem, backend, s.chord_intervals);
  setup.inflow = std::make_shared<const BoundaryQuadrature>(
      inflow_quadrature(domain, setup.space->velocities(), s.boundary_resolution));
  setup.outflow = std::make_shared<const BoundaryQuadrature>(
      outflow_quadrature(domain, setup.space->velocities(), s.boundary_resolution));
  return setup;
}

std::optional<ReferenceSolution> reference_solution(const Scenario& s, const ScenarioSetup& setup) {
  const auto& space = setup.space;
  if (s.reference == "attenuation") {
    const auto c = setup.problem.sigma.constant_value();
    const auto g = setup.problem.boundary.constant_value();
    if (!c || !g || !setup.problem.kernel.is_none() || !setup.problem.source.is_zero()) {
      throw ConfigError("scenario '" + s.id + "': attenuation reference needs constant sigma and g, f = 0, no kernel");
    }
    ReferenceSolution ref{PhaseField(space), PhaseField(space)};
    for (std::size_t i = 0; i < space->spatial_size(); ++i) {
      for (std::size_t m = 0; m < space->velocity_size(); ++m) {
        const double v = *g * std::exp(-*c * space->inflow_distance(i, m));
        ref.phi.values()[i * space->velocity_size() + m] = v;
        ref.derivative.values()[i * space->velocity_size() + m] = -*c * v;
      }
    }
    return ref;
  }
  if (s.reference == "chord_profile") {
    if (s.sigma.type != "chord_profile") {
      throw ConfigError("scenario '" + s.id + "': chord_profile reference needs a chord_profile sigma");
    }
    const ChordProfile profile{s.sigma.kappa, s.sigma.power};
    ReferenceSolution ref{PhaseField(space), PhaseField(space)};
    for (std::size_t i = 0; i < space->spatial_size(); ++i) {
      for (std::size_t m = 0; m < space->velocity_size(); ++m) {
        const double len = space->chord_length(i, m);
        const double tau = space->inflow_distance(i, m) / len;
        ref.phi.values()[i * space->velocity_size() + m] = profile.solution(tau);
        ref.derivative.values()[i * space->velocity_size() + m] = profile.solution_slope(tau) / len;
      }
    }
    return ref;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------- stages

namespace {

const std::vector<std::string> kStages{"validate", "solve", "bounds", "spectral", "sharpness"};

bool wants(const std::vector<std::string>& stages, const std::string& name) {
  return std::find(stages.begin(), stages.end(), name) != stages.end();
}

double max_abs_difference(const PhaseField& a, const PhaseField& b) {
  double e = 0.0;
  for (std::size_t k = 0; k < a.values().size(); ++k) e = std::max(e, std::abs(a.values()[k] - b.values()[k]));
  return e;
}

std::string tagged(const std::string& id, double p) { return id + "[p=" + format_exponent(p) + "]"; }

void add_history(ScenarioOutcome& out, const std::string& tag, const SolveResult& r) {
  for (const auto& h : r.history) out.history.push_back({tag, h.step, h.residual, h.factor});
}

/// Bound checks at one exponent for a converged solution, in report order.
std::vector<BoundReport> bound_checks(const Scenario& s, const ScenarioSetup& setup, const SolveResult& result,
                                      const ValidationReport& report, double p, const SlackModel& slack,
                                      std::vector<HistoryRow>* history, const std::string& tag) {
  const TransportSystem& system = *setup.system;
  const BoundConstants constants = compute_bound_constants(report, p);
  const NormQuadrature where = s.norm_quadrature == "nodes" ? NormQuadrature::nodes : NormQuadrature::characteristics;

  std::optional<SolveResult> w;
  if (p == 1.0 && s.w_form && !system.scattering_free()) {
    w = solve_w_form(system, {1.0, s.tol, s.max_iter});
    if (history) {
      for (const auto& h : w->history) history->push_back({tag, h.step, h.residual, h.factor});
    }
  }
  const SolutionNorms norms =
      solution_norms(system, result.phi, p, *setup.inflow, where, w && w->w ? &*w->w : nullptr);

  std::vector<BoundReport> out;
  out.push_back(check_thm1_bound(norms, constants, slack));
  out.push_back(check_derivative_bounds(norms, constants, false, slack));
  if (p == 1.0 || std::isinf(p)) out.push_back(check_derivative_endpoint(norms, constants, slack));
  if (constants.nu) {
    out.push_back(check_thm2_bound(norms, constants, slack));
    out.push_back(check_derivative_bounds(norms, constants, true, slack));
    if (!std::isinf(p)) out.push_back(check_trace_bound(norms, constants, slack));
  }
  if (norms.w_l1) out.push_back(check_w_bound(norms, constants, slack));
  for (auto& r : out) r.scenario = s.id;
  return out;
}

/// Same scenario with half the spatial resolution, used to estimate the grid
/// error of every bound check.
Scenario coarsened(const Scenario& s) {
  Scenario c = s;
  for (int& n : c.cells) n = n > 1 ? std::max(2, n / 2) : n;
  c.cells_longest = std::max(2, s.cells_longest / 2);
  c.chord_intervals = std::max(2, s.chord_intervals / 2);
  return c;
}

void check_bounds_at(ScenarioOutcome& out, const Scenario& s, const ScenarioSetup& setup,
                     const ScenarioSetup* coarse, const SolveResult& result, const ValidationReport& report,
                     double p) {
  const TransportSystem& system = *setup.system;
  const double quad = quadrature_slack(system, result, p);
  const double norm = iteration_norm(result.phi, p);
  const double quad_rel = norm > 0.0 ? quad / norm : 0.0;
  const double tol_rel = norm > 0.0 ? s.tol / norm : 0.0;
  const double eps_quadrature = s.norm_quadrature == "nodes" ? out.fubini_mismatch : out.boundary_volume_error;
  const SlackModel slack{tol_rel + quad_rel + eps_quadrature};

  std::vector<BoundReport> reports =
      bound_checks(s, setup, result, report, p, slack, &out.history, s.id + "[w-form]");
  if (coarse) {
    const SolveResult rc = solve_phi_form(*coarse->system, {p, s.tol, s.max_iter});
    const auto coarse_reports = bound_checks(s, *coarse, rc, report, p, slack, nullptr, "");
    for (std::size_t k = 0; k < reports.size() && k < coarse_reports.size(); ++k) {
      BoundReport& r = reports[k];
      if (coarse_reports[k].name != r.name) continue;
      r.delta += std::abs(r.lhs - coarse_reports[k].lhs) + std::abs(r.rhs - coarse_reports[k].rhs);
      r.holds = std::isfinite(r.lhs) && r.lhs <= r.rhs + r.delta;
    }
  }
  for (auto& r : reports) out.bounds.push_back(std::move(r));

  {
    const PhaseField sigma_nodes = sample(setup.problem.sigma, setup.space);
    const PhaseField k_phi = system.apply_K(result.phi);
    const PhaseField d =
        directional_derivative(result.phi, sigma_nodes, k_phi, sample(setup.problem.source, setup.space));
    BoundReport r = check_isomorphism_norm(result.phi, d, sigma_nodes, k_phi, report.sup_sigma_ell, p, slack);
    r.scenario = s.id;
    out.bounds.push_back(std::move(r));
  }
  // Observed asymptotic contraction against 1 - e^{-C_p}.
  if (!system.scattering_free()) {
    const BoundConstants constants = compute_bound_constants(report, p);
    BoundReport r = make_report("contraction-factor", p, result.factor_estimate, constants.escape_probability,
                                constants.C_p, SlackModel{0.0, quad_rel + 1e-9});
    r.scenario = s.id;
    out.bounds.push_back(std::move(r));
  }
}

}  // namespace

ScenarioOutcome run_scenario(const Scenario& s, const std::vector<std::string>& stages) {
  ScenarioOutcome out;
  out.id = s.id;

  if (wants(stages, "sharpness") && !s.sharpness_l.empty()) {
    out.sharpness = sharpness_experiment(s.sharpness_l);
    for (const auto& rec : out.sharpness) {
      BoundReport r = make_report("sharpness-gap", kInfinity, rec.gap, 0.0, rec.sup_sigma_ell, SlackModel{0.0, 1e-9});
      r.scenario = s.id + "[l=" + std::to_string(rec.l) + "]";
      out.bounds.push_back(std::move(r));
    }
  }

  const bool needs_space = wants(stages, "validate") || wants(stages, "solve") || wants(stages, "bounds") ||
                           wants(stages, "spectral");
  if (!needs_space) return out;
  if (!s.domain) {
    if (s.sharpness_l.empty()) throw ConfigError("scenario '" + s.id + "' has no domain");
    return out;
  }

  const ScenarioSetup setup = build_setup(s);
  const TransportSystem& system = *setup.system;
  out.fubini_mismatch = fubini_mismatch(*setup.space, *setup.inflow);
  out.boundary_volume_error = boundary_volume_error(*setup.space, *setup.inflow);
  out.validation = validate_assumptions(setup.problem.sigma, setup.problem.kernel, *s.domain,
                                        setup.space->velocities(), setup.space->grid(), s.samples, s.seed);
  if (!out.validation->passed()) {
    out.notes.push_back("coefficient assumptions violated: " + std::to_string(out.validation->violation_count) +
                        " samples, first " + out.validation->violations.front().what);
  }

  if (wants(stages, "solve") || wants(stages, "bounds")) {
    const auto ref = reference_solution(s, setup);
    std::vector<double> ps = s.p;
    if (!wants(stages, "bounds")) ps = {s.solve_p};
    std::optional<ScenarioSetup> coarse;
    if (wants(stages, "bounds") && s.grid_slack) coarse.emplace(build_setup(coarsened(s)));
    for (double p : ps) {
      SolveResult result = solve_phi_form(system, {p, s.tol, s.max_iter});
      add_history(out, tagged(s.id, p), result);
      if (!result.converged) out.notes.push_back(tagged(s.id, p) + ": no convergence within max_iter");
      if (ref && p == ps.front()) {
        out.errors.push_back({s.id, "phi", max_abs_difference(result.phi, ref->phi)});
        const PhaseField d = directional_derivative(result.phi, setup.problem.sigma, setup.problem.kernel,
                                                    setup.problem.source);
        out.errors.push_back({s.id, "derivative", max_abs_difference(d, ref->derivative)});
      }
      if (wants(stages, "bounds")) {
        check_bounds_at(out, s, setup, coarse ? &*coarse : nullptr, result, *out.validation, p);
      }
      if (p == s.solve_p || !out.solution) out.solution = std::move(result);
    }
    if (wants(stages, "solve") && s.w_form && !system.scattering_free()) {
      out.w_solution = solve_w_form(system, {s.solve_p, s.tol, s.max_iter});
    }
  }

  if (wants(stages, "spectral")) {
    std::vector<double> state;
    const auto estimates = estimate_spectral_radius(system, s.p, s.spectral_steps, s.seed, &state);
    for (const auto& e : estimates) {
      const BoundConstants constants = compute_bound_constants(*out.validation, e.p);
      const double quad = operator_slack(system, state, e.p);
      out.spectral.push_back({s.id, e.p, e.rho, e.spread, constants.escape_probability, quad});
      BoundReport r = make_report("spectral-radius", e.p, e.rho, constants.escape_probability, constants.C_p,
                                  SlackModel{0.0, quad + 0.02});
      r.scenario = s.id;
      out.bounds.push_back(std::move(r));
    }
  }
  return out;
}

// ---------------------------------------------------------------- output

std::string format_csv_number(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (std::isnan(x)) return "nan";
  if (x == 0.0) x = 0.0;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::vector<std::string> parse_stages(const std::string& list) {
  std::vector<std::string> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty()) continue;
    if (std::find(kStages.begin(), kStages.end(), item) == kStages.end()) {
      throw ConfigError("unknown stage '" + item + "'");
    }
    if (!wants(out, item)) out.push_back(item);
  }
  if (out.empty()) throw ConfigError("no stages requested");
  return out;
}

namespace {

using Table = std::vector<std::vector<std::string>>;

struct Tables {
  Table bounds, history, sharpness, validation, spectral, errors;
};

std::string num(double x) { return format_csv_number(x); }

Tables tabulate(const ScenarioOutcome& o) {
  Tables t;
  for (const auto& b : o.bounds) {
    t.bounds.push_back({b.scenario, b.name, format_exponent(b.p), num(b.lhs), num(b.rhs), num(b.constant),
                        num(b.delta), b.holds ? "true" : "false"});
  }
  for (const auto& h : o.history) t.history.push_back({h.scenario, std::to_string(h.step), num(h.residual), num(h.factor)});
  for (const auto& r : o.sharpness) {
    t.sharpness.push_back({std::to_string(r.l), num(r.k), num(r.a), num(r.log_b), num(r.log_lhs), num(r.log_rhs),
                           num(r.gap), num(r.argmax_t), num(r.log_f_at_inflow), num(r.log_intermediate_bound),
                           r.intermediate_holds ? "true" : "false", num(r.gap_with_inflow_value)});
  }
  if (o.validation) {
    const auto& v = *o.validation;
    t.validation.push_back({o.id, std::to_string(v.samples), std::to_string(v.seed), num(v.min_sigma),
                            num(v.min_sigma_minus_sigma_s), num(v.min_sigma_minus_sigma_s_prime), num(v.sup_sigma_ell),
                            num(v.sup_sigma_s_ell), num(v.sup_sigma_s_prime_ell), std::to_string(v.violation_count),
                            num(o.fubini_mismatch), num(o.boundary_volume_error)});
  }
  for (const auto& s : o.spectral) {
    t.spectral.push_back({s.scenario, format_exponent(s.p), num(s.rho), num(s.spread), num(s.bound), num(s.delta_quad)});
  }
  for (const auto& e : o.errors) t.errors.push_back({e.scenario, e.quantity, num(e.max_error)});
  return t;
}

const std::vector<std::pair<std::string, std::string>> kHeaders{
    {"bounds.csv", "scenario,name,p,lhs,rhs,constant,delta,holds"},
    {"history.csv", "scenario,step,residual,factor"},
    {"sharpness.csv", "l,k,a,log_b,log_lhs,log_rhs,gap,argmax_t,log_f_at_inflow,log_intermediate_bound,"
                     "intermediate_holds,gap_with_inflow_value"},
    {"validation.csv",
     "scenario,samples,seed,min_sigma,min_sigma_minus_sigma_s,min_sigma_minus_sigma_s_prime,sup_sigma_ell,"
     "sup_sigma_s_ell,sup_sigma_s_prime_ell,violations,fubini_mismatch,boundary_volume_error"},
    {"spectral.csv", "scenario,p,rho,spread,bound,delta_quad"},
    {"errors.csv", "scenario,quantity,max_error"},
};

const Table& table_for(const Tables& t, std::size_t k) {
  const Table* all[] = {&t.bounds, &t.history, &t.sharpness, &t.validation, &t.spectral, &t.errors};
  return *all[k];
}

void write_atomic(const std::filesystem::path& path, const std::string& header, const std::vector<const Table*>& parts) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    f << header << '\n';
    for (const Table* t : parts) {
      for (const auto& row : *t) {
        for (std::size_t k = 0; k < row.size(); ++k) f << (k ? "," : "") << row[k];
        f << '\n';
      }
    }
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_tables(const std::filesystem::path& dir, const std::vector<const Tables*>& tables) {
  std::filesystem::create_directories(dir);
  for (std::size_t k = 0; k < kHeaders.size(); ++k) {
    std::vector<const Table*> parts;
    bool any = false;
    for (const Tables* t : tables) {
      parts.push_back(&table_for(*t, k));
      any = any || !parts.back()->empty();
    }
    if (any) write_atomic(dir / kHeaders[k].first, kHeaders[k].second, parts);
  }
}

}  // namespace

int run(const RunOptions& options, std::ostream& log) {
  std::vector<Scenario> scenarios;
  std::vector<std::string> stages = options.stages;
  try {
    if (stages.empty()) throw ConfigError("no stages requested");
    for (const auto& st : stages) {
      if (!wants(kStages, st)) throw ConfigError("unknown stage '" + st + "'");
    }
    if (options.refine < 1) throw ConfigError("--refine must be >= 1");
    if (options.jobs < 1) throw ConfigError("--jobs must be >= 1");
    scenarios = load_scenarios(options.scenario_path);
    for (auto& s : scenarios) {
      s = refine(s, options.refine);
      if (options.seed) s.seed = *options.seed;
    }
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return 2;
  }

  std::string out_dir = options.out_dir;
  if (const char* env = std::getenv("LPRT_OUT"); env && *env && options.out_dir == RunOptions{}.out_dir) out_dir = env;

  std::vector<Tables> tables(scenarios.size());
  std::vector<std::string> failures(scenarios.size());
  std::vector<int> config_failed(scenarios.size(), 0);
  std::mutex log_mutex;
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t k = next++; k < scenarios.size(); k = next++) {
      const Scenario& s = scenarios[k];
      try {
        const ScenarioOutcome o = run_scenario(s, stages);
        tables[k] = tabulate(o);
        write_tables(std::filesystem::path(out_dir) / s.id, {&tables[k]});
        std::lock_guard lock(log_mutex);
        for (const auto& n : o.notes) log << s.id << ": " << n << '\n';
        for (const auto& b : o.bounds) {
          if (!b.holds) {
            log << "violated: " << b.scenario << ' ' << b.name << " p=" << format_exponent(b.p) << " lhs="
                << format_csv_number(b.lhs) << " rhs=" << format_csv_number(b.rhs)
                << " delta=" << format_csv_number(b.delta) << '\n';
          }
        }
        log << s.id << ": done, " << o.bounds.size() << " bound checks\n";
      } catch (const ConfigError& e) {
        config_failed[k] = 1;
        failures[k] = e.what();
      } catch (const std::exception& e) {
        failures[k] = e.what();
      }
    }
  };
  const int n_threads = std::min<int>(options.jobs, static_cast<int>(std::max<std::size_t>(1, scenarios.size())));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::vector<const Tables*> ordered;
  for (const auto& t : tables) ordered.push_back(&t);
  try {
    write_tables(out_dir, ordered);
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return 1;
  }

  int status = 0;
  for (std::size_t k = 0; k < scenarios.size(); ++k) {
    if (!failures[k].empty()) {
      log << (config_failed[k] ? "config error: " : "error: ") << scenarios[k].id << ": " << failures[k] << '\n';
      status = std::max(status, config_failed[k] ? 2 : 1);
    }
    for (const auto& row : tables[k].bounds) {
      if (row.back() != "true") status = std::max(status, 1);
    }
  }
  return status;
}

}  // namespace lprt
