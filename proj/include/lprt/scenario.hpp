#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lprt/analysis.hpp"
#include "lprt/coefficients.hpp"
#include "lprt/geometry.hpp"
#include "lprt/solver.hpp"

namespace lprt {

inline constexpr int kSchemaVersion = 1;

struct VelocitySpec {
  std::string type = "sphere";  ///< sphere | shell | custom
  int order = 4;
  double r_min = 0.5;
  double r_max = 1.0;
  int radial_points = 2;
  std::vector<Vec3> nodes;
  std::vector<double> weights;
};

/// Descriptor of a PhaseFunction.
struct FunctionSpec {
  std::string type = "constant";  ///< constant | separable | chord_profile
  double value = 0.0;
  double radial = 0.0;
  double directional = 0.0;
  Vec3 center;
  double kappa = 1.0;
  double power = 1.0;
};

struct KernelSpec {
  std::string type = "none";  ///< none | isotropic | linear_anisotropic | flip
  FunctionSpec amplitude;
  double mu = 0.0;
};

struct Scenario {
  std::string id;
  std::optional<Domain> domain;
  VelocitySpec velocities;
  std::array<int, 3> cells{0, 0, 0};  ///< all zero: use cells_longest
  int cells_longest = 10;
  FunctionSpec sigma;
  KernelSpec kernel;
  FunctionSpec source;
  FunctionSpec boundary;
  std::vector<double> p{1.0, 2.0, kInfinity};
  RayRule rays;
  bool auto_max_step = true;
  int boundary_resolution = 12;
  int chord_intervals = 256;
  std::string backend = "auto";  ///< auto | grid | chord
  std::string norm_quadrature = "characteristics";  ///< characteristics | nodes
  /// Adds |lhs - lhs_h| + |rhs - rhs_h| to each bound slack, h the half-resolution grid.
  bool grid_slack = true;
  double tol = 1e-10;
  int max_iter = 2000;
  double solve_p = kInfinity;
  bool w_form = true;
  int spectral_steps = 30;
  std::size_t samples = 64;
  std::uint64_t seed = 42;
  std::string reference = "none";  ///< none | attenuation | chord_profile
  std::vector<int> sharpness_l;
};

/// Parses a scenario file (YAML syntax). Throws ConfigError with the offending key.
std::vector<Scenario> load_scenarios(const std::string& path);
std::vector<Scenario> parse_scenarios(const std::string& text);

/// Grid cells, ray resolution, chord intervals and boundary resolution scaled by `factor`.
Scenario refine(const Scenario& s, int factor);

PhaseFunction build_function(const FunctionSpec& spec, const Domain& domain);
ScatteringKernel build_kernel(const KernelSpec& spec, const PhaseFunction& sigma, const Domain& domain);
VelocityQuadrature build_velocities(const VelocitySpec& spec);

/// Everything needed to solve and check one scenario.
struct ScenarioSetup {
  std::shared_ptr<const PhaseSpace> space;
  TransportProblem problem;
  std::unique_ptr<TransportSystem> system;
  std::shared_ptr<const BoundaryQuadrature> inflow;
  std::shared_ptr<const BoundaryQuadrature> outflow;
};

ScenarioSetup build_setup(const Scenario& s);

/// Closed-form node values of the solution and its directional derivative, when known.
struct ReferenceSolution {
  PhaseField phi;
  PhaseField derivative;
};
std::optional<ReferenceSolution> reference_solution(const Scenario& s, const ScenarioSetup& setup);

struct HistoryRow {
  std::string scenario;
  int step = 0;
  double residual = 0.0;
  double factor = 0.0;
};

struct SpectralRow {
  std::string scenario;
  double p = 1.0;
  double rho = 0.0;
  double spread = 0.0;
  double bound = 0.0;
  double delta_quad = 0.0;
};

struct ErrorRow {
  std::string scenario;
  std::string quantity;  ///< "phi" or "derivative"
  double max_error = 0.0;
};

struct ScenarioOutcome {
  std::string id;
  std::optional<ValidationReport> validation;
  std::optional<SolveResult> solution;
  std::optional<SolveResult> w_solution;
  std::vector<BoundReport> bounds;
  std::vector<HistoryRow> history;
  std::vector<SpectralRow> spectral;
  std::vector<ErrorRow> errors;
  std::vector<SharpnessRecord> sharpness;
  std::vector<std::string> notes;
  double fubini_mismatch = 0.0;
  double boundary_volume_error = 0.0;
};

/// Runs the requested stages (validate, solve, bounds, spectral, sharpness) on one scenario.
ScenarioOutcome run_scenario(const Scenario& s, const std::vector<std::string>& stages);

struct RunOptions {
  std::string scenario_path;
  std::vector<std::string> stages;
  std::string out_dir = "out";
  int refine = 1;
  int jobs = 1;
  std::optional<std::uint64_t> seed;
};

/// Exit status: 0 when every bound check holds, 1 on a violation, 2 on a configuration error.
int run(const RunOptions& options, std::ostream& log);

/// Splits "a,b,c" and validates stage names; throws ConfigError.
std::vector<std::string> parse_stages(const std::string& list);

/// 17 significant digits; "inf" for infinity.
std::string format_csv_number(double x);

}  // namespace lprt
