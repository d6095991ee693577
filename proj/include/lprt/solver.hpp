#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "lprt/coefficients.hpp"
#include "lprt/operators.hpp"
#include "lprt/phase_space.hpp"

namespace lprt {

/// Coefficients and data of one stationary transport problem on a phase space.
struct TransportProblem {
  std::shared_ptr<const PhaseSpace> space;
  PhaseFunction sigma;
  ScatteringKernel kernel = ScatteringKernel::none();
  PhaseFunction source;
  PhaseFunction boundary;
  RayRule rule;
};

/// Discrete fixed-point map phi -> LK phi + Lf + Jg acting on a backend state.
///
/// The state is a flat vector; `nodes` projects it onto the phase-space nodes.
/// For the grid backend the state is the node field itself.
class TransportSystem {
 public:
  virtual ~TransportSystem() = default;

  const TransportProblem& problem() const { return problem_; }
  const std::shared_ptr<const PhaseSpace>& space() const { return problem_.space; }

  virtual std::size_t state_size() const = 0;
  /// L f
  virtual std::vector<double> lift_source() const = 0;
  /// J g
  virtual std::vector<double> lift_boundary() const = 0;
  /// out = L K in
  virtual void apply_LK(std::span<const double> in, std::span<double> out) const = 0;
  virtual PhaseField nodes(std::span<const double> state) const = 0;
  /// Node values of LK state + Lf + Jg evaluated with the ray resolution scaled by `factor`.
  virtual PhaseField map_nodes(std::span<const double> state, int factor) const = 0;

  /// K on node values.
  PhaseField apply_K(const PhaseField& phi) const { return lprt::apply_K(problem_.kernel, phi); }
  bool scattering_free() const { return problem_.kernel.is_none(); }

 protected:
  explicit TransportSystem(TransportProblem problem) : problem_(std::move(problem)) {}

  TransportProblem problem_;
};

/// Node-based backend: K on nodes, L by sweeps with trilinear interpolation.
class GridSystem final : public TransportSystem {
 public:
  explicit GridSystem(TransportProblem problem);

  std::size_t state_size() const override { return space()->size(); }
  std::vector<double> lift_source() const override;
  std::vector<double> lift_boundary() const override;
  void apply_LK(std::span<const double> in, std::span<double> out) const override;
  PhaseField nodes(std::span<const double> state) const override;
  PhaseField map_nodes(std::span<const double> state, int factor) const override;
};

/// Backend for the flip kernel. Only v and -v couple, so the problem reduces
/// to independent two-stream systems on the chords through each node; each
/// chord carries both streams on its own 1D grid (split at the node) and no
/// spatial interpolation is involved.
class FlipChordSystem final : public TransportSystem {
 public:
  /// `intervals`: sub-intervals per chord (before the split at the node).
  FlipChordSystem(TransportProblem problem, int intervals = 256);

  std::size_t state_size() const override { return state_size_; }
  std::vector<double> lift_source() const override;
  std::vector<double> lift_boundary() const override;
  void apply_LK(std::span<const double> in, std::span<double> out) const override;
  PhaseField nodes(std::span<const double> state) const override;
  PhaseField map_nodes(std::span<const double> state, int factor) const override;

  std::size_t chord_count() const { return chords_.size(); }
  int intervals() const { return intervals_; }

  /// Coefficients of one stream (direction) sampled on a chord grid.
  struct Stream {
    std::vector<double> coupling;     ///< flip amplitude at grid points
    std::vector<double> attenuation;  ///< per sub-interval, exp(-sigma_mid h)
    std::vector<double> weight;       ///< per sub-interval, h (1 - exp(-sigma_mid h)) / (sigma_mid h)
  };

 private:
  struct ChordInfo {
    std::size_t node = 0;
    std::size_t plus = 0;   ///< velocity index along the chord
    std::size_t minus = 0;  ///< antipodal velocity index
    int split = 0;          ///< grid index of the node
    int count = 0;          ///< number of sub-intervals
    std::size_t offset = 0; ///< first state entry; plus stream then minus stream
  };

  std::vector<double> positions(const ChordInfo& c, int factor) const;
  void build_streams(const ChordInfo& c, const std::vector<double>& s, Stream& plus, Stream& minus) const;
  /// Plus and minus streams of L(K in + f) + J g on one chord (either part optional).
  void sweep_chord(const ChordInfo& c, const std::vector<double>& s, const Stream& plus, const Stream& minus,
                   const double* in, bool with_source, bool with_boundary, double* out) const;

  int intervals_;
  std::vector<ChordInfo> chords_;
  std::vector<Stream> plus_;
  std::vector<Stream> minus_;
  std::size_t state_size_ = 0;
};

enum class Backend { automatic, grid, chord };

/// Chord backend for the flip kernel under `automatic`, grid backend otherwise.
std::unique_ptr<TransportSystem> make_system(TransportProblem problem, Backend backend = Backend::automatic,
                                             int chord_intervals = 256);

struct IterationStep {
  int step = 0;
  double residual = 0.0;  ///< a-posteriori error bound q/(1-q) * update
  double update = 0.0;    ///< weighted norm of the last increment
  double factor = 0.0;    ///< update / previous update (0 on the first step)
  double seconds = 0.0;   ///< wall time since the start of the solve
};

struct SolveOptions {
  double p = 1.0;
  double tol = 1e-8;
  int max_iter = 1000;
};

struct SolveResult {
  PhaseField phi;
  std::optional<PhaseField> w;  ///< w = K phi + f, filled by the w-form
  std::vector<IterationStep> history;
  bool converged = false;
  double residual = 0.0;
  double factor_estimate = 0.0;   ///< running contraction estimate at exit
  std::vector<double> state;      ///< backend state of phi
};

/// Source iteration phi_{n+1} = LK phi_n + Lf + Jg from phi_0 = Lf + Jg.
///
/// Stops when the update in the l^{-1/p}-weighted p-norm satisfies
/// update <= tol (1 - q) / q, q the largest of the last three observed
/// factors, or when an update is exactly zero.
SolveResult solve_phi_form(const TransportSystem& system, const SolveOptions& options);

/// Iteration w_{n+1} = K L w_n + f + K J g from w_0 = 0, carried through
/// phi_n = L w_n + J g. The increment is measured as ||l^{1-1/p} (w_{n+1} - w_n)||_p.
SolveResult solve_w_form(const TransportSystem& system, const SolveOptions& options);

/// ||l^{-1/p} (T phi - phi)||_p for the converged state.
double fixed_point_residual(const TransportSystem& system, const SolveResult& result, double p);

/// Richardson estimate of the ray-quadrature error of the solution in the
/// l^{-1/p}-weighted p-norm: ||T_2m phi - T_m phi|| / (1 - q).
double quadrature_slack(const TransportSystem& system, const SolveResult& result, double p);

struct SpectralEstimate {
  double p = 1.0;
  double rho = 0.0;     ///< geometric mean of the last three factors
  double spread = 0.0;  ///< max - min of the last three factors
  std::vector<double> factors;
};

/// Power iteration for LK in the l^{-1/p}-weighted p-norms from a seeded
/// positive random start; one iteration sequence serves all exponents.
/// A system without scattering yields rho = 0. Throws DegenerateStart when LK
/// maps the start field to zero otherwise.
/// `final_state`, when given, receives the last normalized iterate.
std::vector<SpectralEstimate> estimate_spectral_radius(const TransportSystem& system, std::span<const double> ps,
                                                       int n_steps, std::uint64_t seed = 42,
                                                       std::vector<double>* final_state = nullptr);

/// Relative change of LK u in the l^{-1/p}-weighted p-norm when the ray
/// resolution is doubled.
double operator_slack(const TransportSystem& system, std::span<const double> state, double p);

/// ||l^{-1/p} u||_p on nodes.
double iteration_norm(const PhaseField& u, double p);

}  // namespace lprt
