#include "lprt/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "lprt/errors.hpp"

namespace lprt {

double iteration_norm(const PhaseField& u, double p) {
  const double e = std::isinf(p) ? 0.0 : -1.0 / p;
  return scaled_lp_norm(u, chord_power(u.space(), e), p);
}

namespace {

double w_increment_norm(const PhaseField& u, double p) {
  const double e = std::isinf(p) ? 1.0 : 1.0 - 1.0 / p;
  return scaled_lp_norm(u, chord_power(u.space(), e), p);
}

PhaseField field_from(const std::shared_ptr<const PhaseSpace>& space, std::span<const double> values) {
  PhaseField out(space);
  std::copy(values.begin(), values.end(), out.values().begin());
  return out;
}

}  // namespace

// ---------------------------------------------------------------- grid

GridSystem::GridSystem(TransportProblem problem) : TransportSystem(std::move(problem)) {
  if (!problem_.space) throw std::invalid_argument("transport problem needs a phase space");
}

std::vector<double> GridSystem::lift_source() const {
  const PhaseField f = apply_L(problem_.sigma, problem_.source, space(), problem_.rule);
  return {f.values().begin(), f.values().end()};
}

std::vector<double> GridSystem::lift_boundary() const {
  const PhaseField j = apply_J(problem_.sigma, problem_.boundary, space(), problem_.rule);
  return {j.values().begin(), j.values().end()};
}

void GridSystem::apply_LK(std::span<const double> in, std::span<double> out) const {
  if (scattering_free()) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  const PhaseField lk = apply_L(problem_.sigma, apply_K(field_from(space(), in)), problem_.rule);
  std::copy(lk.values().begin(), lk.values().end(), out.begin());
}

PhaseField GridSystem::nodes(std::span<const double> state) const { return field_from(space(), state); }

PhaseField GridSystem::map_nodes(std::span<const double> state, int factor) const {
  const RayRule rule = problem_.rule.refined(factor);
  PhaseField out = apply_L(problem_.sigma, problem_.source, space(), rule);
  out += apply_J(problem_.sigma, problem_.boundary, space(), rule);
  if (!scattering_free()) out += apply_L(problem_.sigma, apply_K(field_from(space(), state)), rule);
  return out;
}

// ---------------------------------------------------------------- flip chords

FlipChordSystem::FlipChordSystem(TransportProblem problem, int intervals)
    : TransportSystem(std::move(problem)), intervals_(std::max(2, intervals)) {
  if (problem_.kernel.kind() != ScatteringKernel::Kind::flip) {
    throw std::invalid_argument("chord backend requires the flip kernel");
  }
  const auto& vq = space()->velocities();
  if (!vq.antipodally_closed()) throw QuadratureMismatch("flip kernel needs an antipodally closed velocity rule");
  for (std::size_t i = 0; i < space()->spatial_size(); ++i) {
    for (std::size_t m = 0; m < vq.size(); ++m) {
      const std::size_t a = *vq.antipode(m);
      if (a < m) continue;
      ChordInfo c;
      c.node = i;
      c.plus = m;
      c.minus = a;
      const double len = space()->chord_length(i, m);
      const double tau = space()->inflow_distance(i, m) / len;
      const int n1 = std::max(1, static_cast<int>(std::lround(intervals_ * tau)));
      const int n2 = std::max(1, static_cast<int>(std::lround(intervals_ * (1.0 - tau))));
      c.split = n1;
      c.count = n1 + n2;
      c.offset = state_size_;
      state_size_ += 2 * static_cast<std::size_t>(c.count + 1);
      chords_.push_back(c);
    }
  }
  plus_.resize(chords_.size());
  minus_.resize(chords_.size());
  for (std::size_t k = 0; k < chords_.size(); ++k) build_streams(chords_[k], positions(chords_[k], 1), plus_[k], minus_[k]);
}

std::vector<double> FlipChordSystem::positions(const ChordInfo& c, int factor) const {
  const double t = space()->inflow_distance(c.node, c.plus);
  const double len = space()->chord_length(c.node, c.plus);
  const int n1 = c.split * factor;
  const int n = c.count * factor;
  std::vector<double> s(static_cast<std::size_t>(n + 1));
  for (int j = 0; j <= n1; ++j) s[static_cast<std::size_t>(j)] = t * j / n1;
  for (int j = n1 + 1; j <= n; ++j) s[static_cast<std::size_t>(j)] = t + (len - t) * (j - n1) / (n - n1);
  s.back() = len;
  return s;
}

void FlipChordSystem::build_streams(const ChordInfo& c, const std::vector<double>& s, Stream& plus,
                                    Stream& minus) const {
  const Ray ray = space()->ray(c.node, c.plus);
  const Ray rev = ray.reversed();
  const double len = ray.length;
  const std::size_t n = s.size() - 1;
  const PhaseFunction& amp = problem_.kernel.amplitude();
  const PhaseFunction& sigma = problem_.sigma;
  plus.coupling.resize(n + 1);
  minus.coupling.resize(n + 1);
  plus.attenuation.resize(n);
  minus.attenuation.resize(n);
  plus.weight.resize(n);
  minus.weight.resize(n);
  for (std::size_t j = 0; j <= n; ++j) {
    plus.coupling[j] = amp.along(ray, s[j]);
    minus.coupling[j] = amp.along(rev, len - s[j]);
  }
  for (std::size_t j = 0; j < n; ++j) {
    const double h = s[j + 1] - s[j];
    const double mid = 0.5 * (s[j] + s[j + 1]);
    const double dp = sigma.along(ray, mid) * h;
    const double dm = sigma.along(rev, len - mid) * h;
    plus.attenuation[j] = std::exp(-dp);
    minus.attenuation[j] = std::exp(-dm);
    plus.weight[j] = h * one_minus_exp_over(dp);
    minus.weight[j] = h * one_minus_exp_over(dm);
  }
}

void FlipChordSystem::sweep_chord(const ChordInfo& c, const std::vector<double>& s, const Stream& plus,
                                  const Stream& minus, const double* in, bool with_source, bool with_boundary,
                                  double* out) const {
  const std::size_t n = s.size() - 1;
  const Ray ray = space()->ray(c.node, c.plus);
  const Ray rev = ray.reversed();
  const double len = ray.length;
  const PhaseFunction& f = problem_.source;
  const bool source = with_source && !f.is_zero();

  std::vector<double> qp(n + 1, 0.0);
  std::vector<double> qm(n + 1, 0.0);
  for (std::size_t j = 0; j <= n; ++j) {
    if (in) {
      qp[j] = plus.coupling[j] * in[n + 1 + j];
      qm[j] = minus.coupling[j] * in[j];
    }
    if (source) {
      qp[j] += f.along(ray, s[j]);
      qm[j] += f.along(rev, len - s[j]);
    }
  }
  double* op = out;
  double* om = out + n + 1;
  op[0] = with_boundary ? problem_.boundary(ray.r_minus, ray.direction) : 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    op[j + 1] = op[j] * plus.attenuation[j] + plus.weight[j] * 0.5 * (qp[j] + qp[j + 1]);
  }
  om[n] = with_boundary ? problem_.boundary(rev.r_minus, rev.direction) : 0.0;
  for (std::size_t j = n; j-- > 0;) {
    om[j] = om[j + 1] * minus.attenuation[j] + minus.weight[j] * 0.5 * (qm[j] + qm[j + 1]);
  }
}

std::vector<double> FlipChordSystem::lift_source() const {
  std::vector<double> out(state_size_, 0.0);
  for (std::size_t k = 0; k < chords_.size(); ++k) {
    const auto& c = chords_[k];
    sweep_chord(c, positions(c, 1), plus_[k], minus_[k], nullptr, true, false, out.data() + c.offset);
  }
  return out;
}

std::vector<double> FlipChordSystem::lift_boundary() const {
  std::vector<double> out(state_size_, 0.0);
  for (std::size_t k = 0; k < chords_.size(); ++k) {
    const auto& c = chords_[k];
    sweep_chord(c, positions(c, 1), plus_[k], minus_[k], nullptr, false, true, out.data() + c.offset);
  }
  return out;
}

void FlipChordSystem::apply_LK(std::span<const double> in, std::span<double> out) const {
  for (std::size_t k = 0; k < chords_.size(); ++k) {
    const auto& c = chords_[k];
    sweep_chord(c, positions(c, 1), plus_[k], minus_[k], in.data() + c.offset, false, false,
                out.data() + c.offset);
  }
}

PhaseField FlipChordSystem::nodes(std::span<const double> state) const {
  PhaseField out(space());
  for (const auto& c : chords_) {
    const std::size_t n = static_cast<std::size_t>(c.count);
    out(c.node, c.plus) = state[c.offset + static_cast<std::size_t>(c.split)];
    out(c.node, c.minus) = state[c.offset + n + 1 + static_cast<std::size_t>(c.split)];
  }
  return out;
}

PhaseField FlipChordSystem::map_nodes(std::span<const double> state, int factor) const {
  PhaseField out(space());
  std::vector<double> fine_in;
  std::vector<double> fine_out;
  for (std::size_t k = 0; k < chords_.size(); ++k) {
    const auto& c = chords_[k];
    const std::size_t n = static_cast<std::size_t>(c.count);
    const std::size_t nf = n * static_cast<std::size_t>(factor);
    const auto s = positions(c, factor);
    Stream plus, minus;
    if (factor == 1) {
      plus = plus_[k];
      minus = minus_[k];
    } else {
      build_streams(c, s, plus, minus);
    }
    // Linear prolongation of both streams onto the nested fine grid.
    fine_in.assign(2 * (nf + 1), 0.0);
    const double* x = state.data() + c.offset;
    for (int stream = 0; stream < 2; ++stream) {
      const double* xs = x + stream * (n + 1);
      double* ys = fine_in.data() + stream * (nf + 1);
      for (std::size_t J = 0; J <= nf; ++J) {
        const std::size_t j = J / static_cast<std::size_t>(factor);
        const std::size_t r = J % static_cast<std::size_t>(factor);
        ys[J] = r == 0 ? xs[j] : ((factor - static_cast<double>(r)) * xs[j] + static_cast<double>(r) * xs[j + 1]) / factor;
      }
    }
    fine_out.assign(2 * (nf + 1), 0.0);
    sweep_chord(c, s, plus, minus, fine_in.data(), true, true, fine_out.data());
    const std::size_t split = static_cast<std::size_t>(c.split) * static_cast<std::size_t>(factor);
    out(c.node, c.plus) = fine_out[split];
    out(c.node, c.minus) = fine_out[nf + 1 + split];
  }
  return out;
}

std::unique_ptr<TransportSystem> make_system(TransportProblem problem, Backend backend, int chord_intervals) {
  const bool flip = problem.kernel.kind() == ScatteringKernel::Kind::flip;
  if (backend == Backend::chord || (backend == Backend::automatic && flip)) {
    return std::make_unique<FlipChordSystem>(std::move(problem), chord_intervals);
  }
  return std::make_unique<GridSystem>(std::move(problem));
}

// ---------------------------------------------------------------- iteration

namespace {

SolveResult iterate(const TransportSystem& sys, const SolveOptions& opt, std::vector<double> x,
                    const std::vector<double>& affine, bool w_form) {
  if (!(opt.tol > 0.0)) throw std::invalid_argument("solver tolerance must be positive");
  const auto start = std::chrono::steady_clock::now();
  std::vector<double> y(x.size());
  std::vector<double> factors;
  double prev_update = 0.0;
  SolveResult res{sys.nodes(x), std::nullopt, {}, false, 0.0, 0.0, {}};
  PhaseField x_nodes = sys.nodes(x);

  for (int n = 1; n <= opt.max_iter; ++n) {
    sys.apply_LK(x, y);
    for (std::size_t k = 0; k < y.size(); ++k) y[k] += affine[k];
    PhaseField y_nodes = sys.nodes(y);
    PhaseField diff = y_nodes - x_nodes;
    const double update = w_form ? w_increment_norm(sys.apply_K(diff), opt.p) : iteration_norm(diff, opt.p);
    const double factor = prev_update > 0.0 ? update / prev_update : 0.0;
    if (n >= 2) factors.push_back(factor);
    double q = 0.0;
    for (std::size_t k = factors.size() >= 3 ? factors.size() - 3 : 0; k < factors.size(); ++k) q = std::max(q, factors[k]);

    std::swap(x, y);
    x_nodes = std::move(y_nodes);
    prev_update = update;

    IterationStep step;
    step.step = n;
    step.update = update;
    step.factor = factor;
    bool done = false;
    if (update == 0.0) {
      step.residual = 0.0;
      done = true;
    } else if (n >= 2 && q < 1.0) {
      step.residual = q / (1.0 - q) * update;
      done = step.residual <= opt.tol;
    } else {
      step.residual = update;
    }
    step.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    res.history.push_back(step);
    res.residual = step.residual;
    res.factor_estimate = q;
    if (done) {
      res.converged = true;
      break;
    }
  }
  res.phi = std::move(x_nodes);
  res.state = std::move(x);
  return res;
}

}  // namespace

SolveResult solve_phi_form(const TransportSystem& system, const SolveOptions& options) {
  std::vector<double> affine = system.lift_source();
  const std::vector<double> jg = system.lift_boundary();
  for (std::size_t k = 0; k < affine.size(); ++k) affine[k] += jg[k];
  return iterate(system, options, affine, affine, false);
}

SolveResult solve_w_form(const TransportSystem& system, const SolveOptions& options) {
  std::vector<double> affine = system.lift_source();
  const std::vector<double> jg = system.lift_boundary();
  for (std::size_t k = 0; k < affine.size(); ++k) affine[k] += jg[k];
  SolveResult res = iterate(system, options, jg, affine, true);
  PhaseField w = system.apply_K(res.phi);
  w += sample(system.problem().source, system.space());
  res.w = std::move(w);
  return res;
}

double fixed_point_residual(const TransportSystem& system, const SolveResult& result, double p) {
  return iteration_norm(system.map_nodes(result.state, 1) - result.phi, p);
}

double quadrature_slack(const TransportSystem& system, const SolveResult& result, double p) {
  const PhaseField coarse = system.map_nodes(result.state, 1);
  const PhaseField fine = system.map_nodes(result.state, 2);
  const double q = result.factor_estimate < 1.0 ? result.factor_estimate : 0.0;
  return iteration_norm(fine - coarse, p) / (1.0 - q);
}

std::vector<SpectralEstimate> estimate_spectral_radius(const TransportSystem& system, std::span<const double> ps,
                                                       int n_steps, std::uint64_t seed,
                                                       std::vector<double>* final_state) {
  if (n_steps < 5) throw std::invalid_argument("power iteration needs at least 5 steps");
  std::vector<SpectralEstimate> out;
  for (double p : ps) out.push_back({p, 0.0, 0.0, {}});
  if (system.scattering_free()) {
    for (auto& e : out) e.factors.assign(1, 0.0);
    if (final_state) final_state->assign(system.state_size(), 0.0);
    return out;
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(0.5, 1.5);
  std::vector<double> x(system.state_size());
  for (double& v : x) v = dist(rng);
  std::vector<double> y(x.size());
  std::vector<double> x_norm(ps.size());
  {
    const PhaseField nodes = system.nodes(x);
    for (std::size_t k = 0; k < ps.size(); ++k) x_norm[k] = iteration_norm(nodes, ps[k]);
  }
  for (int n = 0; n < n_steps; ++n) {
    system.apply_LK(x, y);
    const PhaseField nodes = system.nodes(y);
    double scale = 0.0;
    for (double v : y) scale = std::max(scale, std::abs(v));
    if (scale == 0.0) {
      if (n == 0) throw DegenerateStart("scattering annihilates the start field");
      for (auto& e : out) e.factors.push_back(0.0);
      break;
    }
    for (std::size_t k = 0; k < ps.size(); ++k) {
      const double ny = iteration_norm(nodes, ps[k]);
      out[k].factors.push_back(x_norm[k] > 0.0 ? ny / x_norm[k] : 0.0);
      x_norm[k] = ny / scale;
    }
    for (std::size_t k = 0; k < y.size(); ++k) x[k] = y[k] / scale;
  }
  if (final_state) *final_state = x;
  for (auto& e : out) {
    const std::size_t n = e.factors.size();
    const std::size_t first = n >= 3 ? n - 3 : 0;
    double log_sum = 0.0;
    double lo = e.factors[first];
    double hi = e.factors[first];
    bool zero = false;
    for (std::size_t k = first; k < n; ++k) {
      if (e.factors[k] <= 0.0) zero = true;
      else log_sum += std::log(e.factors[k]);
      lo = std::min(lo, e.factors[k]);
      hi = std::max(hi, e.factors[k]);
    }
    e.rho = zero ? 0.0 : std::exp(log_sum / static_cast<double>(n - first));
    e.spread = hi - lo;
  }
  return out;
}

double operator_slack(const TransportSystem& system, std::span<const double> state, double p) {
  if (system.scattering_free()) return 0.0;
  const std::vector<double> zero(system.state_size(), 0.0);
  const PhaseField coarse = system.map_nodes(state, 1) - system.map_nodes(zero, 1);
  const PhaseField fine = system.map_nodes(state, 2) - system.map_nodes(zero, 2);
  const double base = iteration_norm(coarse, p);
  return base > 0.0 ? iteration_norm(fine - coarse, p) / base : 0.0;
}

}  // namespace lprt
