#include <cmath>
#include <random>

#include "doctest.h"
#include "lprt/errors.hpp"
#include "lprt/phase_space.hpp"
#include "support.hpp"

using namespace lprt;
using lprt::test::kPi;

namespace {

PhaseField constant_field(std::shared_ptr<const PhaseSpace> space, double c) { return PhaseField(std::move(space), c); }

NodeWeight unit_weight() {
  return [](std::size_t, std::size_t) { return 1.0; };
}

// Composite Simpson on [a, b] with n (even) intervals.
template <class F>
double simpson(F f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

}  // namespace

TEST_SUITE("phase_space") {
  TEST_CASE("constant fields") {
    const auto space = test::slab_space(8);
    CHECK(weighted_lp_norm(constant_field(space, 2.0), unit_weight(), 2.0) == doctest::Approx(2.0).epsilon(1e-14));
    const auto ball = test::ball_space(6, 3);
    CHECK(weighted_lp_norm(constant_field(ball, -1.5), chord_power(ball, -1.0), kInfinity) == 1.5);
    CHECK(lp_norm(constant_field(ball, 0.0), 1.0) == 0.0);
  }

  TEST_CASE("exponent below one is rejected") {
    const auto space = test::slab_space(4);
    CHECK_THROWS_AS(lp_norm(constant_field(space, 1.0), 0.5), InvalidExponent);
  }

  TEST_CASE("integral of the inverse chord over the ball") {
    // int 1/l over ball x sphere = int over inflow of |n.v| = pi * 4 pi
    const double exact = 4.0 * kPi * kPi;
    const auto space = test::ball_space(10, 6);
    const double nodes = weighted_lp_norm(constant_field(space, 1.0), chord_power(space, -1.0), 1.0);
    CHECK(std::abs(nodes - exact) / exact < 0.03);

    const auto q = std::make_shared<const BoundaryQuadrature>(
        inflow_quadrature(space->domain(), space->velocities(), 16));
    const BoundaryField g{q, std::vector<double>(q->size(), 1.0)};
    CHECK(std::abs(boundary_lp_norm(g, 1.0) - exact) / exact < 1e-2);
  }

  TEST_CASE("boundary norms") {
    const auto q = std::make_shared<const BoundaryQuadrature>(
        inflow_quadrature(Domain::ball({0, 0, 0}, 1.0), VelocityQuadrature::sphere(3), 6));
    CHECK(boundary_lp_norm({q, std::vector<double>(q->size(), 0.0)}, 2.0) == 0.0);
    CHECK(boundary_lp_norm({q, std::vector<double>(q->size(), 3.0)}, kInfinity) == 3.0);
    const double one = boundary_lp_norm({q, std::vector<double>(q->size(), 1.0)}, 1.0);
    CHECK(boundary_lp_norm({q, std::vector<double>(q->size(), 2.0)}, 2.0) ==
          doctest::Approx(2.0 * std::sqrt(one)).epsilon(1e-13));
    CHECK_THROWS_AS(boundary_lp_norm({q, std::vector<double>(q->size(), 1.0)}, 0.9), InvalidExponent);
  }

  TEST_CASE("energy norm reduces to the weighted norm when dphi vanishes") {
    const auto space = test::ball_space(5, 3);
    PhaseField phi(space);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (double& x : phi.values()) x = u(rng);
    const PhaseField zero(space);
    for (double p : {1.0, 2.0, 3.0}) {
      CHECK(energy_norm(phi, zero, p) ==
            doctest::Approx(weighted_lp_norm(phi, chord_power(space, -1.0), p)).epsilon(1e-13));
    }
    CHECK(energy_norm(zero, zero, 2.0) == 0.0);
    CHECK(energy_norm(zero, zero, kInfinity) == 0.0);
  }

  TEST_CASE("energy norm rejects fields on different grids") {
    const PhaseField a(test::slab_space(4));
    const PhaseField b(test::slab_space(4));
    CHECK_THROWS_AS(energy_norm(a, b, 2.0), GridMismatch);
  }

  TEST_CASE("energy norm of the pure-absorption slab solution") {
    // phi = exp(-z), dphi = -exp(-z), chord 1: norm^2 = 2 int_0^1 exp(-2z) dz
    const int layers = 2048;
    const auto space = test::slab_space(layers);
    PhaseField phi(space), dphi(space);
    for (std::size_t i = 0; i < space->spatial_size(); ++i) {
      const double z = space->grid().point(i).z;
      phi(i, 0) = std::exp(-z);
      dphi(i, 0) = -std::exp(-z);
    }
    const double oracle = std::sqrt(simpson([](double z) { return 2.0 * std::exp(-2.0 * z); }, 0.0, 1.0, 2000));
    CHECK(std::abs(energy_norm(phi, dphi, 2.0) - oracle) < 1e-6);
    CHECK(energy_norm(phi, dphi, kInfinity) == doctest::Approx(std::exp(-0.5 / layers)).epsilon(1e-14));
  }

  TEST_CASE("log-convexity of the weighted norms") {
    const auto space = test::ball_space(5, 3);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int trial = 0; trial < 20; ++trial) {
      PhaseField phi(space);
      for (double& x : phi.values()) x = u(rng);
      const auto w = chord_power(space, -1.0);
      const double n1 = weighted_lp_norm(phi, w, 1.0);
      const double n2 = weighted_lp_norm(phi, w, 2.0);
      const double ninf = weighted_lp_norm(phi, w, kInfinity);
      CHECK(n2 <= std::sqrt(n1 * ninf) * (1 + 1e-12));
    }
  }

  TEST_CASE("sphere rule") {
    for (int order : {2, 4, 7}) {
      const auto vq = VelocityQuadrature::sphere(order);
      CHECK(vq.size() == static_cast<std::size_t>(2 * order * order));
      CHECK(vq.total_weight() == doctest::Approx(4.0 * kPi).epsilon(1e-13));
      CHECK(vq.antipodally_closed());
      Vec3 first{};
      for (const auto& n : vq.nodes()) first = first + n.weight * n.direction;
      CHECK(norm(first) < 1e-10);
      for (std::size_t m = 0; m < vq.size(); ++m) {
        const auto a = vq.antipode(m);
        REQUIRE(a.has_value());
        CHECK(norm(vq[*a].velocity + vq[m].velocity) < 1e-14);
      }
    }
  }

  TEST_CASE("shell rule carries the radial Jacobian") {
    const auto vq = VelocityQuadrature::shell(4, 0.5, 1.0, 3);
    CHECK(vq.total_weight() == doctest::Approx(4.0 * kPi * (1.0 - 0.125) / 3.0).epsilon(1e-12));
  }

  TEST_CASE("cut-cell volumes") {
    const Domain ball = Domain::ball({0, 0, 0}, 1.0);
    const auto grid = SpatialGrid::lattice(ball, 10);
    CHECK(std::abs(grid.total_volume() - 4.0 * kPi / 3.0) / (4.0 * kPi / 3.0) < 1e-3);
    const auto box = SpatialGrid::lattice(Domain::box({0, 0, 0}, {2, 1, 1}), 8);
    CHECK(box.total_volume() == doctest::Approx(2.0).epsilon(1e-13));
    CHECK(box.cells()[0] == 8);
  }

  TEST_CASE("field arithmetic requires a shared space") {
    const auto space = test::slab_space(4);
    PhaseField a(space, 1.0);
    const PhaseField b(space, 2.0);
    a.axpy(3.0, b);
    CHECK(a(2, 0) == 7.0);
    CHECK_THROWS_AS(a += PhaseField(test::slab_space(4)), GridMismatch);
  }
}
