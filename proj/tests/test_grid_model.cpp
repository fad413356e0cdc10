#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "flc/errors.hpp"
#include "flc/grid_model.hpp"
#include "oracles.hpp"

using namespace flc;
using namespace flc::grid;

namespace {

Line conductance_line(int a, int b, double g) {
  Line l;
  l.from = a;
  l.to = b;
  l.series = {g, 0.0};
  return l;
}

// Buses 0,1 are generators, bus 2 is interior; conductance 10 on 0-2 and 1-2.
FullNetwork three_bus() {
  return build_network(3, {conductance_line(0, 2, 10.0), conductance_line(1, 2, 10.0)},
                       {{0, 0}, {0, 0}, {0, 0}}, {0, 1});
}

ReducedNetwork reduced(std::vector<std::vector<double>> g, std::vector<std::vector<double>> b) {
  const auto n = static_cast<Eigen::Index>(g.size());
  ReducedNetwork net{Matrix(n, n), Matrix(n, n)};
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < n; ++k) {
      net.conductance(i, k) = g[i][k];
      net.susceptance(i, k) = b[i][k];
    }
  return net;
}

std::vector<GeneratorParams> gens(const std::vector<double>& pm, double emf = 1.0) {
  std::vector<GeneratorParams> out;
  for (double p : pm) {
    GeneratorParams g;
    g.inertia = 0.1;
    g.mech_power = p;
    g.emf = emf;
    out.push_back(g);
  }
  return out;
}

ReducedNetwork random_reduced(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ReducedNetwork net{Matrix::Zero(n, n), Matrix::Zero(n, n)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = i; k < n; ++k) {
      const double g = 0.2 * std::abs(u(rng));
      const double b = i == k ? -5.0 : 2.0 + u(rng);
      net.conductance(i, k) = net.conductance(k, i) = g;
      net.susceptance(i, k) = net.susceptance(k, i) = b;
    }
  return net;
}

}  // namespace

TEST_CASE("kron reduction of the three-bus conductance network") {
  const auto full = three_bus();
  CHECK(full.y_real(0, 0) == 10.0);
  CHECK(full.y_real(2, 2) == 20.0);
  CHECK(full.y_real(0, 2) == -10.0);
  const auto red = kron_reduce(full);
  CHECK(red.conductance(0, 0) == doctest::Approx(5.0).epsilon(1e-14));
  CHECK(red.conductance(0, 1) == doctest::Approx(-5.0).epsilon(1e-14));
  CHECK(red.conductance(1, 1) == doctest::Approx(5.0).epsilon(1e-14));
  CHECK(red.susceptance.cwiseAbs().maxCoeff() == 0.0);
  // Negative off-diagonal conductance is reported, never rejected.
  CHECK_FALSE(network_warnings(red).empty());
}

TEST_CASE("kron reduction with nothing to eliminate is the identity and idempotent") {
  std::mt19937_64 rng(3);
  auto rn = oracle::random_network(rng, 4, 4);
  std::sort(rn.generators.begin(), rn.generators.end());
  const auto full = build_network(rn.buses, rn.lines, rn.shunts, rn.generators);
  const auto red = kron_reduce(full);
  CHECK(red.conductance == full.y_real);
  CHECK(red.susceptance == full.y_imag);
  auto copy = full;
  copy.y_real = red.conductance;
  copy.y_imag = red.susceptance;
  const auto twice = kron_reduce(copy);
  CHECK(twice.conductance == red.conductance);
  CHECK(twice.susceptance == red.susceptance);
}

TEST_CASE("admittance stamping matches the pi-model oracle") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto rn = oracle::random_network(rng, 8, 3);
    const auto full = build_network(rn.buses, rn.lines, rn.shunts, rn.generators);
    const auto y = oracle::admittance(rn.buses, rn.lines, rn.shunts);
    for (std::size_t r = 0; r < rn.buses; ++r)
      for (std::size_t c = 0; c < rn.buses; ++c) {
        CHECK(std::abs(full.y_real(r, c) - y[r][c].real()) < 1e-12);
        CHECK(std::abs(full.y_imag(r, c) - y[r][c].imag()) < 1e-12);
      }
  }
}

TEST_CASE("kron reduction matches the full-network solve at the boundary") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t buses = 6;
    const auto rn = oracle::random_network(rng, buses, 3);
    const auto full = build_network(rn.buses, rn.lines, rn.shunts, rn.generators);
    const auto red = kron_reduce(full);
    CHECK(red.conductance == red.conductance.transpose());
    CHECK(red.susceptance == red.susceptance.transpose());

    std::vector<oracle::cd> ig(3);
    for (auto& c : ig) c = {u(rng), u(rng)};
    const auto v = oracle::full_solve(full, ig);
    oracle::CMat yr(3, std::vector<oracle::cd>(3));
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 3; ++k) yr[i][k] = {red.conductance(i, k), red.susceptance(i, k)};
    const auto vg = oracle::solve(yr, ig);
    for (int g = 0; g < 3; ++g) CHECK(std::abs(vg[g] - v[rn.generators[g]]) < 1e-9);
  }
}

TEST_CASE("kron reduction errors") {
  // Interior bus 2 floats with no branch and no shunt.
  const auto floating = build_network(3, {conductance_line(0, 1, 1.0)}, {{0, 0}, {0, 0}, {0, 0}}, {0, 1});
  CHECK_THROWS_AS(kron_reduce(floating), Error);
  try {
    kron_reduce(floating);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SingularInterior);
  }
  const auto none = build_network(2, {conductance_line(0, 1, 1.0)}, {{0, 0}, {0, 0}}, {});
  try {
    kron_reduce(none);
    FAIL("expected EmptyGeneratorSet");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyGeneratorSet);
  }
  try {
    kron_reduce_grounded(three_bus(), 0);
    FAIL("expected FaultOnGeneratorInternalNode");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::FaultOnGeneratorInternalNode);
  }
  try {
    without_line(three_bus(), 0, 1);
    FAIL("expected InvalidScenario");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidScenario);
  }
  CHECK(has_line(three_bus(), 2, 0));
}

TEST_CASE("validate rejects asymmetric reduced matrices") {
  auto net = reduced({{1, 0.5}, {0.5, 1}}, {{-2, 1}, {1, -2}});
  CHECK_NOTHROW(validate(net));
  net.susceptance(0, 1) = 1.0 + 1e-15;
  CHECK_THROWS_AS(validate(net), Error);
}

TEST_CASE("electrical power worked examples") {
  const auto net = reduced({{0.1, 0.05}, {0.05, 0.1}}, {{0, 0.5}, {0.5, 0}});
  Vector delta(2);
  delta << 0.1, 0.0;
  Vector e = Vector::Ones(2);
  const auto pe = electrical_power(delta, net, e);
  CHECK(pe[0] == doctest::Approx(0.1 + 0.05 * std::cos(0.1) + 0.5 * std::sin(0.1)).epsilon(1e-14));
  CHECK(pe[0] == doctest::Approx(0.1996669).epsilon(1e-6));

  const auto params = gens({0.3, 0.3});
  const auto pa = accelerating_power(delta, params, net);
  CHECK(pa[0] == doctest::Approx(0.1003331).epsilon(1e-6));

  // G = 0 and equal angles: every term vanishes.
  const auto lossless = reduced({{0, 0}, {0, 0}}, {{-3, 1}, {1, -3}});
  Vector flat = Vector::Constant(2, 0.7);
  CHECK(electrical_power(flat, lossless, e).cwiseAbs().maxCoeff() == 0.0);
  const auto zero_pm = gens({0.0, 0.0});
  CHECK(accelerating_power(flat, zero_pm, lossless).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("electrical power matches the double-loop oracle") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const auto net = random_reduced(rng, 4);
    Vector delta(4), e(4);
    std::vector<double> d(4), ev(4);
    std::vector<std::vector<double>> g(4, std::vector<double>(4)), b = g;
    for (int i = 0; i < 4; ++i) {
      d[i] = delta[i] = u(rng);
      ev[i] = e[i] = 1.0 + 0.1 * u(rng);
      for (int k = 0; k < 4; ++k) {
        g[i][k] = net.conductance(i, k);
        b[i][k] = net.susceptance(i, k);
      }
    }
    const auto pe = electrical_power(delta, net, e);
    const auto ref = oracle::pe(d, g, b, ev);
    for (int i = 0; i < 4; ++i) CHECK(std::abs(pe[i] - ref[i]) < 1e-12);
  }
}

TEST_CASE("electrical power properties") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  SUBCASE("uniform shift invariance, exact on dyadic angles") {
    const auto net = random_reduced(rng, 5);
    Vector delta(5);
    delta << 0.5, -0.25, 0.125, 0.75, -0.5;
    const Vector e = Vector::Ones(5);
    const auto base = electrical_power(delta, net, e);
    const auto shifted = electrical_power((delta.array() + 0.25).matrix(), net, e);
    CHECK(base == shifted);
  }
  SUBCASE("uniform shift invariance on arbitrary angles") {
    for (int trial = 0; trial < 20; ++trial) {
      const auto net = random_reduced(rng, 5);
      Vector delta(5);
      for (auto& x : delta) x = u(rng);
      const Vector e = Vector::Ones(5);
      const double c = 3.0 * u(rng);
      const auto diff = electrical_power(delta, net, e) - electrical_power((delta.array() + c).matrix(), net, e);
      CHECK(diff.cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  SUBCASE("lossless networks conserve power") {
    for (int trial = 0; trial < 20; ++trial) {
      auto net = random_reduced(rng, 6);
      net.conductance.setZero();
      Vector delta(6), e(6);
      for (int i = 0; i < 6; ++i) {
        delta[i] = 2.0 * u(rng);
        e[i] = 1.0 + 0.2 * u(rng);
      }
      CHECK(std::abs(electrical_power(delta, net, e).sum()) < 1e-12);
    }
  }
}

TEST_CASE("electrical power jacobian matches finite differences") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const auto net = random_reduced(rng, 4);
  Vector delta(4), e(4);
  for (int i = 0; i < 4; ++i) {
    delta[i] = u(rng);
    e[i] = 1.0 + 0.1 * u(rng);
  }
  const auto jac = electrical_power_jacobian(delta, net, e);
  const double h = 1e-6;
  for (int k = 0; k < 4; ++k) {
    Vector up = delta, dn = delta;
    up[k] += h;
    dn[k] -= h;
    const Vector col = (electrical_power(up, net, e) - electrical_power(dn, net, e)) / (2 * h);
    for (int i = 0; i < 4; ++i) CHECK(std::abs(jac(i, k) - col[i]) < 1e-7);
  }
}

TEST_CASE("equilibrium solve") {
  SUBCASE("zero injection on a lossless network stays flat") {
    const auto net = reduced({{0, 0, 0}, {0, 0, 0}, {0, 0, 0}}, {{-4, 2, 2}, {2, -4, 2}, {2, 2, -4}});
    const auto d = solve_equilibrium(gens({0, 0, 0}), net);
    CHECK(d.cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("two-generator closed form") {
    const double b = 2.0, p = 0.6, e1 = 1.1, e2 = 0.95;
    const auto net = reduced({{0, 0}, {0, 0}}, {{-b, b}, {b, -b}});
    auto params = gens({p, -p});
    params[0].emf = e1;
    params[1].emf = e2;
    const auto d = solve_equilibrium(params, net);
    CHECK(d[1] == 0.0);
    CHECK(std::abs(e1 * e2 * b * std::sin(d[0]) - p) <= EquilibriumOptions{}.tolerance);
    CHECK(d[0] == doctest::Approx(std::asin(p / (e1 * e2 * b))).epsilon(1e-10));
  }
  SUBCASE("manufactured equilibria round-trip") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
      const auto net = random_reduced(rng, 4);
      Vector d0(4), e(4);
      for (int i = 0; i < 4; ++i) {
        d0[i] = 0.3 * u(rng);
        e[i] = 1.0 + 0.05 * u(rng);
      }
      const auto pm = manufacture_equilibrium(d0, e, net);
      std::vector<GeneratorParams> params = gens({0, 0, 0, 0});
      for (int i = 0; i < 4; ++i) {
        params[i].mech_power = pm[i];
        params[i].emf = e[i];
      }
      CHECK(accelerating_power(d0, params, net).cwiseAbs().maxCoeff() == 0.0);
      const auto d = solve_equilibrium(params, net);
      const Vector expected = (d0.array() - d0[3]).matrix();
      CHECK((d - expected).cwiseAbs().maxCoeff() < 1e-8);
      CHECK(accelerating_power(d, params, net).cwiseAbs().maxCoeff() <= 1e-10);
    }
  }
  SUBCASE("infeasible transfer reports the residual") {
    const auto net = reduced({{0, 0}, {0, 0}}, {{-1, 1}, {1, -1}});
    try {
      solve_equilibrium(gens({1.5, -1.5}), net);
      FAIL("expected NoConvergence");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::NoConvergence);
      CHECK(std::string(e.what()).find("residual") != std::string::npos);
    }
  }
}

TEST_CASE("manufacture_equilibrium at the flat start returns conductance row sums") {
  const auto lossless = reduced({{0, 0}, {0, 0}}, {{-3, 1}, {1, -3}});
  CHECK(manufacture_equilibrium(Vector::Zero(2), Vector::Ones(2), lossless).cwiseAbs().maxCoeff() == 0.0);
  const auto net = reduced({{0.3, 0.1}, {0.1, 0.2}}, {{-3, 1}, {1, -3}});
  Vector e(2);
  e << 1.1, 0.9;
  const auto pm = manufacture_equilibrium(Vector::Zero(2), e, net);
  CHECK(pm[0] == doctest::Approx(1.1 * 1.1 * 0.3 + 1.1 * 0.9 * 0.1).epsilon(1e-14));
  CHECK(pm[1] == doctest::Approx(0.9 * 1.1 * 0.1 + 0.9 * 0.9 * 0.2).epsilon(1e-14));
}

TEST_CASE("generator parameter validation") {
  auto params = gens({0.1, 0.2});
  CHECK_NOTHROW(validate(std::span<const GeneratorParams>(params)));
  params[1].inertia = 0.0;
  CHECK_THROWS_AS(validate(std::span<const GeneratorParams>(params)), Error);
  params[1].inertia = 1.0;
  params[0].beta = -1.0;
  CHECK_THROWS_AS(validate(std::span<const GeneratorParams>(params)), Error);
}
