#include <doctest.h>

#include <cmath>

#include "flc/control.hpp"
#include "flc/errors.hpp"
#include "flc/experiments.hpp"
#include "support.hpp"

using namespace flc;
using control::ControllerMode;
using grid::Vector;

namespace {

dyn::Trajectory synthetic(double dt, double t_max, double t_fault, const std::function<double(double)>& omega) {
  dyn::Trajectory traj;
  traj.dt = dt;
  traj.t_fault = t_fault;
  const auto steps = static_cast<std::size_t>(std::lround(t_max / dt));
  for (std::size_t k = 0; k <= steps; ++k) {
    dyn::TrajectoryRecord r;
    r.t = static_cast<double>(k) * dt;
    r.delta = Vector::Zero(1);
    r.omega = Vector::Constant(1, omega(r.t));
    r.pu = Vector::Zero(1);
    r.pa = Vector::Zero(1);
    traj.records.push_back(r);
  }
  return traj;
}

exp::SweepSpec desk_spec() {
  const auto& cfg = support::desk3();
  exp::SweepSpec spec;
  spec.faults = {*config::find_fault(cfg, "DF2")};
  spec.modes = {ControllerMode::Dpfl};
  spec.levels = {0.0, 100.0};
  spec.dt = 2e-3;
  spec.t_max = 5.0;
  spec.band = cfg.simulation.band;
  spec.base_power_kw = cfg.output.base_power_kw;
  spec.time_scale = 100.0;
  return spec;
}

}  // namespace

TEST_CASE("stability time") {
  const exp::StabilityCriterion crit{0.01, 30.0};
  const auto flat = synthetic(1e-3, 5.0, 0.5, [](double) { return 0.0; });
  CHECK(exp::stability_time(flat, 0, crit).seconds == 0.0);
  CHECK_FALSE(exp::stability_time(flat, 0, crit).unstable);

  const auto decay = synthetic(1e-3, 5.0, 0.5, [](double t) { return t < 0.5 ? 0.0 : 0.02 * std::exp(-(t - 0.5)); });
  const auto r = exp::stability_time(decay, 0, crit);
  CHECK(std::abs(r.seconds - std::log(2.0)) <= 1e-3 + 1e-12);
  CHECK_FALSE(r.unstable);

  // Excursions before the fault do not count.
  const auto early = synthetic(1e-3, 2.0, 0.5, [](double t) { return t < 0.4 ? 1.0 : 0.0; });
  CHECK(exp::stability_time(early, 0, crit).seconds == 0.0);

  const auto never = synthetic(1e-3, 2.0, 0.5, [](double t) { return 0.05 * std::sin(10 * t) + 0.02; });
  const auto u = exp::stability_time(never, 0, crit);
  CHECK(u.unstable);
  CHECK(u.seconds == 30.0);

  CHECK_THROWS_AS(exp::stability_time(dyn::Trajectory{}, 0, crit), Error);
  CHECK_THROWS_AS(exp::stability_time(flat, 1, crit), Error);
}

TEST_CASE("stability time shrinks as the band widens") {
  const auto decay = synthetic(1e-3, 10.0, 0.5, [](double t) { return t < 0.5 ? 0.0 : 0.3 * std::exp(-0.7 * (t - 0.5)) * std::cos(3 * t); });
  double prev = 1e9;
  for (double band : {0.001, 0.003, 0.01, 0.03, 0.1, 0.3}) {
    const double s = exp::stability_time(decay, 0, {band, 10.0}).seconds;
    CHECK(s <= prev);
    prev = s;
  }
}

TEST_CASE("group stability time") {
  dyn::Trajectory traj;
  traj.dt = 1.0;
  traj.t_fault = 0.0;
  // Generator 0 leaves the band until t = 4, generator 1 until t = 6.
  for (int k = 0; k <= 10; ++k) {
    dyn::TrajectoryRecord r;
    r.t = k;
    r.delta = Vector::Zero(3);
    r.omega = Vector::Zero(3);
    r.omega[0] = k < 4 ? 1.0 : 0.0;
    r.omega[1] = k < 6 ? 1.0 : 0.0;
    r.omega[2] = 1.0;
    r.pu = r.pa = Vector::Zero(3);
    traj.records.push_back(r);
  }
  control::ControlAssignment a;
  a.modes = {ControllerMode::Flc, ControllerMode::Flc, ControllerMode::Cpfl};
  const exp::StabilityCriterion crit{0.01, 10.0};
  const auto g = exp::group_stability_time(traj, a, ControllerMode::Flc, crit);
  CHECK(g.mean_seconds == 5.0);
  CHECK(g.unstable_count == 0);
  CHECK(exp::group_stability_time(traj, a, ControllerMode::Cpfl, crit).unstable_count == 1);
  try {
    exp::group_stability_time(traj, a, ControllerMode::Dpfl, crit);
    FAIL("expected EmptyGroup");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyGroup);
  }
}

TEST_CASE("energy metrics") {
  dyn::Trajectory traj;
  traj.dt = 1.0;
  for (double p : {1.0, -2.0, 3.0}) {
    dyn::TrajectoryRecord r;
    r.delta = r.omega = r.pa = Vector::Zero(2);
    r.pu = Vector::Constant(2, p);
    traj.records.push_back(r);
  }
  const std::vector<std::size_t> first{0};
  const auto e = exp::energy_metrics(traj, first, 1.0);
  CHECK(e.injected == 4.0);
  CHECK(e.stored == 2.0);
  const std::vector<std::size_t> both{0, 1};
  const auto scaled = exp::energy_metrics(traj, both, 100.0);
  CHECK(scaled.injected == 800.0);
  CHECK(scaled.stored == 400.0);
  CHECK_THROWS_AS(exp::energy_metrics(traj, std::vector<std::size_t>{}, 1.0), Error);
}

TEST_CASE("energy decomposes into injected minus stored") {
  const auto& cfg = support::desk3();
  const auto bundle = control::make_bundle(control::uniform_assignment(3, ControllerMode::Dpfl), nullptr, 100.0);
  const auto traj = dyn::simulate(cfg.system.full, cfg.system.generators, config::find_fault(cfg, "DF1"), bundle, 2e-3, 5.0);
  for (std::size_t i = 0; i < 3; ++i) {
    const std::vector<std::size_t> g{i};
    const auto e = exp::energy_metrics(traj, g, 1.0);
    double net = 0.0, abs = 0.0;
    for (const auto& r : traj.records) {
      net += r.pu[static_cast<Eigen::Index>(i)] * traj.dt;
      abs += std::abs(r.pu[static_cast<Eigen::Index>(i)]) * traj.dt;
    }
    CHECK(e.injected - e.stored == doctest::Approx(net).epsilon(1e-12));
    CHECK(e.injected + e.stored == doctest::Approx(abs).epsilon(1e-12));
    CHECK(e.injected >= 0.0);
    CHECK(e.stored >= 0.0);
  }
}

TEST_CASE("dataset generation") {
  const auto& cfg = support::desk3();
  const auto fault = config::find_fault(cfg, "DF1");
  exp::DatasetOptions opts;
  opts.dt = 1e-3;
  opts.t_max = 100.0;
  const auto data = exp::generate_dataset(cfg.system.full, cfg.system.generators, fault, opts);
  REQUIRE(data.shards.size() == 3);
  CHECK(data.time_scale == 100.0);
  for (const auto& s : data.shards) CHECK(s.size() == 100001);

  const dyn::PhaseNetworks phases(cfg.system.full, fault);
  const auto& eq = cfg.system.equilibrium;
  for (std::size_t k : {0u, 250u, 499u, 500u, 600u, 749u, 750u, 5000u, 100000u}) {
    const double t = static_cast<double>(k) * 1e-3;
    const auto pa = grid::accelerating_power(eq, cfg.system.generators, phases.at(t));
    for (std::size_t i = 0; i < 3; ++i) {
      const auto& s = data.shards[i][k];
      // 100% CPFL from rest keeps the system at rest.
      CHECK(s.input[0] == 0.0);
      CHECK(s.input[1] == 0.0);
      CHECK(s.input[2] == doctest::Approx(std::clamp((t - 0.5) / 100.0, 0.0, 1.0)).epsilon(1e-12));
      CHECK(std::abs(s.target[0] - pa[static_cast<Eigen::Index>(i)]) <= 1e-12);
      if (t < 0.5) CHECK(std::abs(s.target[0]) <= 1e-12);
    }
  }

  const auto split = exp::split_probe(data.shards, 10);
  CHECK(split.probe.size() == 3 * 10001);
  CHECK(split.training[0].size() == 90000);
  CHECK(exp::split_probe(data.shards, 0).probe.empty());
}

TEST_CASE("penetration sweep") {
  const auto& cfg = support::desk3();
  auto spec = desk_spec();
  const auto res = exp::penetration_sweep(cfg.system.full, cfg.system.generators, spec);
  REQUIRE(res.distributed.size() == 2);
  // Level 0 summarizes the all-CPFL group; 100% has no CPFL complement.
  CHECK(res.distributed[0].group == "CPFL");
  CHECK(res.distributed[0].stab_time_s == 0.0);
  CHECK(res.distributed[0].unstable == 0);
  CHECK(res.distributed[1].group == "DPFL");
  CHECK(res.distributed[1].stab_time_s > 0.0);
  CHECK(res.cpfl.empty());

  SUBCASE("row count and determinism") {
    spec.faults.push_back(*config::find_fault(cfg, "DF3"));
    spec.modes = {ControllerMode::Flc, ControllerMode::Dpfl};
    spec.levels = {0.0, 100.0 / 3.0, 200.0 / 3.0};
    spec.model = std::make_shared<const kan::ChebyKanModel>(kan::ChebyKanModel::zeros(kan::uniform_architecture({3, 32, 1}, 5)));
    const auto a = exp::penetration_sweep(cfg.system.full, cfg.system.generators, spec);
    CHECK(a.distributed.size() == 2 * 2 * 3);
    CHECK(a.cpfl.size() == 2 * 2 * 2);
    spec.jobs = 4;
    const auto b = exp::penetration_sweep(cfg.system.full, cfg.system.generators, spec);
    CHECK(a.distributed == b.distributed);
    CHECK(a.cpfl == b.cpfl);
    CHECK(exp::results_csv(a.distributed) == exp::results_csv(b.distributed));

    // The zero model reproduces DPFL row for row.
    for (std::size_t f = 0; f < 2; ++f)
      for (std::size_t l = 0; l < 3; ++l) {
        auto flc = a.distributed[f * 6 + l];
        const auto& dpfl = a.distributed[f * 6 + 3 + l];
        CHECK(flc.mode == ControllerMode::Flc);
        CHECK(dpfl.mode == ControllerMode::Dpfl);
        CHECK(flc.stab_time_s == dpfl.stab_time_s);
        CHECK(flc.p_inj == dpfl.p_inj);
        CHECK(flc.p_stor == dpfl.p_stor);
      }
  }

  SUBCASE("failed cells become error rows") {
    spec.levels = {50.0};
    const auto bad = exp::penetration_sweep(cfg.system.full, cfg.system.generators, spec);
    REQUIRE(bad.distributed.size() == 1);
    CHECK_FALSE(bad.distributed[0].error.empty());
    const auto csv = exp::results_csv(bad.distributed);
    CHECK(csv.find("DF2,DPFL,50,DPFL,nan,error,nan,nan") != std::string::npos);

    spec.levels = {100.0};
    spec.modes = {ControllerMode::Flc};
    const auto no_model = exp::penetration_sweep(cfg.system.full, cfg.system.generators, spec);
    CHECK_FALSE(no_model.distributed[0].error.empty());
  }

  CHECK(exp::results_csv(res.distributed).rfind(exp::kResultsHeader, 0) == 0);
}
