#include "flc/dynamics.hpp"

#include <cmath>
#include <sstream>

#include "flc/csv_io.hpp"
#include "flc/errors.hpp"

namespace flc::dyn {

namespace {

bool all_finite(const Vector& v) { return v.allFinite(); }

// Number of whole steps of `dt` in `span`; throws when `dt` does not divide it.
std::size_t whole_steps(double span, double dt, const char* what) {
  const double ratio = span / dt;
  const double k = std::round(ratio);
  if (std::abs(ratio - k) > 1e-6) {
    std::ostringstream os;
    os << what << " (" << span << " s) is not a multiple of dt (" << dt << " s)";
    raise(ErrorKind::InvalidScenario, os.str());
  }
  return static_cast<std::size_t>(k);
}

}  // namespace

void validate(const FaultScenario& scenario, const grid::FullNetwork& full) {
  if (!(scenario.t_fault >= 0.0 && scenario.t_fault < scenario.t_clear)) {
    raise(ErrorKind::InvalidScenario, "fault " + scenario.id + ": need 0 <= t_fault < t_clear");
  }
  if (scenario.faulted_bus < 0 || static_cast<std::size_t>(scenario.faulted_bus) >= full.bus_count) {
    raise(ErrorKind::InvalidScenario, "fault " + scenario.id + ": faulted bus out of range");
  }
  if (!grid::has_line(full, scenario.tripped_line.first, scenario.tripped_line.second)) {
    raise(ErrorKind::InvalidScenario, "fault " + scenario.id + ": tripped line not in network");
  }
}

grid::ReducedNetwork network_for_phase(const FaultScenario& scenario, double t,
                                       const grid::FullNetwork& full,
                                       const grid::KronOptions& opts) {
  validate(scenario, full);
  if (t < scenario.t_fault) return grid::kron_reduce(full, opts);
  if (t < scenario.t_clear) return grid::kron_reduce_grounded(full, scenario.faulted_bus, opts);
  return grid::kron_reduce(
      grid::without_line(full, scenario.tripped_line.first, scenario.tripped_line.second), opts);
}

PhaseNetworks::PhaseNetworks(grid::ReducedNetwork constant)
    : pre_(std::move(constant)), during_(pre_), post_(pre_) {}

PhaseNetworks::PhaseNetworks(const grid::FullNetwork& full,
                             const std::optional<FaultScenario>& scenario,
                             const grid::KronOptions& opts) {
  pre_ = grid::kron_reduce(full, opts);
  if (!scenario) {
    during_ = pre_;
    post_ = pre_;
    return;
  }
  validate(*scenario, full);
  during_ = grid::kron_reduce_grounded(full, scenario->faulted_bus, opts);
  post_ = grid::kron_reduce(
      grid::without_line(full, scenario->tripped_line.first, scenario->tripped_line.second), opts);
  has_fault_ = true;
  t_fault_ = scenario->t_fault;
  t_clear_ = scenario->t_clear;
}

const grid::ReducedNetwork& PhaseNetworks::at(double t) const {
  if (!has_fault_ || t < t_fault_) return pre_;
  if (t < t_clear_) return during_;
  return post_;
}

SystemState rk4_step(const SystemState& state, double dt, const DerivativeFn& derivs) {
  const double h = dt;
  const Derivative k1 = derivs(state.t, state.delta, state.omega);
  const Derivative k2 = derivs(state.t + h / 2, state.delta + h / 2 * k1.d_delta,
                               state.omega + h / 2 * k1.d_omega);
  const Derivative k3 = derivs(state.t + h / 2, state.delta + h / 2 * k2.d_delta,
                               state.omega + h / 2 * k2.d_omega);
  const Derivative k4 =
      derivs(state.t + h, state.delta + h * k3.d_delta, state.omega + h * k3.d_omega);

  SystemState next;
  next.t = state.t + h;
  next.delta = state.delta + h / 6 * (k1.d_delta + 2 * k2.d_delta + 2 * k3.d_delta + k4.d_delta);
  next.omega = state.omega + h / 6 * (k1.d_omega + 2 * k2.d_omega + 2 * k3.d_omega + k4.d_omega);
  if (!all_finite(next.delta) || !all_finite(next.omega)) {
    raise(ErrorKind::NonFiniteState, "integration produced a non-finite state");
  }
  return next;
}

Trajectory simulate(const PhaseNetworks& phases, std::span<const grid::GeneratorParams> params,
                    const control::ControllerBundle& controllers, double dt, double t_max,
                    const SimulationOptions& opts) {
  const std::size_t n = params.size();
  if (n != phases.size() || controllers.assignment.modes.size() != n) {
    raise(ErrorKind::DimensionMismatch, "simulate: generator counts disagree");
  }
  if (!(dt > 0.0) || !(t_max >= 0.0)) raise(ErrorKind::InvalidScenario, "simulate: need dt > 0, t_max >= 0");
  grid::validate(params);
  controllers.validate();

  const std::size_t steps = whole_steps(t_max, dt, "t_max");
  std::size_t fault_step = steps + 1;
  std::size_t clear_step = steps + 1;
  if (phases.has_fault()) {
    fault_step = whole_steps(phases.t_fault(), dt, "t_fault");
    clear_step = whole_steps(phases.t_clear(), dt, "t_clear");
  }
  const auto network_at_step = [&](std::size_t k) -> const grid::ReducedNetwork& {
    if (k < fault_step) return phases.pre_fault();
    if (k < clear_step) return phases.faulted();
    return phases.post_fault();
  };

  SystemState state;
  if (opts.initial) {
    state = *opts.initial;
    state.t = 0.0;
  } else {
    state.delta = grid::solve_equilibrium(params, phases.pre_fault());
    state.omega = Vector::Zero(static_cast<Eigen::Index>(n));
  }
  if (static_cast<std::size_t>(state.delta.size()) != n ||
      static_cast<std::size_t>(state.omega.size()) != n) {
    raise(ErrorKind::DimensionMismatch, "simulate: initial state has wrong length");
  }

  Vector inertia(static_cast<Eigen::Index>(n)), damping(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    inertia[static_cast<Eigen::Index>(i)] = params[i].inertia;
    damping[static_cast<Eigen::Index>(i)] = params[i].damping;
  }
  const control::TimeFeature feature{phases.has_fault() ? phases.t_fault() : 0.0,
                                     controllers.time_scale};

  Trajectory traj;
  traj.dt = dt;
  traj.t_fault = phases.has_fault() ? phases.t_fault() : 0.0;
  traj.records.reserve(steps + 1);

  for (std::size_t k = 0;; ++k) {
    const auto& net = network_at_step(k);
    state.t = static_cast<double>(k) * dt;
    Vector pa = grid::accelerating_power(state.delta, params, net);
    Vector pu = control::control_power(controllers, state.delta, state.omega, pa, params,
                                       feature(state.t));
    traj.records.push_back({state.t, state.delta, state.omega, pu, pa});
    if (k == steps) break;

    int stage = 0;
    const DerivativeFn derivs = [&](double, const Vector& delta, const Vector& omega) {
      if (opts.stage_probe) opts.stage_probe(k, stage, pu);
      ++stage;
      const Vector pa_stage = grid::accelerating_power(delta, params, net);
      return Derivative{omega,
                        ((-damping.array() * omega.array() + pa_stage.array() + pu.array()) /
                         inertia.array())
                            .matrix()};
    };
    try {
      state = rk4_step(state, dt, derivs);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NonFiniteState) throw;
      raise(ErrorKind::NonFiniteState,
            "non-finite state at step " + std::to_string(k + 1) + " (t=" +
                io::format_double(static_cast<double>(k + 1) * dt) + ")");
    }
  }
  return traj;
}

Trajectory simulate(const grid::FullNetwork& full, std::span<const grid::GeneratorParams> params,
                    const std::optional<FaultScenario>& scenario,
                    const control::ControllerBundle& controllers, double dt, double t_max,
                    const SimulationOptions& opts) {
  return simulate(PhaseNetworks(full, scenario), params, controllers, dt, t_max, opts);
}

std::string trajectory_csv(const Trajectory& traj) {
  const std::size_t n = traj.generator_count();
  std::string out = "t";
  for (const char* name : {"delta", "omega", "pu", "pa"}) {
    for (std::size_t i = 1; i <= n; ++i) {
      out += ',';
      out += name;
      out += '_';
      out += std::to_string(i);
    }
  }
  out += '\n';
  for (const auto& r : traj.records) {
    io::append_double(out, r.t);
    for (const Vector* v : {&r.delta, &r.omega, &r.pu, &r.pa}) {
      for (Eigen::Index i = 0; i < v->size(); ++i) {
        out += ',';
        io::append_double(out, (*v)[i]);
      }
    }
    out += '\n';
  }
  return out;
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
  io::write_text(path, trajectory_csv(traj));
}

}  // namespace flc::dyn
