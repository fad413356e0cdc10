#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "flc/control.hpp"
#include "flc/grid_model.hpp"

namespace flc::dyn {

using grid::Vector;

struct SystemState {
  double t = 0.0;
  Vector delta;
  Vector omega;
};

/// Three-phase bolted fault at `faulted_bus`, cleared by tripping
/// `tripped_line`. Bus indices are zero-based positions in the full network.
struct FaultScenario {
  std::string id;
  int faulted_bus = 0;
  std::pair<int, int> tripped_line{0, 0};
  double t_fault = 0.5;
  double t_clear = 0.75;
};

/// Throws InvalidScenario for bad timing or a line not in `full`.
void validate(const FaultScenario& scenario, const grid::FullNetwork& full);

/// Reduced network seen at time `t`: pre-fault, faulted bus grounded, or
/// post-clearing with the line tripped.
grid::ReducedNetwork network_for_phase(const FaultScenario& scenario, double t,
                                       const grid::FullNetwork& full,
                                       const grid::KronOptions& opts = {});

/// The three phase reductions of one scenario, computed once.
class PhaseNetworks {
 public:
  /// Constant network, no fault.
  explicit PhaseNetworks(grid::ReducedNetwork constant);
  PhaseNetworks(const grid::FullNetwork& full, const std::optional<FaultScenario>& scenario,
                const grid::KronOptions& opts = {});

  const grid::ReducedNetwork& at(double t) const;
  const grid::ReducedNetwork& pre_fault() const { return pre_; }
  const grid::ReducedNetwork& faulted() const { return during_; }
  const grid::ReducedNetwork& post_fault() const { return post_; }
  bool has_fault() const { return has_fault_; }
  double t_fault() const { return t_fault_; }
  double t_clear() const { return t_clear_; }
  std::size_t size() const { return pre_.size(); }

 private:
  grid::ReducedNetwork pre_;
  grid::ReducedNetwork during_;
  grid::ReducedNetwork post_;
  bool has_fault_ = false;
  double t_fault_ = 0.0;
  double t_clear_ = 0.0;
};

struct Derivative {
  Vector d_delta;
  Vector d_omega;
};

using DerivativeFn = std::function<Derivative(double t, const Vector& delta, const Vector& omega)>;

/// One classical Runge-Kutta step. Throws NonFiniteState.
SystemState rk4_step(const SystemState& state, double dt, const DerivativeFn& derivs);

struct TrajectoryRecord {
  double t = 0.0;
  Vector delta;
  Vector omega;
  Vector pu;
  Vector pa;
};

struct Trajectory {
  double dt = 0.0;
  /// Fault onset, or 0 without a fault; the reference for stability times.
  double t_fault = 0.0;
  std::vector<TrajectoryRecord> records;

  std::size_t generator_count() const {
    return records.empty() ? 0 : static_cast<std::size_t>(records.front().delta.size());
  }
};

/// Sees the control vector each RK4 stage integrates with.
using StageProbe = std::function<void(std::size_t step, int stage, const Vector& pu)>;

struct SimulationOptions {
  /// Defaults to the pre-fault equilibrium with zero frequency deviation.
  std::optional<SystemState> initial;
  StageProbe stage_probe;
};

/// Integrates delta' = omega, M omega' = -D omega + Pa + Pu with fixed-step
/// RK4. Pu is sampled at each step start and held across the stages.
/// Records are written for t = 0, dt, ..., t_max.
Trajectory simulate(const PhaseNetworks& phases, std::span<const grid::GeneratorParams> params,
                    const control::ControllerBundle& controllers, double dt, double t_max,
                    const SimulationOptions& opts = {});

Trajectory simulate(const grid::FullNetwork& full, std::span<const grid::GeneratorParams> params,
                    const std::optional<FaultScenario>& scenario,
                    const control::ControllerBundle& controllers, double dt, double t_max,
                    const SimulationOptions& opts = {});

/// CSV: t,delta_1..delta_N,omega_1..omega_N,pu_1..pu_N,pa_1..pa_N with
/// shortest round-trip decimals.
std::string trajectory_csv(const Trajectory& traj);
void write_trajectory_csv(const std::string& path, const Trajectory& traj);

}  // namespace flc::dyn
