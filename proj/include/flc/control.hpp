#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "flc/grid_model.hpp"
#include "flc/neural_kan.hpp"

namespace flc::control {

enum class ControllerMode { None, Dpfl, Cpfl, Flc };

std::string to_string(ControllerMode mode);
ControllerMode parse_mode(const std::string& name);

/// Which law runs at each generator. Generators 1..k carry the distributed
/// mode and the rest run CPFL.
struct ControlAssignment {
  std::vector<ControllerMode> modes;
  double level_percent = 0.0;

  std::size_t count(ControllerMode mode) const;
};

/// Rounds level * n / 100 to the nearest generator count. Accepts integer
/// percent labels of thirds and similar (33 of 3 -> 1) but throws
/// NonIntegralAssignment when the level is more than half a percentage point
/// away from any k * 100 / n.
ControlAssignment assign_controllers(std::size_t n, ControllerMode distributed_mode,
                                     double level_percent);

/// Uniform assignment (every generator in `mode`), level 100 for distributed
/// modes and 0 otherwise.
ControlAssignment uniform_assignment(std::size_t n, ControllerMode mode);

/// P_d = -(alpha * omega + beta * (delta - delta_star)).
double dpfl_action(double omega, double delta, double delta_star, double alpha, double beta);

/// P_u = -(P_a - P_d).
double cpfl_action(double pa, double pd);

/// Maps simulation time to the model's bounded time feature:
/// clamp((t - t_fault) / time_scale, 0, 1).
struct TimeFeature {
  double t_fault = 0.0;
  double time_scale = 1.0;

  double operator()(double t) const;
};

struct FlcOutput {
  double pu = 0.0;
  double pa_hat = 0.0;
};

/// P^_a = f(omega, delta - delta_star, t_feature); P^_u = -(P^_a - P_d).
/// Throws ModelArityMismatch unless the model maps 3 inputs to 1 output.
FlcOutput flc_action(const kan::ChebyKanModel& model, double omega, double delta_err,
                     double t_feature, double alpha, double beta);

/// Controllers bound to generators for one simulation. FLC generators carry
/// an immutable model snapshot.
struct ControllerBundle {
  ControlAssignment assignment;
  std::vector<std::shared_ptr<const kan::ChebyKanModel>> models;
  /// Seconds per unit of the FLC time feature (the training horizon).
  double time_scale = 1.0;
  /// Symmetric |P_u| limit; unbounded when empty.
  std::optional<double> saturation;

  /// Throws ModelArityMismatch when an FLC generator lacks a 3->1 model.
  void validate() const;
};

/// Binds `model` to every FLC generator in `assignment`.
ControllerBundle make_bundle(ControlAssignment assignment,
                             std::shared_ptr<const kan::ChebyKanModel> model, double time_scale,
                             std::optional<double> saturation = std::nullopt);

/// Per-generator command for one sample instant. `pa_true` is the
/// accelerating power at the sampled state (centralized visibility).
grid::Vector control_power(const ControllerBundle& bundle, const grid::Vector& delta,
                           const grid::Vector& omega, const grid::Vector& pa_true,
                           std::span<const grid::GeneratorParams> params, double t_feature);

}  // namespace flc::control
