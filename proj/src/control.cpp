#include "flc/control.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "flc/errors.hpp"

namespace flc::control {

std::string to_string(ControllerMode mode) {
  switch (mode) {
    case ControllerMode::None: return "NONE";
    case ControllerMode::Dpfl: return "DPFL";
    case ControllerMode::Cpfl: return "CPFL";
    case ControllerMode::Flc: return "FLC";
  }
  return "NONE";
}

ControllerMode parse_mode(const std::string& name) {
  std::string upper = name;
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (upper == "NONE") return ControllerMode::None;
  if (upper == "DPFL") return ControllerMode::Dpfl;
  if (upper == "CPFL") return ControllerMode::Cpfl;
  if (upper == "FLC") return ControllerMode::Flc;
  raise(ErrorKind::ConfigError, "unknown controller mode '" + name + "'");
}

std::size_t ControlAssignment::count(ControllerMode mode) const {
  return static_cast<std::size_t>(std::count(modes.begin(), modes.end(), mode));
}

ControlAssignment assign_controllers(std::size_t n, ControllerMode distributed_mode,
                                     double level_percent) {
  if (!(level_percent >= 0.0 && level_percent <= 100.0)) {
    raise(ErrorKind::NonIntegralAssignment, "penetration level must lie in [0, 100]");
  }
  const double exact = level_percent * static_cast<double>(n) / 100.0;
  const double k = std::round(exact);
  const double step = 100.0 / static_cast<double>(n);
  if (std::abs(level_percent - k * step) > 0.5) {
    raise(ErrorKind::NonIntegralAssignment,
          "level " + std::to_string(level_percent) + "% of " + std::to_string(n) +
              " generators is not a whole number of generators");
  }
  ControlAssignment a;
  a.level_percent = level_percent;
  a.modes.assign(n, ControllerMode::Cpfl);
  std::fill_n(a.modes.begin(), static_cast<std::size_t>(k), distributed_mode);
  return a;
}

ControlAssignment uniform_assignment(std::size_t n, ControllerMode mode) {
  ControlAssignment a;
  a.modes.assign(n, mode);
  a.level_percent = (mode == ControllerMode::Dpfl || mode == ControllerMode::Flc) ? 100.0 : 0.0;
  return a;
}

double dpfl_action(double omega, double delta, double delta_star, double alpha, double beta) {
  return -(alpha * omega + beta * (delta - delta_star));
}

double cpfl_action(double pa, double pd) { return -(pa - pd); }

double TimeFeature::operator()(double t) const {
  return std::clamp((t - t_fault) / time_scale, 0.0, 1.0);
}

FlcOutput flc_action(const kan::ChebyKanModel& model, double omega, double delta_err,
                     double t_feature, double alpha, double beta) {
  if (model.input_dim() != 3 || model.output_dim() != 1) {
    raise(ErrorKind::ModelArityMismatch, "FLC model must map (omega, delta_err, t) to one output");
  }
  const std::array<double, 3> features{omega, delta_err, t_feature};
  FlcOutput out;
  out.pa_hat = kan::model_forward(model, features)[0];
  out.pu = cpfl_action(out.pa_hat, dpfl_action(omega, delta_err, 0.0, alpha, beta));
  return out;
}

void ControllerBundle::validate() const {
  for (std::size_t i = 0; i < assignment.modes.size(); ++i) {
    if (assignment.modes[i] != ControllerMode::Flc) continue;
    if (i >= models.size() || !models[i]) {
      raise(ErrorKind::ModelArityMismatch,
            "generator " + std::to_string(i + 1) + " runs FLC without a model");
    }
    if (models[i]->input_dim() != 3 || models[i]->output_dim() != 1) {
      raise(ErrorKind::ModelArityMismatch, "FLC model must have input arity 3 and one output");
    }
  }
}

ControllerBundle make_bundle(ControlAssignment assignment,
                             std::shared_ptr<const kan::ChebyKanModel> model, double time_scale,
                             std::optional<double> saturation) {
  ControllerBundle b;
  b.models.resize(assignment.modes.size());
  for (std::size_t i = 0; i < assignment.modes.size(); ++i) {
    if (assignment.modes[i] == ControllerMode::Flc) b.models[i] = model;
  }
  b.assignment = std::move(assignment);
  b.time_scale = time_scale;
  b.saturation = saturation;
  b.validate();
  return b;
}

grid::Vector control_power(const ControllerBundle& bundle, const grid::Vector& delta,
                           const grid::Vector& omega, const grid::Vector& pa_true,
                           std::span<const grid::GeneratorParams> params, double t_feature) {
  const auto n = static_cast<Eigen::Index>(params.size());
  grid::Vector pu = grid::Vector::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = params[static_cast<std::size_t>(i)];
    const double pd = dpfl_action(omega[i], delta[i], p.delta_star, p.alpha, p.beta);
    switch (bundle.assignment.modes[static_cast<std::size_t>(i)]) {
      case ControllerMode::None: break;
      case ControllerMode::Dpfl: pu[i] = pd; break;
      case ControllerMode::Cpfl: pu[i] = cpfl_action(pa_true[i], pd); break;
      case ControllerMode::Flc:
        pu[i] = flc_action(*bundle.models[static_cast<std::size_t>(i)], omega[i],
                           delta[i] - p.delta_star, t_feature, p.alpha, p.beta)
                    .pu;
        break;
    }
    if (bundle.saturation) pu[i] = std::clamp(pu[i], -*bundle.saturation, *bundle.saturation);
  }
  return pu;
}

}  // namespace flc::control
