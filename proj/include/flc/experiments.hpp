#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flc/control.hpp"
#include "flc/dynamics.hpp"
#include "flc/neural_kan.hpp"

namespace flc::exp {

struct StabilityCriterion {
  double band = 0.01;  // |omega| bound
  double cap = 0.0;    // value reported when the band is never held
};

struct StabilityResult {
  double seconds = 0.0;
  bool unstable = false;
};

/// Time from fault onset until |omega_i| stays within the band through the
/// end of the trajectory. 0 when the band is never left after onset; the cap
/// (flagged unstable) when the last sample is still outside.
StabilityResult stability_time(const dyn::Trajectory& traj, std::size_t generator,
                               const StabilityCriterion& criterion);

struct GroupStability {
  double mean_seconds = 0.0;
  std::size_t unstable_count = 0;
};

/// Mean stability time over the generators assigned `mode`. Throws EmptyGroup.
GroupStability group_stability_time(const dyn::Trajectory& traj,
                                    const control::ControlAssignment& assignment,
                                    control::ControllerMode mode,
                                    const StabilityCriterion& criterion);

/// Integrated positive (injected) and negative (stored) control energy.
/// Values are per-unit-seconds times the base power, i.e. kW*s for a base
/// given in kW.
struct EnergyReport {
  double injected = 0.0;
  double stored = 0.0;
  double base_power_kw = 1.0;
};

EnergyReport energy_metrics(const dyn::Trajectory& traj, std::span<const std::size_t> generators,
                            double base_power_kw);

struct DatasetOptions {
  double dt = 1e-3;
  double t_max = 100.0;
  /// Seconds per unit of time feature; 0 selects t_max.
  double time_scale = 0.0;
};

struct Dataset {
  /// shards[i] holds generator i's samples, one per trajectory record.
  std::vector<std::vector<kan::TrainingSample>> shards;
  dyn::Trajectory trajectory;
  double time_scale = 1.0;
};

/// Simulates 100% CPFL and emits ((omega_i, delta_i - delta*_i, t_feature) -> Pa_i)
/// for every record and generator.
Dataset generate_dataset(const grid::FullNetwork& full, std::span<const grid::GeneratorParams> params,
                         const std::optional<dyn::FaultScenario>& scenario,
                         const DatasetOptions& opts);

/// Splits every shard by sample index: index % stride == 0 goes to the probe
/// set, the rest stays for training. stride 0 keeps everything for training.
struct ProbeSplit {
  std::vector<std::vector<kan::TrainingSample>> training;
  std::vector<kan::TrainingSample> probe;
};
ProbeSplit split_probe(const std::vector<std::vector<kan::TrainingSample>>& shards,
                       std::size_t stride);

struct SweepSpec {
  std::vector<dyn::FaultScenario> faults;
  std::vector<control::ControllerMode> modes;  // FLC and/or DPFL
  std::vector<double> levels;
  std::shared_ptr<const kan::ChebyKanModel> model;  // required for FLC rows
  double time_scale = 1.0;
  std::optional<double> saturation;
  double dt = 1e-3;
  double t_max = 30.0;
  double band = 0.01;
  double base_power_kw = 1e5;
  std::size_t jobs = 1;
};

/// One metrics row. `group` is the mode label of the generators summarized;
/// `error` is set when the cell failed (metrics are then meaningless).
struct SweepRow {
  std::string fault;
  control::ControllerMode mode = control::ControllerMode::Dpfl;
  double level_pct = 0.0;
  std::string group;
  double stab_time_s = 0.0;
  std::size_t unstable = 0;
  double p_inj = 0.0;
  double p_stor = 0.0;
  std::string error;

  bool operator==(const SweepRow&) const = default;
};

struct SweepResult {
  /// One row per (fault, mode, level): the distributed group, or the CPFL
  /// group when the level is 0.
  std::vector<SweepRow> distributed;
  /// The complementary CPFL group for every cell where it is non-empty.
  std::vector<SweepRow> cpfl;
};

SweepResult penetration_sweep(const grid::FullNetwork& full,
                              std::span<const grid::GeneratorParams> params, const SweepSpec& spec);

inline constexpr const char* kResultsHeader = "fault,mode,level_pct,group,stab_time_s,unstable,p_inj,p_stor";

std::string results_csv(std::span<const SweepRow> rows);

}  // namespace flc::exp
