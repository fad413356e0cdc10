#include "flc/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "flc/csv_io.hpp"
#include "flc/errors.hpp"

namespace flc::exp {

using control::ControllerMode;

StabilityResult stability_time(const dyn::Trajectory& traj, std::size_t generator,
                               const StabilityCriterion& criterion) {
  if (traj.records.empty()) raise(ErrorKind::EmptyTrajectory, "stability_time: empty trajectory");
  if (generator >= traj.generator_count()) {
    raise(ErrorKind::DimensionMismatch, "stability_time: generator index out of range");
  }
  const auto g = static_cast<Eigen::Index>(generator);
  const auto& recs = traj.records;
  // Onset tolerance absorbs k * dt rounding.
  const double onset = traj.t_fault - 1e-9 * std::max(1.0, traj.dt);
  std::optional<std::size_t> last_outside;
  for (std::size_t k = 0; k < recs.size(); ++k) {
    if (recs[k].t < onset) continue;
    if (std::abs(recs[k].omega[g]) > criterion.band) last_outside = k;
  }
  if (!last_outside) return {0.0, false};
  if (*last_outside + 1 == recs.size()) return {criterion.cap, true};
  return {recs[*last_outside + 1].t - traj.t_fault, false};
}

GroupStability group_stability_time(const dyn::Trajectory& traj,
                                    const control::ControlAssignment& assignment,
                                    ControllerMode mode, const StabilityCriterion& criterion) {
  GroupStability out;
  std::size_t members = 0;
  double total = 0.0;
  for (std::size_t i = 0; i < assignment.modes.size(); ++i) {
    if (assignment.modes[i] != mode) continue;
    const auto r = stability_time(traj, i, criterion);
    total += r.seconds;
    out.unstable_count += r.unstable ? 1 : 0;
    ++members;
  }
  if (members == 0) {
    raise(ErrorKind::EmptyGroup, "no generator runs " + control::to_string(mode));
  }
  out.mean_seconds = total / static_cast<double>(members);
  return out;
}

EnergyReport energy_metrics(const dyn::Trajectory& traj, std::span<const std::size_t> generators,
                            double base_power_kw) {
  if (generators.empty()) raise(ErrorKind::EmptyGroup, "energy_metrics: empty generator set");
  EnergyReport rep;
  rep.base_power_kw = base_power_kw;
  double inj = 0.0;
  double stor = 0.0;
  for (const auto& r : traj.records) {
    for (std::size_t i : generators) {
      const double pu = r.pu[static_cast<Eigen::Index>(i)];
      if (pu > 0.0) inj += pu * traj.dt;
      if (pu < 0.0) stor += -pu * traj.dt;
    }
  }
  rep.injected = inj * base_power_kw;
  rep.stored = stor * base_power_kw;
  return rep;
}

Dataset generate_dataset(const grid::FullNetwork& full, std::span<const grid::GeneratorParams> params,
                         const std::optional<dyn::FaultScenario>& scenario,
                         const DatasetOptions& opts) {
  const std::size_t n = params.size();
  Dataset data;
  data.time_scale = opts.time_scale > 0.0 ? opts.time_scale : opts.t_max;
  if (!(data.time_scale > 0.0)) raise(ErrorKind::ConfigError, "dataset time scale must be > 0");

  const auto bundle = control::make_bundle(control::uniform_assignment(n, ControllerMode::Cpfl),
                                           nullptr, data.time_scale);
  data.trajectory = dyn::simulate(full, params, scenario, bundle, opts.dt, opts.t_max);

  const control::TimeFeature feature{scenario ? scenario->t_fault : 0.0, data.time_scale};
  data.shards.assign(n, {});
  for (auto& shard : data.shards) shard.reserve(data.trajectory.records.size());
  for (const auto& r : data.trajectory.records) {
    const double tf = feature(r.t);
    for (std::size_t i = 0; i < n; ++i) {
      const auto gi = static_cast<Eigen::Index>(i);
      data.shards[i].push_back(
          {{r.omega[gi], r.delta[gi] - params[i].delta_star, tf}, {r.pa[gi]}});
    }
  }
  return data;
}

ProbeSplit split_probe(const std::vector<std::vector<kan::TrainingSample>>& shards,
                       std::size_t stride) {
  ProbeSplit split;
  for (const auto& shard : shards) {
    auto& train = split.training.emplace_back();
    for (std::size_t k = 0; k < shard.size(); ++k) {
      if (stride != 0 && k % stride == 0) {
        split.probe.push_back(shard[k]);
      } else {
        train.push_back(shard[k]);
      }
    }
  }
  return split;
}

namespace {

struct Cell {
  std::size_t fault;
  ControllerMode mode;
  double level;
};

struct CellResult {
  SweepRow distributed;
  std::optional<SweepRow> cpfl;
};

SweepRow metrics_row(const dyn::Trajectory& traj, const control::ControlAssignment& assignment,
                     ControllerMode group_mode, const SweepSpec& spec) {
  SweepRow row;
  row.group = control::to_string(group_mode);
  const StabilityCriterion criterion{spec.band, spec.t_max};
  const auto stab = group_stability_time(traj, assignment, group_mode, criterion);
  row.stab_time_s = stab.mean_seconds;
  row.unstable = stab.unstable_count;
  std::vector<std::size_t> members;
  for (std::size_t i = 0; i < assignment.modes.size(); ++i) {
    if (assignment.modes[i] == group_mode) members.push_back(i);
  }
  const auto energy = energy_metrics(traj, members, spec.base_power_kw);
  row.p_inj = energy.injected;
  row.p_stor = energy.stored;
  return row;
}

CellResult run_cell(const Cell& cell, const dyn::PhaseNetworks& phases,
                    std::span<const grid::GeneratorParams> params, const SweepSpec& spec) {
  const auto assignment = control::assign_controllers(params.size(), cell.mode, cell.level);
  const auto bundle = control::make_bundle(assignment, spec.model, spec.time_scale, spec.saturation);
  const auto traj = dyn::simulate(phases, params, bundle, spec.dt, spec.t_max);

  CellResult out;
  const bool has_distributed = assignment.count(cell.mode) > 0;
  const bool has_cpfl = assignment.count(ControllerMode::Cpfl) > 0;
  out.distributed =
      metrics_row(traj, assignment, has_distributed ? cell.mode : ControllerMode::Cpfl, spec);
  if (has_distributed && has_cpfl) {
    out.cpfl = metrics_row(traj, assignment, ControllerMode::Cpfl, spec);
  }
  return out;
}

}  // namespace

SweepResult penetration_sweep(const grid::FullNetwork& full,
                              std::span<const grid::GeneratorParams> params, const SweepSpec& spec) {
  std::vector<Cell> cells;
  for (std::size_t f = 0; f < spec.faults.size(); ++f)
    for (auto mode : spec.modes)
      for (double level : spec.levels) cells.push_back({f, mode, level});

  // Phase reductions are shared by every cell of a fault.
  std::vector<std::optional<dyn::PhaseNetworks>> phases(spec.faults.size());
  std::vector<std::string> phase_errors(spec.faults.size());
  for (std::size_t f = 0; f < spec.faults.size(); ++f) {
    try {
      phases[f].emplace(full, spec.faults[f]);
    } catch (const std::exception& e) {
      phase_errors[f] = e.what();
    }
  }

  std::vector<CellResult> results(cells.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t c = next++; c < cells.size(); c = next++) {
      const auto& cell = cells[c];
      auto& res = results[c];
      try {
        if (!phases[cell.fault]) raise(ErrorKind::InvalidScenario, phase_errors[cell.fault]);
        res = run_cell(cell, *phases[cell.fault], params, spec);
      } catch (const std::exception& e) {
        res.distributed = SweepRow{};
        res.distributed.group = control::to_string(cell.mode);
        res.distributed.error = e.what();
      }
      for (SweepRow* row : {&res.distributed, res.cpfl ? &*res.cpfl : nullptr}) {
        if (!row) continue;
        row->fault = spec.faults[cell.fault].id;
        row->mode = cell.mode;
        row->level_pct = cell.level;
      }
    }
  };
  const std::size_t jobs = std::clamp<std::size_t>(spec.jobs, 1, std::max<std::size_t>(cells.size(), 1));
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  SweepResult out;
  for (auto& r : results) {
    out.distributed.push_back(std::move(r.distributed));
    if (r.cpfl) out.cpfl.push_back(std::move(*r.cpfl));
  }
  return out;
}

std::string results_csv(std::span<const SweepRow> rows) {
  std::string out = kResultsHeader;
  out += '\n';
  for (const auto& r : rows) {
    out += r.fault + ',' + control::to_string(r.mode) + ',';
    io::append_double(out, r.level_pct);
    out += ',' + r.group + ',';
    if (!r.error.empty()) {
      out += "nan,error,nan,nan\n";
      continue;
    }
    io::append_double(out, r.stab_time_s);
    out += ',' + std::to_string(r.unstable) + ',';
    io::append_double(out, r.p_inj);
    out += ',';
    io::append_double(out, r.p_stor);
    out += '\n';
  }
  return out;
}

}  // namespace flc::exp
