#include "flc/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "flc/csv_io.hpp"
#include "flc/dynamics.hpp"
#include "flc/errors.hpp"
#include "flc/experiments.hpp"
#include "flc/federated.hpp"

namespace flc::cmd {

namespace fs = std::filesystem;
using nlohmann::json;
using control::ControllerMode;

namespace {

std::string run_dir(const config::RunConfig& cfg, const CommandOptions& opts) {
  const std::string dir = opts.out_dir.empty() ? cfg.output.dir : opts.out_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) raise(ErrorKind::IoError, "cannot create " + dir + ": " + ec.message());
  return dir;
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void write_json(const std::string& path, const json& doc) {
  io::write_text(path, doc.dump(2) + "\n");
}

std::string fault_label(const std::optional<dyn::FaultScenario>& f) {
  return f ? f->id : "none";
}

kan::Checkpoint require_checkpoint(const CommandOptions& opts, const char* why) {
  if (opts.checkpoint.empty()) raise(ErrorKind::ConfigError, std::string("--checkpoint is required ") + why);
  return kan::load_checkpoint(opts.checkpoint);
}

exp::Dataset dataset_for(const config::RunConfig& cfg, const std::optional<dyn::FaultScenario>& fault) {
  exp::DatasetOptions d;
  d.dt = cfg.simulation.dt;
  d.t_max = cfg.training.data_t_max;
  return exp::generate_dataset(cfg.system.full, cfg.system.generators, fault, d);
}

}  // namespace

json cmd_simulate(const config::RunConfig& cfg, const CommandOptions& opts) {
  const auto fault = config::find_fault(cfg, opts.fault);
  const std::size_t n = cfg.system.generators.size();
  const auto& ctl = cfg.control;
  const auto assignment = ctl.level > 0.0
                              ? control::assign_controllers(n, ctl.distributed_mode, ctl.level)
                              : control::uniform_assignment(n, ctl.mode);

  std::shared_ptr<const kan::ChebyKanModel> model;
  double time_scale = 1.0;
  if (assignment.count(ControllerMode::Flc) > 0) {
    auto ck = require_checkpoint(opts, "for FLC generators");
    model = std::make_shared<const kan::ChebyKanModel>(std::move(ck.model));
    time_scale = ck.meta.time_scale;
  }
  const auto bundle = control::make_bundle(assignment, model, time_scale, ctl.saturation);
  const auto traj = dyn::simulate(cfg.system.full, cfg.system.generators, fault, bundle,
                                  cfg.simulation.dt, cfg.simulation.t_max);

  const std::string dir = run_dir(cfg, opts);
  const std::string label = fault_label(fault);
  dyn::write_trajectory_csv(join(dir, "trajectory_" + label + ".csv"), traj);

  const exp::StabilityCriterion criterion{cfg.simulation.band, cfg.simulation.t_max};
  json gens = json::array();
  std::vector<std::size_t> all;
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = exp::stability_time(traj, i, criterion);
    gens.push_back({{"generator", i + 1},
                    {"mode", control::to_string(assignment.modes[i])},
                    {"stab_time_s", r.seconds},
                    {"unstable", r.unstable}});
    all.push_back(i);
  }
  const auto energy = exp::energy_metrics(traj, all, cfg.output.base_power_kw);
  json summary = {{"config_hash", cfg.hash},
                  {"fault", label},
                  {"level_pct", assignment.level_percent},
                  {"dt", cfg.simulation.dt},
                  {"t_max", cfg.simulation.t_max},
                  {"band", cfg.simulation.band},
                  {"generators", gens},
                  {"p_inj", energy.injected},
                  {"p_stor", energy.stored}};
  write_json(join(dir, "summary_" + label + ".json"), summary);
  return summary;
}

json cmd_gen_data(const config::RunConfig& cfg, const CommandOptions& opts) {
  const auto fault = config::find_fault(cfg, opts.fault.empty() ? cfg.training.fault : opts.fault);
  const auto data = dataset_for(cfg, fault);

  const std::string dir = join(run_dir(cfg, opts), "shards");
  fs::create_directories(dir);
  json files = json::array();
  for (std::size_t i = 0; i < data.shards.size(); ++i) {
    std::string text = kShardHeader;
    text += '\n';
    for (const auto& s : data.shards[i]) {
      for (double x : s.input) {
        io::append_double(text, x);
        text += ',';
      }
      io::append_double(text, s.target[0]);
      text += '\n';
    }
    const std::string name = "shard_" + std::to_string(i + 1) + ".csv";
    io::write_text(join(dir, name), text);
    files.push_back({{"file", name}, {"generator", i + 1}, {"samples", data.shards[i].size()}});
  }
  json manifest = {{"config_hash", cfg.hash},
                   {"fault", fault_label(fault)},
                   {"dt", cfg.simulation.dt},
                   {"t_max", cfg.training.data_t_max},
                   {"time_scale", data.time_scale},
                   {"columns", kShardHeader},
                   {"shards", files}};
  write_json(join(dir, "manifest.json"), manifest);
  return manifest;
}

ShardSet read_shards(const std::string& dir) {
  json manifest;
  try {
    manifest = json::parse(io::read_text(join(dir, "manifest.json")));
  } catch (const json::exception& e) {
    raise(ErrorKind::ConfigError, "bad shard manifest in " + dir + ": " + e.what());
  }
  ShardSet set;
  set.time_scale = manifest.at("time_scale").get<double>();
  set.fault = manifest.at("fault").get<std::string>();
  for (const auto& entry : manifest.at("shards")) {
    const std::string path = join(dir, entry.at("file").get<std::string>());
    const std::string text = io::read_text(path);
    auto& shard = set.shards.emplace_back();
    std::size_t pos = text.find('\n');
    if (pos == std::string::npos || text.substr(0, pos) != kShardHeader) {
      raise(ErrorKind::ConfigError, path + ": unexpected header");
    }
    for (std::size_t start = pos + 1; start < text.size(); start = pos + 1) {
      pos = text.find('\n', start);
      if (pos == std::string::npos) pos = text.size();
      const auto fields = io::split(std::string_view(text).substr(start, pos - start));
      if (fields.size() != 4) raise(ErrorKind::ConfigError, path + ": expected 4 columns");
      shard.push_back({{io::parse_double(fields[0]), io::parse_double(fields[1]), io::parse_double(fields[2])},
                       {io::parse_double(fields[3])}});
    }
    if (shard.size() != entry.at("samples").get<std::size_t>()) {
      raise(ErrorKind::ConfigError, path + ": sample count disagrees with the manifest");
    }
  }
  return set;
}

json cmd_train(const config::RunConfig& cfg, const CommandOptions& opts) {
  const auto& tb = cfg.training;
  ShardSet data;
  if (!opts.data_dir.empty()) {
    data = read_shards(opts.data_dir);
  } else {
    const auto fault = config::find_fault(cfg, opts.fault.empty() ? tb.fault : opts.fault);
    auto generated = dataset_for(cfg, fault);
    data.shards = std::move(generated.shards);
    data.time_scale = generated.time_scale;
    data.fault = fault_label(fault);
  }
  const auto split = exp::split_probe(data.shards, tb.probe_stride);

  fed::FederatedConfig fc;
  fc.rounds = tb.rounds;
  fc.architecture = tb.architecture;
  fc.local.lr = tb.lr;
  fc.local.batch_size = tb.batch_size;
  fc.local.epochs = tb.epochs;
  fc.local.optimizer = tb.optimizer;
  fc.master_seed = opts.seed.value_or(tb.master_seed);
  fc.transport = tb.transport;

  const std::string dir = run_dir(cfg, opts);
  const std::string ck_dir = join(dir, "checkpoints");
  fs::create_directories(ck_dir);

  kan::TrainingMetadata meta;
  meta.seed = fc.master_seed;
  meta.time_scale = data.time_scale;
  meta.config_hash = cfg.hash;

  std::string csv = "round,probe_loss";
  for (std::size_t i = 0; i < split.training.size(); ++i) csv += ",client_loss_" + std::to_string(i + 1);
  csv += '\n';
  const auto observer = [&](const fed::RoundReport& rep, const kan::ChebyKanModel& global) {
    meta.rounds = rep.round;
    meta.final_loss = rep.probe_loss;
    char name[32];
    std::snprintf(name, sizeof(name), "round_%02zu.json", rep.round);
    kan::save_checkpoint(join(ck_dir, name), global, meta);
    csv += std::to_string(rep.round) + ',';
    io::append_double(csv, rep.probe_loss);
    for (double l : rep.client_loss) {
      csv += ',';
      io::append_double(csv, l);
    }
    csv += '\n';
  };
  const auto result = fed::run_federated_training(fc, split.training, split.probe, observer);
  kan::save_checkpoint(join(dir, "model.json"), result.global, meta);
  io::write_text(join(dir, "rounds.csv"), csv);

  // Soft health check: the probe loss should mostly decrease.
  std::size_t improving = 0;
  double prev = result.initial_probe_loss;
  for (const auto& r : result.rounds) {
    if (r.probe_loss <= prev) ++improving;
    prev = r.probe_loss;
  }
  const double share = static_cast<double>(improving) / static_cast<double>(result.rounds.size());
  if (share < 0.8) {
    std::cerr << "warning: probe loss decreased in only " << improving << " of "
              << result.rounds.size() << " rounds\n";
  }
  json summary = {{"config_hash", cfg.hash},
                  {"fault", data.fault},
                  {"master_seed", fc.master_seed},
                  {"rounds", result.rounds.size()},
                  {"clients", split.training.size()},
                  {"probe_samples", split.probe.size()},
                  {"initial_probe_loss", result.initial_probe_loss},
                  {"final_probe_loss", result.rounds.back().probe_loss},
                  {"improving_rounds", improving},
                  {"time_scale", data.time_scale}};
  write_json(join(dir, "train_summary.json"), summary);
  return summary;
}

json cmd_evaluate(const config::RunConfig& cfg, const CommandOptions& opts) {
  const auto& ctl = cfg.control;
  exp::SweepSpec spec;
  if (!opts.fault.empty()) {
    spec.faults.push_back(*config::find_fault(cfg, opts.fault));
  } else if (!ctl.sweep_faults.empty()) {
    for (const auto& id : ctl.sweep_faults) spec.faults.push_back(*config::find_fault(cfg, id));
  } else {
    spec.faults = cfg.faults;
  }
  if (spec.faults.empty()) raise(ErrorKind::ConfigError, "evaluate needs at least one fault");
  spec.modes = ctl.sweep_modes;
  spec.levels = ctl.sweep_levels;
  spec.saturation = ctl.saturation;
  spec.dt = cfg.simulation.dt;
  spec.t_max = cfg.simulation.t_max;
  spec.band = cfg.simulation.band;
  spec.base_power_kw = cfg.output.base_power_kw;
  spec.jobs = std::max<std::size_t>(opts.jobs, 1);

  json checkpoint_info = nullptr;
  if (std::find(spec.modes.begin(), spec.modes.end(), ControllerMode::Flc) != spec.modes.end()) {
    auto ck = require_checkpoint(opts, "when FLC is evaluated");
    checkpoint_info = {{"config_hash", ck.meta.config_hash},
                       {"seed", ck.meta.seed},
                       {"rounds", ck.meta.rounds},
                       {"digest", config::config_hash(kan::to_checkpoint(ck.model, ck.meta))}};
    spec.time_scale = ck.meta.time_scale;
    spec.model = std::make_shared<const kan::ChebyKanModel>(std::move(ck.model));
  }
  // Level validity is a configuration matter, checked before any cell runs.
  for (double level : spec.levels) {
    try {
      control::assign_controllers(cfg.system.generators.size(), ControllerMode::Dpfl, level);
    } catch (const Error& e) {
      raise(ErrorKind::ConfigError, std::string("control.levels: ") + e.what());
    }
  }

  const auto result = exp::penetration_sweep(cfg.system.full, cfg.system.generators, spec);
  const std::string dir = run_dir(cfg, opts);
  io::write_text(join(dir, "results.csv"), exp::results_csv(result.distributed));
  io::write_text(join(dir, "results_cpfl.csv"), exp::results_csv(result.cpfl));

  json faults = json::array();
  for (const auto& f : spec.faults) faults.push_back(f.id);
  json modes = json::array();
  for (auto m : spec.modes) modes.push_back(control::to_string(m));
  json errors = json::array();
  for (const auto& r : result.distributed) {
    if (!r.error.empty()) {
      errors.push_back({{"fault", r.fault}, {"mode", control::to_string(r.mode)},
                        {"level_pct", r.level_pct}, {"error", r.error}});
    }
  }
  json meta = {{"config_hash", cfg.hash},
               {"checkpoint", checkpoint_info},
               {"faults", faults},
               {"modes", modes},
               {"levels", spec.levels},
               {"dt", spec.dt},
               {"t_max", spec.t_max},
               {"band", spec.band},
               {"base_power_kw", spec.base_power_kw},
               {"rows", result.distributed.size()},
               {"cpfl_rows", result.cpfl.size()},
               {"errors", errors}};
  write_json(join(dir, "results_meta.json"), meta);
  return meta;
}

json cmd_info(const std::optional<config::RunConfig>& cfg, const CommandOptions& opts) {
  json out;
  if (!opts.checkpoint.empty()) {
    const auto ck = kan::load_checkpoint(opts.checkpoint);
    const auto arch = ck.model.architecture();
    out = {{"dims", arch.dims},
           {"degrees", arch.degrees},
           {"param_count", kan::param_count(ck.model)},
           {"flop_count", kan::flop_count(ck.model)},
           {"checkpoint_config_hash", ck.meta.config_hash}};
    if (!opts.out_dir.empty() || cfg) {
      const std::string dir = opts.out_dir.empty() ? cfg->output.dir : opts.out_dir;
      fs::create_directories(dir);
      write_json(join(dir, "edges.json"), kan::edges_to_json(kan::export_edges(ck.model)));
      out["edges_file"] = "edges.json";
    }
    return out;
  }
  const auto arch = cfg ? cfg->training.architecture : kan::uniform_architecture({3, 32, 1}, 5);
  out = {{"dims", arch.dims},
         {"degrees", arch.degrees},
         {"param_count", kan::param_count(arch)},
         {"flop_count", kan::flop_count(arch)}};
  if (cfg) out["config_hash"] = cfg->hash;
  return out;
}

}  // namespace flc::cmd
