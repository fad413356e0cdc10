#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "flc/commands.hpp"
#include "flc/config.hpp"
#include "flc/errors.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

int report(std::string_view kind, const std::string& message, int code) {
  const nlohmann::json err = {{"error", {{"kind", kind}, {"message", message}}}};
  std::cerr << err.dump() << "\n";
  return code;
}

void print_simulation(const nlohmann::json& summary) {
  std::cout << "fault " << summary["fault"].get<std::string>() << "\n";
  for (const auto& g : summary["generators"]) {
    std::cout << "  G" << g["generator"].get<std::size_t>() << " " << g["mode"].get<std::string>()
              << " stab_time_s=" << g["stab_time_s"].get<double>()
              << (g["unstable"].get<bool>() ? " UNSTABLE" : "") << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated-learning frequency control on multi-machine power systems"};
  app.require_subcommand(0, 1);
  app.fallthrough();

  std::string config_path;
  bool print_schema = false;
  flc::cmd::CommandOptions opts;
  std::uint64_t seed = 0;
  app.add_option("--config", config_path, "Run configuration (JSON)");
  app.add_flag("--print-schema", print_schema, "Print the configuration schema and exit");
  app.add_option("--out", opts.out_dir, "Run directory (overrides output.dir)");
  app.add_option("--fault", opts.fault, "Fault id, or 'none'");
  auto* seed_opt = app.add_option("--seed", seed, "Master seed override");
  app.add_option("--jobs", opts.jobs, "Concurrent sweep cells")->check(CLI::PositiveNumber);
  app.add_option("--checkpoint", opts.checkpoint, "Model checkpoint (JSON)");
  app.add_option("--data", opts.data_dir, "Shard directory written by gen-data");

  auto* sim = app.add_subcommand("simulate", "Simulate one fault and summarize stability");
  auto* gen = app.add_subcommand("gen-data", "Generate per-generator training shards");
  auto* train = app.add_subcommand("train", "Federated training of the FLC model");
  auto* eval = app.add_subcommand("evaluate", "Penetration sweep over faults, modes and levels");
  auto* info = app.add_subcommand("info", "Parameter and operation counts of the model");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return report("UsageError", e.what(), kExitConfig);
  }
  if (seed_opt->count() > 0) opts.seed = seed;

  if (print_schema) {
    std::cout << flc::config::config_schema().dump(2) << "\n";
    return 0;
  }
  if (app.get_subcommands().empty()) {
    std::cout << app.help();
    return kExitConfig;
  }

  try {
    std::optional<flc::config::RunConfig> cfg;
    if (!config_path.empty()) cfg = flc::config::load_config(config_path);
    if (!cfg && !info->parsed()) flc::raise(flc::ErrorKind::ConfigError, "--config is required");

    if (sim->parsed()) {
      print_simulation(flc::cmd::cmd_simulate(*cfg, opts));
    } else if (gen->parsed()) {
      std::cout << flc::cmd::cmd_gen_data(*cfg, opts).dump(2) << "\n";
    } else if (train->parsed()) {
      std::cout << flc::cmd::cmd_train(*cfg, opts).dump(2) << "\n";
    } else if (eval->parsed()) {
      std::cout << flc::cmd::cmd_evaluate(*cfg, opts).dump(2) << "\n";
    } else if (info->parsed()) {
      std::cout << flc::cmd::cmd_info(cfg, opts).dump(2) << "\n";
    }
  } catch (const flc::Error& e) {
    const int code = e.kind() == flc::ErrorKind::ConfigError ? kExitConfig : kExitRuntime;
    return report(flc::to_string(e.kind()), e.what(), code);
  } catch (const std::exception& e) {
    return report("RuntimeError", e.what(), kExitRuntime);
  }
  return 0;
}
