#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "flc/control.hpp"
#include "flc/dynamics.hpp"
#include "flc/federated.hpp"
#include "flc/grid_model.hpp"
#include "flc/neural_kan.hpp"

namespace flc::config {

inline constexpr int kConfigSchemaVersion = 1;

/// Electrical system resolved from the config. A config given as reduced
/// G/B matrices becomes a full network whose every bus is a generator bus, so
/// Kron reduction is the identity on it.
struct SystemModel {
  grid::FullNetwork full;
  std::vector<grid::GeneratorParams> generators;
  /// Pre-fault equilibrium, also the default delta_star.
  grid::Vector equilibrium;
  /// Config bus id -> zero-based bus index (empty for reduced systems).
  std::map<long long, int> bus_index;
  bool from_reduced = false;
};

struct ControlBlock {
  double alpha = 0.5;
  double beta = 0.005;
  std::optional<double> saturation;
  control::ControllerMode mode = control::ControllerMode::Cpfl;
  control::ControllerMode distributed_mode = control::ControllerMode::Flc;
  double level = 0.0;
  std::vector<control::ControllerMode> sweep_modes{control::ControllerMode::Flc,
                                                   control::ControllerMode::Dpfl};
  std::vector<double> sweep_levels{0.0, 50.0, 100.0};
  std::vector<std::string> sweep_faults;  // empty: every fault
};

struct TrainingBlock {
  kan::Architecture architecture = kan::uniform_architecture({3, 32, 1}, 5);
  kan::Optimizer optimizer = kan::Optimizer::Adam;
  double lr = 1e-3;
  std::size_t batch_size = 1024;
  std::size_t epochs = 1;
  std::size_t rounds = 20;
  std::uint64_t master_seed = 0;
  std::string fault;  // scenario the dataset is generated from
  double data_t_max = 100.0;
  std::size_t probe_stride = 10;
  fed::TransportKind transport = fed::TransportKind::InProcess;
};

struct SimulationBlock {
  double dt = 1e-3;
  double t_max = 30.0;
  double band = 0.01;
};

struct OutputBlock {
  std::string dir = "runs/default";
  double base_power_kw = 1e5;
};

struct RunConfig {
  SystemModel system;
  std::vector<dyn::FaultScenario> faults;
  ControlBlock control;
  TrainingBlock training;
  SimulationBlock simulation;
  OutputBlock output;
  nlohmann::json document;
  std::string hash;
};

/// Throws ConfigError with the offending key path.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::string& path);

/// FNV-1a of the canonical (key-sorted, compact) dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& doc);

/// Authoritative JSON Schema of the config document.
nlohmann::json config_schema();

/// Empty id or "none" means no fault. Throws ConfigError for unknown ids.
std::optional<dyn::FaultScenario> find_fault(const RunConfig& cfg, const std::string& id);

}  // namespace flc::config
