#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "flc/neural_kan.hpp"

namespace flc::fed {

enum class TransportKind { InProcess, Socket };

struct FederatedConfig {
  std::size_t rounds = 20;
  kan::Architecture architecture = kan::uniform_architecture({3, 32, 1}, 5);
  /// Local hyperparameters; the seed field is replaced per (client, round).
  kan::TrainHyper local;
  std::uint64_t master_seed = 0;
  TransportKind transport = TransportKind::InProcess;
  /// Every client trains with client index 0's seed stream. Only useful for
  /// symmetry checks.
  bool shared_client_seed = false;
};

struct RoundReport {
  std::size_t round = 0;  // 1-based
  std::vector<double> client_loss;
  double probe_loss = 0.0;
  double wall_seconds = 0.0;
};

struct FederatedResult {
  kan::ChebyKanModel global;
  double initial_probe_loss = 0.0;
  std::vector<RoundReport> rounds;
};

std::uint64_t initial_model_seed(std::uint64_t master_seed);
std::uint64_t client_seed(std::uint64_t master_seed, std::size_t client, std::size_t round);

/// Canonical (layer, input, output, degree) flattening.
std::vector<double> serialize_params(const kan::ChebyKanModel& model);
/// Throws LengthMismatch when the vector does not fit the architecture.
kan::ChebyKanModel deserialize_params(std::span<const double> params, const kan::Architecture& arch);

/// Coefficient-wise mean, accumulated in ascending client order as a running
/// mean. Throws EmptyClientSet or ArchitectureMismatch.
kan::ChebyKanModel fedavg_aggregate(std::span<const kan::ChebyKanModel> models);

using RoundObserver = std::function<void(const RoundReport&, const kan::ChebyKanModel&)>;

/// Synchronous FedAvg rounds: broadcast, local training on every shard,
/// collect in client order, aggregate. Every exchange crosses the wire
/// encoding. Probe loss uses `probe` when non-empty, else all shards.
FederatedResult run_federated_training(const FederatedConfig& cfg,
                                       const std::vector<std::vector<kan::TrainingSample>>& shards,
                                       std::span<const kan::TrainingSample> probe = {},
                                       const RoundObserver& observer = {});

}  // namespace flc::fed
