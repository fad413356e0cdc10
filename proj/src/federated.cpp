#include "flc/federated.hpp"

#include <chrono>
#include <thread>

#include "flc/errors.hpp"
#include "flc/seeding.hpp"
#include "flc/transport.hpp"

namespace flc::fed {

namespace {

constexpr std::uint64_t kInitStream = 0xffffffffffffffffULL;

double probe_loss(const kan::ChebyKanModel& model,
                  const std::vector<std::vector<kan::TrainingSample>>& shards,
                  std::span<const kan::TrainingSample> probe) {
  if (!probe.empty()) return kan::loss_mse(model, probe);
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& shard : shards) {
    total += kan::loss_mse(model, shard) * static_cast<double>(shard.size());
    count += shard.size();
  }
  return total / static_cast<double>(count);
}

// Client side of one federated session: wait for a global model, train,
// reply, until told to stop.
void client_loop(Link& link, std::size_t client_id, const FederatedConfig& cfg,
                 std::span<const kan::TrainingSample> shard) {
  while (true) {
    const WireMessage msg = decode_frame(link.receive());
    if (msg.type == "stop") return;
    WireMessage reply;
    reply.round = msg.round;
    reply.client_id = client_id;
    try {
      if (msg.type != "global") raise(ErrorKind::ProtocolError, "client expected a global model");
      const auto global = deserialize_params(msg.params, cfg.architecture);
      kan::TrainHyper hyper = cfg.local;
      hyper.seed = client_seed(cfg.master_seed, cfg.shared_client_seed ? 0 : client_id, msg.round);
      auto trained = kan::train_local(global, shard, hyper);
      reply.type = "params";
      reply.params = serialize_params(trained.model);
      reply.loss = trained.final_loss;
    } catch (const std::exception& e) {
      reply.type = "error";
      reply.params.clear();
      reply.error = e.what();
    }
    link.send(encode_frame(reply));
  }
}

}  // namespace

std::uint64_t initial_model_seed(std::uint64_t master_seed) {
  return derive_seed(master_seed, kInitStream, 0);
}

std::uint64_t client_seed(std::uint64_t master_seed, std::size_t client, std::size_t round) {
  return derive_seed(master_seed, client, round);
}

std::vector<double> serialize_params(const kan::ChebyKanModel& model) {
  std::vector<double> flat;
  flat.reserve(kan::param_count(model));
  for (const auto& layer : model.layers()) {
    const auto c = layer.coefficients();
    flat.insert(flat.end(), c.begin(), c.end());
  }
  return flat;
}

kan::ChebyKanModel deserialize_params(std::span<const double> params,
                                      const kan::Architecture& arch) {
  if (params.size() != kan::param_count(arch)) {
    raise(ErrorKind::LengthMismatch, "parameter vector length " + std::to_string(params.size()) +
                                         " does not match architecture (" +
                                         std::to_string(kan::param_count(arch)) + ")");
  }
  auto model = kan::ChebyKanModel::zeros(arch);
  std::size_t offset = 0;
  for (auto& layer : model.layers()) {
    auto c = layer.coefficients();
    std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(offset), c.size(), c.begin());
    offset += c.size();
  }
  return model;
}

kan::ChebyKanModel fedavg_aggregate(std::span<const kan::ChebyKanModel> models) {
  if (models.empty()) raise(ErrorKind::EmptyClientSet, "fedavg: no client models");
  const auto arch = models.front().architecture();
  for (const auto& m : models) {
    if (m.architecture() != arch) raise(ErrorKind::ArchitectureMismatch, "fedavg: architectures differ");
  }
  kan::ChebyKanModel mean = models.front();
  for (std::size_t k = 1; k < models.size(); ++k) {
    const double inv = 1.0 / static_cast<double>(k + 1);
    for (std::size_t l = 0; l < mean.layers().size(); ++l) {
      auto acc = mean.layers()[l].coefficients();
      const auto x = models[k].layers()[l].coefficients();
      for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += (x[j] - acc[j]) * inv;
    }
  }
  return mean;
}

FederatedResult run_federated_training(const FederatedConfig& cfg,
                                       const std::vector<std::vector<kan::TrainingSample>>& shards,
                                       std::span<const kan::TrainingSample> probe,
                                       const RoundObserver& observer) {
  if (shards.empty()) raise(ErrorKind::EmptyClientSet, "federated training needs at least one shard");
  if (cfg.rounds == 0) raise(ErrorKind::ConfigError, "rounds must be >= 1");
  for (const auto& s : shards) {
    if (s.empty()) raise(ErrorKind::EmptyBatch, "federated training: empty client shard");
  }

  FederatedResult result;
  result.global = kan::ChebyKanModel::random(cfg.architecture, initial_model_seed(cfg.master_seed));
  result.initial_probe_loss = probe_loss(result.global, shards, probe);

  const std::size_t n = shards.size();
  std::vector<std::unique_ptr<Link>> server_links;
  std::vector<std::unique_ptr<Link>> client_links;
  for (std::size_t i = 0; i < n; ++i) {
    auto pair = cfg.transport == TransportKind::Socket ? make_socket_link() : make_in_process_link();
    server_links.push_back(std::move(pair.server_end));
    client_links.push_back(std::move(pair.client_end));
  }

  std::vector<std::thread> clients;
  clients.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    clients.emplace_back([&, i] {
      try {
        client_loop(*client_links[i], i, cfg, shards[i]);
      } catch (const std::exception&) {
        // Link failure; the server sees it as a protocol error.
      }
    });
  }
  const auto shutdown = [&] {
    WireMessage stop;
    stop.type = "stop";
    for (auto& link : server_links) {
      try {
        link->send(encode_frame(stop));
      } catch (const std::exception&) {
      }
    }
    for (auto& t : clients) t.join();
  };

  try {
    for (std::size_t round = 1; round <= cfg.rounds; ++round) {
      const auto started = std::chrono::steady_clock::now();
      WireMessage global;
      global.type = "global";
      global.round = round;
      global.params = serialize_params(result.global);
      for (std::size_t i = 0; i < n; ++i) {
        global.client_id = i;
        server_links[i]->send(encode_frame(global));
      }

      RoundReport report;
      report.round = round;
      std::vector<kan::ChebyKanModel> locals;
      locals.reserve(n);
      std::string failure;
      for (std::size_t i = 0; i < n; ++i) {
        const WireMessage reply = decode_frame(server_links[i]->receive());
        if (reply.type == "error") {
          if (failure.empty()) {
            failure = "client " + std::to_string(i) + " failed in round " +
                      std::to_string(round) + ": " + reply.error;
          }
          continue;
        }
        if (reply.type != "params" || reply.round != round || reply.client_id != i) {
          raise(ErrorKind::ProtocolError, "unexpected reply from client " + std::to_string(i));
        }
        locals.push_back(deserialize_params(reply.params, cfg.architecture));
        report.client_loss.push_back(reply.loss);
      }
      if (!failure.empty()) raise(ErrorKind::DivergedLoss, failure);

      result.global = fedavg_aggregate(locals);
      report.probe_loss = probe_loss(result.global, shards, probe);
      report.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      if (observer) observer(report, result.global);
      result.rounds.push_back(std::move(report));
    }
  } catch (...) {
    shutdown();
    throw;
  }
  shutdown();
  return result;
}

}  // namespace flc::fed
