#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "flc/config.hpp"
#include "flc/neural_kan.hpp"

namespace flc::cmd {

struct CommandOptions {
  std::string out_dir;  // empty: the config's output.dir
  std::string fault;    // empty: command default
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  std::string checkpoint;
  std::string data_dir;  // gen-data output to train from
};

/// Every command writes under the run directory and returns the summary it
/// also prints or stores. Errors propagate as flc::Error.
nlohmann::json cmd_simulate(const config::RunConfig& cfg, const CommandOptions& opts);
nlohmann::json cmd_gen_data(const config::RunConfig& cfg, const CommandOptions& opts);
nlohmann::json cmd_train(const config::RunConfig& cfg, const CommandOptions& opts);
nlohmann::json cmd_evaluate(const config::RunConfig& cfg, const CommandOptions& opts);
nlohmann::json cmd_info(const std::optional<config::RunConfig>& cfg, const CommandOptions& opts);

/// Shard files as written by gen-data.
struct ShardSet {
  std::vector<std::vector<kan::TrainingSample>> shards;
  double time_scale = 1.0;
  std::string fault;
};
ShardSet read_shards(const std::string& dir);

inline constexpr const char* kShardHeader = "omega,delta_err,t_feature,pa";

}  // namespace flc::cmd
