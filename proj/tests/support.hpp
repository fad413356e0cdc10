#pragma once

#include <string>

#include "flc/config.hpp"

namespace support {

inline std::string config_path(const std::string& name) { return std::string(FLC_CONFIG_DIR) + "/" + name; }

inline const flc::config::RunConfig& desk3() {
  static const flc::config::RunConfig cfg = flc::config::load_config(config_path("desk3.json"));
  return cfg;
}

}  // namespace support
