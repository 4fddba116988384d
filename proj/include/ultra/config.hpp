#pragma once

// Flat `key = value` run configuration shared by the CLI commands.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "ultra/kgdata.hpp"
#include "ultra/model.hpp"
#include "ultra/training.hpp"

namespace ultra {

using ConfigEntries = std::map<std::string, std::string>;

// Blank lines and `#` comments are ignored; repeated keys keep the last value.
ConfigEntries parse_config(std::istream& in, const std::string& source);
ConfigEntries load_config(const std::filesystem::path& path);

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::vector<std::filesystem::path> datasets;
  SplitMode split_mode = SplitMode::kTransductive;
  std::string protocol = "full";
  std::filesystem::path output;
  std::filesystem::path manifest = "ultra_runs.jsonl";
};

// Every documented key; anything else is rejected.
const std::vector<std::string>& config_keys();

// Applies entries on top of defaults; unknown keys and malformed values
// raise ConfigError.
RunConfig resolve_config(const ConfigEntries& entries);

// The resolved configuration as canonical key/value pairs.
ConfigEntries config_snapshot(const RunConfig& config);

}  // namespace ultra
