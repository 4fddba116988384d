#pragma once

// Binary checkpoint files: "UKGR", u32 LE version, u64 LE header length,
// JSON header, then float32 LE tensor payloads in manifest order.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ultra/model.hpp"
#include "ultra/ndtape.hpp"
#include "ultra/params.hpp"

namespace ultra {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Provenance {
  std::vector<std::string> mixture;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
  bool operator==(const Provenance&) const = default;
};

struct Checkpoint {
  ModelConfig model;
  ParameterStore params;
  std::optional<nd::OptimizerState> optimizer;
  Provenance provenance;
};

// Rounds the moments to float32, the precision they are stored with.
void round_to_float32(nd::OptimizerState& state);

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes, const std::string& source = "<memory>");

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ultra
