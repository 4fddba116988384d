#pragma once

// Command implementations behind the `ultra` executable, plus run manifests.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ultra/checkpoint.hpp"
#include "ultra/config.hpp"
#include "ultra/evalrank.hpp"
#include "ultra/relgraph.hpp"

namespace ultra {

// Exit codes of the executable.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

// One line of the append-only JSONL run log.
struct RunManifest {
  std::string command;
  ConfigEntries config;
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::map<std::string, std::string> checkpoint_hashes;
  std::vector<std::string> outputs;
  std::map<std::string, double> timings;
};

nlohmann::json manifest_to_json(const RunManifest& manifest);
void append_manifest(const std::filesystem::path& path, const RunManifest& manifest);

// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

struct ParameterCounts {
  std::size_t relation_encoder = 0;
  std::size_t entity_predictor = 0;
  std::size_t total = 0;
};

ParameterCounts parameter_counts(const ModelConfig& config);

struct LiftSummary {
  std::size_t num_nodes = 0;
  std::array<std::size_t, kNumInteractions> counts{};
  std::size_t total = 0;
};

// Lifts the inverse-augmented graph of a triple file and writes one
// `src<TAB>interaction<TAB>dst` line per relation-graph edge.
LiftSummary cmd_lift(const std::filesystem::path& graph_path, const std::filesystem::path& out_path,
                     const std::filesystem::path& manifest_path, std::ostream& log);

// Trains from a seeded initialization on the configured mixture and writes
// `config.output`.
Checkpoint cmd_pretrain(const RunConfig& config, std::ostream& log);

// Continues training `checkpoint` on one dataset; the best-validation
// checkpoint is written to `config.output`.
Checkpoint cmd_finetune(const RunConfig& config, const std::filesystem::path& checkpoint,
                        const std::filesystem::path& dataset, std::ostream& log);

struct EvalOptions {
  SplitMode split_mode = SplitMode::kTransductive;
  Protocol protocol;
  SplitPart part = SplitPart::kTest;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  bool include_ranks = false;
  std::filesystem::path output;
  std::filesystem::path manifest;
  ConfigEntries config;
};

// Zero-shot evaluation; writes the JSON report to `options.output`.
RankingReport cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& dataset,
                       const EvalOptions& options, std::ostream& log);

// Parses arguments, dispatches to a command and maps errors to exit codes.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ultra
