#pragma once

// Negative sampling, the binary cross-entropy objective, mixture sampling
// over several training graphs and the AdamW training loop.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ultra/checkpoint.hpp"
#include "ultra/evalrank.hpp"
#include "ultra/kgdata.hpp"
#include "ultra/model.hpp"

namespace ultra {

struct TrainConfig {
  double learning_rate = 5e-4;
  std::size_t batch_size = 64;
  std::size_t num_negatives = 128;
  // 1 weights negatives uniformly; any other value uses softmax(neg / T).
  double adversarial_temperature = 1.0;
  double weight_decay = 0.0;
  // Exactly one schedule: a step count, or epochs of `batches_per_epoch`
  // batches (0 = one pass over the augmented training edges).
  std::size_t steps = 0;
  std::size_t epochs = 0;
  std::size_t batches_per_epoch = 0;
  // Step schedule only; epoch schedules validate after every epoch.
  std::size_t validation_interval = 5000;
  // Caps the number of validation queries per dataset (0 = all).
  std::size_t max_valid_queries = 0;
  Protocol valid_protocol;
  std::uint64_t seed = 0;
  // Deterministic mode reduces per-positive gradients in index order;
  // otherwise they are added in completion order.
  bool deterministic = true;
  std::size_t threads = 1;
  std::size_t max_resample_attempts = 100;
  // Hides each positive edge and its inverse from the message-passing graph
  // of its own query, so the answer is not reachable through itself.
  bool remove_positive_edges = true;
  // Written with the last finite parameters when training diverges.
  std::filesystem::path last_good_path;
  std::size_t log_every = 0;

  void validate() const;
  nd::AdamWConfig adamw() const;
};

struct TrainDataset {
  std::string name;
  DatasetSplit split;
};

// n corrupted copies of `positive`; each flips a fair coin for head or tail
// and draws a uniform entity, redrawing when the result is an edge of `g`
// (at most `max_attempts` redraws, then the last draw is kept).
std::vector<Triple> sample_negatives(const TripleGraph& g, const Triple& positive, std::size_t n,
                                     std::mt19937_64& rng, std::size_t max_attempts = 100);

// softplus(-pos) + sum_i w_i softplus(neg_i).
double bce_loss(double pos_logit, std::span<const double> neg_logits, double temperature);
std::vector<double> negative_weights(std::span<const double> neg_logits, double temperature);
nd::Var bce_loss(nd::Var pos_logit, nd::Var neg_logits, double temperature);

// Picks one training graph per batch with probability proportional to its
// edge count.
class MixtureSampler {
 public:
  explicit MixtureSampler(std::vector<std::size_t> edge_counts);
  std::size_t operator()(std::mt19937_64& rng);
  const std::vector<double>& probabilities() const { return probabilities_; }

 private:
  std::vector<double> probabilities_;
  std::discrete_distribution<std::size_t> dist_;
};

// Loss of one positive against its negatives on the tape of `params`.
// Tail corruptions are scored from (h, r); head corruptions from (t, r^-1).
// `entity_index` replaces the context's message index when given.
nd::Var positive_loss(const BoundParams& params, const ModelConfig& config, const GraphContext& ctx,
                      const Triple& positive, std::span<const Triple> negatives,
                      double temperature, const nd::MessageIndex* entity_index = nullptr);

struct StepRecord {
  std::size_t step = 0;
  std::size_t dataset = 0;
  double loss = 0.0;
};

struct ValidationRecord {
  std::size_t step = 0;
  double mrr = 0.0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<StepRecord> history;
  std::vector<ValidationRecord> validations;
  std::optional<double> best_valid_mrr;
  std::size_t total_steps = 0;
};

TrainResult train(const TrainConfig& config, std::span<const TrainDataset> datasets,
                  const Checkpoint& initial,
                  const std::function<void(const std::string&)>& log = {});

}  // namespace ultra
