#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "ultra/entnet.hpp"
#include "ultra/evalrank.hpp"
#include "ultra/kgdata.hpp"
#include "ultra/params.hpp"
#include "ultra/relgraph.hpp"
#include "ultra/relnet.hpp"

namespace ultra {

enum class Ablation { kNone, kNoEdgeTypes };

std::string_view to_string(Ablation a);
Ablation parse_ablation(std::string_view text);

struct ModelConfig {
  std::size_t dim = 64;
  std::size_t relation_layers = 6;
  std::size_t entity_layers = 6;
  Ablation ablation = Ablation::kNone;

  RelNetShape relnet_shape() const;
  EntNetShape entnet_shape() const;
  LiftMode lift_mode() const;
  bool operator==(const ModelConfig&) const = default;
};

ParameterStore make_initial_params(const ModelConfig& config, std::uint64_t seed);

// Hyperparameters plus the learnable parameters of both networks.
class UltraModel {
 public:
  UltraModel(const ModelConfig& config, std::uint64_t seed);
  // Validates that `params` has exactly the names and shapes `config` implies.
  UltraModel(const ModelConfig& config, ParameterStore params);

  const ModelConfig& config() const { return config_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  std::size_t relation_encoder_parameters() const { return params_.count(kRelNetPrefix); }
  std::size_t entity_predictor_parameters() const { return params_.count(kEntNetPrefix); }
  std::size_t total_parameters() const { return params_.count(); }

 private:
  ModelConfig config_;
  ParameterStore params_;
};

// Per-graph derived structures shared by all queries on that graph.
struct GraphContext {
  GraphPtr graph;
  std::shared_ptr<const RelationGraph> relation_graph;
  nd::MessageIndex relation_index;
  nd::MessageIndex entity_index;
};

std::shared_ptr<const GraphContext> make_graph_context(GraphPtr graph, LiftMode mode);

class GraphContextCache {
 public:
  std::shared_ptr<const GraphContext> get(const GraphPtr& graph, LiftMode mode);

 private:
  std::mutex mutex_;
  std::map<std::pair<std::uint64_t, LiftMode>, std::shared_ptr<const GraphContext>> entries_;
};

// Conditional relation representations keyed by (graph, query relation).
// Entries are valid for one parameter snapshot; clear() after updates.
class RelationReprCache {
 public:
  explicit RelationReprCache(std::size_t capacity = 4096) : capacity_(capacity) {}

  std::shared_ptr<const ConditionalRelationRepr> get(const GraphContext& ctx, RelationId query,
                                                     const UltraModel& model);
  std::size_t encoder_invocations() const;
  void clear();

 private:
  using Key = std::pair<std::uint64_t, RelationId>;
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::map<Key, std::shared_ptr<const ConditionalRelationRepr>> entries_;
  std::deque<Key> order_;
  std::size_t invocations_ = 0;
};

QueryScores score_query(const GraphContext& ctx, EntityId head, RelationId query,
                        const ConditionalRelationRepr& relrepr, const UltraModel& model);

// Element-wise score_query; the relation encoder runs once per distinct
// relation (through `cache`).
std::vector<QueryScores> score_batch(const GraphContext& ctx, std::span<const TailQuery> queries,
                                     const UltraModel& model, RelationReprCache& cache,
                                     std::size_t threads = 1);

// Adapts a model to the ranking evaluator.
class UltraScorer : public TailScorer {
 public:
  explicit UltraScorer(const UltraModel& model, std::size_t threads = 1)
      : model_(&model), threads_(threads) {}

  std::vector<std::vector<double>> score_tails(const GraphPtr& graph,
                                               std::span<const TailQuery> queries) const override;
  std::size_t encoder_invocations() const { return relreprs_.encoder_invocations(); }

 private:
  const UltraModel* model_;
  std::size_t threads_;
  mutable GraphContextCache contexts_;
  mutable RelationReprCache relreprs_;
};

}  // namespace ultra
