#include "ultra/model.hpp"

#include <random>

#include "ultra/errors.hpp"
#include "ultra/parallel.hpp"

namespace ultra {

std::string_view to_string(Ablation a) {
  return a == Ablation::kNone ? "none" : "no-etypes";
}

Ablation parse_ablation(std::string_view text) {
  if (text == "none") return Ablation::kNone;
  if (text == "no-etypes") return Ablation::kNoEdgeTypes;
  throw ConfigError("unknown ablation '" + std::string(text) + "' (expected none or no-etypes)");
}

RelNetShape ModelConfig::relnet_shape() const {
  return RelNetShape{dim, relation_layers, ablation == Ablation::kNone ? kNumInteractions : 1};
}

EntNetShape ModelConfig::entnet_shape() const { return EntNetShape{dim, entity_layers}; }

LiftMode ModelConfig::lift_mode() const {
  return ablation == Ablation::kNone ? LiftMode::kTyped : LiftMode::kHomogeneous;
}

ParameterStore make_initial_params(const ModelConfig& config, std::uint64_t seed) {
  if (config.dim == 0) throw ConfigError("model dimension must be positive");
  std::mt19937_64 rng(seed);
  ParameterStore store;
  init_relnet_params(store, config.relnet_shape(), rng);
  init_entnet_params(store, config.entnet_shape(), rng);
  // Initial values are representable in checkpoints, so a zero-step run
  // stores exactly the initialization.
  round_to_float32(store);
  return store;
}

UltraModel::UltraModel(const ModelConfig& config, std::uint64_t seed)
    : config_(config), params_(make_initial_params(config, seed)) {}

UltraModel::UltraModel(const ModelConfig& config, ParameterStore params)
    : config_(config), params_(std::move(params)) {
  const ParameterStore expected = make_initial_params(config, 0);
  if (expected.names() != params_.names()) {
    throw ContractViolation("parameter names do not match the model configuration");
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (expected.value(i).shape() != params_.value(i).shape()) {
      throw ContractViolation("parameter " + expected.name(i) + " has the wrong shape");
    }
  }
}

std::shared_ptr<const GraphContext> make_graph_context(GraphPtr graph, LiftMode mode) {
  if (!graph) throw ContractViolation("null graph");
  if (!graph->inverses_added()) throw ContractViolation("graph must be inverse-augmented");
  auto rg = std::make_shared<const RelationGraph>(mode == LiftMode::kTyped ? lift(*graph)
                                                                           : lift_homogeneous(*graph));
  auto ctx = std::make_shared<GraphContext>();
  ctx->relation_index = relation_message_index(*rg);
  ctx->entity_index = entity_message_index(*graph);
  ctx->relation_graph = std::move(rg);
  ctx->graph = std::move(graph);
  return ctx;
}

std::shared_ptr<const GraphContext> GraphContextCache::get(const GraphPtr& graph, LiftMode mode) {
  const auto key = std::make_pair(graph->identity(), mode);
  {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(key);
    if (it != entries_.end()) return it->second;
  }
  auto ctx = make_graph_context(graph, mode);
  std::lock_guard lock(mutex_);
  return entries_.try_emplace(key, std::move(ctx)).first->second;
}

std::shared_ptr<const ConditionalRelationRepr> RelationReprCache::get(const GraphContext& ctx,
                                                                      RelationId query,
                                                                      const UltraModel& model) {
  const Key key{ctx.graph->identity(), query};
  {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(key);
    if (it != entries_.end()) return it->second;
  }
  nd::Tape tape(false);
  BoundParams bound(tape, model.params(), false);
  const nd::Var out = encode_relations(bound, model.config().relnet_shape(), *ctx.relation_graph,
                                       ctx.relation_index, query);
  auto repr = std::make_shared<const ConditionalRelationRepr>(ConditionalRelationRepr{query, out.value()});

  std::lock_guard lock(mutex_);
  ++invocations_;
  auto [it, inserted] = entries_.try_emplace(key, std::move(repr));
  if (inserted) {
    order_.push_back(key);
    while (entries_.size() > capacity_ && !order_.empty()) {
      entries_.erase(order_.front());
      order_.pop_front();
    }
  }
  return it->second;
}

std::size_t RelationReprCache::encoder_invocations() const {
  std::lock_guard lock(mutex_);
  return invocations_;
}

void RelationReprCache::clear() {
  std::lock_guard lock(mutex_);
  entries_.clear();
  order_.clear();
}

QueryScores score_query(const GraphContext& ctx, EntityId head, RelationId query,
                        const ConditionalRelationRepr& relrepr, const UltraModel& model) {
  return score_query(*ctx.graph, ctx.entity_index, head, query, relrepr, model.params(),
                     model.config().entnet_shape());
}

namespace {

template <typename E>
[[noreturn]] void rethrow_with_index(const E& e, std::size_t i) {
  throw E("query " + std::to_string(i) + ": " + e.what());
}

}  // namespace

std::vector<QueryScores> score_batch(const GraphContext& ctx, std::span<const TailQuery> queries,
                                     const UltraModel& model, RelationReprCache& cache,
                                     std::size_t threads) {
  // Relation representations first, one encoder pass per distinct relation.
  std::map<RelationId, std::shared_ptr<const ConditionalRelationRepr>> reprs;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const RelationId q = queries[i].relation;
    if (reprs.contains(q)) continue;
    try {
      reprs.emplace(q, cache.get(ctx, q, model));
    } catch (const IndexError& e) {
      rethrow_with_index(e, i);
    } catch (const NumericError& e) {
      rethrow_with_index(e, i);
    }
  }
  std::vector<QueryScores> out(queries.size());
  parallel_for(queries.size(), threads, [&](std::size_t i) {
    const auto& q = queries[i];
    try {
      out[i] = score_query(ctx, q.head, q.relation, *reprs.at(q.relation), model);
    } catch (const IndexError& e) {
      rethrow_with_index(e, i);
    } catch (const NumericError& e) {
      rethrow_with_index(e, i);
    } catch (const ContractViolation& e) {
      rethrow_with_index(e, i);
    }
  });
  return out;
}

std::vector<std::vector<double>> UltraScorer::score_tails(const GraphPtr& graph,
                                                          std::span<const TailQuery> queries) const {
  const auto ctx = contexts_.get(graph, model_->config().lift_mode());
  auto scored = score_batch(*ctx, queries, *model_, relreprs_, threads_);
  std::vector<std::vector<double>> out;
  out.reserve(scored.size());
  for (auto& s : scored) out.push_back(std::move(s.scores));
  return out;
}

}  // namespace ultra
