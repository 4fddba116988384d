#pragma once

// Entity-level conditional link predictor. Runs message passing over the
// inverse-augmented entity graph starting from the query head, with edge
// features derived from the query-conditioned relation representations.

#include <random>
#include <span>
#include <string>
#include <vector>

#include "ultra/kgdata.hpp"
#include "ultra/ndtape.hpp"
#include "ultra/params.hpp"
#include "ultra/relnet.hpp"

namespace ultra {

struct EntNetShape {
  std::size_t dim = 64;
  std::size_t layers = 6;
};

struct QueryScores {
  EntityId head = 0;
  RelationId query_relation = 0;
  std::vector<double> scores;  // one logit per entity
};

namespace entnet_names {
std::string rel_mlp_w1(std::size_t layer);
std::string rel_mlp_b1(std::size_t layer);
std::string rel_mlp_w2(std::size_t layer);
std::string rel_mlp_b2(std::size_t layer);
std::string update_weight(std::size_t layer);
std::string update_bias(std::size_t layer);
std::string norm_gain(std::size_t layer);
std::string norm_shift(std::size_t layer);
inline constexpr std::string_view kScoreW1 = "entnet.score.w1";
inline constexpr std::string_view kScoreB1 = "entnet.score.b1";
inline constexpr std::string_view kScoreW2 = "entnet.score.w2";
inline constexpr std::string_view kScoreB2 = "entnet.score.b2";
}  // namespace entnet_names

inline constexpr std::string_view kEntNetPrefix = "entnet.";

void init_entnet_params(ParameterStore& store, const EntNetShape& shape, std::mt19937_64& rng);

// Row `head` holds the query vector, all other rows are zero.
nd::Tensor indicator_e(EntityId head, std::size_t num_entities, std::span<const double> query_repr);

// Messages of the entity graph: head -> tail over every stored edge, relation
// row = edge relation id.
nd::MessageIndex entity_message_index(const TripleGraph& g);
// Same, without the listed edges.
nd::MessageIndex entity_message_index(const TripleGraph& g, std::span<const Triple> exclude);

// Differentiable forward up to the final node states (|V| x d).
nd::Var entity_states(const BoundParams& params, const EntNetShape& shape, const TripleGraph& g,
                      const nd::MessageIndex& index, EntityId head, RelationId query,
                      nd::Var relation_repr);

// Scorer MLP applied row-wise: n x d states -> n x 1 logits.
nd::Var score_states(const BoundParams& params, nd::Var states);

QueryScores score_query(const TripleGraph& g, EntityId head, RelationId query,
                        const ConditionalRelationRepr& relrepr, const ParameterStore& params,
                        const EntNetShape& shape);
QueryScores score_query(const TripleGraph& g, const nd::MessageIndex& index, EntityId head,
                        RelationId query, const ConditionalRelationRepr& relrepr,
                        const ParameterStore& params, const EntNetShape& shape);

}  // namespace ultra
