#pragma once

// Relation-level network: query-conditioned representations of every
// relation node in a relation graph.

#include <random>
#include <string>

#include "ultra/kgdata.hpp"
#include "ultra/ndtape.hpp"
#include "ultra/params.hpp"
#include "ultra/relgraph.hpp"

namespace ultra {

struct RelNetShape {
  std::size_t dim = 64;
  std::size_t layers = 6;
  // 4 for the typed relation graph, 1 for the homogeneous ablation.
  std::size_t num_edge_types = kNumInteractions;
};

struct ConditionalRelationRepr {
  RelationId query_relation = 0;
  nd::Tensor matrix;  // |R| x d
};

namespace relnet_names {
std::string fundamental(std::size_t layer);
std::string update_weight(std::size_t layer);
std::string update_bias(std::size_t layer);
std::string norm_gain(std::size_t layer);
std::string norm_shift(std::size_t layer);
}  // namespace relnet_names

inline constexpr std::string_view kRelNetPrefix = "relnet.";

void init_relnet_params(ParameterStore& store, const RelNetShape& shape, std::mt19937_64& rng);

// All-ones row at `query`, zeros elsewhere.
nd::Tensor indicator_r(RelationId query, std::size_t num_relations, std::size_t dim);

// Messages of the relation graph: src -> dst, relation row = edge type.
nd::MessageIndex relation_message_index(const RelationGraph& rg);

// Differentiable forward; returns the |R| x d matrix of representations.
nd::Var encode_relations(const BoundParams& params, const RelNetShape& shape,
                         const RelationGraph& rg, const nd::MessageIndex& index, RelationId query);

ConditionalRelationRepr encode_relations(const RelationGraph& rg, RelationId query,
                                         const ParameterStore& params, const RelNetShape& shape);

}  // namespace ultra
