#include "ultra/entnet.hpp"

#include <algorithm>

#include "ultra/errors.hpp"

namespace ultra {

namespace entnet_names {
namespace {
std::string layer_name(std::size_t l, const char* suffix) {
  return "entnet." + std::to_string(l) + "." + suffix;
}
}  // namespace
std::string rel_mlp_w1(std::size_t l) { return layer_name(l, "rel_mlp.w1"); }
std::string rel_mlp_b1(std::size_t l) { return layer_name(l, "rel_mlp.b1"); }
std::string rel_mlp_w2(std::size_t l) { return layer_name(l, "rel_mlp.w2"); }
std::string rel_mlp_b2(std::size_t l) { return layer_name(l, "rel_mlp.b2"); }
std::string update_weight(std::size_t l) { return layer_name(l, "update.weight"); }
std::string update_bias(std::size_t l) { return layer_name(l, "update.bias"); }
std::string norm_gain(std::size_t l) { return layer_name(l, "norm.gain"); }
std::string norm_shift(std::size_t l) { return layer_name(l, "norm.shift"); }
}  // namespace entnet_names

void init_entnet_params(ParameterStore& store, const EntNetShape& shape, std::mt19937_64& rng) {
  namespace n = entnet_names;
  const std::size_t d = shape.dim;
  for (std::size_t l = 0; l < shape.layers; ++l) {
    store.add(n::rel_mlp_w1(l), uniform_fan_in(d, d, d, rng));
    store.add(n::rel_mlp_b1(l), uniform_fan_in(1, d, d, rng));
    store.add(n::rel_mlp_w2(l), uniform_fan_in(d, d, d, rng));
    store.add(n::rel_mlp_b2(l), uniform_fan_in(1, d, d, rng));
    store.add(n::update_weight(l), uniform_fan_in(2 * d, d, 2 * d, rng));
    store.add(n::update_bias(l), uniform_fan_in(1, d, 2 * d, rng));
    store.add(n::norm_gain(l), nd::Tensor(1, d, 1.0));
    store.add(n::norm_shift(l), nd::Tensor(1, d, 0.0));
  }
  store.add(std::string(n::kScoreW1), uniform_fan_in(d, d, d, rng));
  store.add(std::string(n::kScoreB1), uniform_fan_in(1, d, d, rng));
  store.add(std::string(n::kScoreW2), uniform_fan_in(d, 1, d, rng));
  store.add(std::string(n::kScoreB2), uniform_fan_in(1, 1, d, rng));
}

nd::Tensor indicator_e(EntityId head, std::size_t num_entities, std::span<const double> query_repr) {
  if (head >= num_entities) {
    throw IndexError("indicator_e: head entity " + std::to_string(head) + " out of range (" +
                     std::to_string(num_entities) + " entities)");
  }
  nd::Tensor h(num_entities, query_repr.size());
  std::copy(query_repr.begin(), query_repr.end(), h.row(head).begin());
  return h;
}

nd::MessageIndex entity_message_index(const TripleGraph& g) { return entity_message_index(g, {}); }

nd::MessageIndex entity_message_index(const TripleGraph& g, std::span<const Triple> exclude) {
  std::vector<std::uint32_t> src, rel, dst;
  src.reserve(g.num_edges());
  rel.reserve(g.num_edges());
  dst.reserve(g.num_edges());
  for (const auto& e : g.edges()) {
    if (std::find(exclude.begin(), exclude.end(), e) != exclude.end()) continue;
    src.push_back(e.head);
    rel.push_back(e.relation);
    dst.push_back(e.tail);
  }
  return nd::MessageIndex(std::move(src), std::move(rel), std::move(dst), g.num_entities());
}

nd::Var entity_states(const BoundParams& params, const EntNetShape& shape, const TripleGraph& g,
                      const nd::MessageIndex& index, EntityId head, RelationId query,
                      nd::Var relation_repr) {
  namespace n = entnet_names;
  if (!g.inverses_added()) throw ContractViolation("entity graph must be inverse-augmented");
  if (relation_repr.rows() != g.num_relations()) {
    throw ContractViolation("relation representations have " +
                            std::to_string(relation_repr.rows()) + " rows, graph has " +
                            std::to_string(g.num_relations()) + " relations");
  }
  if (query >= g.num_relations()) throw IndexError("query relation out of range");
  if (head >= g.num_entities()) {
    throw IndexError("head entity " + std::to_string(head) + " out of range");
  }
  // Indicator as differentiable ops: row `head` receives R_q[query].
  const std::uint32_t q_row[] = {query};
  const std::uint32_t h_row[] = {head};
  nd::Var h = nd::scatter_add(nd::index_select(relation_repr, q_row), h_row, g.num_entities());

  for (std::size_t l = 0; l < shape.layers; ++l) {
    try {
      const nd::Var hidden = nd::relu(
          nd::affine(relation_repr, params[n::rel_mlp_w1(l)], params[n::rel_mlp_b1(l)]));
      const nd::Var layer_rel = nd::affine(hidden, params[n::rel_mlp_w2(l)], params[n::rel_mlp_b2(l)]);
      const nd::Var agg = nd::propagate(h, layer_rel, index);
      const nd::Var updated =
          nd::affine(nd::concat_cols(h, agg), params[n::update_weight(l)], params[n::update_bias(l)]);
      h = nd::relu(nd::layer_norm(updated, params[n::norm_gain(l)], params[n::norm_shift(l)]));
    } catch (const NumericError& e) {
      throw NumericError("entity predictor layer " + std::to_string(l) + ": " + e.what());
    }
  }
  return h;
}

nd::Var score_states(const BoundParams& params, nd::Var states) {
  namespace n = entnet_names;
  const nd::Var hidden =
      nd::relu(nd::affine(states, params[n::kScoreW1], params[n::kScoreB1]));
  return nd::affine(hidden, params[n::kScoreW2], params[n::kScoreB2]);
}

QueryScores score_query(const TripleGraph& g, const nd::MessageIndex& index, EntityId head,
                        RelationId query, const ConditionalRelationRepr& relrepr,
                        const ParameterStore& params, const EntNetShape& shape) {
  if (relrepr.query_relation != query) {
    throw ContractViolation("relation representations were conditioned on a different query");
  }
  nd::Tape tape(false);
  BoundParams bound(tape, params, false);
  const nd::Var rel = tape.constant(relrepr.matrix);
  const nd::Var logits = score_states(bound, entity_states(bound, shape, g, index, head, query, rel));
  QueryScores out{head, query, {}};
  const auto values = logits.value().values();
  out.scores.assign(values.begin(), values.end());
  return out;
}

QueryScores score_query(const TripleGraph& g, EntityId head, RelationId query,
                        const ConditionalRelationRepr& relrepr, const ParameterStore& params,
                        const EntNetShape& shape) {
  return score_query(g, entity_message_index(g), head, query, relrepr, params, shape);
}

}  // namespace ultra
