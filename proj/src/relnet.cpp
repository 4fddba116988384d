#include "ultra/relnet.hpp"

#include <cmath>

#include "ultra/errors.hpp"

namespace ultra {

namespace relnet_names {
std::string fundamental(std::size_t l) { return "relnet." + std::to_string(l) + ".fundamental"; }
std::string update_weight(std::size_t l) { return "relnet." + std::to_string(l) + ".update.weight"; }
std::string update_bias(std::size_t l) { return "relnet." + std::to_string(l) + ".update.bias"; }
std::string norm_gain(std::size_t l) { return "relnet." + std::to_string(l) + ".norm.gain"; }
std::string norm_shift(std::size_t l) { return "relnet." + std::to_string(l) + ".norm.shift"; }
}  // namespace relnet_names

void init_relnet_params(ParameterStore& store, const RelNetShape& shape, std::mt19937_64& rng) {
  const std::size_t d = shape.dim;
  const double emb_scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t l = 0; l < shape.layers; ++l) {
    store.add(relnet_names::fundamental(l), scaled_normal(shape.num_edge_types, d, emb_scale, rng));
    store.add(relnet_names::update_weight(l), uniform_fan_in(2 * d, d, 2 * d, rng));
    store.add(relnet_names::update_bias(l), uniform_fan_in(1, d, 2 * d, rng));
    store.add(relnet_names::norm_gain(l), nd::Tensor(1, d, 1.0));
    store.add(relnet_names::norm_shift(l), nd::Tensor(1, d, 0.0));
  }
}

nd::Tensor indicator_r(RelationId query, std::size_t num_relations, std::size_t dim) {
  if (query >= num_relations) {
    throw IndexError("indicator_r: query relation " + std::to_string(query) + " out of range (" +
                     std::to_string(num_relations) + " relations)");
  }
  nd::Tensor h(num_relations, dim);
  for (auto& v : h.row(query)) v = 1.0;
  return h;
}

nd::MessageIndex relation_message_index(const RelationGraph& rg) {
  std::vector<std::uint32_t> src, rel, dst;
  src.reserve(rg.total_edges());
  rel.reserve(rg.total_edges());
  dst.reserve(rg.total_edges());
  for (std::size_t type = 0; type < rg.num_edge_types(); ++type) {
    for (const auto& e : rg.edges(type)) {
      src.push_back(e.src);
      rel.push_back(static_cast<std::uint32_t>(type));
      dst.push_back(e.dst);
    }
  }
  return nd::MessageIndex(std::move(src), std::move(rel), std::move(dst), rg.num_nodes());
}

nd::Var encode_relations(const BoundParams& params, const RelNetShape& shape,
                         const RelationGraph& rg, const nd::MessageIndex& index, RelationId query) {
  if (rg.num_edge_types() != shape.num_edge_types) {
    throw ContractViolation("relation graph has " + std::to_string(rg.num_edge_types()) +
                            " edge types, model expects " + std::to_string(shape.num_edge_types));
  }
  nd::Tape& tape = params.tape();
  nd::Var h = tape.constant(indicator_r(query, rg.num_nodes(), shape.dim));
  for (std::size_t l = 0; l < shape.layers; ++l) {
    try {
      // The aggregate is order independent so relation relabelings permute
      // the output rows exactly.
      const nd::Var agg = nd::propagate(h, params[relnet_names::fundamental(l)], index,
                                        nd::SumOrder::kCanonical);
      const nd::Var updated = nd::affine(nd::concat_cols(h, agg), params[relnet_names::update_weight(l)],
                                         params[relnet_names::update_bias(l)]);
      h = nd::relu(nd::layer_norm(updated, params[relnet_names::norm_gain(l)],
                                  params[relnet_names::norm_shift(l)]));
    } catch (const NumericError& e) {
      throw NumericError("relation encoder layer " + std::to_string(l) + ": " + e.what());
    }
  }
  return h;
}

ConditionalRelationRepr encode_relations(const RelationGraph& rg, RelationId query,
                                         const ParameterStore& params, const RelNetShape& shape) {
  nd::Tape tape(false);
  BoundParams bound(tape, params, false);
  const auto index = relation_message_index(rg);
  const nd::Var out = encode_relations(bound, shape, rg, index, query);
  return ConditionalRelationRepr{query, out.value()};
}

}  // namespace ultra
