#include "ultra/relgraph.hpp"

#include <algorithm>
#include <unordered_set>

#include "ultra/errors.hpp"

namespace ultra {
namespace {

SparseBinaryMatrix from_pairs(std::size_t rows, std::size_t cols,
                              std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs) {
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  SparseBinaryMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.row_ptr.assign(rows + 1, 0);
  m.col_idx.reserve(pairs.size());
  for (const auto& [r, c] : pairs) {
    ++m.row_ptr[r + 1];
    m.col_idx.push_back(c);
  }
  for (std::size_t r = 0; r < rows; ++r) m.row_ptr[r + 1] += m.row_ptr[r];
  return m;
}

void require_augmented(const TripleGraph& g) {
  if (!g.inverses_added()) throw ContractViolation("relation graph requires inverse relations");
}

}  // namespace

std::string_view to_string(Interaction type) {
  switch (type) {
    case Interaction::kH2H: return "h2h";
    case Interaction::kT2T: return "t2t";
    case Interaction::kH2T: return "h2t";
    case Interaction::kT2H: return "t2h";
  }
  return "?";
}

RelationGraph::RelationGraph(std::size_t num_nodes,
                             std::vector<std::vector<RelationEdge>> edges_by_type)
    : num_nodes_(num_nodes), edges_(std::move(edges_by_type)) {
  for (auto& list : edges_) {
    for (const auto& e : list) {
      if (e.src >= num_nodes_ || e.dst >= num_nodes_) {
        throw IndexError("relation graph edge out of range");
      }
    }
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
  }
}

std::size_t RelationGraph::total_edges() const {
  std::size_t n = 0;
  for (const auto& list : edges_) n += list.size();
  return n;
}

bool SparseBinaryMatrix::at(std::size_t r, std::uint32_t c) const {
  const auto cols_of_row = row(r);
  return std::binary_search(cols_of_row.begin(), cols_of_row.end(), c);
}

IncidencePair build_incidence(const TripleGraph& g) {
  require_augmented(g);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> heads, tails;
  heads.reserve(g.num_edges());
  tails.reserve(g.num_edges());
  for (const auto& e : g.edges()) {
    heads.emplace_back(e.head, e.relation);
    tails.emplace_back(e.tail, e.relation);
  }
  return IncidencePair{from_pairs(g.num_entities(), g.num_relations(), std::move(heads)),
                       from_pairs(g.num_entities(), g.num_relations(), std::move(tails))};
}

std::vector<RelationEdge> transpose_product_pattern(const SparseBinaryMatrix& lhs,
                                                    const SparseBinaryMatrix& rhs) {
  if (lhs.rows != rhs.rows) throw DimensionError("transpose_product_pattern: row mismatch");
  // (lhs^T rhs)[a][b] = sum_v lhs[v][a] * rhs[v][b]; only the pattern is kept.
  std::unordered_set<std::uint64_t> seen;
  std::vector<RelationEdge> out;
  for (std::size_t v = 0; v < lhs.rows; ++v) {
    for (auto a : lhs.row(v)) {
      for (auto b : rhs.row(v)) {
        if (seen.insert((std::uint64_t{a} << 32) | b).second) out.push_back(RelationEdge{a, b});
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

RelationGraph lift(const TripleGraph& g) {
  const auto inc = build_incidence(g);
  std::vector<std::vector<RelationEdge>> edges(kNumInteractions);
  edges[static_cast<std::size_t>(Interaction::kH2H)] = transpose_product_pattern(inc.head, inc.head);
  edges[static_cast<std::size_t>(Interaction::kT2T)] = transpose_product_pattern(inc.tail, inc.tail);
  edges[static_cast<std::size_t>(Interaction::kH2T)] = transpose_product_pattern(inc.head, inc.tail);
  edges[static_cast<std::size_t>(Interaction::kT2H)] = transpose_product_pattern(inc.tail, inc.head);
  return RelationGraph(g.num_relations(), std::move(edges));
}

RelationGraph lift_homogeneous(const TripleGraph& g) {
  const auto typed = lift(g);
  std::vector<RelationEdge> all;
  for (std::size_t t = 0; t < typed.num_edge_types(); ++t) {
    all.insert(all.end(), typed.edges(t).begin(), typed.edges(t).end());
  }
  std::vector<std::vector<RelationEdge>> edges;
  edges.push_back(std::move(all));
  return RelationGraph(g.num_relations(), std::move(edges));
}

std::shared_ptr<const RelationGraph> LiftCache::get(const TripleGraph& g, LiftMode mode) {
  auto& map = mode == LiftMode::kTyped ? typed_ : homogeneous_;
  {
    std::lock_guard lock(mutex_);
    if (auto it = map.find(g.identity()); it != map.end()) return it->second;
  }
  auto lifted = std::make_shared<const RelationGraph>(mode == LiftMode::kTyped ? lift(g)
                                                                               : lift_homogeneous(g));
  std::lock_guard lock(mutex_);
  return map.emplace(g.identity(), std::move(lifted)).first->second;
}

std::size_t LiftCache::size() const {
  std::lock_guard lock(mutex_);
  return typed_.size() + homogeneous_.size();
}

}  // namespace ultra
