#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ultra/kgdata.hpp"

namespace ultra {

// The four relation-to-relation interactions. Order fixes the row of the
// corresponding fundamental embedding.
enum class Interaction : std::uint8_t { kH2H = 0, kT2T = 1, kH2T = 2, kT2H = 3 };
inline constexpr std::size_t kNumInteractions = 4;
inline constexpr std::array<Interaction, kNumInteractions> kAllInteractions = {
    Interaction::kH2H, Interaction::kT2T, Interaction::kH2T, Interaction::kT2H};

std::string_view to_string(Interaction type);

struct RelationEdge {
  RelationId src = 0;
  RelationId dst = 0;
  auto operator<=>(const RelationEdge&) const = default;
};

// Graph whose nodes are the relations of an inverse-augmented graph. Typed
// graphs have four edge lists (indexed by Interaction); the homogeneous
// ablation has a single list. Each list is sorted by (src, dst) and unique.
class RelationGraph {
 public:
  RelationGraph(std::size_t num_nodes, std::vector<std::vector<RelationEdge>> edges_by_type);

  std::size_t num_nodes() const { return num_nodes_; }
  std::size_t num_edge_types() const { return edges_.size(); }
  bool homogeneous() const { return edges_.size() == 1; }
  const std::vector<RelationEdge>& edges(std::size_t type) const { return edges_.at(type); }
  const std::vector<RelationEdge>& edges(Interaction type) const {
    return edges(static_cast<std::size_t>(type));
  }
  std::size_t total_edges() const;

  bool operator==(const RelationGraph&) const = default;

 private:
  std::size_t num_nodes_;
  std::vector<std::vector<RelationEdge>> edges_;
};

// Binary sparse matrix in CSR layout; columns within a row are ascending.
struct SparseBinaryMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::uint32_t> col_idx;

  std::size_t nnz() const { return col_idx.size(); }
  bool at(std::size_t r, std::uint32_t c) const;
  std::span<const std::uint32_t> row(std::size_t r) const {
    return {col_idx.data() + row_ptr[r], row_ptr[r + 1] - row_ptr[r]};
  }
};

// entity x relation incidence: head[v][r] = 1 iff some (v, r, .) exists,
// tail[v][r] = 1 iff some (., r, v) exists.
struct IncidencePair {
  SparseBinaryMatrix head;
  SparseBinaryMatrix tail;
};

IncidencePair build_incidence(const TripleGraph& g);

// Nonzero pattern of lhs^T * rhs as a sorted, unique edge list.
std::vector<RelationEdge> transpose_product_pattern(const SparseBinaryMatrix& lhs,
                                                    const SparseBinaryMatrix& rhs);

RelationGraph lift(const TripleGraph& g);
// Single-type relation graph: union of the four interaction edge sets.
RelationGraph lift_homogeneous(const TripleGraph& g);

enum class LiftMode { kTyped, kHomogeneous };

// Lifted graphs keyed by graph identity; safe for concurrent use.
class LiftCache {
 public:
  std::shared_ptr<const RelationGraph> get(const TripleGraph& g, LiftMode mode);
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::unordered_map<std::uint64_t, std::shared_ptr<const RelationGraph>> typed_;
  std::unordered_map<std::uint64_t, std::shared_ptr<const RelationGraph>> homogeneous_;
};

}  // namespace ultra
