#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace ultra {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

struct Triple {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;

  auto operator<=>(const Triple&) const = default;
};

struct TripleHash {
  std::size_t operator()(const Triple& t) const noexcept {
    std::uint64_t x = (std::uint64_t{t.head} << 32) ^ (std::uint64_t{t.relation} << 16) ^ t.tail;
    x ^= x >> 33;
    x *= 0xff51afd7ed558ccdULL;
    x ^= x >> 33;
    return static_cast<std::size_t>(x);
  }
};

// Dense string <-> id mapping, ids assigned in insertion order.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> names);

  std::optional<std::uint32_t> find(std::string_view name) const;
  // Returns the existing id or appends `name`.
  std::uint32_t intern(std::string_view name);
  const std::string& name(std::uint32_t id) const { return names_.at(id); }
  std::size_t size() const { return names_.size(); }
  bool empty() const { return names_.empty(); }
  const std::vector<std::string>& names() const { return names_; }

  bool operator==(const Vocabulary& other) const { return names_ == other.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

// Immutable multi-relational edge list. When `inverses_added()` the relation
// ids are laid out in two blocks: r in [0, R/2) is an original relation and
// r + R/2 its inverse.
class TripleGraph {
 public:
  TripleGraph() : TripleGraph(0, 0, {}) {}
  // Validates id ranges and deduplicates edges (first occurrence kept).
  TripleGraph(std::size_t num_entities, std::size_t num_relations, std::vector<Triple> edges,
              Vocabulary entities = {}, Vocabulary relations = {}, bool inverses_added = false);

  std::size_t num_entities() const { return num_entities_; }
  std::size_t num_relations() const { return num_relations_; }
  std::size_t num_edges() const { return edges_.size(); }
  std::span<const Triple> edges() const { return edges_; }
  bool inverses_added() const { return inverses_added_; }
  // Number of relations before inverse augmentation.
  std::size_t num_base_relations() const {
    return inverses_added_ ? num_relations_ / 2 : num_relations_;
  }
  RelationId inverse_of(RelationId r) const;

  bool contains(const Triple& t) const { return edge_set_.contains(t); }
  std::size_t duplicates_dropped() const { return duplicates_dropped_; }

  // Optional names. Relation names cover the base (non-inverse) relations.
  const Vocabulary& entity_vocab() const { return entity_vocab_; }
  const Vocabulary& relation_vocab() const { return relation_vocab_; }
  std::string entity_name(EntityId e) const;
  std::string relation_name(RelationId r) const;

  // Process-unique identity, used as a cache key for derived structures.
  std::uint64_t identity() const { return identity_; }

 private:
  std::size_t num_entities_;
  std::size_t num_relations_;
  std::vector<Triple> edges_;
  std::unordered_set<Triple, TripleHash> edge_set_;
  Vocabulary entity_vocab_;
  Vocabulary relation_vocab_;
  bool inverses_added_;
  std::size_t duplicates_dropped_ = 0;
  std::uint64_t identity_;
};

using GraphPtr = std::shared_ptr<const TripleGraph>;

enum class SplitMode { kTransductive, kInductiveE, kInductiveER };

std::string_view to_string(SplitMode mode);
SplitMode parse_split_mode(std::string_view text);

struct DatasetSplit {
  GraphPtr train_graph;
  GraphPtr valid_graph;
  GraphPtr test_graph;
  std::vector<Triple> valid_queries;
  std::vector<Triple> test_queries;
  SplitMode mode = SplitMode::kTransductive;
};

// Reads `head<TAB>relation<TAB>tail` lines. When a vocabulary is supplied it
// is used read-only and unknown names raise VocabularyError; otherwise ids are
// assigned in first-appearance order.
TripleGraph load_triples(const std::filesystem::path& path,
                         const Vocabulary* entity_vocab = nullptr,
                         const Vocabulary* relation_vocab = nullptr);
TripleGraph parse_triples(std::istream& in, const std::string& source,
                          const Vocabulary* entity_vocab = nullptr,
                          const Vocabulary* relation_vocab = nullptr);

// Query triples resolved against fixed vocabularies (never extended).
std::vector<Triple> load_queries(const std::filesystem::path& path, const Vocabulary& entities,
                                 const Vocabulary& relations);

// Writes base-direction edges as name lines (numeric ids when unnamed).
void write_triples(const TripleGraph& g, std::ostream& out);

TripleGraph add_inverse_relations(const TripleGraph& g);

DatasetSplit load_dataset(const std::filesystem::path& dir, SplitMode mode);

}  // namespace ultra
