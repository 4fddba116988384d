#pragma once

// Filtered ranking evaluation: MRR and Hits@k under full-entity,
// tails-only and sampled-negative protocols.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "ultra/kgdata.hpp"

namespace ultra {

struct TailQuery {
  EntityId head = 0;
  RelationId relation = 0;
  auto operator<=>(const TailQuery&) const = default;
};

// Anything that assigns a score to every entity of `graph` as the tail of
// (head, relation, ?).
class TailScorer {
 public:
  virtual ~TailScorer() = default;
  virtual std::vector<std::vector<double>> score_tails(const GraphPtr& graph,
                                                       std::span<const TailQuery> queries) const = 0;
};

enum class ProtocolMode { kBothDirections, kTailsOnly, kSampledNegatives };

struct Protocol {
  ProtocolMode mode = ProtocolMode::kBothDirections;
  std::vector<std::size_t> k_values{1, 3, 10};
  std::size_t num_sampled_negatives = 50;
  // Sampled mode ranks both directions unless this is set.
  bool sampled_tails_only = false;
  // Known positives masked out of the candidate set. Query sets only count
  // when they belong to the evaluated inference graph.
  bool filter_graph = true;
  bool filter_valid = true;
  bool filter_test = true;

  void validate() const;
  std::string name() const;
};

// "full", "tails" or "negs50".
Protocol protocol_from_name(std::string_view name);

struct RankingReport {
  Protocol protocol;
  std::vector<double> ranks;
  std::size_t query_count = 0;
  double mrr = 0.0;
  std::map<std::size_t, double> hits_at_k;
};

// 1 + #(strictly better) + #(ties) / 2 over candidates outside `mask`.
double rank_of(std::span<const double> scores, EntityId true_entity,
               std::span<const EntityId> mask = {});

RankingReport summarize(std::vector<double> ranks, const Protocol& protocol);

// Known tails per (head, relation) over an inverse-augmented edge set.
class FilterIndex {
 public:
  explicit FilterIndex(std::size_t num_relations) : num_relations_(num_relations) {}
  void add(const Triple& t);
  // Adds every edge of an inverse-augmented graph.
  void add_graph(const TripleGraph& g);
  // Adds base-direction triples together with their inverses.
  void add_queries(std::span<const Triple> queries, const TripleGraph& g);
  std::span<const EntityId> tails(EntityId head, RelationId relation) const;

 private:
  std::size_t num_relations_;
  std::unordered_map<std::uint64_t, std::vector<EntityId>> tails_;
};

RankingReport evaluate(const TailScorer& scorer, const GraphPtr& inference,
                       std::span<const Triple> queries, const FilterIndex& filter,
                       const Protocol& protocol, std::uint64_t seed);

enum class SplitPart { kValid, kTest };

RankingReport evaluate(const TailScorer& scorer, const DatasetSplit& split,
                       const Protocol& protocol, std::uint64_t seed,
                       SplitPart part = SplitPart::kTest);

FilterIndex build_filter(const DatasetSplit& split, SplitPart part, const Protocol& protocol);

nlohmann::json report_to_json(const RankingReport& report, bool include_ranks = false);

}  // namespace ultra
