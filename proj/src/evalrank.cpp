#include "ultra/evalrank.hpp"

#include <algorithm>
#include <random>

#include "ultra/errors.hpp"

namespace ultra {
namespace {

constexpr std::size_t kScoringChunk = 256;

std::uint64_t pair_key(EntityId head, RelationId relation, std::size_t num_relations) {
  return std::uint64_t{head} * num_relations + relation;
}

struct RankTask {
  TailQuery query;
  EntityId target;
  std::size_t slot;  // position in the rank vector
};

std::mt19937_64 query_rng(std::uint64_t seed, std::size_t slot) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(slot), static_cast<std::uint32_t>(slot >> 32)};
  return std::mt19937_64(seq);
}

double sampled_rank(std::span<const double> scores, EntityId target, std::span<const EntityId> mask,
                    std::size_t num_negatives, std::mt19937_64& rng) {
  std::vector<char> excluded(scores.size(), 0);
  for (auto m : mask) excluded[m] = 1;
  excluded[target] = 1;
  std::vector<EntityId> candidates;
  candidates.reserve(scores.size());
  for (EntityId v = 0; v < scores.size(); ++v) {
    if (!excluded[v]) candidates.push_back(v);
  }
  const std::size_t take = std::min(num_negatives, candidates.size());
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, candidates.size() - 1);
    std::swap(candidates[i], candidates[pick(rng)]);
  }
  const double s = scores[target];
  double better = 0.0, ties = 0.0;
  for (std::size_t i = 0; i < take; ++i) {
    const double c = scores[candidates[i]];
    if (c > s) {
      better += 1.0;
    } else if (c == s) {
      ties += 1.0;
    }
  }
  return 1.0 + better + ties / 2.0;
}

std::string_view mode_name(ProtocolMode m) {
  switch (m) {
    case ProtocolMode::kBothDirections: return "both-directions";
    case ProtocolMode::kTailsOnly: return "tails-only";
    case ProtocolMode::kSampledNegatives: return "sampled-negatives";
  }
  return "?";
}

}  // namespace

void Protocol::validate() const {
  if (k_values.empty()) throw ConfigError("protocol needs at least one k");
  for (auto k : k_values) {
    if (k < 1) throw ConfigError("protocol k values must be >= 1");
  }
  if (mode == ProtocolMode::kSampledNegatives && num_sampled_negatives < 1) {
    throw ConfigError("sampled protocol needs at least one negative");
  }
}

std::string Protocol::name() const {
  switch (mode) {
    case ProtocolMode::kBothDirections: return "full";
    case ProtocolMode::kTailsOnly: return "tails";
    case ProtocolMode::kSampledNegatives: return "negs" + std::to_string(num_sampled_negatives);
  }
  return "?";
}

Protocol protocol_from_name(std::string_view name) {
  Protocol p;
  if (name == "full") {
    p.mode = ProtocolMode::kBothDirections;
  } else if (name == "tails") {
    p.mode = ProtocolMode::kTailsOnly;
  } else if (name == "negs50") {
    p.mode = ProtocolMode::kSampledNegatives;
    p.num_sampled_negatives = 50;
  } else {
    throw ConfigError("unknown protocol '" + std::string(name) + "' (expected full, tails or negs50)");
  }
  return p;
}

double rank_of(std::span<const double> scores, EntityId true_entity, std::span<const EntityId> mask) {
  if (true_entity >= scores.size()) {
    throw IndexError("rank_of: true entity " + std::to_string(true_entity) + " out of range");
  }
  std::vector<char> masked(scores.size(), 0);
  for (auto m : mask) {
    if (m >= scores.size()) throw IndexError("rank_of: masked entity out of range");
    masked[m] = 1;
  }
  if (masked[true_entity]) throw ContractViolation("rank_of: true entity is masked");
  const double s = scores[true_entity];
  double better = 0.0, ties = 0.0;
  for (std::size_t v = 0; v < scores.size(); ++v) {
    if (masked[v] || v == true_entity) continue;
    if (scores[v] > s) {
      better += 1.0;
    } else if (scores[v] == s) {
      ties += 1.0;
    }
  }
  return 1.0 + better + ties / 2.0;
}

RankingReport summarize(std::vector<double> ranks, const Protocol& protocol) {
  protocol.validate();
  RankingReport r;
  r.protocol = protocol;
  r.query_count = ranks.size();
  double reciprocal = 0.0;
  for (double rank : ranks) reciprocal += 1.0 / rank;
  for (auto k : protocol.k_values) {
    std::size_t hits = 0;
    for (double rank : ranks) hits += rank <= static_cast<double>(k) ? 1 : 0;
    r.hits_at_k[k] = ranks.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(ranks.size());
  }
  r.mrr = ranks.empty() ? 0.0 : reciprocal / static_cast<double>(ranks.size());
  r.ranks = std::move(ranks);
  return r;
}

void FilterIndex::add(const Triple& t) {
  auto& list = tails_[pair_key(t.head, t.relation, num_relations_)];
  if (std::find(list.begin(), list.end(), t.tail) == list.end()) list.push_back(t.tail);
}

void FilterIndex::add_graph(const TripleGraph& g) {
  for (const auto& e : g.edges()) add(e);
}

void FilterIndex::add_queries(std::span<const Triple> queries, const TripleGraph& g) {
  for (const auto& q : queries) {
    add(q);
    add(Triple{q.tail, g.inverse_of(q.relation), q.head});
  }
}

std::span<const EntityId> FilterIndex::tails(EntityId head, RelationId relation) const {
  auto it = tails_.find(pair_key(head, relation, num_relations_));
  if (it == tails_.end()) return {};
  return it->second;
}

RankingReport evaluate(const TailScorer& scorer, const GraphPtr& inference,
                       std::span<const Triple> queries, const FilterIndex& filter,
                       const Protocol& protocol, std::uint64_t seed) {
  protocol.validate();
  const TripleGraph& g = *inference;
  const bool both = protocol.mode == ProtocolMode::kBothDirections ||
                    (protocol.mode == ProtocolMode::kSampledNegatives && !protocol.sampled_tails_only);
  std::vector<RankTask> tasks;
  tasks.reserve(queries.size() * (both ? 2 : 1));
  for (const auto& q : queries) {
    if (q.head >= g.num_entities() || q.tail >= g.num_entities() ||
        q.relation >= g.num_base_relations()) {
      throw ContractViolation("query is not compatible with the inference graph vocabulary");
    }
    tasks.push_back(RankTask{TailQuery{q.head, q.relation}, q.tail, tasks.size()});
    if (both) {
      tasks.push_back(RankTask{TailQuery{q.tail, g.inverse_of(q.relation)}, q.head, tasks.size()});
    }
  }

  std::vector<double> ranks(tasks.size());
  std::vector<EntityId> mask;
  for (std::size_t begin = 0; begin < tasks.size(); begin += kScoringChunk) {
    const std::size_t end = std::min(tasks.size(), begin + kScoringChunk);
    std::vector<TailQuery> batch;
    batch.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) batch.push_back(tasks[i].query);
    const auto scores = scorer.score_tails(inference, batch);
    if (scores.size() != batch.size()) throw ContractViolation("scorer returned wrong batch size");
    for (std::size_t i = begin; i < end; ++i) {
      const auto& task = tasks[i];
      const auto& s = scores[i - begin];
      if (s.size() != g.num_entities()) throw ContractViolation("scorer returned wrong score count");
      mask.clear();
      for (auto t : filter.tails(task.query.head, task.query.relation)) {
        if (t != task.target) mask.push_back(t);
      }
      if (protocol.mode == ProtocolMode::kSampledNegatives) {
        auto rng = query_rng(seed, task.slot);
        ranks[task.slot] = sampled_rank(s, task.target, mask, protocol.num_sampled_negatives, rng);
      } else {
        ranks[task.slot] = rank_of(s, task.target, mask);
      }
    }
  }
  return summarize(std::move(ranks), protocol);
}

FilterIndex build_filter(const DatasetSplit& split, SplitPart part, const Protocol& protocol) {
  const GraphPtr& inference = part == SplitPart::kTest ? split.test_graph : split.valid_graph;
  FilterIndex filter(inference->num_relations());
  if (protocol.filter_graph) filter.add_graph(*inference);
  if (protocol.filter_valid && split.valid_graph == inference) {
    filter.add_queries(split.valid_queries, *inference);
  }
  if (protocol.filter_test && split.test_graph == inference) {
    filter.add_queries(split.test_queries, *inference);
  }
  return filter;
}

RankingReport evaluate(const TailScorer& scorer, const DatasetSplit& split,
                       const Protocol& protocol, std::uint64_t seed, SplitPart part) {
  const GraphPtr& inference = part == SplitPart::kTest ? split.test_graph : split.valid_graph;
  const auto& queries = part == SplitPart::kTest ? split.test_queries : split.valid_queries;
  return evaluate(scorer, inference, queries, build_filter(split, part, protocol), protocol, seed);
}

nlohmann::json report_to_json(const RankingReport& report, bool include_ranks) {
  nlohmann::json j;
  const auto& p = report.protocol;
  j["protocol"] = {
      {"name", p.name()},
      {"mode", mode_name(p.mode)},
      {"k_values", p.k_values},
      {"filter", {{"graph", p.filter_graph}, {"valid", p.filter_valid}, {"test", p.filter_test}}},
  };
  if (p.mode == ProtocolMode::kSampledNegatives) {
    j["protocol"]["num_sampled_negatives"] = p.num_sampled_negatives;
    j["protocol"]["sampled_tails_only"] = p.sampled_tails_only;
  }
  j["query_count"] = report.query_count;
  j["mrr"] = report.mrr;
  nlohmann::json hits = nlohmann::json::object();
  for (const auto& [k, v] : report.hits_at_k) hits[std::to_string(k)] = v;
  j["hits_at_k"] = hits;
  if (include_ranks) j["ranks"] = report.ranks;
  return j;
}

}  // namespace ultra
