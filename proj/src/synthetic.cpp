#include "ultra/synthetic.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>

#include "ultra/errors.hpp"

namespace ultra {
namespace {

std::vector<std::uint32_t> shuffled_ids(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::uint32_t> ids(n);
  std::iota(ids.begin(), ids.end(), 0u);
  std::shuffle(ids.begin(), ids.end(), rng);
  return ids;
}

Vocabulary numbered(const std::string& prefix, std::size_t n) {
  std::vector<std::string> names;
  names.reserve(n);
  for (std::size_t i = 0; i < n; ++i) names.push_back(prefix + std::to_string(i));
  return Vocabulary(std::move(names));
}

void write_queries(const std::vector<Triple>& queries, const TripleGraph& g, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& q : queries) {
    out << g.entity_name(q.head) << '\t' << g.relation_name(q.relation) << '\t' << g.entity_name(q.tail)
        << '\n';
  }
}

}  // namespace

DatasetSplit make_compositional_split(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.families == 0 || spec.group_a == 0 || spec.group_b == 0 || spec.group_c == 0) {
    throw ConfigError("synthetic graph needs at least one family and non-empty groups");
  }
  std::mt19937_64 rng(seed);
  const std::size_t n_ent = spec.num_entities();
  const std::size_t n_rel = spec.num_relations();
  const auto ent_id = shuffled_ids(n_ent, rng);
  const auto rel_id = shuffled_ids(n_rel, rng);

  std::vector<Triple> kept, composed;
  const std::size_t family_size = spec.group_a + spec.group_b + spec.group_c;
  for (std::size_t f = 0; f < spec.families; ++f) {
    const std::size_t base = f * family_size;
    auto a_ent = [&](std::size_t i) { return ent_id[base + i]; };
    auto b_ent = [&](std::size_t i) { return ent_id[base + spec.group_a + i]; };
    auto c_ent = [&](std::size_t i) { return ent_id[base + spec.group_a + spec.group_b + i]; };
    const RelationId ra = rel_id[4 * f], rb = rel_id[4 * f + 1], rc = rel_id[4 * f + 2], rd = rel_id[4 * f + 3];
    std::uniform_int_distribution<std::size_t> pick_b(0, spec.group_b - 1);
    std::uniform_int_distribution<std::size_t> pick_c(0, spec.group_c - 1);
    std::uniform_int_distribution<std::size_t> pick_a(0, spec.group_a - 1);

    std::vector<std::size_t> a_map(spec.group_a), b_map(spec.group_b);
    for (auto& y : a_map) y = pick_b(rng);
    for (auto& z : b_map) z = pick_c(rng);
    for (std::size_t x = 0; x < spec.group_a; ++x) kept.push_back({a_ent(x), ra, b_ent(a_map[x])});
    for (std::size_t y = 0; y < spec.group_b; ++y) kept.push_back({b_ent(y), rb, c_ent(b_map[y])});
    for (std::size_t x = 0; x < spec.group_a; ++x) composed.push_back({a_ent(x), rc, c_ent(b_map[a_map[x]])});
    for (std::size_t z = 0; z < spec.group_c; ++z) kept.push_back({c_ent(z), rd, a_ent(pick_a(rng))});
  }

  std::shuffle(composed.begin(), composed.end(), rng);
  const auto n_valid = static_cast<std::size_t>(spec.valid_fraction * static_cast<double>(composed.size()));
  const auto n_test = static_cast<std::size_t>(spec.test_fraction * static_cast<double>(composed.size()));
  if (n_valid + n_test > composed.size()) throw ConfigError("held-out fractions exceed 1");
  DatasetSplit split;
  split.valid_queries.assign(composed.begin(), composed.begin() + n_valid);
  split.test_queries.assign(composed.begin() + n_valid, composed.begin() + n_valid + n_test);
  kept.insert(kept.end(), composed.begin() + n_valid + n_test, composed.end());
  std::shuffle(kept.begin(), kept.end(), rng);

  TripleGraph g(n_ent, n_rel, std::move(kept), numbered(spec.entity_prefix, n_ent),
                numbered(spec.relation_prefix, n_rel));
  auto graph = std::make_shared<const TripleGraph>(add_inverse_relations(g));
  split.train_graph = graph;
  split.valid_graph = graph;
  split.test_graph = graph;
  split.mode = SplitMode::kTransductive;
  return split;
}

void write_split(const DatasetSplit& split, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "train.txt");
    if (!out) throw IoError("cannot write " + (dir / "train.txt").string());
    write_triples(*split.train_graph, out);
  }
  write_queries(split.valid_queries, *split.valid_graph, dir / "valid.txt");
  write_queries(split.test_queries, *split.test_graph, dir / "test.txt");
  if (split.mode != SplitMode::kTransductive) {
    std::ofstream vg(dir / "valid_graph.txt");
    write_triples(*split.valid_graph, vg);
    std::ofstream tg(dir / "test_graph.txt");
    write_triples(*split.test_graph, tg);
  }
}

}  // namespace ultra
