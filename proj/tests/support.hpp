#pragma once

// Shared fixtures for the unit tests: temporary directories, small graphs and
// independent reference implementations used as oracles.

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "ultra/kgdata.hpp"
#include "ultra/relgraph.hpp"

namespace support {

class TempDir {
 public:
  TempDir() {
    static std::atomic<unsigned> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("ultra_test_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline ultra::TripleGraph augmented(std::size_t entities, std::size_t relations,
                                    std::vector<ultra::Triple> edges) {
  return ultra::add_inverse_relations(ultra::TripleGraph(entities, relations, std::move(edges)));
}

// Inverse-augmented random graph with at most the given sizes (pre-augmentation).
inline ultra::TripleGraph random_graph(std::mt19937_64& rng, std::size_t max_entities,
                                       std::size_t max_edges, std::size_t max_relations) {
  const std::size_t ne = std::uniform_int_distribution<std::size_t>(1, max_entities)(rng);
  const std::size_t nr = std::uniform_int_distribution<std::size_t>(1, max_relations)(rng);
  const std::size_t m = std::uniform_int_distribution<std::size_t>(0, max_edges)(rng);
  std::uniform_int_distribution<std::uint32_t> pe(0, static_cast<std::uint32_t>(ne - 1));
  std::uniform_int_distribution<std::uint32_t> pr(0, static_cast<std::uint32_t>(nr - 1));
  std::vector<ultra::Triple> edges;
  for (std::size_t i = 0; i < m; ++i) edges.push_back({pe(rng), pr(rng), pe(rng)});
  return augmented(ne, nr, std::move(edges));
}

// Compares endpoints of every ordered pair of edges, self-pairs included.
inline std::vector<std::set<ultra::RelationEdge>> brute_force_lift(const ultra::TripleGraph& g) {
  using ultra::Interaction;
  std::vector<std::set<ultra::RelationEdge>> out(ultra::kNumInteractions);
  auto put = [&](Interaction t, ultra::RelationId a, ultra::RelationId b) {
    out[static_cast<std::size_t>(t)].insert({a, b});
  };
  for (const auto& x : g.edges()) {
    for (const auto& y : g.edges()) {
      if (x.head == y.head) put(Interaction::kH2H, x.relation, y.relation);
      if (x.tail == y.tail) put(Interaction::kT2T, x.relation, y.relation);
      if (x.head == y.tail) put(Interaction::kH2T, x.relation, y.relation);
      if (x.tail == y.head) put(Interaction::kT2H, x.relation, y.relation);
    }
  }
  return out;
}

inline std::set<ultra::RelationEdge> edge_set(const ultra::RelationGraph& rg, std::size_t type) {
  const auto& e = rg.edges(type);
  return {e.begin(), e.end()};
}

// Graph with entity ids mapped through `perm` (edge order kept).
inline ultra::TripleGraph relabel_entities(const ultra::TripleGraph& g,
                                           const std::vector<std::uint32_t>& perm) {
  std::vector<ultra::Triple> edges;
  const std::size_t half = g.num_edges() / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const auto& e = g.edges()[i];
    edges.push_back({perm[e.head], e.relation, perm[e.tail]});
  }
  return augmented(g.num_entities(), g.num_base_relations(), std::move(edges));
}

// Graph with base relation r renamed to pi[r]; inverses follow.
inline ultra::TripleGraph relabel_relations(const ultra::TripleGraph& g,
                                            const std::vector<std::uint32_t>& pi) {
  std::vector<ultra::Triple> edges;
  for (std::size_t i = 0; i < g.num_edges() / 2; ++i) {
    const auto& e = g.edges()[i];
    edges.push_back({e.head, pi[e.relation], e.tail});
  }
  return augmented(g.num_entities(), g.num_base_relations(), std::move(edges));
}

// Image of an augmented relation id under a base-relation permutation.
inline ultra::RelationId permuted_relation(const ultra::TripleGraph& g, const std::vector<std::uint32_t>& pi,
                                           ultra::RelationId r) {
  const auto base = static_cast<ultra::RelationId>(g.num_base_relations());
  return r < base ? pi[r] : pi[r - base] + base;
}

inline std::vector<std::uint32_t> random_permutation(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::uint32_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = static_cast<std::uint32_t>(i);
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

}  // namespace support
