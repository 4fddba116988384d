#pragma once

// Seeded generator of typed compositional graphs. Every family owns three
// entity groups A, B, C and four relations:
//   a : A -> B   (random function)
//   b : B -> C   (random function)
//   c = a then b (A -> C, fully determined by a and b)
//   d : C -> A   (random function, unpredictable noise)
// Held-out queries are drawn from the edges of c only.

#include <cstdint>
#include <filesystem>
#include <string>

#include "ultra/kgdata.hpp"

namespace ultra {

struct SyntheticSpec {
  std::size_t families = 5;
  std::size_t group_a = 240;
  std::size_t group_b = 60;
  std::size_t group_c = 100;
  double valid_fraction = 0.1;
  double test_fraction = 0.1;
  // Name prefixes; distinct prefixes give disjoint vocabularies.
  std::string entity_prefix = "e";
  std::string relation_prefix = "r";

  std::size_t num_entities() const { return families * (group_a + group_b + group_c); }
  std::size_t num_relations() const { return families * 4; }
};

// Transductive split; ids are randomly permuted so they carry no structure.
DatasetSplit make_compositional_split(const SyntheticSpec& spec, std::uint64_t seed);

// Writes train.txt, valid.txt and test.txt in the triple-file format.
void write_split(const DatasetSplit& split, const std::filesystem::path& dir);

}  // namespace ultra
