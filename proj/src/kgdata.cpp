#include "ultra/kgdata.hpp"

#include <atomic>
#include <cctype>
#include <fstream>
#include <iostream>
#include <sstream>

#include "ultra/errors.hpp"

namespace ultra {
namespace {

std::atomic<std::uint64_t> next_identity{1};

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n\v\f");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n\v\f");
  return s.substr(first, last - first + 1);
}

// Tab-separated when the line has tabs (names may contain spaces), otherwise
// split on any whitespace.
std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  if (line.find('\t') != std::string_view::npos) {
    std::size_t start = 0;
    while (true) {
      const auto pos = line.find('\t', start);
      auto field = trim(line.substr(start, pos == std::string_view::npos ? line.size() - start
                                                                         : pos - start));
      if (!field.empty()) out.push_back(field);
      if (pos == std::string_view::npos) break;
      start = pos + 1;
    }
    return out;
  }
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

struct RawLine {
  std::size_t line_no;
  std::string_view head, relation, tail;
};

template <typename Fn>
void for_each_triple_line(std::istream& in, const std::string& source, Fn&& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto fields = split_fields(body);
    if (fields.size() != 3) {
      throw ParseError(source, line_no,
                       "expected 3 fields (head relation tail), got " +
                           std::to_string(fields.size()));
    }
    fn(RawLine{line_no, fields[0], fields[1], fields[2]});
  }
  if (in.bad()) throw IoError("read failure on " + source);
}

std::uint32_t resolve(const Vocabulary& vocab, std::string_view name, const std::string& source,
                      std::size_t line_no, const char* kind) {
  if (auto id = vocab.find(name)) return *id;
  throw VocabularyError(source + ":" + std::to_string(line_no) + ": unknown " + kind + " '" +
                        std::string(name) + "'");
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> names) {
  for (auto& n : names) intern(n);
}

std::optional<std::uint32_t> Vocabulary::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::uint32_t Vocabulary::intern(std::string_view name) {
  auto [it, inserted] = index_.emplace(std::string(name), static_cast<std::uint32_t>(names_.size()));
  if (inserted) names_.emplace_back(name);
  return it->second;
}

TripleGraph::TripleGraph(std::size_t num_entities, std::size_t num_relations,
                         std::vector<Triple> edges, Vocabulary entities, Vocabulary relations,
                         bool inverses_added)
    : num_entities_(num_entities),
      num_relations_(num_relations),
      entity_vocab_(std::move(entities)),
      relation_vocab_(std::move(relations)),
      inverses_added_(inverses_added),
      identity_(next_identity.fetch_add(1)) {
  if (inverses_added_ && num_relations_ % 2 != 0) {
    throw ContractViolation("inverse-augmented graph must have an even relation count");
  }
  edges_.reserve(edges.size());
  edge_set_.reserve(edges.size());
  for (const auto& e : edges) {
    if (e.head >= num_entities_ || e.tail >= num_entities_ || e.relation >= num_relations_) {
      throw IndexError("edge (" + std::to_string(e.head) + ", " + std::to_string(e.relation) +
                       ", " + std::to_string(e.tail) + ") out of range");
    }
    if (edge_set_.insert(e).second) {
      edges_.push_back(e);
    } else {
      ++duplicates_dropped_;
    }
  }
  if (inverses_added_) {
    for (const auto& e : edges_) {
      if (!edge_set_.contains(Triple{e.tail, inverse_of(e.relation), e.head})) {
        throw ContractViolation("inverse-augmented graph is missing an inverse edge");
      }
    }
  }
}

RelationId TripleGraph::inverse_of(RelationId r) const {
  if (!inverses_added_) throw ContractViolation("graph has no inverse relations");
  if (r >= num_relations_) throw IndexError("relation id out of range");
  const auto half = static_cast<RelationId>(num_relations_ / 2);
  return r < half ? r + half : r - half;
}

std::string TripleGraph::entity_name(EntityId e) const {
  if (e < entity_vocab_.size()) return entity_vocab_.name(e);
  return std::to_string(e);
}

std::string TripleGraph::relation_name(RelationId r) const {
  const auto base = num_base_relations();
  const bool inverse = inverses_added_ && r >= base;
  const RelationId b = inverse ? static_cast<RelationId>(r - base) : r;
  std::string name = b < relation_vocab_.size() ? relation_vocab_.name(b) : std::to_string(b);
  return inverse ? name + "^-1" : name;
}

std::string_view to_string(SplitMode mode) {
  switch (mode) {
    case SplitMode::kTransductive: return "transductive";
    case SplitMode::kInductiveE: return "inductive-e";
    case SplitMode::kInductiveER: return "inductive-er";
  }
  return "?";
}

SplitMode parse_split_mode(std::string_view text) {
  if (text == "transductive") return SplitMode::kTransductive;
  if (text == "inductive-e") return SplitMode::kInductiveE;
  if (text == "inductive-er") return SplitMode::kInductiveER;
  throw ConfigError("unknown split mode '" + std::string(text) +
                    "' (expected transductive, inductive-e or inductive-er)");
}

TripleGraph parse_triples(std::istream& in, const std::string& source,
                          const Vocabulary* entity_vocab, const Vocabulary* relation_vocab) {
  Vocabulary entities = entity_vocab ? *entity_vocab : Vocabulary{};
  Vocabulary relations = relation_vocab ? *relation_vocab : Vocabulary{};
  std::vector<Triple> edges;
  for_each_triple_line(in, source, [&](const RawLine& l) {
    Triple t;
    t.head = entity_vocab ? resolve(entities, l.head, source, l.line_no, "entity")
                          : entities.intern(l.head);
    t.relation = relation_vocab ? resolve(relations, l.relation, source, l.line_no, "relation")
                                : relations.intern(l.relation);
    t.tail = entity_vocab ? resolve(entities, l.tail, source, l.line_no, "entity")
                          : entities.intern(l.tail);
    edges.push_back(t);
  });
  const auto ne = entities.size();
  const auto nr = relations.size();
  TripleGraph g(ne, nr, std::move(edges), std::move(entities), std::move(relations), false);
  if (g.duplicates_dropped() > 0) {
    std::cerr << "warning: " << source << ": dropped " << g.duplicates_dropped()
              << " duplicate triple(s)\n";
  }
  return g;
}

TripleGraph load_triples(const std::filesystem::path& path, const Vocabulary* entity_vocab,
                         const Vocabulary* relation_vocab) {
  auto in = open_or_throw(path);
  return parse_triples(in, path.string(), entity_vocab, relation_vocab);
}

std::vector<Triple> load_queries(const std::filesystem::path& path, const Vocabulary& entities,
                                 const Vocabulary& relations) {
  auto in = open_or_throw(path);
  const auto source = path.string();
  std::vector<Triple> out;
  for_each_triple_line(in, source, [&](const RawLine& l) {
    out.push_back(Triple{resolve(entities, l.head, source, l.line_no, "entity"),
                         resolve(relations, l.relation, source, l.line_no, "relation"),
                         resolve(entities, l.tail, source, l.line_no, "entity")});
  });
  return out;
}

void write_triples(const TripleGraph& g, std::ostream& out) {
  const auto base = g.num_base_relations();
  for (const auto& e : g.edges()) {
    if (e.relation >= base) continue;
    out << g.entity_name(e.head) << '\t' << g.relation_name(e.relation) << '\t'
        << g.entity_name(e.tail) << '\n';
  }
}

TripleGraph add_inverse_relations(const TripleGraph& g) {
  if (g.inverses_added()) throw ContractViolation("graph already has inverse relations");
  const auto nr = static_cast<RelationId>(g.num_relations());
  std::vector<Triple> edges(g.edges().begin(), g.edges().end());
  edges.reserve(2 * edges.size());
  for (const auto& e : g.edges()) edges.push_back(Triple{e.tail, e.relation + nr, e.head});
  return TripleGraph(g.num_entities(), 2 * g.num_relations(), std::move(edges), g.entity_vocab(),
                     g.relation_vocab(), true);
}

namespace {

void require_file(const std::filesystem::path& p) {
  if (!std::filesystem::is_regular_file(p)) throw IoError("missing dataset file " + p.string());
}

void check_disjoint(const TripleGraph& g, std::span<const Triple> queries, const char* split) {
  for (const auto& q : queries) {
    if (g.contains(q)) {
      throw DataError(std::string(split) + " query (" + g.entity_name(q.head) + ", " +
                      g.relation_name(q.relation) + ", " + g.entity_name(q.tail) +
                      ") also appears in its inference graph");
    }
  }
}

}  // namespace

DatasetSplit load_dataset(const std::filesystem::path& dir, SplitMode mode) {
  const auto train_path = dir / "train.txt";
  const auto valid_path = dir / "valid.txt";
  const auto test_path = dir / "test.txt";
  require_file(train_path);
  require_file(valid_path);
  require_file(test_path);

  DatasetSplit split;
  split.mode = mode;
  const auto train_raw = load_triples(train_path);
  split.train_graph = std::make_shared<const TripleGraph>(add_inverse_relations(train_raw));

  if (mode == SplitMode::kTransductive) {
    split.valid_graph = split.train_graph;
    split.test_graph = split.train_graph;
    split.valid_queries =
        load_queries(valid_path, train_raw.entity_vocab(), train_raw.relation_vocab());
    split.test_queries =
        load_queries(test_path, train_raw.entity_vocab(), train_raw.relation_vocab());
  } else {
    const auto valid_graph_path = dir / "valid_graph.txt";
    const auto test_graph_path = dir / "test_graph.txt";
    require_file(valid_graph_path);
    require_file(test_graph_path);
    const Vocabulary* shared_relations =
        mode == SplitMode::kInductiveE ? &train_raw.relation_vocab() : nullptr;
    const auto valid_raw = load_triples(valid_graph_path, nullptr, shared_relations);
    const auto test_raw = load_triples(test_graph_path, nullptr, shared_relations);
    split.valid_queries =
        load_queries(valid_path, valid_raw.entity_vocab(), valid_raw.relation_vocab());
    split.test_queries =
        load_queries(test_path, test_raw.entity_vocab(), test_raw.relation_vocab());
    split.valid_graph = std::make_shared<const TripleGraph>(add_inverse_relations(valid_raw));
    split.test_graph = std::make_shared<const TripleGraph>(add_inverse_relations(test_raw));
  }
  check_disjoint(*split.valid_graph, split.valid_queries, "valid");
  check_disjoint(*split.test_graph, split.test_queries, "test");
  return split;
}

}  // namespace ultra
