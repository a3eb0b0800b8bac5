#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace nqe {

template <class Tag>
struct Id {
  std::uint32_t value = 0;

  constexpr auto operator<=>(const Id&) const = default;
};

struct EntityTag;
struct RelationTag;
using EntityId = Id<EntityTag>;
using RelationId = Id<RelationTag>;

// Dense label <-> id interning; ids are assigned contiguously from 0.
class SymbolTable {
 public:
  std::uint32_t intern(std::string_view label);
  std::optional<std::uint32_t> find(std::string_view label) const;
  const std::string& label(std::uint32_t id) const { return labels_.at(id); }
  std::size_t size() const noexcept { return labels_.size(); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, std::uint32_t> ids_;
};

struct Qualifier {
  RelationId attribute;
  EntityId value;

  auto operator<=>(const Qualifier&) const = default;
};

// Main triple plus qualifier pairs. Entity positions are 1-based:
// 1 = subject, 2 = object, 2 + i = value of qualifier i.
struct NAryFact {
  EntityId subject;
  RelationId relation;
  EntityId object;
  std::vector<Qualifier> qualifiers;

  std::size_t arity() const noexcept { return 2 + qualifiers.size(); }
  EntityId entity_at(std::size_t position) const;
  RelationId relation_at(std::size_t position) const;
  void set_entity(std::size_t position, EntityId e);

  bool operator==(const NAryFact&) const = default;
};

// Sequence elements are raw ids; entities sit at even 0-based indices and
// relations at odd ones.
using Symbol = std::uint32_t;
inline constexpr Symbol kHole = 0xFFFFFFFFu;

// [s, r, o, a1, v1, ..., a(n-2), v(n-2)], length 2n-1.
std::vector<Symbol> sequence_of(const NAryFact& fact);
NAryFact fact_from_sequence(std::span<const Symbol> sequence);

enum class Split : std::uint8_t { train = 0, valid = 1, test = 2 };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);

class SplitSet {
 public:
  constexpr SplitSet() = default;
  constexpr SplitSet(std::initializer_list<Split> splits) {
    for (Split s : splits) bits_ |= bit(s);
  }
  static constexpr SplitSet all() { return {Split::train, Split::valid, Split::test}; }
  // Scope used to walk and label queries of a given split.
  static constexpr SplitSet up_to(Split split) {
    switch (split) {
      case Split::train: return {Split::train};
      case Split::valid: return {Split::train, Split::valid};
      case Split::test: return all();
    }
    return {};
  }

  constexpr bool contains(Split s) const noexcept { return (bits_ & bit(s)) != 0; }
  constexpr bool empty() const noexcept { return bits_ == 0; }
  constexpr bool operator==(const SplitSet&) const = default;

  static SplitSet parse(std::string_view comma_separated);

 private:
  static constexpr std::uint8_t bit(Split s) { return std::uint8_t(1u << unsigned(s)); }
  std::uint8_t bits_ = 0;
};

enum class FactFormat { automatic, jsonl, tsv };

struct LoadStats {
  std::size_t lines = 0;
  std::size_t new_entities = 0;
  std::size_t new_relations = 0;
  std::size_t new_facts = 0;
  std::size_t duplicates = 0;
  std::size_t reflexive_qualifiers = 0;
};

// Where an entity occurs: fact index and 1-based entity position.
struct Occurrence {
  std::uint32_t fact;
  std::uint32_t position;
};

// In-memory hyper-relational knowledge graph. Facts are deduplicated across
// all splits; every stored fact belongs to exactly one split. The graph is
// mutated only while loading and is safe to share read-only afterwards.
class HyperGraph {
 public:
  LoadStats load_facts(const std::filesystem::path& path, Split split,
                       FactFormat format = FactFormat::automatic);
  LoadStats load_facts(std::istream& in, Split split, FactFormat format);

  EntityId intern_entity(std::string_view label);
  RelationId intern_relation(std::string_view label);
  // Returns false when the fact is already stored (in any split).
  bool add_fact(const NAryFact& fact, Split split);

  // Label lookups throw LabelError for unknown labels.
  EntityId entity(std::string_view label) const;
  RelationId relation(std::string_view label) const;
  const std::string& label(EntityId e) const { return entities_.label(e.value); }
  const std::string& label(RelationId r) const { return relations_.label(r.value); }
  const SymbolTable& entities() const noexcept { return entities_; }
  const SymbolTable& relations() const noexcept { return relations_; }
  std::size_t num_entities() const noexcept { return entities_.size(); }
  std::size_t num_relations() const noexcept { return relations_.size(); }

  const std::vector<NAryFact>& facts() const noexcept { return facts_; }
  Split split_of(std::size_t fact_index) const { return splits_.at(fact_index); }
  std::size_t count(SplitSet scope) const;
  std::vector<std::uint32_t> facts_in(SplitSet scope) const;
  std::span<const Occurrence> occurrences(EntityId e) const;

  // All entities e such that filling the single kHole of `pattern` with e
  // yields a fact stored in `scope`. Sorted ascending.
  std::vector<EntityId> match_pattern(SplitSet scope, std::span<const Symbol> pattern) const;
  std::vector<EntityId> match_pattern(SplitSet scope, const NAryFact& fact,
                                      std::size_t hole_position) const;

  // Exact membership test, independent of the pattern index.
  bool contains(SplitSet scope, const NAryFact& fact) const;

  // Order-sensitive FNV-1a digest of the fact list and symbol tables.
  std::uint64_t digest() const;

  // Versioned binary snapshot (magic "NQG1").
  void save(const std::filesystem::path& path) const;
  static HyperGraph load(const std::filesystem::path& path);

 private:
  struct KeyHash {
    std::size_t operator()(const std::vector<Symbol>& key) const noexcept;
  };
  struct Posting {
    EntityId entity;
    Split split;
  };

  SymbolTable entities_;
  SymbolTable relations_;
  std::vector<NAryFact> facts_;
  std::vector<Split> splits_;
  std::unordered_map<std::vector<Symbol>, std::uint32_t, KeyHash> fact_keys_;
  std::unordered_map<std::vector<Symbol>, std::vector<Posting>, KeyHash> pattern_index_;
  std::vector<std::vector<Occurrence>> occurrences_;
};

// Canonical key: the alternating sequence with qualifier pairs sorted by
// (attribute, value); `hole_position` (1-based entity position, 0 = none) is
// replaced by kHole before sorting.
std::vector<Symbol> canonical_key(const NAryFact& fact, std::size_t hole_position = 0);

}  // namespace nqe

template <class Tag>
struct std::hash<nqe::Id<Tag>> {
  std::size_t operator()(const nqe::Id<Tag>& id) const noexcept {
    return std::hash<std::uint32_t>{}(id.value);
  }
};
