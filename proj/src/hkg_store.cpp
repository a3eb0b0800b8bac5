#include "nqe/hkg_store.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "nqe/errors.hpp"
#include "binary_io.hpp"

namespace nqe {

std::uint32_t SymbolTable::intern(std::string_view label) {
  auto it = ids_.find(std::string(label));
  if (it != ids_.end()) return it->second;
  auto id = static_cast<std::uint32_t>(labels_.size());
  labels_.emplace_back(label);
  ids_.emplace(labels_.back(), id);
  return id;
}

std::optional<std::uint32_t> SymbolTable::find(std::string_view label) const {
  auto it = ids_.find(std::string(label));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

EntityId NAryFact::entity_at(std::size_t position) const {
  if (position == 1) return subject;
  if (position == 2) return object;
  if (position >= 3 && position - 3 < qualifiers.size()) return qualifiers[position - 3].value;
  throw std::out_of_range("entity position " + std::to_string(position) + " outside fact of arity " +
                          std::to_string(arity()));
}

RelationId NAryFact::relation_at(std::size_t position) const {
  if (position == 1) return relation;
  if (position >= 2 && position - 2 < qualifiers.size()) return qualifiers[position - 2].attribute;
  throw std::out_of_range("relation position " + std::to_string(position) + " outside fact");
}

void NAryFact::set_entity(std::size_t position, EntityId e) {
  if (position == 1) {
    subject = e;
  } else if (position == 2) {
    object = e;
  } else if (position >= 3 && position - 3 < qualifiers.size()) {
    qualifiers[position - 3].value = e;
  } else {
    throw std::out_of_range("entity position " + std::to_string(position) + " outside fact");
  }
}

std::vector<Symbol> sequence_of(const NAryFact& fact) {
  std::vector<Symbol> seq;
  seq.reserve(2 * fact.arity() - 1);
  seq.push_back(fact.subject.value);
  seq.push_back(fact.relation.value);
  seq.push_back(fact.object.value);
  for (const auto& q : fact.qualifiers) {
    seq.push_back(q.attribute.value);
    seq.push_back(q.value.value);
  }
  return seq;
}

NAryFact fact_from_sequence(std::span<const Symbol> sequence) {
  if (sequence.size() < 3 || sequence.size() % 2 == 0) {
    throw std::invalid_argument("fact sequence must have odd length >= 3");
  }
  NAryFact fact{EntityId{sequence[0]}, RelationId{sequence[1]}, EntityId{sequence[2]}, {}};
  for (std::size_t i = 3; i < sequence.size(); i += 2) {
    fact.qualifiers.push_back({RelationId{sequence[i]}, EntityId{sequence[i + 1]}});
  }
  return fact;
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "valid") return Split::valid;
  if (text == "test") return Split::test;
  throw DataError("unknown split '" + std::string(text) + "'");
}

SplitSet SplitSet::parse(std::string_view comma_separated) {
  SplitSet set;
  std::size_t start = 0;
  while (start <= comma_separated.size()) {
    auto end = comma_separated.find(',', start);
    if (end == std::string_view::npos) end = comma_separated.size();
    auto token = comma_separated.substr(start, end - start);
    if (!token.empty()) set.bits_ |= bit(parse_split(token));
    start = end + 1;
  }
  if (set.empty()) throw DataError("empty split scope");
  return set;
}

std::vector<Symbol> canonical_key(const NAryFact& fact, std::size_t hole_position) {
  auto at = [&](std::size_t pos) { return pos == hole_position ? kHole : fact.entity_at(pos).value; };
  std::vector<std::pair<Symbol, Symbol>> quals;
  quals.reserve(fact.qualifiers.size());
  for (std::size_t i = 0; i < fact.qualifiers.size(); ++i) {
    quals.emplace_back(fact.qualifiers[i].attribute.value, at(3 + i));
  }
  std::sort(quals.begin(), quals.end());
  std::vector<Symbol> key;
  key.reserve(2 * fact.arity() - 1);
  key.push_back(at(1));
  key.push_back(fact.relation.value);
  key.push_back(at(2));
  for (const auto& [a, v] : quals) {
    key.push_back(a);
    key.push_back(v);
  }
  return key;
}

std::size_t HyperGraph::KeyHash::operator()(const std::vector<Symbol>& key) const noexcept {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (Symbol s : key) {
    h ^= s;
    h *= 0x100000001b3ull;
    h ^= h >> 29;
  }
  return static_cast<std::size_t>(h);
}

EntityId HyperGraph::intern_entity(std::string_view label) {
  auto before = entities_.size();
  EntityId id{entities_.intern(label)};
  if (entities_.size() != before) occurrences_.emplace_back();
  return id;
}

RelationId HyperGraph::intern_relation(std::string_view label) {
  return RelationId{relations_.intern(label)};
}

bool HyperGraph::add_fact(const NAryFact& fact, Split split) {
  const auto n_entities = entities_.size();
  for (std::size_t p = 1; p <= fact.arity(); ++p) {
    if (fact.entity_at(p).value >= n_entities) throw std::out_of_range("fact references unknown entity id");
  }
  for (std::size_t p = 1; p < fact.arity(); ++p) {
    if (fact.relation_at(p).value >= relations_.size()) throw std::out_of_range("fact references unknown relation id");
  }
  auto [it, inserted] = fact_keys_.try_emplace(canonical_key(fact), static_cast<std::uint32_t>(facts_.size()));
  if (!inserted) return false;

  const auto index = static_cast<std::uint32_t>(facts_.size());
  facts_.push_back(fact);
  splits_.push_back(split);
  for (std::size_t p = 1; p <= fact.arity(); ++p) {
    const EntityId e = fact.entity_at(p);
    pattern_index_[canonical_key(fact, p)].push_back({e, split});
    occurrences_[e.value].push_back({index, static_cast<std::uint32_t>(p)});
  }
  return true;
}

namespace {

struct RawFact {
  std::string s, r, o;
  std::vector<std::pair<std::string, std::string>> quals;
};

RawFact parse_jsonl_line(const std::string& line, std::size_t line_no) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(line_no, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw FormatError(line_no, "expected a JSON object");
  RawFact raw;
  auto field = [&](const char* key) -> std::string {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) {
      throw FormatError(line_no, std::string("missing string field '") + key + "'");
    }
    return it->get<std::string>();
  };
  raw.s = field("s");
  raw.r = field("r");
  raw.o = field("o");
  if (auto it = j.find("quals"); it != j.end()) {
    if (!it->is_array()) throw FormatError(line_no, "'quals' must be an array");
    for (const auto& pair : *it) {
      if (!pair.is_array() || pair.size() != 2 || !pair[0].is_string() || !pair[1].is_string()) {
        throw FormatError(line_no, "each qualifier must be a [attribute, value] string pair");
      }
      raw.quals.emplace_back(pair[0].get<std::string>(), pair[1].get<std::string>());
    }
  }
  return raw;
}

RawFact parse_tsv_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    auto end = line.find('\t', start);
    fields.push_back(line.substr(start, end == std::string::npos ? std::string::npos : end - start));
    if (end == std::string::npos) break;
    start = end + 1;
  }
  if (fields.size() < 3) throw FormatError(line_no, "arity < 2: need at least subject, relation, object");
  if (fields.size() % 2 == 0) throw FormatError(line_no, "dangling qualifier attribute without value");
  for (const auto& f : fields) {
    if (f.empty()) throw FormatError(line_no, "empty field");
  }
  RawFact raw{fields[0], fields[1], fields[2], {}};
  for (std::size_t i = 3; i < fields.size(); i += 2) raw.quals.emplace_back(fields[i], fields[i + 1]);
  return raw;
}

}  // namespace

LoadStats HyperGraph::load_facts(const std::filesystem::path& path, Split split, FactFormat format) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open facts file " + path.string());
  if (format == FactFormat::automatic) {
    auto ext = path.extension().string();
    format = (ext == ".tsv" || ext == ".txt") ? FactFormat::tsv : FactFormat::jsonl;
  }
  return load_facts(in, split, format);
}

LoadStats HyperGraph::load_facts(std::istream& in, Split split, FactFormat format) {
  if (format == FactFormat::automatic) format = FactFormat::jsonl;
  LoadStats stats;
  const auto entities_before = entities_.size();
  const auto relations_before = relations_.size();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    ++stats.lines;
    RawFact raw = format == FactFormat::tsv ? parse_tsv_line(line, line_no) : parse_jsonl_line(line, line_no);
    NAryFact fact{intern_entity(raw.s), intern_relation(raw.r), intern_entity(raw.o), {}};
    for (const auto& [a, v] : raw.quals) {
      fact.qualifiers.push_back({intern_relation(a), intern_entity(v)});
      if (fact.qualifiers.back().value == fact.subject) ++stats.reflexive_qualifiers;
    }
    if (add_fact(fact, split)) {
      ++stats.new_facts;
    } else {
      ++stats.duplicates;
    }
  }
  stats.new_entities = entities_.size() - entities_before;
  stats.new_relations = relations_.size() - relations_before;
  return stats;
}

EntityId HyperGraph::entity(std::string_view label) const {
  auto id = entities_.find(label);
  if (!id) throw LabelError("unknown entity '" + std::string(label) + "'");
  return EntityId{*id};
}

RelationId HyperGraph::relation(std::string_view label) const {
  auto id = relations_.find(label);
  if (!id) throw LabelError("unknown relation '" + std::string(label) + "'");
  return RelationId{*id};
}

std::size_t HyperGraph::count(SplitSet scope) const {
  return static_cast<std::size_t>(
      std::count_if(splits_.begin(), splits_.end(), [&](Split s) { return scope.contains(s); }));
}

std::vector<std::uint32_t> HyperGraph::facts_in(SplitSet scope) const {
  std::vector<std::uint32_t> out;
  for (std::uint32_t i = 0; i < splits_.size(); ++i) {
    if (scope.contains(splits_[i])) out.push_back(i);
  }
  return out;
}

std::span<const Occurrence> HyperGraph::occurrences(EntityId e) const {
  return occurrences_.at(e.value);
}

std::vector<EntityId> HyperGraph::match_pattern(SplitSet scope, std::span<const Symbol> pattern) const {
  if (pattern.size() < 3 || pattern.size() % 2 == 0) {
    throw std::invalid_argument("pattern must be an alternating sequence of odd length >= 3");
  }
  std::size_t hole = 0;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (pattern[i] != kHole) continue;
    if (i % 2 == 1) throw std::invalid_argument("hole at a relation position");
    if (hole != 0) throw std::invalid_argument("pattern has more than one hole");
    hole = i / 2 + 1;
  }
  if (hole == 0) throw std::invalid_argument("pattern has no hole");
  return match_pattern(scope, fact_from_sequence(pattern), hole);
}

std::vector<EntityId> HyperGraph::match_pattern(SplitSet scope, const NAryFact& fact,
                                                std::size_t hole_position) const {
  if (hole_position < 1 || hole_position > fact.arity()) {
    throw std::invalid_argument("hole position outside the fact");
  }
  std::vector<EntityId> out;
  auto it = pattern_index_.find(canonical_key(fact, hole_position));
  if (it == pattern_index_.end()) return out;
  for (const auto& posting : it->second) {
    if (scope.contains(posting.split)) out.push_back(posting.entity);
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool HyperGraph::contains(SplitSet scope, const NAryFact& fact) const {
  auto it = fact_keys_.find(canonical_key(fact));
  return it != fact_keys_.end() && scope.contains(splits_[it->second]);
}

std::uint64_t HyperGraph::digest() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xFF;
      h *= 0x100000001b3ull;
    }
  };
  auto mix_str = [&](const std::string& s) {
    mix(s.size());
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
  };
  for (const auto& l : entities_.labels()) mix_str(l);
  for (const auto& l : relations_.labels()) mix_str(l);
  for (std::size_t i = 0; i < facts_.size(); ++i) {
    mix(static_cast<std::uint64_t>(splits_[i]));
    for (Symbol s : sequence_of(facts_[i])) mix(s);
  }
  return h;
}

namespace {
constexpr char kStoreMagic[4] = {'N', 'Q', 'G', '1'};
constexpr std::uint32_t kStoreVersion = 1;
}  // namespace

void HyperGraph::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write store " + path.string());
  out.write(kStoreMagic, 4);
  io::write_u32(out, kStoreVersion);
  for (const auto* table : {&entities_, &relations_}) {
    io::write_u32(out, static_cast<std::uint32_t>(table->size()));
    for (const auto& label : table->labels()) io::write_string(out, label);
  }
  io::write_u32(out, static_cast<std::uint32_t>(facts_.size()));
  for (std::size_t i = 0; i < facts_.size(); ++i) {
    auto seq = sequence_of(facts_[i]);
    io::write_u32(out, static_cast<std::uint32_t>(splits_[i]));
    io::write_u32(out, static_cast<std::uint32_t>(seq.size()));
    for (Symbol s : seq) io::write_u32(out, s);
  }
  if (!out) throw DataError("failed writing store " + path.string());
}

HyperGraph HyperGraph::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open store " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || !std::equal(magic, magic + 4, kStoreMagic)) throw DataError("not a graph store: " + path.string());
  if (io::read_u32(in) != kStoreVersion) throw DataError("unsupported store version");
  HyperGraph g;
  for (std::uint32_t i = 0, n = io::read_u32(in); i < n; ++i) g.intern_entity(io::read_string(in));
  for (std::uint32_t i = 0, n = io::read_u32(in); i < n; ++i) g.intern_relation(io::read_string(in));
  const auto n_facts = io::read_u32(in);
  std::vector<Symbol> seq;
  for (std::uint32_t i = 0; i < n_facts; ++i) {
    auto split = static_cast<Split>(io::read_u32(in));
    seq.resize(io::read_u32(in));
    for (auto& s : seq) s = io::read_u32(in);
    g.add_fact(fact_from_sequence(seq), split);
  }
  return g;
}

}  // namespace nqe
