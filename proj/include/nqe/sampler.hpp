#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nqe/hkg_store.hpp"
#include "nqe/query_ir.hpp"
#include "nqe/symbolic_executor.hpp"

namespace nqe {

struct GroundedQuery {
  QueryType type = QueryType::p1;
  Split split = Split::train;
  QueryAst ast;
  AnswerSet easy;  // answers on the train graph
  AnswerSet hard;  // answers on the split's scope minus easy
  std::uint64_t seed = 0;

  bool operator==(const GroundedQuery&) const = default;
};

nlohmann::json to_json(const GroundedQuery& q, const HyperGraph& g);
GroundedQuery grounded_query_from_json(const nlohmann::json& j, const HyperGraph& g);

struct SamplerOptions {
  std::size_t retries = 128;
  std::size_t max_answers = 1000;
  // valid/test queries need at least one answer outside the train graph
  bool require_hard = true;
  // negation types must differ from their negation-free version
  bool reject_degenerate_negation = true;
};

// Instantiates `type` by backward walks from a fact of `split` drawn
// uniformly. Returns nullopt when every retry is rejected. Throws DataError
// when a 2cp/3cp query is requested and the scope has no fact of arity >= 3.
std::optional<GroundedQuery> sample_query(QueryType type, const HyperGraph& g, Split split, std::uint64_t seed,
                                          const SamplerOptions& options = {});

// The query with every negated branch removed from its conjunction.
QueryAst drop_negations(const QueryAst& ast);

using DatasetCounts = std::map<std::pair<Split, QueryType>, std::size_t>;

// Parses "1p=100,2i=50" or "train/1p=100,test/2u=10"; bare types use
// `default_split`. Throws DataError on malformed entries.
DatasetCounts parse_counts(std::string_view spec, Split default_split);

struct DatasetManifest {
  std::uint64_t seed = 0;
  std::uint64_t graph_digest = 0;
  DatasetCounts requested;
  DatasetCounts written;

  nlohmann::json to_json() const;
};

// Writes <split>-<type>.jsonl for every requested entry plus manifest.json.
// Item i of (split, type) uses seed derive_seed(seed, {split, type, i}), so
// the output does not depend on `threads`. Shortfalls are reported in the
// manifest; partial files are kept.
DatasetManifest generate_dataset(const HyperGraph& g, const DatasetCounts& counts, std::uint64_t seed,
                                 const std::filesystem::path& out_dir, std::size_t threads = 1,
                                 const SamplerOptions& options = {});

struct Dataset {
  std::vector<GroundedQuery> queries;
  nlohmann::json manifest;
};

// Reads every file listed in manifest.json. Throws DataError when the
// manifest is missing or the graph digest differs.
Dataset load_dataset(const std::filesystem::path& dir, const HyperGraph& g);

}  // namespace nqe
