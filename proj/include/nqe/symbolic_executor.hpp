#pragma once

#include <vector>

#include "nqe/hkg_store.hpp"
#include "nqe/query_ir.hpp"

namespace nqe {

// Sorted, duplicate-free entity set.
using AnswerSet = std::vector<EntityId>;

AnswerSet set_intersection(const AnswerSet& a, const AnswerSet& b);
AnswerSet set_union(const AnswerSet& a, const AnswerSet& b);
AnswerSet set_difference(const AnswerSet& a, const AnswerSet& b);

// Exact set semantics: projection = union of pattern matches over the
// Cartesian product of its Var inputs; and = intersection; or = union;
// not = complement against every entity of the graph.
AnswerSet execute(const QueryAst& ast, const HyperGraph& g, SplitSet scope);

struct BruteForceLimits {
  std::size_t max_variables = 3;
  std::size_t max_entities = 200;
};

// Test oracle: enumerates entity assignments for every bound variable and
// model-checks the first-order formula with fact membership tests only.
// Variables below a negation are quantified inside it. Throws DataError when
// the guard is exceeded.
AnswerSet brute_force_execute(const QueryAst& ast, const HyperGraph& g, SplitSet scope,
                              BruteForceLimits limits = {});

}  // namespace nqe
