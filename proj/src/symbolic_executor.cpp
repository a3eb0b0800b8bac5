#include "nqe/symbolic_executor.hpp"

#include <algorithm>
#include <iterator>
#include <optional>
#include <unordered_map>

#include "nqe/errors.hpp"

namespace nqe {

AnswerSet set_intersection(const AnswerSet& a, const AnswerSet& b) {
  AnswerSet out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

AnswerSet set_union(const AnswerSet& a, const AnswerSet& b) {
  AnswerSet out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

AnswerSet set_difference(const AnswerSet& a, const AnswerSet& b) {
  AnswerSet out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

namespace {

class Executor {
 public:
  Executor(const QueryAst& ast, const HyperGraph& g, SplitSet scope)
      : ast_(ast), g_(g), scope_(scope), memo_(ast.size()) {}

  const AnswerSet& eval(NodeIndex i) {
    if (memo_[i]) return *memo_[i];
    memo_[i] = std::visit([&](const auto& n) { return eval_node(n); }, ast_.node(i));
    return *memo_[i];
  }

 private:
  AnswerSet eval_node(const Projection& p) {
    NAryFact fact{EntityId{}, p.relations[0], EntityId{}, {}};
    for (std::size_t k = 1; k < p.relations.size(); ++k) fact.qualifiers.push_back({p.relations[k], EntityId{}});

    std::vector<std::size_t> var_positions;
    std::vector<const AnswerSet*> inputs;
    for (std::size_t k = 0; k < p.entities.size(); ++k) {
      const auto& slot = p.entities[k];
      if (const auto* a = std::get_if<Anchor>(&slot)) {
        fact.set_entity(k + 1, a->entity);
      } else if (const auto* v = std::get_if<VarRef>(&slot)) {
        const AnswerSet& in = eval(v->node);
        if (in.empty()) return {};
        var_positions.push_back(k + 1);
        inputs.push_back(&in);
      }
    }
    const std::size_t target = p.target_position();
    if (inputs.empty()) return g_.match_pattern(scope_, fact, target);

    // Odometer over the Cartesian product of the input sets.
    AnswerSet out;
    std::vector<std::size_t> cursor(inputs.size(), 0);
    while (true) {
      for (std::size_t v = 0; v < inputs.size(); ++v) fact.set_entity(var_positions[v], (*inputs[v])[cursor[v]]);
      auto matched = g_.match_pattern(scope_, fact, target);
      out.insert(out.end(), matched.begin(), matched.end());
      std::size_t v = 0;
      while (v < inputs.size() && ++cursor[v] == inputs[v]->size()) cursor[v++] = 0;
      if (v == inputs.size()) break;
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  AnswerSet eval_node(const Conjunction& c) {
    AnswerSet acc = eval(c.children[0]);
    for (std::size_t k = 1; k < c.children.size() && !acc.empty(); ++k) acc = set_intersection(acc, eval(c.children[k]));
    return acc;
  }

  AnswerSet eval_node(const Disjunction& d) {
    AnswerSet acc = eval(d.children[0]);
    for (std::size_t k = 1; k < d.children.size(); ++k) acc = set_union(acc, eval(d.children[k]));
    return acc;
  }

  AnswerSet eval_node(const Negation& n) {
    const AnswerSet& inner = eval(n.child);
    AnswerSet out;
    out.reserve(g_.num_entities() - std::min(g_.num_entities(), inner.size()));
    auto it = inner.begin();
    for (std::uint32_t e = 0; e < g_.num_entities(); ++e) {
      while (it != inner.end() && it->value < e) ++it;
      if (it == inner.end() || it->value != e) out.push_back(EntityId{e});
    }
    return out;
  }

  const QueryAst& ast_;
  const HyperGraph& g_;
  SplitSet scope_;
  std::vector<std::optional<AnswerSet>> memo_;
};

// Direct model checking by enumeration.
class BruteForce {
 public:
  BruteForce(const QueryAst& ast, const HyperGraph& g, SplitSet scope, BruteForceLimits limits)
      : ast_(ast), g_(g), scope_(scope), value_(ast.size(), 0) {
    std::size_t variables = 0;
    assign_scopes(ast.root(), kTop, variables);
    if (variables > limits.max_variables) {
      throw DataError("brute force guard: " + std::to_string(variables) + " bound variables");
    }
    if (g.num_entities() > limits.max_entities) {
      throw DataError("brute force guard: " + std::to_string(g.num_entities()) + " entities");
    }
  }

  AnswerSet run() {
    AnswerSet out;
    for (std::uint32_t x = 0; x < g_.num_entities(); ++x) {
      if (exists(kTop, [&] { return holds(ast_.root(), EntityId{x}); })) out.push_back(EntityId{x});
    }
    return out;
  }

 private:
  static constexpr NodeIndex kTop = 0xFFFFFFFFu;

  // Records, for every Var-referenced node, the negation (or top level)
  // that existentially quantifies it.
  void assign_scopes(NodeIndex i, NodeIndex quantifier, std::size_t& variables) {
    std::visit(
        [&](const auto& n) {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, Projection>) {
            for (const auto& slot : n.entities) {
              if (const auto* v = std::get_if<VarRef>(&slot)) {
                scoped_[quantifier].push_back(v->node);
                ++variables;
                assign_scopes(v->node, quantifier, variables);
              }
            }
          } else if constexpr (std::is_same_v<T, Negation>) {
            assign_scopes(n.child, i, variables);
          } else {
            for (NodeIndex c : n.children) assign_scopes(c, quantifier, variables);
          }
        },
        ast_.node(i));
  }

  // True when some assignment of the variables quantified at `quantifier`
  // makes `check` true.
  template <class Fn>
  bool exists(NodeIndex quantifier, Fn&& check) {
    auto it = scoped_.find(quantifier);
    if (it == scoped_.end() || it->second.empty()) return check();
    const auto& vars = it->second;
    const std::uint32_t n = static_cast<std::uint32_t>(g_.num_entities());
    if (n == 0) return false;
    for (NodeIndex v : vars) value_[v] = 0;
    while (true) {
      if (check()) return true;
      std::size_t k = 0;
      while (k < vars.size() && ++value_[vars[k]] == n) value_[vars[k++]] = 0;
      if (k == vars.size()) return false;
    }
  }

  bool holds(NodeIndex i, EntityId x) {
    const auto& node = ast_.node(i);
    if (const auto* p = std::get_if<Projection>(&node)) {
      NAryFact fact{EntityId{}, p->relations[0], EntityId{}, {}};
      for (std::size_t k = 1; k < p->relations.size(); ++k) fact.qualifiers.push_back({p->relations[k], EntityId{}});
      for (std::size_t k = 0; k < p->entities.size(); ++k) {
        const auto& slot = p->entities[k];
        if (const auto* a = std::get_if<Anchor>(&slot)) {
          fact.set_entity(k + 1, a->entity);
        } else if (const auto* v = std::get_if<VarRef>(&slot)) {
          fact.set_entity(k + 1, EntityId{value_[v->node]});
        } else {
          fact.set_entity(k + 1, x);
        }
      }
      if (!g_.contains(scope_, fact)) return false;
      for (const auto& slot : p->entities) {
        if (const auto* v = std::get_if<VarRef>(&slot)) {
          if (!holds(v->node, EntityId{value_[v->node]})) return false;
        }
      }
      return true;
    }
    if (const auto* c = std::get_if<Conjunction>(&node)) {
      return std::all_of(c->children.begin(), c->children.end(), [&](NodeIndex k) { return holds(k, x); });
    }
    if (const auto* d = std::get_if<Disjunction>(&node)) {
      return std::any_of(d->children.begin(), d->children.end(), [&](NodeIndex k) { return holds(k, x); });
    }
    const NodeIndex child = std::get<Negation>(node).child;
    // Inner enumeration must not clobber values of the enclosing scope.
    std::vector<std::uint32_t> saved = value_;
    const bool inner = exists(i, [&] { return holds(child, x); });
    value_ = std::move(saved);
    return !inner;
  }

  const QueryAst& ast_;
  const HyperGraph& g_;
  SplitSet scope_;
  std::vector<std::uint32_t> value_;
  std::unordered_map<NodeIndex, std::vector<NodeIndex>> scoped_;
};

}  // namespace

AnswerSet execute(const QueryAst& ast, const HyperGraph& g, SplitSet scope) {
  ast.validate();
  return Executor(ast, g, scope).eval(ast.root());
}

AnswerSet brute_force_execute(const QueryAst& ast, const HyperGraph& g, SplitSet scope, BruteForceLimits limits) {
  ast.validate();
  return BruteForce(ast, g, scope, limits).run();
}

}  // namespace nqe
