#include "nqe/query_ir.hpp"

#include <algorithm>
#include <stdexcept>

#include "nqe/errors.hpp"

namespace nqe {

std::size_t Projection::target_position() const noexcept {
  for (std::size_t i = 0; i < entities.size(); ++i) {
    if (std::holds_alternative<Target>(entities[i])) return i + 1;
  }
  return 0;
}

NodeIndex QueryAst::add(QueryNode node) {
  nodes_.push_back(std::move(node));
  root_ = static_cast<NodeIndex>(nodes_.size() - 1);
  return root_;
}

std::size_t QueryAst::projection_count() const {
  return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const QueryNode& n) {
    return std::holds_alternative<Projection>(n);
  }));
}

void QueryAst::validate() const {
  auto fail = [](const std::string& what) { throw ParseError(0, what); };
  if (nodes_.empty()) fail("empty query");
  if (root_ >= nodes_.size()) fail("root index out of range");
  auto check_child = [&](NodeIndex parent, NodeIndex child) {
    if (child >= parent) fail("circular or forward reference from node " + std::to_string(parent));
  };
  for (NodeIndex i = 0; i < nodes_.size(); ++i) {
    const auto& node = nodes_[i];
    if (const auto* proj = std::get_if<Projection>(&node)) {
      if (proj->arity() < 2) fail("projection arity < 2");
      if (proj->relations.size() + 1 != proj->arity()) fail("projection needs n-1 relations for n entity slots");
      std::size_t targets = 0;
      for (const auto& slot : proj->entities) {
        if (std::holds_alternative<Target>(slot)) ++targets;
        if (const auto* v = std::get_if<VarRef>(&slot)) check_child(i, v->node);
      }
      if (targets != 1) fail("projection must have exactly one target slot");
    } else if (const auto* conj = std::get_if<Conjunction>(&node)) {
      if (conj->children.size() < 2) fail("conjunction needs at least two children");
      for (NodeIndex c : conj->children) check_child(i, c);
    } else if (const auto* disj = std::get_if<Disjunction>(&node)) {
      if (disj->children.size() < 2) fail("disjunction needs at least two children");
      for (NodeIndex c : disj->children) check_child(i, c);
    } else {
      check_child(i, std::get<Negation>(node).child);
    }
  }
  // Every node must be reachable from the root.
  std::vector<bool> seen(nodes_.size(), false);
  std::vector<NodeIndex> stack{root_};
  while (!stack.empty()) {
    const NodeIndex i = stack.back();
    stack.pop_back();
    if (seen[i]) continue;
    seen[i] = true;
    std::visit(
        [&](const auto& n) {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, Projection>) {
            for (const auto& slot : n.entities) {
              if (const auto* v = std::get_if<VarRef>(&slot)) stack.push_back(v->node);
            }
          } else if constexpr (std::is_same_v<T, Negation>) {
            stack.push_back(n.child);
          } else {
            for (NodeIndex c : n.children) stack.push_back(c);
          }
        },
        nodes_[i]);
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) fail("query contains nodes unreachable from the root");
}

namespace {

template <class Fn>
void walk_preorder(const QueryAst& ast, NodeIndex i, Fn&& fn) {
  const auto& node = ast.node(i);
  if (const auto* proj = std::get_if<Projection>(&node)) {
    for (std::size_t k = 0; k < proj->entities.size(); ++k) {
      if (k > 0) fn(proj->relations[k - 1]);
      const auto& slot = proj->entities[k];
      if (const auto* a = std::get_if<Anchor>(&slot)) fn(a->entity);
      if (const auto* v = std::get_if<VarRef>(&slot)) walk_preorder(ast, v->node, fn);
    }
  } else if (const auto* conj = std::get_if<Conjunction>(&node)) {
    for (NodeIndex c : conj->children) walk_preorder(ast, c, fn);
  } else if (const auto* disj = std::get_if<Disjunction>(&node)) {
    for (NodeIndex c : disj->children) walk_preorder(ast, c, fn);
  } else {
    walk_preorder(ast, std::get<Negation>(node).child, fn);
  }
}

}  // namespace

std::vector<EntityId> anchors_of(const QueryAst& ast) {
  std::vector<EntityId> out;
  walk_preorder(ast, ast.root(), [&](auto id) {
    if constexpr (std::is_same_v<decltype(id), EntityId>) out.push_back(id);
  });
  return out;
}

std::vector<RelationId> relations_of(const QueryAst& ast) {
  std::vector<RelationId> out;
  walk_preorder(ast, ast.root(), [&](auto id) {
    if constexpr (std::is_same_v<decltype(id), RelationId>) out.push_back(id);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Compilation

namespace {

class Compiler {
 public:
  Compiler(const QueryAst& ast, CompileOptions options)
      : ast_(ast), options_(options), registers_(ast.size()), consumers_(ast.size(), 0) {
    for (const auto& node : ast.nodes()) {
      std::visit(
          [&](const auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, Projection>) {
              for (const auto& slot : n.entities) {
                if (const auto* v = std::get_if<VarRef>(&slot)) ++consumers_[v->node];
              }
            } else if constexpr (std::is_same_v<T, Negation>) {
              ++consumers_[n.child];
            } else {
              for (NodeIndex c : n.children) ++consumers_[c];
            }
          },
          node);
    }
  }

  StepProgram run() {
    program_.target = visit(ast_.root());
    program_.num_registers = static_cast<std::uint32_t>(program_.steps.size());
    std::sort(program_.variables.begin(), program_.variables.end());
    program_.variables.erase(std::unique(program_.variables.begin(), program_.variables.end()),
                             program_.variables.end());
    return std::move(program_);
  }

 private:
  ProjectionSpec spec_for(const Projection& proj) {
    ProjectionSpec spec;
    spec.relations = proj.relations;
    spec.mask_position = proj.target_position();
    for (const auto& slot : proj.entities) {
      if (const auto* a = std::get_if<Anchor>(&slot)) {
        spec.entities.emplace_back(*a);
      } else if (const auto* v = std::get_if<VarRef>(&slot)) {
        const auto reg = visit(v->node);
        program_.variables.push_back(reg);
        spec.entities.emplace_back(RegisterRef{reg});
      } else {
        spec.entities.emplace_back(MaskSlot{});
      }
    }
    return spec;
  }

  std::uint32_t emit(Step step, NodeIndex node) {
    step.out = static_cast<std::uint32_t>(program_.steps.size());
    program_.steps.push_back(std::move(step));
    registers_[node] = program_.steps.back().out;
    return program_.steps.back().out;
  }

  std::uint32_t visit(NodeIndex i) {
    if (registers_[i]) return *registers_[i];
    const auto& node = ast_.node(i);
    Step step;
    if (const auto* proj = std::get_if<Projection>(&node)) {
      step.projection = spec_for(*proj);
    } else if (const auto* conj = std::get_if<Conjunction>(&node)) {
      LogicSpec logic{LogicOp::conjunction, {}};
      for (NodeIndex c : conj->children) logic.inputs.push_back(visit(c));
      step.logic = std::move(logic);
    } else if (const auto* disj = std::get_if<Disjunction>(&node)) {
      LogicSpec logic{LogicOp::disjunction, {}};
      for (NodeIndex c : disj->children) logic.inputs.push_back(visit(c));
      step.logic = std::move(logic);
    } else {
      const NodeIndex child = std::get<Negation>(node).child;
      const auto* child_proj = std::get_if<Projection>(&ast_.node(child));
      if (options_.fuse_negation && child_proj && consumers_[child] == 1 && !registers_[child]) {
        step.projection = spec_for(*child_proj);
        step.logic = LogicSpec{LogicOp::negation, {}};
      } else {
        step.logic = LogicSpec{LogicOp::negation, {visit(child)}};
      }
    }
    return emit(std::move(step), i);
  }

  const QueryAst& ast_;
  CompileOptions options_;
  std::vector<std::optional<std::uint32_t>> registers_;
  std::vector<int> consumers_;
  StepProgram program_;
};

}  // namespace

StepProgram compile(const QueryAst& ast, CompileOptions options) {
  ast.validate();
  return Compiler(ast, options).run();
}

void StepProgram::validate() const {
  auto fail = [](const std::string& what) { throw std::logic_error("invalid step program: " + what); };
  if (steps.empty()) fail("no steps");
  std::vector<bool> written(num_registers, false);
  auto read = [&](std::uint32_t r) {
    if (r >= num_registers || !written[r]) fail("register " + std::to_string(r) + " read before written");
  };
  for (const auto& step : steps) {
    if (!step.projection && !step.logic) fail("step with neither projection nor logic");
    if (step.projection) {
      const auto& p = *step.projection;
      if (p.arity() < 2 || p.relations.size() + 1 != p.arity()) fail("projection arity mismatch");
      std::size_t masks = 0;
      for (std::size_t k = 0; k < p.entities.size(); ++k) {
        if (std::holds_alternative<MaskSlot>(p.entities[k])) {
          ++masks;
          if (p.mask_position != k + 1) fail("mask position mismatch");
        }
        if (const auto* r = std::get_if<RegisterRef>(&p.entities[k])) read(r->index);
      }
      if (masks != 1) fail("projection must have exactly one mask");
    }
    if (step.logic) {
      const auto& l = *step.logic;
      if (step.projection) {
        if (l.op != LogicOp::negation || !l.inputs.empty()) fail("only a bare negation can share a step with a projection");
      } else if (l.op == LogicOp::negation) {
        if (l.inputs.size() != 1) fail("negation takes one input");
      } else if (l.inputs.size() < 2) {
        fail("conjunction/disjunction take at least two inputs");
      }
      for (auto r : l.inputs) read(r);
    }
    if (step.out >= num_registers || written[step.out]) fail("output register reused or out of range");
    written[step.out] = true;
  }
  if (steps.back().out != target) fail("last step must write the target register");
}

// ---------------------------------------------------------------------------
// Query types and canonical shapes

namespace {

constexpr std::array<std::string_view, 16> kTypeTags = {"1p", "2p", "3p",  "2i",  "3i",  "pi",  "ip",  "2u",
                                                        "up", "2cp", "3cp", "2in", "3in", "inp", "pin", "pni"};

using Kind = Shape::Kind;

Shape proj(std::vector<Shape> input = {}) { return Shape{Kind::projection, std::move(input), 0}; }
Shape conj(std::vector<Shape> c) { return Shape{Kind::conjunction, std::move(c), 0}; }
Shape disj(std::vector<Shape> c) { return Shape{Kind::disjunction, std::move(c), 0}; }
Shape neg(Shape c) { return Shape{Kind::negation, {std::move(c)}, 0}; }

void number_hops(Shape& s, std::size_t& next) {
  for (auto& c : s.children) number_hops(c, next);
  if (s.kind == Kind::projection) s.hop = next++;
}

std::array<Shape, 16> build_shapes() {
  std::array<Shape, 16> shapes = {
      proj(),                                       // 1p
      proj({proj()}),                               // 2p
      proj({proj({proj()})}),                       // 3p
      conj({proj(), proj()}),                       // 2i
      conj({proj(), proj(), proj()}),               // 3i
      conj({proj({proj()}), proj()}),               // pi
      proj({conj({proj(), proj()})}),               // ip
      disj({proj(), proj()}),                       // 2u
      proj({disj({proj(), proj()})}),               // up
      proj({proj()}),                               // 2cp
      proj({proj({proj()})}),                       // 3cp
      conj({proj(), neg(proj())}),                  // 2in
      conj({proj(), proj(), neg(proj())}),          // 3in
      proj({conj({proj(), neg(proj())})}),          // inp
      conj({proj({proj()}), neg(proj())}),          // pin
      conj({neg(proj({proj()})), proj()}),          // pni
  };
  for (auto& s : shapes) {
    std::size_t next = 0;
    number_hops(s, next);
  }
  return shapes;
}

std::size_t count_hops(const Shape& s) {
  std::size_t n = s.kind == Kind::projection ? 1 : 0;
  for (const auto& c : s.children) n += count_hops(c);
  return n;
}

NodeIndex build(const Shape& s, std::span<const Hop> hops, QueryAst& ast) {
  switch (s.kind) {
    case Kind::projection: {
      const Hop& hop = hops[s.hop];
      std::optional<NodeIndex> input;
      if (!s.children.empty()) input = build(s.children.front(), hops, ast);
      Projection p;
      p.relations = hop.relations;
      for (std::size_t pos = 1; pos <= hop.entities.size(); ++pos) {
        if (pos == hop.target) {
          p.entities.emplace_back(Target{});
        } else if (input && pos == hop.input) {
          p.entities.emplace_back(VarRef{*input});
        } else {
          p.entities.emplace_back(Anchor{hop.entities[pos - 1]});
        }
      }
      return ast.add(std::move(p));
    }
    case Kind::conjunction:
    case Kind::disjunction: {
      std::vector<NodeIndex> children;
      for (const auto& c : s.children) children.push_back(build(c, hops, ast));
      if (s.kind == Kind::conjunction) return ast.add(Conjunction{std::move(children)});
      return ast.add(Disjunction{std::move(children)});
    }
    case Kind::negation:
      return ast.add(Negation{build(s.children.front(), hops, ast)});
  }
  throw std::logic_error("unreachable shape kind");
}

void check_hops(const Shape& s, std::span<const Hop> hops) {
  if (s.kind == Kind::projection) {
    const Hop& hop = hops[s.hop];
    const std::size_t n = hop.entities.size();
    if (n < 2 || hop.relations.size() + 1 != n) {
      throw std::invalid_argument("hop " + std::to_string(s.hop) + ": needs n entities and n-1 relations, n >= 2");
    }
    if (hop.target < 1 || hop.target > n) throw std::invalid_argument("hop target position out of range");
    const bool wants_input = !s.children.empty();
    if (wants_input != (hop.input != 0)) {
      throw std::invalid_argument("hop " + std::to_string(s.hop) + (wants_input ? ": needs an input position" : ": takes no input"));
    }
    if (wants_input && (hop.input > n || hop.input == hop.target)) {
      throw std::invalid_argument("hop input position invalid");
    }
  }
  for (const auto& c : s.children) check_hops(c, hops);
}

}  // namespace

std::string_view to_string(QueryType type) { return kTypeTags[static_cast<std::size_t>(type)]; }

QueryType parse_query_type(std::string_view tag) {
  for (std::size_t i = 0; i < kTypeTags.size(); ++i) {
    if (kTypeTags[i] == tag) return static_cast<QueryType>(i);
  }
  throw DataError("unknown query type '" + std::string(tag) + "'");
}

bool has_negation(QueryType type) {
  switch (type) {
    case QueryType::in2:
    case QueryType::in3:
    case QueryType::inp:
    case QueryType::pin:
    case QueryType::pni:
      return true;
    default:
      return false;
  }
}

bool is_chain_with_qualifiers(QueryType type) { return type == QueryType::cp2 || type == QueryType::cp3; }

const Shape& shape_of(QueryType type) {
  static const std::array<Shape, 16> shapes = build_shapes();
  return shapes[static_cast<std::size_t>(type)];
}

std::size_t hop_count(QueryType type) { return count_hops(shape_of(type)); }

QueryAst canonical_ast(QueryType type, std::span<const Hop> hops) {
  const Shape& shape = shape_of(type);
  if (hops.size() != count_hops(shape)) {
    throw std::invalid_argument(std::string(to_string(type)) + " needs " + std::to_string(count_hops(shape)) +
                                " hops, got " + std::to_string(hops.size()));
  }
  check_hops(shape, hops);
  if (is_chain_with_qualifiers(type)) {
    bool qualifier_link = false;
    for (const auto& hop : hops) {
      if (hop.entities.size() < 3) throw std::invalid_argument("cp hops need facts of arity >= 3");
      if (hop.target >= 3 || hop.input >= 3) qualifier_link = true;
    }
    if (!qualifier_link) throw std::invalid_argument("cp query needs a variable or target at a qualifier position");
  }
  QueryAst ast;
  ast.set_root(build(shape, hops, ast));
  ast.validate();
  return ast;
}

QueryAst canonical_ast(QueryType type, std::span<const EntityId> anchors, std::span<const RelationId> relations) {
  if (is_chain_with_qualifiers(type)) {
    throw std::invalid_argument("2cp/3cp need n-ary hops; use the Hop overload");
  }
  const Shape& shape = shape_of(type);
  const std::size_t n_hops = count_hops(shape);
  std::vector<bool> has_input(n_hops, false);
  auto mark = [&](auto&& self, const Shape& s) -> void {
    if (s.kind == Kind::projection && !s.children.empty()) has_input[s.hop] = true;
    for (const auto& c : s.children) self(self, c);
  };
  mark(mark, shape);
  const auto n_leaves = static_cast<std::size_t>(std::count(has_input.begin(), has_input.end(), false));
  if (relations.size() != n_hops || anchors.size() != n_leaves) {
    throw std::invalid_argument(std::string(to_string(type)) + " needs " + std::to_string(n_leaves) + " anchors and " +
                                std::to_string(n_hops) + " relations");
  }
  std::vector<Hop> hops(n_hops);
  std::size_t next_anchor = 0;
  for (std::size_t h = 0; h < n_hops; ++h) {
    hops[h].relations = {relations[h]};
    hops[h].target = 2;
    if (has_input[h]) {
      hops[h].entities = {EntityId{}, EntityId{}};
      hops[h].input = 1;
    } else {
      hops[h].entities = {anchors[next_anchor++], EntityId{}};
    }
  }
  return canonical_ast(type, hops);
}

}  // namespace nqe
