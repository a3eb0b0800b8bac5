#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "nqe/hkg_store.hpp"

namespace nqe {

using NodeIndex = std::uint32_t;

struct Anchor {
  EntityId entity;
  bool operator==(const Anchor&) const = default;
};
struct VarRef {
  NodeIndex node;
  bool operator==(const VarRef&) const = default;
};
struct Target {
  bool operator==(const Target&) const = default;
};
using EntitySlot = std::variant<Anchor, VarRef, Target>;

// One n-ary projection: a fact skeleton with exactly one Target slot.
struct Projection {
  std::vector<EntitySlot> entities;   // n slots, 1-based position = index + 1
  std::vector<RelationId> relations;  // n - 1 relations

  std::size_t arity() const noexcept { return entities.size(); }
  // 1-based position of the Target slot, 0 when absent.
  std::size_t target_position() const noexcept;
  bool operator==(const Projection&) const = default;
};

struct Conjunction {
  std::vector<NodeIndex> children;
  bool operator==(const Conjunction&) const = default;
};
struct Disjunction {
  std::vector<NodeIndex> children;
  bool operator==(const Disjunction&) const = default;
};
struct Negation {
  NodeIndex child;
  bool operator==(const Negation&) const = default;
};

using QueryNode = std::variant<Projection, Conjunction, Disjunction, Negation>;

// Arena-backed query DAG. Children always precede their parents, which makes
// every well-formed AST acyclic; the root is the last node unless set.
class QueryAst {
 public:
  NodeIndex add(QueryNode node);
  void set_root(NodeIndex root) { root_ = root; }

  NodeIndex root() const noexcept { return root_; }
  const QueryNode& node(NodeIndex i) const { return nodes_.at(i); }
  std::span<const QueryNode> nodes() const noexcept { return nodes_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  std::size_t projection_count() const;
  std::size_t operator_count() const { return nodes_.size(); }

  // Throws ParseError (offset 0) describing the first structural violation.
  void validate() const;

  bool operator==(const QueryAst&) const = default;

 private:
  std::vector<QueryNode> nodes_;
  NodeIndex root_ = 0;
};

// Label resolution for the textual and JSON forms.
struct Vocabulary {
  const SymbolTable* entities;
  const SymbolTable* relations;

  EntityId entity(std::string_view label) const;
  RelationId relation(std::string_view label) const;
  const std::string& label(EntityId e) const { return entities->label(e.value); }
  const std::string& label(RelationId r) const { return relations->label(r.value); }
};

inline Vocabulary vocabulary(const HyperGraph& g) { return {&g.entities(), &g.relations()}; }

// query := expr
// expr  := proj | conj | disj | neg
// proj  := "(P" INT "(f" slot (REL slot)* "))"
// slot  := LABEL | "?" | "(var" expr ")"
// conj  := "(and" expr expr+ ")"   disj := "(or" expr expr+ ")"   neg := "(not" expr ")"
// INT is the 1-based entity position of "?". Labels may be double-quoted.
QueryAst parse(std::string_view text, const Vocabulary& vocab);
std::string serialize(const QueryAst& ast, const Vocabulary& vocab);

nlohmann::json ast_to_json(const QueryAst& ast, const Vocabulary& vocab);
QueryAst ast_from_json(const nlohmann::json& j, const Vocabulary& vocab);

// Anchors and relations in depth-first (serialization) order.
std::vector<EntityId> anchors_of(const QueryAst& ast);
std::vector<RelationId> relations_of(const QueryAst& ast);

// ---------------------------------------------------------------------------
// Step programs

struct RegisterRef {
  std::uint32_t index;
  bool operator==(const RegisterRef&) const = default;
};
struct MaskSlot {
  bool operator==(const MaskSlot&) const = default;
};
using SpecSlot = std::variant<Anchor, RegisterRef, MaskSlot>;

struct ProjectionSpec {
  std::vector<RelationId> relations;
  std::vector<SpecSlot> entities;
  std::size_t mask_position = 0;  // 1-based

  std::size_t arity() const noexcept { return entities.size(); }
  bool operator==(const ProjectionSpec&) const = default;
};

enum class LogicOp : std::uint8_t { conjunction, disjunction, negation };

struct LogicSpec {
  LogicOp op;
  // Registers read by the op. Empty only for a negation fused onto the
  // projection of the same step, in which case it negates that projection.
  std::vector<std::uint32_t> inputs;
  bool operator==(const LogicSpec&) const = default;
};

struct Step {
  std::optional<ProjectionSpec> projection;
  std::optional<LogicSpec> logic;
  std::uint32_t out = 0;
  bool operator==(const Step&) const = default;
};

struct StepProgram {
  std::uint32_t num_registers = 0;
  std::vector<Step> steps;
  std::uint32_t target = 0;
  // Registers consumed by projection slots (bound variables V1..Vk), in
  // production order.
  std::vector<std::uint32_t> variables;

  // Throws std::logic_error on read-before-write or malformed steps.
  void validate() const;
  bool operator==(const StepProgram&) const = default;
};

struct CompileOptions {
  // Fold Not(Projection) into a single {P, N} step when the projection has
  // no other consumer.
  bool fuse_negation = false;
};

StepProgram compile(const QueryAst& ast, CompileOptions options = {});

// ---------------------------------------------------------------------------
// Canonical query types

enum class QueryType : std::uint8_t { p1, p2, p3, i2, i3, pi, ip, u2, up, cp2, cp3, in2, in3, inp, pin, pni };

inline constexpr std::array<QueryType, 16> kAllQueryTypes = {
    QueryType::p1,  QueryType::p2,  QueryType::p3,  QueryType::i2,  QueryType::i3,  QueryType::pi,
    QueryType::ip,  QueryType::u2,  QueryType::up,  QueryType::cp2, QueryType::cp3, QueryType::in2,
    QueryType::in3, QueryType::inp, QueryType::pin, QueryType::pni};

std::string_view to_string(QueryType type);
QueryType parse_query_type(std::string_view tag);
bool has_negation(QueryType type);
bool is_chain_with_qualifiers(QueryType type);  // 2cp / 3cp

// Operator tree of a canonical type. Projections carry their hop index
// (post-order among projections) and at most one input child.
struct Shape {
  enum class Kind : std::uint8_t { projection, conjunction, disjunction, negation };
  Kind kind;
  std::vector<Shape> children;
  std::size_t hop = 0;
};

const Shape& shape_of(QueryType type);
std::size_t hop_count(QueryType type);

// Concrete skeleton of one projection. `entities` has one entry per position;
// the entries at `target` and `input` are ignored. `input` is 0 for leaf hops.
struct Hop {
  std::vector<RelationId> relations;
  std::vector<EntityId> entities;
  std::size_t target = 2;
  std::size_t input = 0;
};

QueryAst canonical_ast(QueryType type, std::span<const Hop> hops);
// Binary-fact form: every hop is (anchor|var, r, ?). Not available for 2cp/3cp.
QueryAst canonical_ast(QueryType type, std::span<const EntityId> anchors,
                       std::span<const RelationId> relations);

}  // namespace nqe
