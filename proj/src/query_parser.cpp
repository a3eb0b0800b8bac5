// Textual and JSON forms of QueryAst.

#include <cctype>
#include <charconv>

#include "nqe/errors.hpp"
#include "nqe/query_ir.hpp"

namespace nqe {

EntityId Vocabulary::entity(std::string_view label) const {
  auto id = entities->find(label);
  if (!id) throw LabelError("unknown entity '" + std::string(label) + "'");
  return EntityId{*id};
}

RelationId Vocabulary::relation(std::string_view label) const {
  auto id = relations->find(label);
  if (!id) throw LabelError("unknown relation '" + std::string(label) + "'");
  return RelationId{*id};
}

namespace {

struct Token {
  enum class Kind { open, close, atom, quoted, end } kind;
  std::string text;
  std::size_t offset;
};

class Lexer {
 public:
  explicit Lexer(std::string_view text) : text_(text) {}

  Token next() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    const std::size_t start = pos_;
    if (pos_ >= text_.size()) return {Token::Kind::end, "", start};
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      return {Token::Kind::open, "(", start};
    }
    if (c == ')') {
      ++pos_;
      return {Token::Kind::close, ")", start};
    }
    if (c == '"') {
      ++pos_;
      std::string value;
      while (true) {
        if (pos_ >= text_.size()) throw ParseError(start, "unterminated quoted label");
        char ch = text_[pos_++];
        if (ch == '"') break;
        if (ch == '\\') {
          if (pos_ >= text_.size()) throw ParseError(start, "unterminated escape");
          ch = text_[pos_++];
        }
        value.push_back(ch);
      }
      return {Token::Kind::quoted, std::move(value), start};
    }
    while (pos_ < text_.size()) {
      const char ch = text_[pos_];
      if (std::isspace(static_cast<unsigned char>(ch)) || ch == '(' || ch == ')' || ch == '"') break;
      ++pos_;
    }
    return {Token::Kind::atom, std::string(text_.substr(start, pos_ - start)), start};
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
};

class Parser {
 public:
  Parser(std::string_view text, const Vocabulary& vocab) : lexer_(text), vocab_(vocab) { advance(); }

  QueryAst parse_query() {
    const NodeIndex root = parse_expr();
    if (current_.kind != Token::Kind::end) throw ParseError(current_.offset, "trailing input after query");
    ast_.set_root(root);
    ast_.validate();
    return std::move(ast_);
  }

 private:
  void advance() { current_ = lexer_.next(); }

  void expect(Token::Kind kind, const char* what) {
    if (current_.kind != kind) throw ParseError(current_.offset, std::string("expected ") + what);
    advance();
  }

  std::string expect_label(const char* what) {
    if (current_.kind != Token::Kind::atom && current_.kind != Token::Kind::quoted) {
      throw ParseError(current_.offset, std::string("expected ") + what);
    }
    std::string label = current_.text;
    advance();
    return label;
  }

  NodeIndex parse_expr() {
    const std::size_t start = current_.offset;
    expect(Token::Kind::open, "'('");
    if (current_.kind != Token::Kind::atom) throw ParseError(current_.offset, "expected operator P/and/or/not");
    const std::string head = current_.text;
    advance();
    if (head == "P") return parse_projection(start);
    if (head == "and" || head == "or") {
      std::vector<NodeIndex> children;
      while (current_.kind == Token::Kind::open) children.push_back(parse_expr());
      if (children.size() < 2) throw ParseError(current_.offset, "'" + head + "' needs at least two operands");
      expect(Token::Kind::close, "')'");
      if (head == "and") return ast_.add(Conjunction{std::move(children)});
      return ast_.add(Disjunction{std::move(children)});
    }
    if (head == "not") {
      const NodeIndex child = parse_expr();
      expect(Token::Kind::close, "')' after single 'not' operand");
      return ast_.add(Negation{child});
    }
    throw ParseError(start, "unknown operator '" + head + "'");
  }

  EntitySlot parse_slot() {
    if (current_.kind == Token::Kind::open) {
      const std::size_t start = current_.offset;
      advance();
      if (current_.kind != Token::Kind::atom || current_.text != "var") {
        throw ParseError(start, "expected '(var' in entity slot");
      }
      advance();
      const NodeIndex child = parse_expr();
      expect(Token::Kind::close, "')' closing var");
      return VarRef{child};
    }
    if (current_.kind == Token::Kind::atom && current_.text == "?") {
      advance();
      return Target{};
    }
    const std::size_t offset = current_.offset;
    const std::string label = expect_label("entity label, '?' or '(var'");
    try {
      return Anchor{vocab_.entity(label)};
    } catch (const LabelError& e) {
      throw LabelError(std::string(e.what()) + " at offset " + std::to_string(offset));
    }
  }

  NodeIndex parse_projection(std::size_t start) {
    if (current_.kind != Token::Kind::atom) throw ParseError(current_.offset, "expected target position");
    std::size_t position = 0;
    const auto& t = current_.text;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), position);
    if (ec != std::errc{} || ptr != t.data() + t.size() || position == 0) {
      throw ParseError(current_.offset, "target position must be a positive integer");
    }
    advance();
    expect(Token::Kind::open, "'(f'");
    if (current_.kind != Token::Kind::atom || current_.text != "f") throw ParseError(current_.offset, "expected 'f'");
    advance();
    Projection proj;
    proj.entities.push_back(parse_slot());
    while (current_.kind != Token::Kind::close) {
      if (current_.kind == Token::Kind::end) throw ParseError(current_.offset, "unexpected end of query");
      const std::size_t offset = current_.offset;
      const std::string rel = expect_label("relation label");
      try {
        proj.relations.push_back(vocab_.relation(rel));
      } catch (const LabelError& e) {
        throw LabelError(std::string(e.what()) + " at offset " + std::to_string(offset));
      }
      if (current_.kind == Token::Kind::close) throw ParseError(current_.offset, "relation without entity slot");
      proj.entities.push_back(parse_slot());
    }
    advance();
    expect(Token::Kind::close, "')' closing P");
    if (proj.entities.size() < 2) throw ParseError(start, "fact needs at least two entity slots");
    std::size_t targets = 0;
    for (const auto& slot : proj.entities) targets += std::holds_alternative<Target>(slot);
    if (targets != 1) throw ParseError(start, "projection must contain exactly one '?', found " + std::to_string(targets));
    if (proj.target_position() != position) {
      throw ParseError(start, "declared target position " + std::to_string(position) + " but '?' is at entity position " +
                                  std::to_string(proj.target_position()));
    }
    return ast_.add(std::move(proj));
  }

  Lexer lexer_;
  const Vocabulary& vocab_;
  Token current_{Token::Kind::end, "", 0};
  QueryAst ast_;
};

std::string quote_if_needed(const std::string& label) {
  bool plain = !label.empty() && label != "?";
  for (char c : label) {
    if (std::isspace(static_cast<unsigned char>(c)) || c == '(' || c == ')' || c == '"' || c == '\\') plain = false;
  }
  if (plain) return label;
  std::string out = "\"";
  for (char c : label) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void serialize_node(const QueryAst& ast, NodeIndex i, const Vocabulary& vocab, std::string& out) {
  const auto& node = ast.node(i);
  if (const auto* proj = std::get_if<Projection>(&node)) {
    out += "(P " + std::to_string(proj->target_position()) + " (f";
    for (std::size_t k = 0; k < proj->entities.size(); ++k) {
      if (k > 0) out += " " + quote_if_needed(vocab.label(proj->relations[k - 1]));
      const auto& slot = proj->entities[k];
      if (const auto* a = std::get_if<Anchor>(&slot)) {
        out += " " + quote_if_needed(vocab.label(a->entity));
      } else if (const auto* v = std::get_if<VarRef>(&slot)) {
        out += " (var ";
        serialize_node(ast, v->node, vocab, out);
        out += ")";
      } else {
        out += " ?";
      }
    }
    out += "))";
  } else if (const auto* conj = std::get_if<Conjunction>(&node)) {
    out += "(and";
    for (NodeIndex c : conj->children) {
      out += " ";
      serialize_node(ast, c, vocab, out);
    }
    out += ")";
  } else if (const auto* disj = std::get_if<Disjunction>(&node)) {
    out += "(or";
    for (NodeIndex c : disj->children) {
      out += " ";
      serialize_node(ast, c, vocab, out);
    }
    out += ")";
  } else {
    out += "(not ";
    serialize_node(ast, std::get<Negation>(node).child, vocab, out);
    out += ")";
  }
}

nlohmann::json node_to_json(const QueryAst& ast, NodeIndex i, const Vocabulary& vocab) {
  const auto& node = ast.node(i);
  nlohmann::json j;
  if (const auto* proj = std::get_if<Projection>(&node)) {
    j["op"] = "P";
    j["target"] = proj->target_position();
    auto& ents = j["entities"] = nlohmann::json::array();
    for (const auto& slot : proj->entities) {
      if (const auto* a = std::get_if<Anchor>(&slot)) {
        ents.push_back({{"anchor", vocab.label(a->entity)}});
      } else if (const auto* v = std::get_if<VarRef>(&slot)) {
        ents.push_back({{"var", node_to_json(ast, v->node, vocab)}});
      } else {
        ents.push_back({{"target", true}});
      }
    }
    auto& rels = j["relations"] = nlohmann::json::array();
    for (RelationId r : proj->relations) rels.push_back(vocab.label(r));
  } else if (const auto* conj = std::get_if<Conjunction>(&node)) {
    j["op"] = "and";
    for (NodeIndex c : conj->children) j["args"].push_back(node_to_json(ast, c, vocab));
  } else if (const auto* disj = std::get_if<Disjunction>(&node)) {
    j["op"] = "or";
    for (NodeIndex c : disj->children) j["args"].push_back(node_to_json(ast, c, vocab));
  } else {
    j["op"] = "not";
    j["arg"] = node_to_json(ast, std::get<Negation>(node).child, vocab);
  }
  return j;
}

NodeIndex node_from_json(const nlohmann::json& j, const Vocabulary& vocab, QueryAst& ast) {
  if (!j.is_object() || !j.contains("op")) throw ParseError(0, "AST node must be an object with 'op'");
  const auto op = j.at("op").get<std::string>();
  if (op == "P") {
    Projection proj;
    for (const auto& e : j.at("entities")) {
      if (e.contains("anchor")) {
        proj.entities.push_back(Anchor{vocab.entity(e.at("anchor").get<std::string>())});
      } else if (e.contains("var")) {
        proj.entities.push_back(VarRef{node_from_json(e.at("var"), vocab, ast)});
      } else if (e.contains("target")) {
        proj.entities.push_back(Target{});
      } else {
        throw ParseError(0, "entity slot must be anchor, var or target");
      }
    }
    for (const auto& r : j.at("relations")) proj.relations.push_back(vocab.relation(r.get<std::string>()));
    if (j.contains("target") && j.at("target").get<std::size_t>() != proj.target_position()) {
      throw ParseError(0, "declared target position does not match target slot");
    }
    return ast.add(std::move(proj));
  }
  if (op == "and" || op == "or") {
    std::vector<NodeIndex> children;
    for (const auto& c : j.at("args")) children.push_back(node_from_json(c, vocab, ast));
    if (op == "and") return ast.add(Conjunction{std::move(children)});
    return ast.add(Disjunction{std::move(children)});
  }
  if (op == "not") return ast.add(Negation{node_from_json(j.at("arg"), vocab, ast)});
  throw ParseError(0, "unknown op '" + op + "'");
}

}  // namespace

QueryAst parse(std::string_view text, const Vocabulary& vocab) { return Parser(text, vocab).parse_query(); }

std::string serialize(const QueryAst& ast, const Vocabulary& vocab) {
  std::string out;
  serialize_node(ast, ast.root(), vocab, out);
  return out;
}

nlohmann::json ast_to_json(const QueryAst& ast, const Vocabulary& vocab) {
  return node_to_json(ast, ast.root(), vocab);
}

QueryAst ast_from_json(const nlohmann::json& j, const Vocabulary& vocab) {
  QueryAst ast;
  try {
    ast.set_root(node_from_json(j, vocab, ast));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, std::string("malformed AST JSON: ") + e.what());
  }
  ast.validate();
  return ast;
}

}  // namespace nqe
