#include "nqe/sampler.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "nqe/errors.hpp"
#include "nqe/random.hpp"

namespace nqe {

namespace {

using Kind = Shape::Kind;

std::vector<std::string> labels_of(const AnswerSet& set, const HyperGraph& g) {
  std::vector<std::string> out;
  out.reserve(set.size());
  for (EntityId e : set) out.push_back(g.label(e));
  return out;
}

AnswerSet answers_from_json(const nlohmann::json& j, const HyperGraph& g) {
  AnswerSet out;
  for (const auto& label : j) out.push_back(g.entity(label.get<std::string>()));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

nlohmann::json to_json(const GroundedQuery& q, const HyperGraph& g) {
  nlohmann::json j;
  j["type"] = std::string(to_string(q.type));
  j["split"] = std::string(to_string(q.split));
  j["ast"] = ast_to_json(q.ast, vocabulary(g));
  j["text"] = serialize(q.ast, vocabulary(g));
  j["anchors"] = nlohmann::json::array();
  for (EntityId e : anchors_of(q.ast)) j["anchors"].push_back(g.label(e));
  j["relations"] = nlohmann::json::array();
  for (RelationId r : relations_of(q.ast)) j["relations"].push_back(g.label(r));
  j["easy"] = labels_of(q.easy, g);
  j["hard"] = labels_of(q.hard, g);
  j["seed"] = q.seed;
  return j;
}

GroundedQuery grounded_query_from_json(const nlohmann::json& j, const HyperGraph& g) {
  GroundedQuery q;
  try {
    q.type = parse_query_type(j.at("type").get<std::string>());
    q.split = parse_split(j.at("split").get<std::string>());
    q.ast = ast_from_json(j.at("ast"), vocabulary(g));
    q.easy = answers_from_json(j.at("easy"), g);
    q.hard = answers_from_json(j.at("hard"), g);
    q.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed query record: ") + e.what());
  }
  return q;
}

// ---------------------------------------------------------------------------
// Sampling

namespace {

class Walker {
 public:
  Walker(QueryType type, const HyperGraph& g, SplitSet scope, std::mt19937_64& rng)
      : g_(g), scope_(scope), rng_(rng), cp_(is_chain_with_qualifiers(type)), hops_(hop_count(type)) {}

  bool usable(const NAryFact& fact) const { return !cp_ || fact.arity() >= 3; }

  // Positions a hop may query on `fact`.
  std::vector<std::size_t> target_positions(const NAryFact& fact) const {
    std::vector<std::size_t> out;
    const std::size_t limit = cp_ ? fact.arity() : 2;
    for (std::size_t p = 1; p <= limit; ++p) out.push_back(p);
    return out;
  }

  std::size_t pick(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }

  struct Anchor {
    std::uint32_t fact;
    std::size_t position;
  };

  std::optional<Anchor> occurrence(EntityId e) {
    std::vector<Anchor> options;
    for (const auto& occ : g_.occurrences(e)) {
      if (!scope_.contains(g_.split_of(occ.fact))) continue;
      const auto& fact = g_.facts()[occ.fact];
      if (!usable(fact)) continue;
      if (!cp_ && occ.position > 2) continue;
      options.push_back({occ.fact, occ.position});
    }
    if (options.empty()) return std::nullopt;
    return options[pick(options.size())];
  }

  // Grounds `s` so that `e` answers it. `forced` pins the fact used by the
  // first projection reached on a positive path.
  bool ground(const Shape& s, EntityId e, std::optional<Anchor> forced) {
    switch (s.kind) {
      case Kind::projection: {
        const auto occ = forced ? forced : occurrence(e);
        if (!occ) return false;
        const NAryFact& fact = g_.facts()[occ->fact];
        Hop& hop = hops_[s.hop];
        hop.relations.clear();
        hop.entities.clear();
        for (std::size_t p = 1; p < fact.arity(); ++p) hop.relations.push_back(fact.relation_at(p));
        for (std::size_t p = 1; p <= fact.arity(); ++p) hop.entities.push_back(fact.entity_at(p));
        hop.target = occ->position;
        hop.input = 0;
        if (s.children.empty()) return true;
        std::vector<std::size_t> inputs;
        for (std::size_t p = 1; p <= fact.arity(); ++p) {
          if (p == hop.target) continue;
          if (!cp_ && p > 2) continue;
          if (cp_ && hop.target < 3 && p < 3) continue;
          inputs.push_back(p);
        }
        if (inputs.empty()) return false;
        hop.input = inputs[pick(inputs.size())];
        return ground(s.children.front(), fact.entity_at(hop.input), std::nullopt);
      }
      case Kind::conjunction:
      case Kind::disjunction: {
        std::vector<const Shape*> negated;
        bool first = true;
        for (const auto& c : s.children) {
          if (c.kind == Kind::negation) {
            negated.push_back(&c);
            continue;
          }
          if (!ground(c, e, first ? forced : std::nullopt)) return false;
          first = false;
        }
        if (negated.empty()) return true;
        // Negated branches are grounded from another answer of the positive
        // part so that removing them actually changes the result.
        Shape positive{Kind::conjunction, {}, 0};
        for (const auto& c : s.children) {
          if (c.kind != Kind::negation) positive.children.push_back(c);
        }
        const Shape& part = positive.children.size() == 1 ? positive.children.front() : positive;
        QueryAst sub;
        sub.set_root(build(part, sub));
        AnswerSet others = execute(sub, g_, scope_);
        others.erase(std::remove(others.begin(), others.end(), e), others.end());
        if (others.empty()) return false;
        for (const Shape* n : negated) {
          if (!ground(n->children.front(), others[pick(others.size())], std::nullopt)) return false;
        }
        return true;
      }
      case Kind::negation:
        return ground(s.children.front(), e, std::nullopt);
    }
    return false;
  }

  NodeIndex build(const Shape& s, QueryAst& ast) const {
    switch (s.kind) {
      case Kind::projection: {
        const Hop& hop = hops_[s.hop];
        std::optional<NodeIndex> input;
        if (!s.children.empty()) input = build(s.children.front(), ast);
        Projection p;
        p.relations = hop.relations;
        for (std::size_t pos = 1; pos <= hop.entities.size(); ++pos) {
          if (pos == hop.target) {
            p.entities.emplace_back(Target{});
          } else if (input && pos == hop.input) {
            p.entities.emplace_back(VarRef{*input});
          } else {
            p.entities.emplace_back(nqe::Anchor{hop.entities[pos - 1]});
          }
        }
        return ast.add(std::move(p));
      }
      case Kind::conjunction:
      case Kind::disjunction: {
        std::vector<NodeIndex> children;
        for (const auto& c : s.children) children.push_back(build(c, ast));
        if (s.kind == Kind::conjunction) return ast.add(Conjunction{std::move(children)});
        return ast.add(Disjunction{std::move(children)});
      }
      case Kind::negation:
        return ast.add(Negation{build(s.children.front(), ast)});
    }
    throw std::logic_error("unreachable shape kind");
  }

  const std::vector<Hop>& hops() const { return hops_; }

 private:
  const HyperGraph& g_;
  SplitSet scope_;
  std::mt19937_64& rng_;
  bool cp_;
  std::vector<Hop> hops_;
};

}  // namespace

QueryAst drop_negations(const QueryAst& ast) {
  QueryAst out;
  std::vector<std::optional<NodeIndex>> map(ast.size());
  // Children precede parents, so one forward pass suffices.
  for (NodeIndex i = 0; i < ast.size(); ++i) {
    const auto& node = ast.node(i);
    if (const auto* p = std::get_if<Projection>(&node)) {
      Projection copy = *p;
      for (auto& slot : copy.entities) {
        if (auto* v = std::get_if<VarRef>(&slot)) v->node = map[v->node].value();
      }
      map[i] = out.add(std::move(copy));
    } else if (const auto* c = std::get_if<Conjunction>(&node)) {
      std::vector<NodeIndex> kept;
      for (NodeIndex k : c->children) {
        if (!std::holds_alternative<Negation>(ast.node(k))) kept.push_back(map[k].value());
      }
      map[i] = kept.size() == 1 ? kept.front() : out.add(Conjunction{std::move(kept)});
    } else if (const auto* d = std::get_if<Disjunction>(&node)) {
      std::vector<NodeIndex> kids;
      for (NodeIndex k : d->children) kids.push_back(map[k].value());
      map[i] = out.add(Disjunction{std::move(kids)});
    } else {
      // A negation outside a conjunction has nothing to fall back on; keep it.
      const auto& n = std::get<Negation>(node);
      if (map[n.child]) map[i] = out.add(Negation{*map[n.child]});
    }
  }
  out.set_root(map[ast.root()].value());
  // Unreachable leftovers (dropped branches) are pruned by rebuilding.
  QueryAst pruned;
  std::vector<std::optional<NodeIndex>> remap(out.size());
  auto copy = [&](auto&& self, NodeIndex i) -> NodeIndex {
    if (remap[i]) return *remap[i];
    QueryNode node = out.node(i);
    std::visit(
        [&](auto& n) {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, Projection>) {
            for (auto& slot : n.entities) {
              if (auto* v = std::get_if<VarRef>(&slot)) v->node = self(self, v->node);
            }
          } else if constexpr (std::is_same_v<T, Negation>) {
            n.child = self(self, n.child);
          } else {
            for (auto& k : n.children) k = self(self, k);
          }
        },
        node);
    remap[i] = pruned.add(std::move(node));
    return *remap[i];
  };
  pruned.set_root(copy(copy, out.root()));
  return pruned;
}

std::optional<GroundedQuery> sample_query(QueryType type, const HyperGraph& g, Split split, std::uint64_t seed,
                                          const SamplerOptions& options) {
  const SplitSet scope = SplitSet::up_to(split);
  const bool cp = is_chain_with_qualifiers(type);
  std::vector<std::uint32_t> roots;
  bool any_nary = false;
  for (std::uint32_t f = 0; f < g.facts().size(); ++f) {
    const auto& fact = g.facts()[f];
    if (scope.contains(g.split_of(f)) && fact.arity() >= 3) any_nary = true;
    if (g.split_of(f) == split && (!cp || fact.arity() >= 3)) roots.push_back(f);
  }
  if (cp && !any_nary) throw DataError("no facts of arity >= 3 for " + std::string(to_string(type)));
  if (roots.empty()) return std::nullopt;

  for (std::size_t attempt = 0; attempt < options.retries; ++attempt) {
    std::mt19937_64 rng(derive_seed(seed, {attempt}));
    Walker walker(type, g, scope, rng);
    const std::uint32_t root = roots[walker.pick(roots.size())];
    const auto positions = walker.target_positions(g.facts()[root]);
    const std::size_t position = positions[walker.pick(positions.size())];
    const EntityId answer = g.facts()[root].entity_at(position);
    if (!walker.ground(shape_of(type), answer, Walker::Anchor{root, position})) continue;

    QueryAst ast;
    try {
      ast = canonical_ast(type, walker.hops());
    } catch (const std::invalid_argument&) {
      continue;
    }
    const AnswerSet full = execute(ast, g, scope);
    if (full.empty() || full.size() > options.max_answers) continue;
    GroundedQuery q{type, split, std::move(ast), {}, {}, seed};
    if (split == Split::train) {
      q.easy = full;
    } else {
      q.easy = execute(q.ast, g, SplitSet{Split::train});
      q.hard = set_difference(full, q.easy);
      if (q.hard.empty() && options.require_hard) continue;
    }
    if (options.reject_degenerate_negation && has_negation(type) && execute(drop_negations(q.ast), g, scope) == full) continue;
    return q;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Datasets

DatasetCounts parse_counts(std::string_view spec, Split default_split) {
  DatasetCounts counts;
  std::size_t start = 0;
  while (start < spec.size()) {
    auto end = spec.find(',', start);
    if (end == std::string_view::npos) end = spec.size();
    std::string_view item = spec.substr(start, end - start);
    start = end + 1;
    while (!item.empty() && std::isspace(static_cast<unsigned char>(item.front()))) item.remove_prefix(1);
    while (!item.empty() && std::isspace(static_cast<unsigned char>(item.back()))) item.remove_suffix(1);
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) throw DataError("count entry '" + std::string(item) + "' lacks '='");
    std::string_view key = item.substr(0, eq);
    Split split = default_split;
    if (const auto slash = key.find('/'); slash != std::string_view::npos) {
      split = parse_split(key.substr(0, slash));
      key = key.substr(slash + 1);
    }
    const QueryType type = parse_query_type(key);
    const std::string number(item.substr(eq + 1));
    std::size_t used = 0;
    long long n = -1;
    try {
      n = std::stoll(number, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != number.size() || n < 0) throw DataError("bad count in '" + std::string(item) + "'");
    counts[{split, type}] = static_cast<std::size_t>(n);
  }
  return counts;
}

namespace {

std::string digest_hex(std::uint64_t digest) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << digest;
  return os.str();
}

std::string file_name(Split split, QueryType type) {
  return std::string(to_string(split)) + "-" + std::string(to_string(type)) + ".jsonl";
}

}  // namespace

nlohmann::json DatasetManifest::to_json() const {
  nlohmann::json j;
  j["seed"] = seed;
  j["graph_digest"] = digest_hex(graph_digest);
  auto& entries = j["files"] = nlohmann::json::array();
  for (const auto& [key, requested_count] : requested) {
    const auto it = written.find(key);
    const std::size_t n = it == written.end() ? 0 : it->second;
    entries.push_back({{"split", std::string(to_string(key.first))},
                       {"type", std::string(to_string(key.second))},
                       {"file", file_name(key.first, key.second)},
                       {"requested", requested_count},
                       {"count", n},
                       {"shortfall", requested_count - n}});
  }
  return j;
}

DatasetManifest generate_dataset(const HyperGraph& g, const DatasetCounts& counts, std::uint64_t seed,
                                 const std::filesystem::path& out_dir, std::size_t threads,
                                 const SamplerOptions& options) {
  // Fail fast on unsatisfiable preconditions before writing anything.
  for (const auto& [key, n] : counts) {
    if (n > 0 && is_chain_with_qualifiers(key.second)) {
      const SplitSet scope = SplitSet::up_to(key.first);
      bool any = false;
      for (std::uint32_t f = 0; f < g.facts().size() && !any; ++f) {
        any = scope.contains(g.split_of(f)) && g.facts()[f].arity() >= 3;
      }
      if (!any) throw DataError("no facts of arity >= 3 for " + std::string(to_string(key.second)));
    }
  }
  std::filesystem::create_directories(out_dir);

  struct Job {
    Split split;
    QueryType type;
    std::size_t index;
  };
  std::vector<Job> jobs;
  for (const auto& [key, n] : counts) {
    for (std::size_t i = 0; i < n; ++i) jobs.push_back({key.first, key.second, i});
  }
  std::vector<std::optional<std::string>> lines(jobs.size());
  std::vector<std::exception_ptr> errors(std::max<std::size_t>(threads, 1));
  auto work = [&](std::size_t worker, std::size_t stride) {
    try {
      for (std::size_t k = worker; k < jobs.size(); k += stride) {
        const Job& job = jobs[k];
        const std::uint64_t item_seed =
            derive_seed(seed, {static_cast<std::uint64_t>(job.split), static_cast<std::uint64_t>(job.type), job.index});
        if (auto q = sample_query(job.type, g, job.split, item_seed, options)) lines[k] = to_json(*q, g).dump();
      }
    } catch (...) {
      errors[worker] = std::current_exception();
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(threads, jobs.size()));
  if (n_threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n_threads; ++w) pool.emplace_back(work, w, n_threads);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  DatasetManifest manifest{seed, g.digest(), counts, {}};
  std::size_t k = 0;
  for (const auto& [key, n] : counts) {
    std::ofstream out(out_dir / file_name(key.first, key.second), std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + (out_dir / file_name(key.first, key.second)).string());
    std::size_t written = 0;
    for (std::size_t i = 0; i < n; ++i, ++k) {
      if (!lines[k]) continue;
      out << *lines[k] << '\n';
      ++written;
    }
    manifest.written[key] = written;
  }
  std::ofstream(out_dir / "manifest.json", std::ios::binary | std::ios::trunc) << manifest.to_json().dump(2) << '\n';
  return manifest;
}

Dataset load_dataset(const std::filesystem::path& dir, const HyperGraph& g) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw DataError("missing manifest.json in " + dir.string());
  Dataset data;
  try {
    data.manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
  if (data.manifest.value("graph_digest", std::string()) != digest_hex(g.digest())) {
    throw DataError("dataset was generated from a different graph");
  }
  for (const auto& entry : data.manifest.at("files")) {
    const auto path = dir / entry.at("file").get<std::string>();
    std::ifstream file(path);
    if (!file) throw DataError("missing dataset file " + path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(file, line)) {
      ++line_no;
      if (line.empty()) continue;
      try {
        data.queries.push_back(grounded_query_from_json(nlohmann::json::parse(line), g));
      } catch (const nlohmann::json::exception& e) {
        throw FormatError(line_no, path.filename().string() + ": " + e.what());
      }
    }
  }
  return data;
}

}  // namespace nqe
