#include "nqe/synthetic.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>
#include <string>

namespace nqe {

namespace {

Split draw_split(std::mt19937_64& rng, double train, double valid) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  if (u < train) return Split::train;
  if (u < train + valid) return Split::valid;
  return Split::test;
}

void intern_all(HyperGraph& g, std::size_t entities, std::size_t relations) {
  for (std::size_t i = 0; i < entities; ++i) g.intern_entity("e" + std::to_string(i));
  for (std::size_t j = 0; j < relations; ++j) g.intern_relation("r" + std::to_string(j));
}

}  // namespace

HyperGraph random_graph(const RandomGraphSpec& spec, std::uint64_t seed) {
  if (spec.entities == 0 || spec.relations == 0 || spec.min_arity < 2 || spec.max_arity < spec.min_arity) {
    throw std::invalid_argument("invalid random graph spec");
  }
  HyperGraph g;
  intern_all(g, spec.entities, spec.relations);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint32_t> entity(0, static_cast<std::uint32_t>(spec.entities - 1));
  std::uniform_int_distribution<std::uint32_t> relation(0, static_cast<std::uint32_t>(spec.relations - 1));
  std::uniform_int_distribution<std::size_t> arity(spec.min_arity, spec.max_arity);
  std::size_t attempts = 0;
  while (g.facts().size() < spec.facts && attempts++ < spec.facts * 20) {
    NAryFact fact{EntityId{entity(rng)}, RelationId{relation(rng)}, EntityId{entity(rng)}, {}};
    const std::size_t n = arity(rng);
    for (std::size_t i = 2; i < n; ++i) fact.qualifiers.push_back({RelationId{relation(rng)}, EntityId{entity(rng)}});
    g.add_fact(fact, draw_split(rng, spec.train_fraction, spec.valid_fraction));
  }
  return g;
}

HyperGraph clustered_graph(const ClusteredGraphSpec& spec, std::uint64_t seed) {
  if (spec.clusters == 0 || spec.entities % spec.clusters != 0 || spec.qualifier_attributes >= spec.relations) {
    throw std::invalid_argument("invalid clustered graph spec");
  }
  const std::size_t size = spec.entities / spec.clusters;
  const std::size_t main = spec.relations - spec.qualifier_attributes;
  HyperGraph g;
  intern_all(g, spec.entities, spec.relations);
  std::mt19937_64 rng(seed);

  std::vector<std::vector<std::size_t>> perm(main, std::vector<std::size_t>(spec.clusters));
  for (auto& p : perm) {
    std::iota(p.begin(), p.end(), std::size_t{0});
    std::shuffle(p.begin(), p.end(), rng);
  }
  std::uniform_int_distribution<std::size_t> pick_cluster(0, spec.clusters - 1);
  std::uniform_int_distribution<std::size_t> pick_relation(0, main - 1);
  std::uniform_int_distribution<std::size_t> pick_attribute(main, spec.relations - 1);
  std::uniform_int_distribution<std::size_t> pick_entity(0, spec.entities - 1);
  std::bernoulli_distribution qualified(spec.qualifier_rate);

  std::set<std::pair<std::size_t, std::size_t>> used;
  const std::size_t max_blocks = spec.clusters * main;
  while (g.facts().size() < spec.facts && used.size() < max_blocks) {
    const std::size_t c = pick_cluster(rng);
    const std::size_t r = pick_relation(rng);
    if (!used.insert({c, r}).second) continue;
    const std::size_t target = perm[r][c];
    std::vector<Qualifier> quals;
    if (qualified(rng)) quals.push_back({RelationId{static_cast<std::uint32_t>(pick_attribute(rng))},
                                         EntityId{static_cast<std::uint32_t>(pick_entity(rng))}});
    for (std::size_t i = 0; i < size && g.facts().size() < spec.facts; ++i) {
      for (std::size_t j = 0; j < size && g.facts().size() < spec.facts; ++j) {
        NAryFact fact{EntityId{static_cast<std::uint32_t>(c * size + i)}, RelationId{static_cast<std::uint32_t>(r)},
                      EntityId{static_cast<std::uint32_t>(target * size + j)}, quals};
        g.add_fact(fact, draw_split(rng, spec.train_fraction, spec.valid_fraction));
      }
    }
  }
  return g;
}

}  // namespace nqe
