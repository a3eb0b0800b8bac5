#pragma once

#include <cstdint>

#include "nqe/hkg_store.hpp"

namespace nqe {

// Uniformly random facts; entity i is labelled "e<i>", relation j "r<j>".
// Every entity and relation is interned up front, so ids equal indices.
struct RandomGraphSpec {
  std::size_t entities = 40;
  std::size_t relations = 4;
  std::size_t facts = 250;
  std::size_t min_arity = 2;
  std::size_t max_arity = 5;
  double train_fraction = 0.8;
  double valid_fraction = 0.1;
};

HyperGraph random_graph(const RandomGraphSpec& spec, std::uint64_t seed);

// Entities are grouped into clusters of equal size. Each block picks a
// source cluster c and a relation r and links every member of c to every
// member of the cluster perm_r(c). A fraction of blocks carries one
// qualifier whose attribute and value are fixed per block. Splits are drawn
// per fact. Main relations are r0..r(relations - qualifier_attributes - 1),
// the rest serve as qualifier attributes.
struct ClusteredGraphSpec {
  std::size_t entities = 200;
  std::size_t clusters = 40;
  std::size_t relations = 20;
  std::size_t qualifier_attributes = 4;
  std::size_t facts = 2000;
  double qualifier_rate = 0.45;
  double train_fraction = 0.8;
  double valid_fraction = 0.1;
};

HyperGraph clustered_graph(const ClusteredGraphSpec& spec, std::uint64_t seed);

}  // namespace nqe
