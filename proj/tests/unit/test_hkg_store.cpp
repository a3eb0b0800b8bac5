#include <gtest/gtest.h>

#include <sstream>

#include "nqe/errors.hpp"
#include "nqe/hkg_store.hpp"
#include "test_util.hpp"

using namespace nqe;

TEST(Store, LoadsAndInterns) {
  const auto g = nqe_test::toy_graph();
  EXPECT_EQ(g.facts().size(), 7u);
  EXPECT_EQ(g.count({Split::train}), 5u);
  EXPECT_EQ(g.count(SplitSet::all()), 7u);
  EXPECT_EQ(g.label(g.entity("acme")), "acme");
  EXPECT_THROW(g.entity("nobody"), LabelError);
  EXPECT_EQ(g.facts()[0].arity(), 4u);
}

TEST(Store, SequenceRoundTrip) {
  const auto g = nqe_test::toy_graph();
  for (const auto& f : g.facts()) {
    const auto seq = sequence_of(f);
    EXPECT_EQ(seq.size(), 2 * f.arity() - 1);
    EXPECT_EQ(fact_from_sequence(seq), f);
  }
  EXPECT_THROW(fact_from_sequence(std::vector<Symbol>{1, 2}), std::invalid_argument);
}

TEST(Store, DuplicatesIgnoringQualifierOrder) {
  HyperGraph g;
  std::istringstream in(
      "{\"s\":\"a\",\"r\":\"r\",\"o\":\"b\",\"quals\":[[\"x\",\"c\"],[\"y\",\"d\"]]}\n"
      "{\"s\":\"a\",\"r\":\"r\",\"o\":\"b\",\"quals\":[[\"y\",\"d\"],[\"x\",\"c\"]]}\n");
  const auto stats = g.load_facts(in, Split::train, FactFormat::jsonl);
  EXPECT_EQ(stats.lines, 2u);
  EXPECT_EQ(stats.new_facts, 1u);
  EXPECT_EQ(stats.duplicates, 1u);
}

TEST(Store, MalformedLineNamesLine) {
  HyperGraph g;
  std::string text;
  for (int i = 1; i < 17; ++i) text += "a\tr\tb" + std::to_string(i) + "\n";
  text += "a\tr\n";
  std::istringstream in(text);
  try {
    g.load_facts(in, Split::train, FactFormat::tsv);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.line(), 17u);
    EXPECT_NE(std::string(e.what()).find("17"), std::string::npos);
  }
}

TEST(Store, EmptyInput) {
  HyperGraph g;
  std::istringstream in("");
  const auto stats = g.load_facts(in, Split::train, FactFormat::jsonl);
  EXPECT_EQ(stats.lines, 0u);
  EXPECT_EQ(g.facts().size(), 0u);
}

TEST(Store, DanglingQualifierRejected) {
  HyperGraph g;
  std::istringstream in("a\tr\tb\tq\n");
  EXPECT_THROW(g.load_facts(in, Split::train, FactFormat::tsv), FormatError);
}

TEST(Store, PatternRespectsScope) {
  const auto g = nqe_test::toy_graph();
  // ? works_at acme (role=cto)
  NAryFact f{g.entity("alice"), g.relation("works_at"), g.entity("acme"), {{g.relation("role"), g.entity("cto")}}};
  auto train_only = g.match_pattern({Split::train}, f, 1);
  EXPECT_TRUE(train_only.empty());  // alice's fact carries a second qualifier
  auto all = g.match_pattern(SplitSet::all(), f, 1);
  ASSERT_EQ(all.size(), 1u);
  EXPECT_EQ(all[0], g.entity("erin"));
  // acme located_in ?
  NAryFact loc{g.entity("acme"), g.relation("located_in"), g.entity("acme"), {}};
  auto cities = g.match_pattern({Split::train}, loc, 2);
  ASSERT_EQ(cities.size(), 1u);
  EXPECT_EQ(cities[0], g.entity("berlin"));
}

TEST(Store, QualifierValueHole) {
  const auto g = nqe_test::toy_graph();
  NAryFact f{g.entity("bob"), g.relation("works_at"), g.entity("acme"), {{g.relation("role"), g.entity("bob")}}};
  auto roles = g.match_pattern({Split::train}, f, 3);
  ASSERT_EQ(roles.size(), 1u);
  EXPECT_EQ(roles[0], g.entity("dev"));
}

TEST(Store, ContainsAndOccurrences) {
  const auto g = nqe_test::toy_graph();
  NAryFact f{g.entity("carol"), g.relation("works_at"), g.entity("globex"), {}};
  EXPECT_TRUE(g.contains({Split::train}, f));
  EXPECT_FALSE(g.contains({Split::valid}, f));
  EXPECT_EQ(g.occurrences(g.entity("acme")).size(), 4u);
}

TEST(Store, SaveLoadRoundTrip) {
  const auto g = nqe_test::toy_graph();
  const auto dir = nqe_test::temp_dir("store");
  g.save(dir / "kg.bin");
  const auto h = HyperGraph::load(dir / "kg.bin");
  EXPECT_EQ(h.facts(), g.facts());
  EXPECT_EQ(h.digest(), g.digest());
  EXPECT_EQ(h.entities().labels(), g.entities().labels());
  for (std::size_t i = 0; i < g.facts().size(); ++i) EXPECT_EQ(h.split_of(i), g.split_of(i));
  std::filesystem::remove_all(dir);
}

TEST(Store, CorruptStoreRejected) {
  const auto dir = nqe_test::temp_dir("corrupt");
  nqe_test::write_file(dir / "kg.bin", "NQG1garbage");
  EXPECT_THROW(HyperGraph::load(dir / "kg.bin"), DataError);
  std::filesystem::remove_all(dir);
}

TEST(Store, SplitParsing) {
  EXPECT_EQ(parse_split("valid"), Split::valid);
  const auto s = SplitSet::parse("train,test");
  EXPECT_TRUE(s.contains(Split::train));
  EXPECT_FALSE(s.contains(Split::valid));
  EXPECT_TRUE(s.contains(Split::test));
}
