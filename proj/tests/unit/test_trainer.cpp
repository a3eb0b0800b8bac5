#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "nqe/config.hpp"
#include "nqe/errors.hpp"
#include "nqe/synthetic.hpp"
#include "nqe/trainer.hpp"
#include "test_util.hpp"

using namespace nqe;

namespace {

AnswerSet ids(std::initializer_list<std::uint32_t> xs) {
  AnswerSet out;
  for (auto x : xs) out.push_back(EntityId{x});
  return out;
}

}  // namespace

TEST(Metrics, RankFilteredExamples) {
  const std::vector<double> scores{0.9, 0.8, 0.7, 0.6, 0.5};
  EXPECT_EQ(rank_filtered(scores, EntityId{0}, ids({0})), 1.0);
  EXPECT_EQ(rank_filtered(scores, EntityId{3}, ids({3})), 4.0);
  EXPECT_EQ(rank_filtered(scores, EntityId{3}, ids({0, 2, 3})), 2.0);
  EXPECT_EQ(rank_filtered(scores, EntityId{4}, ids({0, 1, 2, 3, 4})), 1.0);
  const std::vector<double> ties{0.5, 0.5, 0.5, 0.1};
  EXPECT_EQ(rank_filtered(ties, EntityId{1}, ids({1})), 2.0);  // 1 + 2 tied / 2
  EXPECT_EQ(rank_filtered(ties, EntityId{1}, ids({0, 1})), 1.5);
  EXPECT_THROW(rank_filtered(scores, EntityId{1}, ids({0})), std::invalid_argument);
}

TEST(Metrics, MrrOfRanks124) {
  // one query, three hard answers at raw ranks 1, 2 and 4 once the others are filtered
  std::vector<double> scores{0.9, 0.8, 0.1, 0.7, 0.6, 0.5};
  GroundedQuery q;
  q.hard = ids({0, 4, 5});
  q.easy = {};
  // filtered: 0 -> 1, 4 -> 1 + {1,3} = 3, 5 -> 1 + {1,3} = 3
  auto m = query_metrics(scores, q);
  EXPECT_NEAR(m.mrr, (1.0 + 1.0 / 3 + 1.0 / 3) / 3, 1e-15);
  // three separate queries with ranks 1, 2, 4
  std::vector<double> s{0.9, 0.8, 0.7, 0.6};
  double mrr = 0;
  for (std::uint32_t target : {0u, 1u, 3u}) {
    GroundedQuery one;
    one.hard = ids({target});
    mrr += query_metrics(s, one).mrr;
  }
  mrr /= 3;
  EXPECT_NEAR(mrr, 0.5833333333333333, 1e-15);
}

TEST(Metrics, FilteringNeverIncreasesRank) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 2 + rng() % 30;
    std::vector<double> scores(n);
    for (auto& s : scores) s = std::round(u(rng) * 8) / 8;  // plenty of ties
    const EntityId c{static_cast<std::uint32_t>(rng() % n)};
    AnswerSet known{c};
    const double raw = rank_filtered(scores, c, known);
    for (std::uint32_t e = 0; e < n; ++e) {
      if (rng() % 3 == 0) known.push_back(EntityId{e});
    }
    std::sort(known.begin(), known.end());
    known.erase(std::unique(known.begin(), known.end()), known.end());
    EXPECT_LE(rank_filtered(scores, c, known), raw);
  }
}

TEST(Metrics, EvaluateAverages) {
  std::vector<GroundedQuery> ds(3);
  ds[0].type = QueryType::p1;
  ds[0].hard = ids({0});
  ds[1].type = QueryType::i2;
  ds[1].hard = ids({1});
  ds[2].type = QueryType::in2;
  ds[2].hard = ids({2});
  const Scorer scorer = [](std::span<const GroundedQuery> qs) {
    return std::vector<std::vector<double>>(qs.size(), std::vector<double>{0.9, 0.8, 0.7, 0.6});
  };
  const auto r = evaluate(ds, scorer);
  EXPECT_EQ(r.queries, 3u);
  EXPECT_NEAR(r.per_type.at(QueryType::i2).metrics.mrr, 0.5, 1e-15);
  EXPECT_NEAR(r.avg_p.mrr, 0.75, 1e-15);
  EXPECT_NEAR(r.avg_n.mrr, 1.0 / 3, 1e-15);
  EXPECT_EQ(r.avg_p_types.size(), 2u);
  EXPECT_EQ(r.avg_n_types.size(), 1u);
  EXPECT_EQ(r.warnings.size(), 13u);
  const auto j = r.to_json();
  EXPECT_TRUE(j.contains("avg_p"));
  EXPECT_TRUE(j["per_type"].contains("2in"));
}

TEST(Metrics, GraphFilterRemovesHeldOutAnswers) {
  const auto g = nqe_test::toy_graph();
  GroundedQuery q;
  q.ast = parse("(P 1 (f ? works_at acme role cto))", vocabulary(g));
  q.split = Split::train;
  q.easy = {};  // alice's fact has an extra qualifier
  q.hard = {g.entity("erin")};
  std::vector<double> scores(g.num_entities(), 0.0);
  scores[g.entity("erin").value] = 0.5;
  scores[g.entity("bob").value] = 0.9;
  const std::vector<GroundedQuery> ds{q};
  const Scorer scorer = [&](std::span<const GroundedQuery> qs) {
    return std::vector<std::vector<double>>(qs.size(), scores);
  };
  EXPECT_NEAR(evaluate(ds, scorer).avg_p.mrr, 0.5, 1e-15);
  EXPECT_NEAR(evaluate(ds, scorer, 128, &g).avg_p.mrr, 0.5, 1e-15);  // bob is no answer anywhere
}

TEST(Trainer, ConfigValidation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.epsilon = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.optimizer = "rmsprop";
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.train_types.clear();
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.encoder.layers = 3;
  c.train_types = {QueryType::p1, QueryType::pni};
  EXPECT_EQ(to_json(train_config_from_json(to_json(c))), to_json(c));
}

TEST(Trainer, LossDecreasesAndIsDeterministic) {
  RandomGraphSpec spec;
  spec.entities = 30;
  spec.facts = 200;
  const auto g = random_graph(spec, 4);
  std::vector<GroundedQuery> ds;
  for (std::uint64_t s = 0; s < 40; ++s) {
    if (auto q = sample_query(s % 2 ? QueryType::p1 : QueryType::i2, g, Split::train, s)) ds.push_back(*q);
  }
  TrainConfig c;
  c.encoder.dim = 16;
  c.encoder.ffn_dim = 32;
  c.epochs = 8;
  c.learning_rate = 0.01;
  c.batch_size = 16;
  c.seed = 3;
  const auto a = train(g, ds, c);
  ASSERT_EQ(a.epoch_loss.size(), 8u);
  EXPECT_LT(a.epoch_loss.back(), a.epoch_loss.front());
  const auto b = train(g, ds, c);
  EXPECT_EQ(a.epoch_loss, b.epoch_loss);
  EXPECT_EQ(a.checkpoint.entity_labels, g.entities().labels());
  // only 1p examples when asked
  c.train_types = {QueryType::p3};
  EXPECT_THROW(train(g, ds, c), DataError);
}

TEST(Trainer, DivergenceIsReported) {
  RandomGraphSpec spec;
  spec.entities = 20;
  const auto g = random_graph(spec, 5);
  std::vector<GroundedQuery> ds;
  for (std::uint64_t s = 0; s < 10; ++s) {
    if (auto q = sample_query(QueryType::p1, g, Split::train, s)) ds.push_back(*q);
  }
  TrainConfig c;
  c.encoder.dim = 8;
  c.encoder.ffn_dim = 8;
  c.epochs = 2;
  c.optimizer = "sgd";
  c.learning_rate = 1e300;
  EXPECT_THROW(train(g, ds, c), NumericalError);
}

TEST(Trainer, LossCsv) {
  const auto dir = nqe_test::temp_dir("csv");
  const std::vector<double> losses{2.5, 1.25};
  write_loss_csv(dir / "l.csv", losses);
  EXPECT_EQ(nqe_test::read_file(dir / "l.csv"), "epoch,loss\n1,2.5\n2,1.25\n");
  std::filesystem::remove_all(dir);
}

TEST(Config, ParsesSections) {
  const auto rc = parse_run_config(R"(# run config
[model]
dim = 16
heads = 2
share_edge_bias = true

[train]
logic = "godel"
learning_rate = 5e-3
train_types = ["1p", "2i"]
epochs = 3

[ablation]
logic_blind = true

[paths]
store = "kg.bin"
checkpoint = 'm.ck'  # trailing comment
)");
  EXPECT_EQ(rc.train.encoder.dim, 16u);
  EXPECT_EQ(rc.train.encoder.heads, 2u);
  EXPECT_TRUE(rc.train.encoder.share_edge_bias);
  EXPECT_EQ(rc.train.logic, LogicKind::godel);
  EXPECT_DOUBLE_EQ(rc.train.learning_rate, 5e-3);
  EXPECT_EQ(rc.train.train_types, (std::vector<QueryType>{QueryType::p1, QueryType::i2}));
  EXPECT_TRUE(rc.train.ablations.logic_blind);
  EXPECT_EQ(rc.paths.store, "kg.bin");
  EXPECT_EQ(rc.paths.checkpoint, "m.ck");
}

TEST(Config, RejectsUnknownKeys) {
  auto line_of = [](const char* text) -> std::size_t {
    try {
      parse_run_config(text);
    } catch (const FormatError& e) {
      return e.line();
    }
    return 0;
  };
  EXPECT_EQ(line_of("[model]\ndim = 8\nwidth = 3\n"), 3u);
  EXPECT_EQ(line_of("[optim]\n"), 1u);
  EXPECT_EQ(line_of("[model]\ndim = \"eight\"\n"), 2u);
  EXPECT_EQ(line_of("dim = 8\n"), 1u);
  EXPECT_EQ(line_of("[train]\nlogic = \"fuzzy\"\n"), 2u);
  EXPECT_EQ(line_of("[model]\ndim = -4\n"), 2u);
}
