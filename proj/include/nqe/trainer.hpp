#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nqe/encoder.hpp"
#include "nqe/sampler.hpp"

namespace nqe {

struct TrainConfig {
  EncoderConfig encoder;
  LogicKind logic = LogicKind::product;
  double epsilon = 0.1;
  double learning_rate = 1e-3;
  std::string optimizer = "adam";
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t batch_size = 64;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  std::vector<QueryType> train_types{kAllQueryTypes.begin(), kAllQueryTypes.end()};
  Ablations ablations;
  std::size_t threads = 1;
  // Stop after this many epochs without a lower loss; 0 disables.
  std::size_t patience = 0;

  // Throws std::invalid_argument on violated invariants.
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<double> epoch_loss;
};

// Called after every epoch with (epoch, mean loss).
using EpochCallback = std::function<void(std::size_t, double)>;

// One example per (train-split query of a configured type, answer).
// Throws DataError when no example exists and NumericalError when the loss
// or a gradient becomes non-finite.
TrainResult train(const HyperGraph& g, std::span<const GroundedQuery> dataset, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

// Continues from existing parameters.
TrainResult train(const HyperGraph& g, std::span<const GroundedQuery> dataset, const TrainConfig& config,
                  ModelParams initial, const EpochCallback& on_epoch = {});

void write_loss_csv(const std::filesystem::path& path, std::span<const double> epoch_loss);

// Filtered rank of `candidate`: other members of `known` are removed from
// the ordering and tied scores share the average of their ranks.
double rank_filtered(std::span<const double> scores, EntityId candidate, const AnswerSet& known);

struct Metrics {
  double mrr = 0.0;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;
};

struct TypeReport {
  std::size_t queries = 0;
  Metrics metrics;
};

struct EvalReport {
  std::map<QueryType, TypeReport> per_type;
  Metrics avg_p;  // macro over present EPFO types
  Metrics avg_n;  // macro over present negation types
  std::vector<QueryType> avg_p_types;
  std::vector<QueryType> avg_n_types;
  std::size_t queries = 0;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
};

// Scores every entity for each query; rows align with the input span.
using Scorer = std::function<std::vector<std::vector<double>>(std::span<const GroundedQuery>)>;

// Per query, each hard answer is ranked against easy and hard answers; a
// query without hard answers ranks its easy answers instead. With
// `filter_graph`, every answer on the whole graph is filtered as well.
EvalReport evaluate(std::span<const GroundedQuery> dataset, const Scorer& scorer, std::size_t batch_size = 128,
                    const HyperGraph* filter_graph = nullptr);

// Similarity of the compiled target register for each query.
Scorer model_scorer(const Checkpoint& checkpoint);

// Per-query metrics of a score vector; exposed for harness tests.
Metrics query_metrics(std::span<const double> scores, const GroundedQuery& q, const AnswerSet& also_known = {});

}  // namespace nqe
