#include "nqe/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "nqe/errors.hpp"
#include "nqe/random.hpp"

namespace nqe {

void TrainConfig::validate() const {
  encoder.validate();
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must lie in (0, 1)");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (optimizer != "adam" && optimizer != "sgd") throw std::invalid_argument("optimizer must be adam or sgd");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("Adam betas must lie in [0, 1)");
  }
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  if (train_types.empty()) throw std::invalid_argument("no training types");
  if (threads == 0) throw std::invalid_argument("threads must be positive");
}

nlohmann::json to_json(const TrainConfig& c) {
  std::vector<std::string> types;
  for (QueryType t : c.train_types) types.emplace_back(to_string(t));
  return {{"encoder", to_json(c.encoder)},
          {"logic", std::string(to_string(c.logic))},
          {"epsilon", c.epsilon},
          {"learning_rate", c.learning_rate},
          {"optimizer", c.optimizer},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"adam_epsilon", c.adam_epsilon},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"train_types", types},
          {"ablations", to_json(c.ablations)},
          {"threads", c.threads},
          {"patience", c.patience}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.encoder = encoder_config_from_json(j.at("encoder"));
  c.logic = parse_logic_kind(j.at("logic").get<std::string>());
  c.epsilon = j.at("epsilon").get<double>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.optimizer = j.at("optimizer").get<std::string>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.adam_epsilon = j.at("adam_epsilon").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.train_types.clear();
  for (const auto& t : j.at("train_types")) c.train_types.push_back(parse_query_type(t.get<std::string>()));
  c.ablations = ablations_from_json(j.at("ablations"));
  c.threads = j.at("threads").get<std::size_t>();
  c.patience = j.at("patience").get<std::size_t>();
  return c;
}

namespace {

bool all_finite(const ad::Matrix& m) { return m.allFinite(); }

}  // namespace

TrainResult train(const HyperGraph& g, std::span<const GroundedQuery> dataset, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  return train(g, dataset, config,
               ModelParams::init(config.encoder, g.num_entities(), g.num_relations(),
                                 derive_seed(config.seed, {0x1A17}), config.ablations),
               on_epoch);
}

TrainResult train(const HyperGraph& g, std::span<const GroundedQuery> dataset, const TrainConfig& config,
                  ModelParams params, const EpochCallback& on_epoch) {
  config.validate();
  if (params.num_entities() != g.num_entities() || params.num_relations() != g.num_relations()) {
    throw DataError("model vocabulary does not match the graph");
  }
  const std::set<QueryType> wanted(config.train_types.begin(), config.train_types.end());
  std::vector<StepProgram> programs;
  std::vector<QueryType> program_type;
  std::vector<TrainingExample> examples;
  for (const auto& q : dataset) {
    if (q.split != Split::train || !wanted.contains(q.type)) continue;
    const auto index = static_cast<std::uint32_t>(programs.size());
    programs.push_back(compile(q.ast));
    program_type.push_back(q.type);
    for (EntityId a : set_union(q.easy, q.hard)) examples.push_back({index, a});
  }
  if (examples.empty()) throw DataError("dataset has no training examples for the configured types");

  std::vector<ad::Matrix> m1, m2;
  for (const auto& t : params.tensors) {
    m1.push_back(ad::Matrix::Zero(t.value.rows(), t.value.cols()));
    m2.push_back(ad::Matrix::Zero(t.value.rows(), t.value.cols()));
  }
  std::mt19937_64 rng(derive_seed(config.seed, {0x5EED}));
  GradientOptions options;
  options.execution = {config.logic, config.ablations};
  options.epsilon = config.epsilon;
  options.threads = config.threads;

  TrainResult result;
  std::uint64_t step = 0;
  double best = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  std::vector<std::size_t> order(examples.size());
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    if (config.ablations.unparalleled) {
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return program_type[examples[a].program] < program_type[examples[b].program];
      });
    }
    double total = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < order.size(); ++batch_index) {
      std::size_t end = std::min(order.size(), begin + config.batch_size);
      if (config.ablations.unparalleled) {
        // Single-type batches.
        const QueryType type = program_type[examples[order[begin]].program];
        std::size_t k = begin;
        while (k < end && program_type[examples[order[k]].program] == type) ++k;
        end = k;
      }
      std::vector<TrainingExample> batch;
      for (std::size_t k = begin; k < end; ++k) batch.push_back(examples[order[k]]);
      begin = end;

      options.dropout_seed = config.encoder.dropout > 0.0 ? derive_seed(config.seed, {epoch, batch_index}) | 1 : 0;
      Gradients grads = gradients(params, programs, batch, options);
      bool finite = std::isfinite(grads.loss);
      for (std::size_t i = 0; finite && i < grads.tensors.size(); ++i) finite = all_finite(grads.tensors[i]);
      if (!finite) {
        std::ostringstream msg;
        msg << "non-finite training state at epoch " << epoch << ", batch " << batch_index << " (loss " << grads.loss
            << ", step " << step << ")";
        throw NumericalError(msg.str());
      }
      ++step;
      total += grads.loss * static_cast<double>(batch.size());
      const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
      for (std::size_t i = 0; i < params.tensors.size(); ++i) {
        auto& t = params.tensors[i];
        if (t.frozen) continue;
        const auto& g_i = grads.tensors[i];
        if (config.optimizer == "sgd") {
          t.value -= config.learning_rate * g_i;
          continue;
        }
        m1[i] = config.beta1 * m1[i] + (1.0 - config.beta1) * g_i;
        m2[i] = config.beta2 * m2[i] + (1.0 - config.beta2) * g_i.cwiseProduct(g_i);
        t.value.array() -= config.learning_rate * (m1[i].array() / c1) /
                           ((m2[i].array() / c2).sqrt() + config.adam_epsilon);
      }
    }
    const double epoch_loss = total / static_cast<double>(examples.size());
    result.epoch_loss.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch, epoch_loss);
    if (epoch_loss < best) {
      best = epoch_loss;
      stale = 0;
    } else if (config.patience > 0 && ++stale >= config.patience) {
      break;
    }
  }

  std::ostringstream rng_state;
  rng_state << rng;
  result.checkpoint.params = std::move(params);
  result.checkpoint.logic = config.logic;
  result.checkpoint.ablations = config.ablations;
  result.checkpoint.entity_labels = g.entities().labels();
  result.checkpoint.relation_labels = g.relations().labels();
  result.checkpoint.extra = {{"train", to_json(config)},
                             {"rng_state", rng_state.str()},
                             {"step", step},
                             {"epoch_loss", result.epoch_loss}};
  return result;
}

void write_loss_csv(const std::filesystem::path& path, std::span<const double> epoch_loss) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << "epoch,loss\n";
  out.precision(17);
  for (std::size_t e = 0; e < epoch_loss.size(); ++e) out << e + 1 << ',' << epoch_loss[e] << '\n';
}

// ---------------------------------------------------------------------------
// Evaluation

double rank_filtered(std::span<const double> scores, EntityId candidate, const AnswerSet& known) {
  if (!std::binary_search(known.begin(), known.end(), candidate)) {
    throw std::invalid_argument("candidate is not among the known answers");
  }
  if (candidate.value >= scores.size()) throw std::invalid_argument("candidate outside the score vector");
  const double s = scores[candidate.value];
  std::size_t higher = 0;
  std::size_t tied = 0;
  auto next = known.begin();
  for (std::uint32_t e = 0; e < scores.size(); ++e) {
    while (next != known.end() && next->value < e) ++next;
    if (next != known.end() && next->value == e) continue;  // filtered, includes the candidate
    if (scores[e] > s) {
      ++higher;
    } else if (scores[e] == s) {
      ++tied;
    }
  }
  return 1.0 + static_cast<double>(higher) + static_cast<double>(tied) / 2.0;
}

Metrics query_metrics(std::span<const double> scores, const GroundedQuery& q, const AnswerSet& also_known) {
  const AnswerSet known = set_union(set_union(q.easy, q.hard), also_known);
  const AnswerSet& ranked = q.hard.empty() ? q.easy : q.hard;
  Metrics m;
  if (ranked.empty()) return m;
  for (EntityId a : ranked) {
    const double r = rank_filtered(scores, a, known);
    m.mrr += 1.0 / r;
    m.hits1 += r <= 1.0 ? 1.0 : 0.0;
    m.hits3 += r <= 3.0 ? 1.0 : 0.0;
    m.hits10 += r <= 10.0 ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(ranked.size());
  m.mrr /= n;
  m.hits1 /= n;
  m.hits3 /= n;
  m.hits10 /= n;
  return m;
}

namespace {

void accumulate(Metrics& into, const Metrics& m, double w) {
  into.mrr += w * m.mrr;
  into.hits1 += w * m.hits1;
  into.hits3 += w * m.hits3;
  into.hits10 += w * m.hits10;
}

nlohmann::json metrics_json(const Metrics& m) {
  return {{"mrr", m.mrr}, {"hits@1", m.hits1}, {"hits@3", m.hits3}, {"hits@10", m.hits10}};
}

}  // namespace

EvalReport evaluate(std::span<const GroundedQuery> dataset, const Scorer& scorer, std::size_t batch_size,
                    const HyperGraph* filter_graph) {
  EvalReport report;
  std::map<QueryType, Metrics> sums;
  for (std::size_t begin = 0; begin < dataset.size(); begin += std::max<std::size_t>(batch_size, 1)) {
    const auto batch = dataset.subspan(begin, std::min(batch_size, dataset.size() - begin));
    const auto scores = scorer(batch);
    for (std::size_t k = 0; k < batch.size(); ++k) {
      const auto& q = batch[k];
      if (q.easy.empty() && q.hard.empty()) continue;
      const AnswerSet full = filter_graph ? execute(q.ast, *filter_graph, SplitSet::all()) : AnswerSet{};
      accumulate(sums[q.type], query_metrics(scores.at(k), q, full), 1.0);
      ++report.per_type[q.type].queries;
      ++report.queries;
    }
  }
  for (auto& [type, tr] : report.per_type) {
    const double n = static_cast<double>(tr.queries);
    accumulate(tr.metrics, sums[type], 1.0 / n);
  }
  for (QueryType type : kAllQueryTypes) {
    const auto it = report.per_type.find(type);
    if (it == report.per_type.end()) {
      report.warnings.push_back("type " + std::string(to_string(type)) + " absent; omitted from averages");
      continue;
    }
    (has_negation(type) ? report.avg_n_types : report.avg_p_types).push_back(type);
  }
  for (QueryType t : report.avg_p_types) {
    accumulate(report.avg_p, report.per_type[t].metrics, 1.0 / static_cast<double>(report.avg_p_types.size()));
  }
  for (QueryType t : report.avg_n_types) {
    accumulate(report.avg_n, report.per_type[t].metrics, 1.0 / static_cast<double>(report.avg_n_types.size()));
  }
  return report;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["queries"] = queries;
  auto& types = j["per_type"] = nlohmann::json::object();
  for (const auto& [type, tr] : per_type) {
    auto entry = metrics_json(tr.metrics);
    entry["queries"] = tr.queries;
    types[std::string(to_string(type))] = entry;
  }
  auto names = [](const std::vector<QueryType>& ts) {
    std::vector<std::string> out;
    for (QueryType t : ts) out.emplace_back(to_string(t));
    return out;
  };
  j["avg_p"] = metrics_json(avg_p);
  j["avg_p"]["types"] = names(avg_p_types);
  j["avg_n"] = metrics_json(avg_n);
  j["avg_n"]["types"] = names(avg_n_types);
  j["warnings"] = warnings;
  return j;
}

Scorer model_scorer(const Checkpoint& checkpoint) {
  return [&checkpoint](std::span<const GroundedQuery> batch) {
    std::vector<StepProgram> programs;
    programs.reserve(batch.size());
    for (const auto& q : batch) programs.push_back(compile(q.ast));
    const auto result =
        run_step_program(checkpoint.params, programs, ExecutionOptions{checkpoint.logic, checkpoint.ablations});
    std::vector<std::vector<double>> scores;
    scores.reserve(batch.size());
    for (const auto& target : result.targets) scores.push_back(similarity(checkpoint.params, target));
    return scores;
  };
}

}  // namespace nqe
