// nqe: ingest facts, sample query datasets, answer queries symbolically,
// train and evaluate the encoder, and inspect per-variable predictions.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "nqe/config.hpp"
#include "nqe/encoder.hpp"
#include "nqe/errors.hpp"
#include "nqe/hkg_store.hpp"
#include "nqe/query_ir.hpp"
#include "nqe/sampler.hpp"
#include "nqe/symbolic_executor.hpp"
#include "nqe/synthetic.hpp"
#include "nqe/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kUsage = 2;
constexpr int kData = 3;
constexpr int kNumerical = 4;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Globals {
  bool pretty = false;
  std::size_t threads = 1;
  bool threads_given = false;
  std::optional<std::uint64_t> seed;
};

std::uint64_t resolve_seed(const Globals& g, std::uint64_t fallback = 0) {
  if (g.seed) return *g.seed;
  if (const char* env = std::getenv("NQE_SEED")) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used == std::strlen(env)) return v;
    } catch (const std::exception&) {
    }
    throw UsageError("NQE_SEED is not an unsigned integer");
  }
  return fallback;
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw UsageError(what + " path is required");
  if (!fs::exists(path)) throw UsageError(what + " not found: " + path);
}

void emit(const json& j, const Globals& g) { std::cout << (g.pretty ? j.dump(2) : j.dump()) << '\n'; }

json stats_json(const nqe::LoadStats& s, const nqe::HyperGraph& g) {
  return {{"lines", s.lines},
          {"new_entities", s.new_entities},
          {"new_relations", s.new_relations},
          {"new_facts", s.new_facts},
          {"duplicates", s.duplicates},
          {"reflexive_qualifiers", s.reflexive_qualifiers},
          {"entities", g.num_entities()},
          {"relations", g.num_relations()},
          {"facts",
           {{"train", g.count({nqe::Split::train})},
            {"valid", g.count({nqe::Split::valid})},
            {"test", g.count({nqe::Split::test})}}}};
}

// ---------------------------------------------------------------------------

struct IngestArgs {
  std::string facts, split = "train", out, format = "auto";
  bool append = false;
};

int cmd_ingest(const IngestArgs& a, const Globals& globals) {
  require_file(a.facts, "facts file");
  nqe::HyperGraph g;
  if (a.append && fs::exists(a.out)) g = nqe::HyperGraph::load(a.out);
  const auto format = a.format == "jsonl" ? nqe::FactFormat::jsonl
                      : a.format == "tsv" ? nqe::FactFormat::tsv
                                          : nqe::FactFormat::automatic;
  const auto stats = g.load_facts(a.facts, nqe::parse_split(a.split), format);
  g.save(a.out);
  emit(stats_json(stats, g), globals);
  return 0;
}

struct SampleArgs {
  std::string store, counts, out, split = "test";
  std::size_t retries = 128, max_answers = 1000;
};

int cmd_sample(const SampleArgs& a, const Globals& globals) {
  require_file(a.store, "store");
  const auto g = nqe::HyperGraph::load(a.store);
  const auto counts = nqe::parse_counts(a.counts, nqe::parse_split(a.split));
  const auto manifest = nqe::generate_dataset(g, counts, resolve_seed(globals), a.out, globals.threads,
                                              nqe::SamplerOptions{a.retries, a.max_answers});
  const json j = manifest.to_json();
  for (const auto& entry : j["files"]) {
    if (entry["shortfall"].get<std::size_t>() > 0) {
      std::cerr << "warning: " << entry["file"].get<std::string>() << " short by " << entry["shortfall"] << '\n';
    }
  }
  emit(j, globals);
  return 0;
}

struct AnswerArgs {
  std::string store, query, scope = "train,valid,test";
  bool brute_force = false;
};

int cmd_answer(const AnswerArgs& a, const Globals& globals) {
  require_file(a.store, "store");
  const auto g = nqe::HyperGraph::load(a.store);
  const auto vocab = nqe::vocabulary(g);
  const auto ast = nqe::parse(a.query, vocab);
  const auto scope = nqe::SplitSet::parse(a.scope);
  const auto answers = a.brute_force ? nqe::brute_force_execute(ast, g, scope) : nqe::execute(ast, g, scope);
  if (globals.pretty) {
    std::cout << nqe::serialize(ast, vocab) << "\n" << answers.size() << " answer(s)\n";
    for (auto e : answers) std::cout << "  " << g.label(e) << '\n';
    return 0;
  }
  json labels = json::array();
  for (auto e : answers) labels.push_back(g.label(e));
  emit({{"query", nqe::serialize(ast, vocab)}, {"count", answers.size()}, {"answers", labels}}, globals);
  return 0;
}

struct TrainArgs {
  std::string store, data, config, checkpoint, loss_csv;
  std::optional<std::size_t> epochs, batch_size, dim, layers, heads;
  std::optional<double> lr, epsilon;
  std::optional<std::string> logic, train_types;
  bool node_h_only = false, edge_h_only = false, logic_blind = false, unparalleled = false;
};

nqe::RunConfig resolve_config(const std::string& config_path) {
  if (config_path.empty()) return {};
  require_file(config_path, "config");
  return nqe::load_run_config(config_path);
}

int cmd_train(const TrainArgs& a, const Globals& globals) {
  nqe::RunConfig rc = resolve_config(a.config);
  auto& t = rc.train;
  if (a.epochs) t.epochs = *a.epochs;
  if (a.batch_size) t.batch_size = *a.batch_size;
  if (a.dim) t.encoder.dim = *a.dim;
  if (a.layers) t.encoder.layers = *a.layers;
  if (a.heads) t.encoder.heads = *a.heads;
  if (a.lr) t.learning_rate = *a.lr;
  if (a.epsilon) t.epsilon = *a.epsilon;
  if (a.logic) t.logic = nqe::parse_logic_kind(*a.logic);
  if (a.train_types) {
    t.train_types.clear();
    std::stringstream ss(*a.train_types);
    std::string tag;
    while (std::getline(ss, tag, ',')) {
      if (!tag.empty()) t.train_types.push_back(nqe::parse_query_type(tag));
    }
  }
  t.ablations.node_h_only |= a.node_h_only;
  t.ablations.edge_h_only |= a.edge_h_only;
  t.ablations.logic_blind |= a.logic_blind;
  t.ablations.unparalleled |= a.unparalleled;
  if (globals.threads_given) t.threads = globals.threads;
  t.seed = resolve_seed(globals, t.seed);
  const std::string store = a.store.empty() ? rc.paths.store : a.store;
  const std::string data = a.data.empty() ? rc.paths.data : a.data;
  const std::string checkpoint = a.checkpoint.empty() ? rc.paths.checkpoint : a.checkpoint;
  std::string loss_csv = a.loss_csv.empty() ? rc.paths.loss_csv : a.loss_csv;
  if (checkpoint.empty()) throw UsageError("checkpoint path is required");
  if (loss_csv.empty()) loss_csv = checkpoint + ".loss.csv";
  try {
    t.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("invalid configuration: ") + e.what());
  }
  require_file(store, "store");
  const auto g = nqe::HyperGraph::load(store);
  const auto dataset = nqe::load_dataset(data, g);
  auto result = nqe::train(g, dataset.queries, t, [&](std::size_t epoch, double loss) {
    if (globals.pretty) std::cerr << "epoch " << epoch + 1 << "  loss " << loss << '\n';
  });
  nqe::save_checkpoint(checkpoint, result.checkpoint);
  nqe::write_loss_csv(loss_csv, result.epoch_loss);
  emit({{"checkpoint", checkpoint},
        {"loss_csv", loss_csv},
        {"epochs", result.epoch_loss.size()},
        {"final_loss", result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back()},
        {"parameters", result.checkpoint.params.parameter_count()}},
       globals);
  return 0;
}

struct EvalArgs {
  std::string store, data, config, checkpoint, report, split = "test";
};

void print_report_table(const json& r) {
  std::cout << std::left << std::setw(8) << "type" << std::right << std::setw(8) << "n" << std::setw(10) << "MRR"
            << std::setw(10) << "H@1" << std::setw(10) << "H@3" << std::setw(10) << "H@10" << '\n';
  auto row = [](const std::string& name, const json& m, std::size_t n) {
    std::cout << std::left << std::setw(8) << name << std::right << std::setw(8) << n << std::fixed
              << std::setprecision(4) << std::setw(10) << m["mrr"].get<double>() << std::setw(10)
              << m["hits@1"].get<double>() << std::setw(10) << m["hits@3"].get<double>() << std::setw(10)
              << m["hits@10"].get<double>() << '\n';
  };
  for (const auto& [name, m] : r["per_type"].items()) row(name, m, m["queries"].get<std::size_t>());
  row("AVG_p", r["avg_p"], r["avg_p"]["types"].size());
  row("AVG_n", r["avg_n"], r["avg_n"]["types"].size());
}

int cmd_eval(const EvalArgs& a, const Globals& globals) {
  const nqe::RunConfig rc = resolve_config(a.config);
  const std::string store = a.store.empty() ? rc.paths.store : a.store;
  const std::string data = a.data.empty() ? rc.paths.data : a.data;
  const std::string checkpoint = a.checkpoint.empty() ? rc.paths.checkpoint : a.checkpoint;
  const std::string report_path = a.report.empty() ? rc.paths.report : a.report;
  require_file(checkpoint, "checkpoint");
  require_file(store, "store");
  const auto g = nqe::HyperGraph::load(store);
  const auto ck = nqe::load_checkpoint(checkpoint);
  if (ck.entity_labels != g.entities().labels() || ck.relation_labels != g.relations().labels()) {
    throw nqe::DataError("checkpoint vocabulary does not match the store");
  }
  const auto dataset = nqe::load_dataset(data, g);
  const auto split = nqe::parse_split(a.split);
  std::vector<nqe::GroundedQuery> selected;
  for (const auto& q : dataset.queries) {
    if (q.split == split) selected.push_back(q);
  }
  const auto report = nqe::evaluate(selected, nqe::model_scorer(ck), 128, &g);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
  const json j = report.to_json();
  if (!report_path.empty()) std::ofstream(report_path) << j.dump(2) << '\n';
  if (globals.pretty) {
    print_report_table(j);
  } else {
    emit(j, globals);
  }
  return 0;
}

struct QueryArgs {
  std::string checkpoint, query;
  std::size_t top = 10;
  double threshold = 0.5;
};

int cmd_query(const QueryArgs& a, const Globals& globals) {
  require_file(a.checkpoint, "checkpoint");
  const auto ck = nqe::load_checkpoint(a.checkpoint);
  nqe::SymbolTable entities, relations;
  for (const auto& l : ck.entity_labels) entities.intern(l);
  for (const auto& l : ck.relation_labels) relations.intern(l);
  const nqe::Vocabulary vocab{&entities, &relations};
  const auto ast = nqe::parse(a.query, vocab);
  const auto program = nqe::compile(ast);
  const auto result =
      nqe::run_step_program(ck.params, std::span(&program, 1), nqe::ExecutionOptions{ck.logic, ck.ablations});

  std::vector<std::pair<std::string, std::uint32_t>> blocks;
  for (std::size_t k = 0; k < program.variables.size(); ++k) {
    blocks.emplace_back("V" + std::to_string(k + 1), program.variables[k]);
  }
  blocks.emplace_back("V_tar", program.target);

  json out;
  out["query"] = nqe::serialize(ast, vocab);
  out["threshold"] = a.threshold;
  out["blocks"] = json::array();
  for (const auto& [name, reg] : blocks) {
    const auto probs = nqe::similarity(ck.params, result.registers[0].at(reg));
    std::vector<std::uint32_t> order(probs.size());
    for (std::uint32_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return probs[x] > probs[y]; });
    const std::size_t n = a.top == 0 ? order.size() : std::min(a.top, order.size());
    json top = json::array();
    double shown = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      top.push_back({{"entity", entities.label(order[i])}, {"probability", probs[order[i]]}});
      shown += probs[order[i]];
    }
    json answers = json::array();
    for (auto i : order) {
      if (probs[i] > a.threshold) answers.push_back(entities.label(i));
    }
    out["blocks"].push_back({{"variable", name},
                             {"register", reg},
                             {"top", top},
                             {"other_mass", std::max(0.0, 1.0 - shown)},
                             {"answers", answers}});
  }
  if (!globals.pretty) {
    emit(out, globals);
    return 0;
  }
  std::cout << out["query"].get<std::string>() << '\n';
  for (const auto& b : out["blocks"]) {
    std::cout << '\n' << b["variable"].get<std::string>() << '\n';
    for (const auto& row : b["top"]) {
      std::cout << "  " << std::left << std::setw(24) << row["entity"].get<std::string>() << std::fixed
                << std::setprecision(4) << row["probability"].get<double>() << '\n';
    }
    std::cout << "  answers (p > " << a.threshold << "):";
    for (const auto& e : b["answers"]) std::cout << ' ' << e.get<std::string>();
    std::cout << '\n';
  }
  return 0;
}

struct SynthArgs {
  std::string kind = "clustered", out;
  std::size_t entities = 200, relations = 20, facts = 2000;
};

int cmd_synth(const SynthArgs& a, const Globals& globals) {
  nqe::HyperGraph g;
  const std::uint64_t seed = resolve_seed(globals, 42);
  if (a.kind == "clustered") {
    nqe::ClusteredGraphSpec spec;
    spec.entities = a.entities;
    spec.relations = a.relations;
    spec.facts = a.facts;
    g = nqe::clustered_graph(spec, seed);
  } else if (a.kind == "random") {
    nqe::RandomGraphSpec spec;
    spec.entities = a.entities;
    spec.relations = a.relations;
    spec.facts = a.facts;
    g = nqe::random_graph(spec, seed);
  } else {
    throw UsageError("unknown graph kind '" + a.kind + "'");
  }
  fs::create_directories(a.out);
  json counts;
  for (auto split : {nqe::Split::train, nqe::Split::valid, nqe::Split::test}) {
    std::ofstream out(fs::path(a.out) / (std::string(nqe::to_string(split)) + ".jsonl"));
    std::size_t n = 0;
    for (std::size_t i = 0; i < g.facts().size(); ++i) {
      if (g.split_of(i) != split) continue;
      const auto& f = g.facts()[i];
      json quals = json::array();
      for (const auto& q : f.qualifiers) quals.push_back({g.label(q.attribute), g.label(q.value)});
      json line = {{"s", g.label(f.subject)}, {"r", g.label(f.relation)}, {"o", g.label(f.object)}};
      if (!quals.empty()) line["quals"] = quals;
      out << line.dump() << '\n';
      ++n;
    }
    counts[std::string(nqe::to_string(split))] = n;
  }
  emit({{"out", a.out}, {"facts", counts}}, globals);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"n-ary fact query embedding toolkit"};
  app.require_subcommand(1);
  Globals globals;
  std::uint64_t seed_value = 0;
  app.add_flag("--pretty", globals.pretty, "Human-readable output instead of JSON");
  auto* threads_opt = app.add_option("--threads", globals.threads, "Worker threads (1 = reproducible mode)")
                          ->check(CLI::PositiveNumber);
  auto* seed_opt = app.add_option("--seed", seed_value, "Seed (default: $NQE_SEED, then 0)");

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Load facts into a binary store");
  c_ingest->add_option("--facts", ingest.facts, "JSONL or TSV facts file")->required();
  c_ingest->add_option("--split", ingest.split, "train | valid | test")
      ->check(CLI::IsMember({"train", "valid", "test"}));
  c_ingest->add_option("--out", ingest.out, "Store path")->required();
  c_ingest->add_option("--format", ingest.format, "auto | jsonl | tsv")->check(CLI::IsMember({"auto", "jsonl", "tsv"}));
  c_ingest->add_flag("--append", ingest.append, "Add to an existing store at --out");

  SampleArgs sample;
  auto* c_sample = app.add_subcommand("sample", "Generate a grounded query dataset");
  c_sample->add_option("--store", sample.store, "Store path")->required();
  c_sample->add_option("--counts", sample.counts, "e.g. 1p=100,2i=50 or train/1p=100")->required();
  c_sample->add_option("--split", sample.split, "Split for entries without a prefix")
      ->check(CLI::IsMember({"train", "valid", "test"}));
  c_sample->add_option("--out", sample.out, "Output directory")->required();
  c_sample->add_option("--retries", sample.retries, "Attempts per query");
  c_sample->add_option("--max-answers", sample.max_answers, "Reject queries with more answers");

  AnswerArgs answer;
  auto* c_answer = app.add_subcommand("answer", "Answer a query exactly on the store");
  c_answer->add_option("--store", answer.store, "Store path")->required();
  c_answer->add_option("--query", answer.query, "Query expression")->required();
  c_answer->add_option("--scope", answer.scope, "Comma-separated splits");
  c_answer->add_flag("--brute-force", answer.brute_force, "Use assignment enumeration (small graphs only)");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train the encoder");
  c_train->add_option("--store", tr.store, "Store path");
  c_train->add_option("--data", tr.data, "Dataset directory");
  c_train->add_option("--config", tr.config, "TOML config file");
  c_train->add_option("--checkpoint", tr.checkpoint, "Output checkpoint");
  c_train->add_option("--loss-csv", tr.loss_csv, "Loss curve CSV (default: <checkpoint>.loss.csv)");
  c_train->add_option("--epochs", tr.epochs);
  c_train->add_option("--batch-size", tr.batch_size);
  c_train->add_option("--dim", tr.dim);
  c_train->add_option("--layers", tr.layers);
  c_train->add_option("--heads", tr.heads);
  c_train->add_option("--lr", tr.lr);
  c_train->add_option("--epsilon", tr.epsilon);
  c_train->add_option("--logic", tr.logic)->check(CLI::IsMember({"product", "godel", "lukasiewicz"}));
  c_train->add_option("--train-types", tr.train_types, "Comma-separated type tags");
  c_train->add_flag("--node-h-only", tr.node_h_only);
  c_train->add_flag("--edge-h-only", tr.edge_h_only);
  c_train->add_flag("--logic-blind", tr.logic_blind);
  c_train->add_flag("--unparalleled", tr.unparalleled);

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Filtered ranking evaluation");
  c_eval->add_option("--store", ev.store, "Store path");
  c_eval->add_option("--data", ev.data, "Dataset directory");
  c_eval->add_option("--config", ev.config, "TOML config file");
  c_eval->add_option("--checkpoint", ev.checkpoint, "Checkpoint");
  c_eval->add_option("--report", ev.report, "Write the report JSON here too");
  c_eval->add_option("--split", ev.split, "Split to evaluate")->check(CLI::IsMember({"train", "valid", "test"}));

  QueryArgs qa;
  auto* c_query = app.add_subcommand("query", "Per-variable predictions of a trained model");
  c_query->add_option("--checkpoint", qa.checkpoint, "Checkpoint")->required();
  c_query->add_option("--query", qa.query, "Query expression")->required();
  c_query->add_option("--top", qa.top, "Rows per block (0 = all entities)");
  c_query->add_option("--threshold", qa.threshold, "Probability cut for the answer sets");

  SynthArgs sy;
  auto* c_synth = app.add_subcommand("synth", "Write a synthetic fact set (train/valid/test JSONL)");
  c_synth->add_option("--kind", sy.kind, "clustered | random");
  c_synth->add_option("--out", sy.out, "Output directory")->required();
  c_synth->add_option("--entities", sy.entities);
  c_synth->add_option("--relations", sy.relations);
  c_synth->add_option("--facts", sy.facts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }
  if (seed_opt->count() > 0) globals.seed = seed_value;
  globals.threads_given = threads_opt->count() > 0;

  try {
    if (c_ingest->parsed()) return cmd_ingest(ingest, globals);
    if (c_sample->parsed()) return cmd_sample(sample, globals);
    if (c_answer->parsed()) return cmd_answer(answer, globals);
    if (c_train->parsed()) return cmd_train(tr, globals);
    if (c_eval->parsed()) return cmd_eval(ev, globals);
    if (c_query->parsed()) return cmd_query(qa, globals);
    if (c_synth->parsed()) return cmd_synth(sy, globals);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const nqe::FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const nqe::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const nqe::LabelError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const nqe::NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumerical;
  } catch (const nqe::DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
