// Python bindings for the store, query language, fuzzy operators, sampler,
// training and evaluation. Complex results cross the boundary as JSON
// strings decoded on the Python side.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "nqe/config.hpp"
#include "nqe/encoder.hpp"
#include "nqe/errors.hpp"
#include "nqe/fuzzy_logic.hpp"
#include "nqe/hkg_store.hpp"
#include "nqe/query_ir.hpp"
#include "nqe/sampler.hpp"
#include "nqe/symbolic_executor.hpp"
#include "nqe/synthetic.hpp"
#include "nqe/trainer.hpp"

namespace py = pybind11;

namespace {

std::vector<std::string> labels(const nqe::HyperGraph& g, const nqe::AnswerSet& xs) {
  std::vector<std::string> out;
  out.reserve(xs.size());
  for (auto e : xs) out.push_back(g.label(e));
  return out;
}

std::vector<nqe::FuzzyVec> fuzzy_list(const std::vector<std::vector<double>>& xs) {
  std::vector<nqe::FuzzyVec> out;
  for (const auto& x : xs) out.emplace_back(x);
  return out;
}

std::vector<double> to_list(const nqe::FuzzyVec& v) { return {v.values().begin(), v.values().end()}; }

nqe::HyperGraph load_graph(const std::string& path) { return nqe::HyperGraph::load(path); }

std::string train_run(const std::string& store, const std::string& data, const std::string& config_toml,
                      const std::string& checkpoint, std::size_t threads) {
  const auto rc = config_toml.empty() ? nqe::RunConfig{} : nqe::parse_run_config(config_toml);
  auto cfg = rc.train;
  cfg.threads = threads;
  cfg.validate();
  const auto g = nqe::HyperGraph::load(store);
  const auto ds = nqe::load_dataset(data, g);
  auto result = nqe::train(g, ds.queries, cfg);
  nqe::save_checkpoint(checkpoint, result.checkpoint);
  return nlohmann::json{{"epoch_loss", result.epoch_loss}}.dump();
}

std::string evaluate_run(const std::string& store, const std::string& data, const std::string& checkpoint,
                         const std::string& split) {
  const auto g = nqe::HyperGraph::load(store);
  const auto ck = nqe::load_checkpoint(checkpoint);
  const auto ds = nqe::load_dataset(data, g);
  std::vector<nqe::GroundedQuery> selected;
  for (const auto& q : ds.queries) {
    if (q.split == nqe::parse_split(split)) selected.push_back(q);
  }
  return nqe::evaluate(selected, nqe::model_scorer(ck), 128, &g).to_json().dump();
}

// Similarity distribution of every variable register and the target.
std::string predict(const std::string& checkpoint, const std::string& query) {
  const auto ck = nqe::load_checkpoint(checkpoint);
  nqe::SymbolTable entities, relations;
  for (const auto& l : ck.entity_labels) entities.intern(l);
  for (const auto& l : ck.relation_labels) relations.intern(l);
  const nqe::Vocabulary vocab{&entities, &relations};
  const auto program = nqe::compile(nqe::parse(query, vocab));
  const auto result =
      nqe::run_step_program(ck.params, std::span(&program, 1), nqe::ExecutionOptions{ck.logic, ck.ablations});
  nlohmann::json out = nlohmann::json::object();
  for (std::size_t k = 0; k < program.variables.size(); ++k) {
    out["V" + std::to_string(k + 1)] = nqe::similarity(ck.params, result.registers[0].at(program.variables[k]));
  }
  out["V_tar"] = nqe::similarity(ck.params, result.registers[0].at(program.target));
  out["entities"] = ck.entity_labels;
  return out.dump();
}

}  // namespace

PYBIND11_MODULE(_nqe, m) {
  m.doc() = "n-ary fact query embedding core";

  py::register_exception<nqe::FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<nqe::ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<nqe::LabelError>(m, "LabelError", PyExc_KeyError);
  py::register_exception<nqe::DataError>(m, "DataError", PyExc_RuntimeError);
  py::register_exception<nqe::NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  py::class_<nqe::HyperGraph>(m, "HyperGraph")
      .def(py::init<>())
      .def_static("load", &load_graph, py::arg("path"))
      .def("save", [](const nqe::HyperGraph& g, const std::string& p) { g.save(p); }, py::arg("path"))
      .def(
          "load_facts",
          [](nqe::HyperGraph& g, const std::string& path, const std::string& split) {
            const auto s = g.load_facts(path, nqe::parse_split(split));
            return py::dict(py::arg("lines") = s.lines, py::arg("new_facts") = s.new_facts,
                            py::arg("duplicates") = s.duplicates, py::arg("new_entities") = s.new_entities,
                            py::arg("new_relations") = s.new_relations);
          },
          py::arg("path"), py::arg("split") = "train")
      .def_property_readonly("num_entities", &nqe::HyperGraph::num_entities)
      .def_property_readonly("num_relations", &nqe::HyperGraph::num_relations)
      .def_property_readonly("num_facts", [](const nqe::HyperGraph& g) { return g.facts().size(); })
      .def("count", [](const nqe::HyperGraph& g, const std::string& scope) { return g.count(nqe::SplitSet::parse(scope)); })
      .def("entity_labels", [](const nqe::HyperGraph& g) { return g.entities().labels(); })
      .def("relation_labels", [](const nqe::HyperGraph& g) { return g.relations().labels(); })
      .def("digest", &nqe::HyperGraph::digest);

  m.def("random_graph", [](std::size_t entities, std::size_t relations, std::size_t facts, std::uint64_t seed) {
        nqe::RandomGraphSpec spec;
        spec.entities = entities;
        spec.relations = relations;
        spec.facts = facts;
        return nqe::random_graph(spec, seed);
      }, py::arg("entities") = 40, py::arg("relations") = 4, py::arg("facts") = 250, py::arg("seed") = 0);
  m.def("clustered_graph", [](std::uint64_t seed) { return nqe::clustered_graph({}, seed); }, py::arg("seed") = 42);

  m.def("normalize_query", [](const nqe::HyperGraph& g, const std::string& text) {
        return nqe::serialize(nqe::parse(text, nqe::vocabulary(g)), nqe::vocabulary(g));
      }, py::arg("graph"), py::arg("query"));
  m.def("answer", [](const nqe::HyperGraph& g, const std::string& text, const std::string& scope, bool brute_force) {
        const auto ast = nqe::parse(text, nqe::vocabulary(g));
        const auto s = nqe::SplitSet::parse(scope);
        return labels(g, brute_force ? nqe::brute_force_execute(ast, g, s) : nqe::execute(ast, g, s));
      }, py::arg("graph"), py::arg("query"), py::arg("scope") = "train,valid,test", py::arg("brute_force") = false);

  m.def("sample_query", [](const nqe::HyperGraph& g, const std::string& type, const std::string& split,
                           std::uint64_t seed) -> py::object {
        const auto q = nqe::sample_query(nqe::parse_query_type(type), g, nqe::parse_split(split), seed);
        if (!q) return py::none();
        return py::str(nqe::to_json(*q, g).dump());
      }, py::arg("graph"), py::arg("type"), py::arg("split") = "test", py::arg("seed") = 0);
  m.def("generate_dataset", [](const nqe::HyperGraph& g, const std::string& counts, std::uint64_t seed,
                               const std::string& out, std::size_t threads, const std::string& split) {
        return nqe::generate_dataset(g, nqe::parse_counts(counts, nqe::parse_split(split)), seed, out, threads)
            .to_json()
            .dump();
      }, py::arg("graph"), py::arg("counts"), py::arg("seed"), py::arg("out"), py::arg("threads") = 1,
      py::arg("split") = "test");

  m.def("conj", [](const std::string& kind, const std::vector<std::vector<double>>& xs) {
        return to_list(nqe::conj(nqe::parse_logic_kind(kind), fuzzy_list(xs)));
      }, py::arg("kind"), py::arg("inputs"));
  m.def("disj", [](const std::string& kind, const std::vector<std::vector<double>>& xs) {
        return to_list(nqe::disj(nqe::parse_logic_kind(kind), fuzzy_list(xs)));
      }, py::arg("kind"), py::arg("inputs"));
  m.def("neg", [](const std::vector<double>& x) { return to_list(nqe::neg(nqe::FuzzyVec(x))); }, py::arg("x"));

  m.def("rank_filtered", [](const std::vector<double>& scores, std::uint32_t candidate, std::vector<std::uint32_t> known) {
        nqe::AnswerSet k;
        for (auto x : known) k.push_back(nqe::EntityId{x});
        std::sort(k.begin(), k.end());
        k.erase(std::unique(k.begin(), k.end()), k.end());
        return nqe::rank_filtered(scores, nqe::EntityId{candidate}, k);
      }, py::arg("scores"), py::arg("candidate"), py::arg("known"));

  m.def("train", &train_run, py::arg("store"), py::arg("data"), py::arg("config_toml"), py::arg("checkpoint"),
        py::arg("threads") = 1, py::call_guard<py::gil_scoped_release>());
  m.def("evaluate", &evaluate_run, py::arg("store"), py::arg("data"), py::arg("checkpoint"), py::arg("split") = "test",
        py::call_guard<py::gil_scoped_release>());
  m.def("predict", &predict, py::arg("checkpoint"), py::arg("query"));
}
