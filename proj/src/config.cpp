#include "nqe/config.hpp"

#include <fstream>
#include <sstream>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "nqe/errors.hpp"

namespace nqe {

namespace {

using Value = toml::node;

std::size_t line_of(const toml::node& n) { return n.source().begin.line; }

struct Binder {
  std::size_t line;

  [[noreturn]] void fail(const std::string& what) const { throw FormatError(line, what); }

  double number(const Value& v, const std::string& key) const {
    if (const auto i = v.value_exact<std::int64_t>()) return static_cast<double>(*i);
    if (const auto d = v.value_exact<double>()) return *d;
    fail(key + " expects a number");
  }
  std::size_t count(const Value& v, const std::string& key) const {
    const auto i = v.value_exact<std::int64_t>();
    if (!i || *i < 0) fail(key + " expects a non-negative integer");
    return static_cast<std::size_t>(*i);
  }
  bool boolean(const Value& v, const std::string& key) const {
    const auto b = v.value_exact<bool>();
    if (!b) fail(key + " expects true or false");
    return *b;
  }
  std::string string(const Value& v, const std::string& key) const {
    const auto s = v.value_exact<std::string>();
    if (!s) fail(key + " expects a string");
    return *s;
  }
};

void assign(RunConfig& rc, const std::string& section, const std::string& key, const Value& v, std::size_t line) {
  const Binder b{line};
  auto& t = rc.train;
  auto& m = t.encoder;
  auto& a = t.ablations;
  const std::string name = section + "." + key;
  try {
    if (section == "model") {
      if (key == "dim") return void(m.dim = b.count(v, name));
      if (key == "layers") return void(m.layers = b.count(v, name));
      if (key == "heads") return void(m.heads = b.count(v, name));
      if (key == "ffn_dim") return void(m.ffn_dim = b.count(v, name));
      if (key == "dropout") return void(m.dropout = b.number(v, name));
      if (key == "share_edge_bias") return void(m.share_edge_bias = b.boolean(v, name));
      if (key == "init_scale") return void(m.init_scale = b.number(v, name));
    } else if (section == "train") {
      if (key == "logic") return void(t.logic = parse_logic_kind(b.string(v, name)));
      if (key == "epsilon") return void(t.epsilon = b.number(v, name));
      if (key == "learning_rate") return void(t.learning_rate = b.number(v, name));
      if (key == "optimizer") return void(t.optimizer = b.string(v, name));
      if (key == "beta1") return void(t.beta1 = b.number(v, name));
      if (key == "beta2") return void(t.beta2 = b.number(v, name));
      if (key == "adam_epsilon") return void(t.adam_epsilon = b.number(v, name));
      if (key == "batch_size") return void(t.batch_size = b.count(v, name));
      if (key == "epochs") return void(t.epochs = b.count(v, name));
      if (key == "seed") return void(t.seed = b.count(v, name));
      if (key == "threads") return void(t.threads = b.count(v, name));
      if (key == "patience") return void(t.patience = b.count(v, name));
      if (key == "train_types") {
        const auto* arr = v.as_array();
        if (!arr) b.fail(name + " expects an array of type tags");
        t.train_types.clear();
        for (const auto& s : *arr) {
          const auto tag = s.value_exact<std::string>();
          if (!tag) b.fail(name + " expects strings");
          t.train_types.push_back(parse_query_type(*tag));
        }
        return;
      }
    } else if (section == "ablation") {
      if (key == "node_h_only") return void(a.node_h_only = b.boolean(v, name));
      if (key == "edge_h_only") return void(a.edge_h_only = b.boolean(v, name));
      if (key == "logic_blind") return void(a.logic_blind = b.boolean(v, name));
      if (key == "unparalleled") return void(a.unparalleled = b.boolean(v, name));
    } else if (section == "paths") {
      if (key == "store") return void(rc.paths.store = b.string(v, name));
      if (key == "data") return void(rc.paths.data = b.string(v, name));
      if (key == "checkpoint") return void(rc.paths.checkpoint = b.string(v, name));
      if (key == "loss_csv") return void(rc.paths.loss_csv = b.string(v, name));
      if (key == "report") return void(rc.paths.report = b.string(v, name));
    }
  } catch (const DataError& e) {
    b.fail(e.what());
  }
  b.fail("unknown key '" + name + "'");
}

}  // namespace

RunConfig parse_run_config(std::string_view text) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    throw FormatError(e.source().begin.line, std::string(e.description()));
  }
  RunConfig rc;
  for (const auto& [section, node] : root) {
    const std::string name(section.str());
    const auto* table = node.as_table();
    if (!table) throw FormatError(line_of(node), "key '" + name + "' outside of a section");
    if (name != "model" && name != "train" && name != "ablation" && name != "paths") {
      throw FormatError(line_of(node), "unknown section [" + name + "]");
    }
    for (const auto& [key, value] : *table) assign(rc, name, std::string(key.str()), value, line_of(value));
  }
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_run_config(buffer.str());
}

}  // namespace nqe
