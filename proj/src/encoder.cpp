#include "nqe/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <stdexcept>
#include <thread>

#include "binary_io.hpp"
#include "nqe/errors.hpp"
#include "nqe/random.hpp"

namespace nqe {

using ad::Matrix;
using ad::RowRef;
using ad::Tape;
using ad::Var;

void EncoderConfig::validate() const {
  if (dim == 0 || layers == 0 || heads == 0 || ffn_dim == 0) throw std::invalid_argument("encoder sizes must be positive");
  if (dim % heads != 0) throw std::invalid_argument("dim must be divisible by heads");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must lie in [0, 1)");
}

namespace {

enum class Role { s, r, o, a, v };

Role role_of(std::size_t i) {
  if (i == 0) return Role::s;
  if (i == 1) return Role::r;
  if (i == 2) return Role::o;
  return i % 2 == 1 ? Role::a : Role::v;
}

std::size_t qualifier_of(std::size_t i) { return (i - 3) / 2; }

// Sequence index of a 1-based entity position / 0-based relation slot.
std::size_t entity_index(std::size_t position) { return position == 1 ? 0 : 2 * position - 2; }
std::size_t relation_index(std::size_t slot) { return 2 * slot + 1; }

}  // namespace

EdgeType edge_type(std::size_t i, std::size_t j) {
  if (i == j) return EdgeType::self;
  Role a = role_of(i);
  Role b = role_of(j);
  if (a > b) {
    std::swap(a, b);
    std::swap(i, j);
  }
  switch (a) {
    case Role::s:
      switch (b) {
        case Role::r: return EdgeType::s_r;
        case Role::o: return EdgeType::s_o;
        case Role::a: return EdgeType::s_a;
        default: return EdgeType::s_v;
      }
    case Role::r:
      switch (b) {
        case Role::o: return EdgeType::r_o;
        case Role::a: return EdgeType::r_a;
        default: return EdgeType::r_v;
      }
    case Role::o: return b == Role::a ? EdgeType::o_a : EdgeType::o_v;
    case Role::a:
      if (b == Role::a) return EdgeType::a_a;
      return qualifier_of(i) == qualifier_of(j) ? EdgeType::a_v_same : EdgeType::a_v_diff;
    case Role::v: return EdgeType::v_v;
  }
  return EdgeType::self;
}

// ---------------------------------------------------------------------------
// Parameters

ModelParams ModelParams::zeros(const EncoderConfig& config, std::size_t num_entities, std::size_t num_relations) {
  config.validate();
  ModelParams p;
  p.config = config;
  const auto d = static_cast<Eigen::Index>(config.dim);
  const auto dh = static_cast<Eigen::Index>(config.head_dim());
  const auto ff = static_cast<Eigen::Index>(config.ffn_dim);
  auto add = [&](std::string name, Eigen::Index rows, Eigen::Index cols) {
    p.tensors.push_back(Tensor{std::move(name), Matrix::Zero(rows, cols), false});
    return p.tensors.size() - 1;
  };
  p.entity_logits = add("entity_logits", static_cast<Eigen::Index>(num_entities), d);
  p.relation_logits = add("relation_logits", static_cast<Eigen::Index>(num_relations), d);
  p.mask = add("mask", 1, d);
  const auto types = static_cast<Eigen::Index>(kEdgeTypeCount);
  for (std::size_t k = 0; k < config.layers; ++k) {
    const std::string pre = "layer" + std::to_string(k) + ".";
    Layer l{};
    l.wq_e = add(pre + "wq_e", d, d);
    l.wk_e = add(pre + "wk_e", d, d);
    l.wv_e = add(pre + "wv_e", d, d);
    l.wq_r = add(pre + "wq_r", d, d);
    l.wk_r = add(pre + "wk_r", d, d);
    l.wv_r = add(pre + "wv_r", d, d);
    if (k == 0 || !config.share_edge_bias) {
      l.bq = add(pre + "bq", types, dh);
      l.bk = add(pre + "bk", types, dh);
      l.bv = add(pre + "bv", types, dh);
    } else {
      l.bq = p.layers[0].bq;
      l.bk = p.layers[0].bk;
      l.bv = p.layers[0].bv;
    }
    l.ln1_g = add(pre + "ln1_g", 1, d);
    l.ln1_b = add(pre + "ln1_b", 1, d);
    l.ff_w1 = add(pre + "ff_w1", d, ff);
    l.ff_b1 = add(pre + "ff_b1", 1, ff);
    l.ff_w2 = add(pre + "ff_w2", ff, d);
    l.ff_b2 = add(pre + "ff_b2", 1, d);
    l.ln2_g = add(pre + "ln2_g", 1, d);
    l.ln2_b = add(pre + "ln2_b", 1, d);
    p.layers.push_back(l);
  }
  p.head_w = add("head_w", d, d);
  p.head_b = add("head_b", 1, d);
  p.head_ln_g = add("head_ln_g", 1, d);
  p.head_ln_b = add("head_ln_b", 1, d);
  return p;
}

ModelParams ModelParams::init(const EncoderConfig& config, std::size_t num_entities, std::size_t num_relations,
                              std::uint64_t seed, const Ablations& ablations) {
  ModelParams p = zeros(config, num_entities, num_relations);
  std::mt19937_64 rng(seed);
  auto fill = [&](std::size_t slot, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    auto& m = p.tensors[slot].value;
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  };
  const double d = static_cast<double>(config.dim);
  fill(p.entity_logits, 1.0);
  fill(p.relation_logits, 1.0);
  fill(p.mask, 1.0);
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    const auto& l = p.layers[k];
    for (std::size_t w : {l.wq_e, l.wk_e, l.wv_e, l.wq_r, l.wk_r, l.wv_r}) fill(w, 1.0 / std::sqrt(d));
    if (k == 0 || !config.share_edge_bias) {
      for (std::size_t b : {l.bq, l.bk, l.bv}) {
        if (ablations.node_h_only) {
          p.tensors[b].frozen = true;
        } else {
          fill(b, config.init_scale);
        }
      }
    }
    p.tensors[l.ln1_g].value.setOnes();
    p.tensors[l.ln2_g].value.setOnes();
    fill(l.ff_w1, 1.0 / std::sqrt(d));
    fill(l.ff_w2, 1.0 / std::sqrt(static_cast<double>(config.ffn_dim)));
  }
  fill(p.head_w, 1.0 / std::sqrt(d));
  p.tensors[p.head_ln_g].value.setOnes();
  return p;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += static_cast<std::size_t>(t.value.size());
  return n;
}

// ---------------------------------------------------------------------------
// Forward graph construction

namespace {

// Element-wise fuzzy operator over m equally shaped inputs.
Var fuzzy_op(Tape& t, LogicKind kind, LogicOp op, std::span<const Var> inputs) {
  const std::size_t m = inputs.size();
  const Matrix& first = t.value(inputs[0]);
  Matrix out(first.rows(), first.cols());
  std::vector<double> column(m);
  for (Eigen::Index e = 0; e < out.size(); ++e) {
    for (std::size_t i = 0; i < m; ++i) column[i] = t.value(inputs[i]).data()[e];
    out.data()[e] = op == LogicOp::conjunction ? conj_scalar(kind, column) : disj_scalar(kind, column);
  }
  std::vector<Var> ins(inputs.begin(), inputs.end());
  return t.push(std::move(out), inputs, [ins, kind, op](Tape& t, std::uint32_t self) {
    const Matrix& g = t.grad_of(self);
    const std::size_t m = ins.size();
    std::vector<double> column(m), partial(m);
    std::vector<Matrix*> targets(m, nullptr);
    for (std::size_t i = 0; i < m; ++i) {
      if (t.requires_grad(ins[i])) targets[i] = &t.grad_ref(ins[i]);
    }
    for (Eigen::Index e = 0; e < g.size(); ++e) {
      for (std::size_t i = 0; i < m; ++i) column[i] = t.value(ins[i]).data()[e];
      if (op == LogicOp::conjunction) {
        conj_partials(kind, column, partial);
      } else {
        disj_partials(kind, column, partial);
      }
      for (std::size_t i = 0; i < m; ++i) {
        if (targets[i]) targets[i]->data()[e] += g.data()[e] * partial[i];
      }
    }
  });
}

FuzzyVec to_fuzzy(const Matrix& m, Eigen::Index row) {
  std::vector<double> v(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index c = 0; c < m.cols(); ++c) v[static_cast<std::size_t>(c)] = std::clamp(m(row, c), 0.0, 1.0);
  return FuzzyVec(std::move(v));
}

// Registers hold a row of some tape node; an invalid source marks "unset".
using RegisterFile = std::vector<RowRef>;

class Forward {
 public:
  Forward(const ModelParams& params, const ExecutionOptions& options, bool track, std::mt19937_64* rng)
      : params_(params), options_(options), track_(track), rng_(rng), vars_(params.tensors.size()) {}

  Tape tape;

  Var param(std::size_t slot) {
    if (!vars_[slot].valid()) {
      const auto& t = params_.tensors[slot];
      vars_[slot] = tape.leaf(t.value, track_ && !t.frozen);
    }
    return vars_[slot];
  }
  Var param_var(std::size_t slot) const { return vars_[slot]; }

  Var entity_table() {
    if (!entities_.valid()) entities_ = ad::sigmoid(tape, param(params_.entity_logits));
    return entities_;
  }
  Var relation_table() {
    if (!relations_.valid()) relations_ = ad::sigmoid(tape, param(params_.relation_logits));
    return relations_;
  }

  // Runs the encoder stack over B sequences of length 2n - 1 and returns the
  // B x d head outputs read at each item's mask index.
  Var encode(std::size_t arity, std::span<const RowRef> rows, std::span<const std::size_t> mask_index,
             AttentionProbe* probe = nullptr) {
    const std::size_t L = 2 * arity - 1;
    const std::size_t B = rows.size() / L;
    const auto& layout = layout_for(L);
    std::vector<std::uint8_t> roles(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) roles[i] = (i % L) % 2 == 1 ? 1 : 0;

    const bool shared_roles = options_.ablations.edge_h_only;
    const bool no_bias = options_.ablations.node_h_only;
    const double rate = rng_ ? params_.config.dropout : 0.0;

    Var x = ad::gather_rows(tape, rows);
    if (probe) {
      probe->seq_len = L;
      probe->layers.clear();
    }
    for (const auto& l : params_.layers) {
      const Var wq_e = param(l.wq_e), wk_e = param(l.wk_e), wv_e = param(l.wv_e);
      const Var wq_r = shared_roles ? wq_e : param(l.wq_r);
      const Var wk_r = shared_roles ? wk_e : param(l.wk_r);
      const Var wv_r = shared_roles ? wv_e : param(l.wv_r);
      const Var q = ad::role_linear(tape, x, wq_e, wq_r, roles);
      const Var k = ad::role_linear(tape, x, wk_e, wk_r, roles);
      const Var v = ad::role_linear(tape, x, wv_e, wv_r, roles);
      const Var bq = no_bias ? Var{} : param(l.bq);
      const Var bk = no_bias ? Var{} : param(l.bk);
      const Var bv = no_bias ? Var{} : param(l.bv);
      std::vector<double> probs;
      const Var att = ad::biased_attention(tape, q, k, v, bq, bk, bv, layout, rate, rng_, probe ? &probs : nullptr);
      if (probe) probe->layers.push_back(std::move(probs));
      const Var h1 = ad::layer_norm(tape, ad::add(tape, x, att), param(l.ln1_g), param(l.ln1_b));
      Var ff = ad::gelu(tape, ad::add_row(tape, ad::matmul(tape, h1, param(l.ff_w1)), param(l.ff_b1)));
      ff = ad::dropout(tape, ff, rate, rng_);
      ff = ad::add_row(tape, ad::matmul(tape, ff, param(l.ff_w2)), param(l.ff_b2));
      x = ad::layer_norm(tape, ad::add(tape, h1, ff), param(l.ln2_g), param(l.ln2_b));
    }
    std::vector<RowRef> masked(B);
    for (std::size_t b = 0; b < B; ++b) masked[b] = RowRef{x, static_cast<std::uint32_t>(b * L + mask_index[b])};
    Var y = ad::gather_rows(tape, masked);
    y = ad::add_row(tape, ad::matmul(tape, y, param(params_.head_w)), param(params_.head_b));
    y = ad::layer_norm(tape, y, param(params_.head_ln_g), param(params_.head_ln_b));
    return ad::sigmoid(tape, y);
  }

  Var logic(LogicOp op, std::span<const Var> inputs) {
    if (op == LogicOp::negation) return ad::one_minus(tape, inputs[0]);
    if (options_.ablations.logic_blind) return ad::mean_of(tape, inputs);
    return fuzzy_op(tape, options_.logic, op, inputs);
  }

  // Executes `which` programs step-synchronously; fills registers[q].
  void run(std::span<const StepProgram> programs, std::span<const std::size_t> which,
           std::vector<RegisterFile>& registers) {
    std::size_t max_steps = 0;
    for (std::size_t q : which) {
      registers[q].assign(programs[q].num_registers, RowRef{});
      max_steps = std::max(max_steps, programs[q].steps.size());
    }
    std::vector<RowRef> projected(programs.size());
    for (std::size_t t = 0; t < max_steps; ++t) {
      std::map<std::size_t, std::vector<std::size_t>> by_arity;
      for (std::size_t q : which) {
        if (t < programs[q].steps.size() && programs[q].steps[t].projection) {
          by_arity[programs[q].steps[t].projection->arity()].push_back(q);
        }
      }
      for (const auto& [arity, group] : by_arity) {
        const std::size_t L = 2 * arity - 1;
        std::vector<RowRef> rows(group.size() * L);
        std::vector<std::size_t> mask_index(group.size());
        for (std::size_t b = 0; b < group.size(); ++b) {
          const std::size_t q = group[b];
          const auto& spec = *programs[q].steps[t].projection;
          RowRef* seq = &rows[b * L];
          for (std::size_t k = 0; k < spec.relations.size(); ++k) {
            seq[relation_index(k)] = RowRef{relation_table(), checked(spec.relations[k].value, params_.num_relations())};
          }
          for (std::size_t p = 1; p <= arity; ++p) {
            const auto& slot = spec.entities[p - 1];
            RowRef& cell = seq[entity_index(p)];
            if (const auto* a = std::get_if<Anchor>(&slot)) {
              cell = RowRef{entity_table(), checked(a->entity.value, params_.num_entities())};
            } else if (const auto* r = std::get_if<RegisterRef>(&slot)) {
              cell = registers[q].at(r->index);
              if (!cell.source.valid()) throw std::logic_error("register read before write");
            } else {
              cell = RowRef{param(params_.mask), 0};
              mask_index[b] = entity_index(p);
            }
          }
        }
        const Var out = encode(arity, rows, mask_index);
        for (std::size_t b = 0; b < group.size(); ++b) projected[group[b]] = RowRef{out, static_cast<std::uint32_t>(b)};
      }

      std::map<std::pair<LogicOp, std::size_t>, std::vector<std::size_t>> by_op;
      for (std::size_t q : which) {
        if (t >= programs[q].steps.size()) continue;
        const Step& step = programs[q].steps[t];
        if (step.logic) {
          const std::size_t fan_in = step.logic->inputs.empty() ? 1 : step.logic->inputs.size();
          by_op[{step.logic->op, fan_in}].push_back(q);
        } else if (step.projection) {
          registers[q].at(step.out) = projected[q];
        }
      }
      for (const auto& [key, group] : by_op) {
        const auto [op, fan_in] = key;
        std::vector<Var> inputs;
        for (std::size_t i = 0; i < fan_in; ++i) {
          std::vector<RowRef> column;
          for (std::size_t q : group) {
            const LogicSpec& spec = *programs[q].steps[t].logic;
            const RowRef ref = spec.inputs.empty() ? projected[q] : registers[q].at(spec.inputs[i]);
            if (!ref.source.valid()) throw std::logic_error("register read before write");
            column.push_back(ref);
          }
          inputs.push_back(ad::gather_rows(tape, column));
        }
        const Var out = logic(op, inputs);
        for (std::size_t b = 0; b < group.size(); ++b) {
          registers[group[b]].at(programs[group[b]].steps[t].out) = RowRef{out, static_cast<std::uint32_t>(b)};
        }
      }
    }
  }

  // All programs, batched or one at a time depending on the ablation.
  std::vector<RegisterFile> run_all(std::span<const StepProgram> programs) {
    std::vector<RegisterFile> registers(programs.size());
    if (options_.ablations.unparalleled) {
      for (std::size_t q = 0; q < programs.size(); ++q) {
        const std::size_t one[] = {q};
        run(programs, one, registers);
      }
    } else {
      std::vector<std::size_t> all(programs.size());
      for (std::size_t q = 0; q < all.size(); ++q) all[q] = q;
      run(programs, all, registers);
    }
    return registers;
  }

 private:
  static std::uint32_t checked(std::uint32_t id, std::size_t limit) {
    if (id >= limit) throw std::invalid_argument("symbol id out of range for the model");
    return id;
  }

  const ad::AttentionLayout& layout_for(std::size_t L) {
    auto it = layouts_.find(L);
    if (it != layouts_.end()) return it->second;
    ad::AttentionLayout layout{L, params_.config.heads, std::vector<std::uint8_t>(L * L)};
    for (std::size_t i = 0; i < L; ++i) {
      for (std::size_t j = 0; j < L; ++j) layout.pair_type[i * L + j] = static_cast<std::uint8_t>(edge_type(i, j));
    }
    return layouts_.emplace(L, std::move(layout)).first->second;
  }

  const ModelParams& params_;
  ExecutionOptions options_;
  bool track_;
  std::mt19937_64* rng_;
  std::vector<Var> vars_;
  Var entities_;
  Var relations_;
  std::map<std::size_t, ad::AttentionLayout> layouts_;
};

}  // namespace

FuzzyVec project(const ModelParams& params, const EncoderInput& input, const Ablations& ablations,
                 AttentionProbe* probe) {
  const std::size_t n = input.entities.size();
  if (n < 2) throw std::invalid_argument("projection arity must be at least 2");
  if (input.relations.size() != n - 1) throw std::invalid_argument("projection needs n - 1 relations");
  const std::size_t d = params.config.dim;

  Forward f(params, ExecutionOptions{LogicKind::product, ablations}, false, nullptr);
  const std::size_t L = 2 * n - 1;
  std::vector<RowRef> rows(L);
  std::size_t mask_index = 0;
  std::size_t masks = 0;
  for (std::size_t k = 0; k < input.relations.size(); ++k) {
    if (input.relations[k].value >= params.num_relations()) throw std::invalid_argument("relation id out of range");
    rows[relation_index(k)] = RowRef{f.relation_table(), input.relations[k].value};
  }
  for (std::size_t p = 1; p <= n; ++p) {
    const auto& slot = input.entities[p - 1];
    RowRef& cell = rows[entity_index(p)];
    if (const auto* e = std::get_if<EntityId>(&slot)) {
      if (e->value >= params.num_entities()) throw std::invalid_argument("entity id out of range");
      cell = RowRef{f.entity_table(), e->value};
    } else if (const auto* v = std::get_if<FuzzyVec>(&slot)) {
      if (v->size() != d) throw std::invalid_argument("variable embedding has the wrong dimension");
      Matrix row(1, static_cast<Eigen::Index>(d));
      for (std::size_t c = 0; c < d; ++c) row(0, static_cast<Eigen::Index>(c)) = (*v)[c];
      cell = RowRef{f.tape.constant(std::move(row)), 0};
    } else {
      cell = RowRef{f.param(params.mask), 0};
      mask_index = entity_index(p);
      ++masks;
    }
  }
  if (masks != 1) throw std::invalid_argument("projection input needs exactly one mask");
  const std::size_t mask_indices[] = {mask_index};
  const Var out = f.encode(n, rows, mask_indices, probe);
  return to_fuzzy(f.tape.value(out), 0);
}

std::vector<double> similarity(const ModelParams& params, const FuzzyVec& q) {
  if (q.size() != params.config.dim) throw std::invalid_argument("query embedding has the wrong dimension");
  const Matrix& logits = params.tensors[params.entity_logits].value;
  Eigen::RowVectorXd qv(static_cast<Eigen::Index>(q.size()));
  for (std::size_t c = 0; c < q.size(); ++c) qv(static_cast<Eigen::Index>(c)) = q[c];
  const Matrix emb = (1.0 / (1.0 + (-logits.array()).exp())).matrix();
  Eigen::VectorXd z = emb * qv.transpose();
  const double top = z.maxCoeff();
  z = (z.array() - top).exp();
  z /= z.sum();
  return {z.data(), z.data() + z.size()};
}

double loss(std::span<const double> scores, EntityId target, double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("smoothing rate must lie in (0, 1)");
  if (target.value >= scores.size()) throw std::invalid_argument("target out of range");
  const double off = scores.size() > 1 ? eps / static_cast<double>(scores.size() - 1) : 0.0;
  const double on = scores.size() > 1 ? 1.0 - eps : 1.0;
  double total = 0.0;
  for (std::size_t t = 0; t < scores.size(); ++t) {
    const double y = t == target.value ? on : off;
    if (y != 0.0) total -= y * std::log(scores[t]);
  }
  return total;
}

BatchResult run_step_program(const ModelParams& params, std::span<const StepProgram> programs,
                             const ExecutionOptions& options) {
  for (const auto& p : programs) p.validate();
  Forward f(params, options, false, nullptr);
  const auto registers = f.run_all(programs);
  BatchResult result;
  for (std::size_t q = 0; q < programs.size(); ++q) {
    std::vector<FuzzyVec> file(programs[q].num_registers);
    for (std::size_t r = 0; r < file.size(); ++r) {
      const RowRef ref = registers[q][r];
      if (ref.source.valid()) file[r] = to_fuzzy(f.tape.value(ref.source), ref.row);
    }
    result.targets.push_back(file.at(programs[q].target));
    result.registers.push_back(std::move(file));
  }
  return result;
}

namespace {

struct ShardResult {
  double loss = 0.0;
  std::vector<Matrix> grads;
};

ShardResult run_shard(const ModelParams& params, std::span<const StepProgram> programs,
                      std::span<const TrainingExample> shard, std::size_t total, const GradientOptions& options,
                      std::uint64_t shard_seed, bool backward) {
  ShardResult result;
  if (shard.empty()) return result;
  // Only the programs this shard touches, in first-use order.
  std::vector<std::uint32_t> local(programs.size(), 0xFFFFFFFFu);
  std::vector<StepProgram> used;
  for (const auto& ex : shard) {
    if (ex.program >= programs.size()) throw std::invalid_argument("example refers to a missing program");
    if (local[ex.program] == 0xFFFFFFFFu) {
      local[ex.program] = static_cast<std::uint32_t>(used.size());
      used.push_back(programs[ex.program]);
    }
  }
  std::mt19937_64 rng(shard_seed);
  Forward f(params, options.execution, backward, options.dropout_seed ? &rng : nullptr);
  const auto registers = f.run_all(used);
  std::vector<RowRef> rows;
  std::vector<std::uint32_t> targets;
  for (const auto& ex : shard) {
    const std::uint32_t q = local[ex.program];
    rows.push_back(registers[q].at(used[q].target));
    if (ex.target.value >= params.num_entities()) throw std::invalid_argument("target entity out of range");
    targets.push_back(ex.target.value);
  }
  const Var queries = ad::gather_rows(f.tape, rows);
  const Var logits = ad::matmul_nt(f.tape, queries, f.entity_table());
  const Var l = ad::smoothed_cross_entropy(f.tape, logits, targets, options.epsilon, 1.0 / static_cast<double>(total));
  result.loss = f.tape.value(l)(0, 0);
  if (!backward) return result;
  f.tape.backward(l);
  result.grads.reserve(params.tensors.size());
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    const Var v = f.param_var(i);
    const auto& value = params.tensors[i].value;
    result.grads.push_back(v.valid() && f.tape.requires_grad(v) ? f.tape.grad(v)
                                                               : Matrix::Zero(value.rows(), value.cols()));
  }
  return result;
}

Gradients sharded(const ModelParams& params, std::span<const StepProgram> programs,
                  std::span<const TrainingExample> examples, const GradientOptions& options, bool backward) {
  if (examples.empty()) throw std::invalid_argument("no training examples");
  if (!(options.epsilon > 0.0 && options.epsilon < 1.0)) throw std::invalid_argument("smoothing rate must lie in (0, 1)");
  for (const auto& p : programs) p.validate();
  const std::size_t shards = std::max<std::size_t>(1, std::min(options.threads, examples.size()));
  std::vector<ShardResult> results(shards);
  auto work = [&](std::size_t s) {
    const std::size_t begin = examples.size() * s / shards;
    const std::size_t end = examples.size() * (s + 1) / shards;
    results[s] = run_shard(params, programs, examples.subspan(begin, end - begin), examples.size(), options,
                           derive_seed(options.dropout_seed, {s}), backward);
  };
  if (shards == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    std::vector<std::exception_ptr> errors(shards);
    for (std::size_t s = 0; s < shards; ++s) {
      pool.emplace_back([&, s] {
        try {
          work(s);
        } catch (...) {
          errors[s] = std::current_exception();
        }
      });
    }
    pool.clear();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  Gradients out;
  for (std::size_t s = 0; s < shards; ++s) {
    out.loss += results[s].loss;
    if (!backward) continue;
    if (out.tensors.empty()) {
      out.tensors = std::move(results[s].grads);
    } else {
      for (std::size_t i = 0; i < out.tensors.size(); ++i) out.tensors[i] += results[s].grads[i];
    }
  }
  return out;
}

}  // namespace

Gradients gradients(const ModelParams& params, std::span<const StepProgram> programs,
                    std::span<const TrainingExample> examples, const GradientOptions& options) {
  return sharded(params, programs, examples, options, true);
}

double mean_loss(const ModelParams& params, std::span<const StepProgram> programs,
                 std::span<const TrainingExample> examples, const GradientOptions& options) {
  return sharded(params, programs, examples, options, false).loss;
}

// ---------------------------------------------------------------------------
// Checkpoints

nlohmann::json to_json(const EncoderConfig& c) {
  return {{"dim", c.dim},         {"layers", c.layers},   {"heads", c.heads},
          {"ffn_dim", c.ffn_dim}, {"dropout", c.dropout}, {"share_edge_bias", c.share_edge_bias},
          {"init_scale", c.init_scale}};
}

EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.dim = j.at("dim").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.ffn_dim = j.at("ffn_dim").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.share_edge_bias = j.at("share_edge_bias").get<bool>();
  c.init_scale = j.value("init_scale", c.init_scale);
  return c;
}

nlohmann::json to_json(const Ablations& a) {
  return {{"node_h_only", a.node_h_only},
          {"edge_h_only", a.edge_h_only},
          {"logic_blind", a.logic_blind},
          {"unparalleled", a.unparalleled}};
}

Ablations ablations_from_json(const nlohmann::json& j) {
  Ablations a;
  a.node_h_only = j.value("node_h_only", false);
  a.edge_h_only = j.value("edge_h_only", false);
  a.logic_blind = j.value("logic_blind", false);
  a.unparalleled = j.value("unparalleled", false);
  return a;
}

namespace {
constexpr char kMagic[4] = {'N', 'Q', 'E', '1'};
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  nlohmann::json header;
  header["config"] = to_json(ck.params.config);
  header["logic"] = std::string(to_string(ck.logic));
  header["ablations"] = to_json(ck.ablations);
  header["num_entities"] = ck.params.num_entities();
  header["num_relations"] = ck.params.num_relations();
  auto& list = header["tensors"] = nlohmann::json::array();
  for (const auto& t : ck.params.tensors) list.push_back({{"name", t.name}, {"rows", t.value.rows()}, {"cols", t.value.cols()}});
  header["entities"] = ck.entity_labels;
  header["relations"] = ck.relation_labels;
  header["extra"] = ck.extra;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(kMagic, 4);
  io::write_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : ck.params.tensors) {
    for (Eigen::Index i = 0; i < t.value.size(); ++i) io::write_f64(out, t.value.data()[i]);
  }
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) throw DataError("not a checkpoint: " + path.string());
  const auto length = io::read_u64(in);
  if (length > (1ull << 32)) throw DataError("checkpoint header too large");
  std::string text(length, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(length))) throw DataError("truncated checkpoint header");
  Checkpoint ck;
  try {
    const auto header = nlohmann::json::parse(text);
    ck.logic = parse_logic_kind(header.at("logic").get<std::string>());
    ck.ablations = ablations_from_json(header.at("ablations"));
    ck.params = ModelParams::zeros(encoder_config_from_json(header.at("config")),
                                   header.at("num_entities").get<std::size_t>(),
                                   header.at("num_relations").get<std::size_t>());
    const auto& list = header.at("tensors");
    if (list.size() != ck.params.tensors.size()) throw DataError("checkpoint tensor count mismatch");
    for (std::size_t i = 0; i < list.size(); ++i) {
      auto& t = ck.params.tensors[i];
      if (list[i].at("name") != t.name || list[i].at("rows") != t.value.rows() || list[i].at("cols") != t.value.cols()) {
        throw DataError("checkpoint tensor " + std::to_string(i) + " does not match the configured layout");
      }
    }
    ck.entity_labels = header.at("entities").get<std::vector<std::string>>();
    ck.relation_labels = header.at("relations").get<std::vector<std::string>>();
    ck.extra = header.value("extra", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint header: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("malformed checkpoint header: ") + e.what());
  }
  for (auto& t : ck.params.tensors) {
    for (Eigen::Index i = 0; i < t.value.size(); ++i) t.value.data()[i] = io::read_f64(in);
  }
  if (ck.ablations.node_h_only) {
    for (const auto& l : ck.params.layers) {
      for (std::size_t b : {l.bq, l.bk, l.bv}) ck.params.tensors[b].frozen = true;
    }
  }
  return ck;
}

}  // namespace nqe
