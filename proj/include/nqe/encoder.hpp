#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "nqe/autodiff.hpp"
#include "nqe/fuzzy_logic.hpp"
#include "nqe/hkg_store.hpp"
#include "nqe/query_ir.hpp"

namespace nqe {

struct EncoderConfig {
  std::size_t dim = 32;
  std::size_t layers = 1;
  std::size_t heads = 1;
  std::size_t ffn_dim = 64;
  double dropout = 0.0;
  bool share_edge_bias = false;  // one bias table set for all layers
  double init_scale = 0.1;

  std::size_t head_dim() const { return dim / heads; }
  // Throws std::invalid_argument for zero sizes or dim % heads != 0.
  void validate() const;
};

struct Ablations {
  bool node_h_only = false;   // edge-type biases zeroed and frozen
  bool edge_h_only = false;   // one projection set shared by entity and relation roles
  bool logic_blind = false;   // conj/disj replaced by the arithmetic mean
  bool unparalleled = false;  // every query executed on its own

  bool operator==(const Ablations&) const = default;
};

// Pair types of the attention bias tables. Sequence index 0 = s, 1 = r,
// 2 = o, 3 + 2k = a_k, 4 + 2k = v_k.
enum class EdgeType : std::uint8_t {
  self,
  s_r,
  s_o,
  r_o,
  s_a,
  s_v,
  r_a,
  r_v,
  o_a,
  o_v,
  a_a,
  v_v,
  a_v_same,
  a_v_diff,
};
inline constexpr std::size_t kEdgeTypeCount = 14;

EdgeType edge_type(std::size_t i, std::size_t j);

struct Tensor {
  std::string name;
  ad::Matrix value;
  bool frozen = false;
};

// Flat list of named tensors plus the slot indices that address them.
struct ModelParams {
  struct Layer {
    std::size_t wq_e, wk_e, wv_e, wq_r, wk_r, wv_r;
    std::size_t bq, bk, bv;
    std::size_t ln1_g, ln1_b, ff_w1, ff_b1, ff_w2, ff_b2, ln2_g, ln2_b;
  };

  EncoderConfig config;
  std::vector<Tensor> tensors;
  std::size_t entity_logits = 0;
  std::size_t relation_logits = 0;
  std::size_t mask = 0;
  std::vector<Layer> layers;
  std::size_t head_w = 0, head_b = 0, head_ln_g = 0, head_ln_b = 0;

  // Gaussian init with std config.init_scale; layer-norm gains start at 1.
  // With node_h_only the bias tables are zero and frozen.
  static ModelParams init(const EncoderConfig& config, std::size_t num_entities, std::size_t num_relations,
                          std::uint64_t seed, const Ablations& ablations = {});
  // Same slot layout, every tensor zero (gains included).
  static ModelParams zeros(const EncoderConfig& config, std::size_t num_entities, std::size_t num_relations);

  std::size_t num_entities() const { return static_cast<std::size_t>(tensors[entity_logits].value.rows()); }
  std::size_t num_relations() const { return static_cast<std::size_t>(tensors[relation_logits].value.rows()); }
  std::size_t parameter_count() const;
};

struct MaskToken {};
using EncoderSlot = std::variant<EntityId, FuzzyVec, MaskToken>;

// One projection input: n entity slots (exactly one mask) and n - 1
// relations, in the positional order of NAryFact.
struct EncoderInput {
  std::vector<EncoderSlot> entities;
  std::vector<RelationId> relations;
};

// Attention probabilities of the last project() call, one
// heads x seq_len x seq_len block per layer.
struct AttentionProbe {
  std::size_t seq_len = 0;
  std::vector<std::vector<double>> layers;
};

// Throws std::invalid_argument on malformed input.
FuzzyVec project(const ModelParams& params, const EncoderInput& input, const Ablations& ablations = {},
                 AttentionProbe* probe = nullptr);

// softmax(q . sigmoid(entity_logits)^T)
std::vector<double> similarity(const ModelParams& params, const FuzzyVec& q);

// -sum_t y_t log S_t with y = 1 - eps on the target, eps / (|E| - 1) elsewhere.
double loss(std::span<const double> scores, EntityId target, double eps);

struct ExecutionOptions {
  LogicKind logic = LogicKind::product;
  Ablations ablations;
};

struct BatchResult {
  // registers[q][r]; registers a program never writes stay empty.
  std::vector<std::vector<FuzzyVec>> registers;
  std::vector<FuzzyVec> targets;
};

// Executes programs step-synchronously: projections are grouped by arity and
// logic ops by (op, fan-in) at every step index. Shorter programs idle once
// they run out of steps.
BatchResult run_step_program(const ModelParams& params, std::span<const StepProgram> programs,
                             const ExecutionOptions& options = {});

struct TrainingExample {
  std::uint32_t program = 0;  // index into the batch
  EntityId target;
};

struct GradientOptions {
  ExecutionOptions execution;
  double epsilon = 0.1;
  std::size_t threads = 1;
  // Non-zero enables dropout, with masks drawn from this seed.
  std::uint64_t dropout_seed = 0;
};

struct Gradients {
  double loss = 0.0;  // mean over examples
  std::vector<ad::Matrix> tensors;  // aligned with ModelParams::tensors
};

// Reverse-mode gradient of the mean smoothed cross-entropy. Examples are
// split into `threads` contiguous shards whose gradients are summed in shard
// order.
Gradients gradients(const ModelParams& params, std::span<const StepProgram> programs,
                    std::span<const TrainingExample> examples, const GradientOptions& options);

// Mean loss only, through the same graph.
double mean_loss(const ModelParams& params, std::span<const StepProgram> programs,
                 std::span<const TrainingExample> examples, const GradientOptions& options);

// Binary checkpoint: "NQE1", u64 header length, JSON header, f64 tensors.
struct Checkpoint {
  ModelParams params;
  LogicKind logic = LogicKind::product;
  Ablations ablations;
  std::vector<std::string> entity_labels;
  std::vector<std::string> relation_labels;
  nlohmann::json extra = nlohmann::json::object();
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
// Throws DataError on a malformed or truncated file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json to_json(const EncoderConfig& config);
EncoderConfig encoder_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Ablations& ablations);
Ablations ablations_from_json(const nlohmann::json& j);

}  // namespace nqe
