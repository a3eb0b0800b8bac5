#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. Nodes are appended in evaluation order, so the tape order is a
// topological order and backward() is a single reverse sweep.

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace nqe::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Var {
  static constexpr std::uint32_t kNone = 0xFFFFFFFFu;
  std::uint32_t id = kNone;

  bool valid() const noexcept { return id != kNone; }
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, std::uint32_t self)>;

  Var leaf(Matrix value, bool requires_grad = true);
  Var constant(Matrix value) { return leaf(std::move(value), false); }

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return v.valid() && nodes_[v.id].requires_grad; }
  // Gradient of the last backward() output w.r.t. v; zero if v was unused.
  Matrix grad(Var v) const;
  // Lazily allocated, zero-initialised gradient accumulator.
  Matrix& grad_ref(Var v);
  bool has_grad(std::uint32_t id) const { return nodes_[id].grad.size() > 0; }
  const Matrix& grad_of(std::uint32_t id) const { return nodes_[id].grad; }

  // Appends an op result. `backward` is dropped when no parent needs grad.
  Var push(Matrix value, std::initializer_list<Var> parents, Backward backward);
  Var push(Matrix value, std::span<const Var> parents, Backward backward);

  // Seeds d(output)/d(output) = 1 for a 1x1 output and sweeps the tape.
  void backward(Var output);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

// One row of some node; used to assemble inputs from heterogeneous sources.
struct RowRef {
  Var source;
  std::uint32_t row = 0;
};

Var matmul(Tape& t, Var a, Var b);
Var matmul_nt(Tape& t, Var a, Var b);  // a * b^T
Var add(Tape& t, Var a, Var b);
Var add_row(Tape& t, Var a, Var row);  // broadcast a 1xC row over every row of a
Var scale(Tape& t, Var a, double factor);
Var one_minus(Tape& t, Var a);
Var sigmoid(Tape& t, Var a);
Var gelu(Tape& t, Var a);
Var layer_norm(Tape& t, Var x, Var gamma, Var beta, double eps = 1e-5);
Var gather_rows(Tape& t, std::span<const RowRef> rows);
Var mean_of(Tape& t, std::span<const Var> inputs);
// Inverted dropout with a freshly drawn mask; identity when rate == 0.
Var dropout(Tape& t, Var a, double rate, std::mt19937_64* rng);

// Row i of the result uses w_relation when relation_rows[i] != 0, else
// w_entity.
Var role_linear(Tape& t, Var x, Var w_entity, Var w_relation, std::span<const std::uint8_t> relation_rows);

// Self-attention over `batch` sequences of `seq_len` rows each, with
// per-pair bias vectors added to queries, keys and values:
//   m_ij = (q_i + bq[t_ij]) . (k_j + bk[t_ij]) / sqrt(d_head)
//   a_i  = softmax_j(m_ij)
//   o_i  = sum_j a_ij (v_j + bv[t_ij])
// q/k/v are (batch*seq_len) x (heads*d_head); bias tables are
// n_types x d_head and shared across heads. Invalid bias Vars mean zero
// biases. `probabilities`, when given, receives every attention row.
struct AttentionLayout {
  std::size_t seq_len = 0;
  std::size_t heads = 1;
  std::vector<std::uint8_t> pair_type;  // seq_len * seq_len
};
Var biased_attention(Tape& t, Var q, Var k, Var v, Var bq, Var bk, Var bv, const AttentionLayout& layout,
                     double dropout_rate = 0.0, std::mt19937_64* rng = nullptr,
                     std::vector<double>* probabilities = nullptr);

// Label-smoothed cross-entropy of softmax(logits) against one target per
// row: y = 1 - eps on the target, eps / (C - 1) elsewhere. Returns the 1x1
// value factor * sum over rows.
Var smoothed_cross_entropy(Tape& t, Var logits, std::span<const std::uint32_t> targets, double eps, double factor);

}  // namespace nqe::ad
