#include "nqe/autodiff.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace nqe::ad {

Var Tape::leaf(Matrix value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, nullptr});
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Matrix Tape::grad(Var v) const {
  const auto& node = nodes_[v.id];
  if (node.grad.size() == 0) return Matrix::Zero(node.value.rows(), node.value.cols());
  return node.grad;
}

Matrix& Tape::grad_ref(Var v) {
  auto& node = nodes_[v.id];
  if (node.grad.size() == 0) node.grad = Matrix::Zero(node.value.rows(), node.value.cols());
  return node.grad;
}

Var Tape::push(Matrix value, std::initializer_list<Var> parents, Backward backward) {
  return push(std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(backward));
}

Var Tape::push(Matrix value, std::span<const Var> parents, Backward backward) {
  bool needs = false;
  for (Var p : parents) needs = needs || requires_grad(p);
  nodes_.push_back(Node{std::move(value), Matrix(), needs, needs ? std::move(backward) : nullptr});
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Tape::backward(Var output) {
  if (value(output).size() != 1) throw std::invalid_argument("backward() needs a scalar output");
  for (auto& node : nodes_) node.grad.resize(0, 0);
  grad_ref(output)(0, 0) = 1.0;
  for (std::uint32_t i = output.id + 1; i-- > 0;) {
    if (nodes_[i].backward && nodes_[i].grad.size() > 0) nodes_[i].backward(*this, i);
  }
}

namespace {
const Matrix& g_of(Tape& t, std::uint32_t self) { return t.grad_of(self); }
}  // namespace

Var matmul(Tape& t, Var a, Var b) {
  Matrix out = t.value(a) * t.value(b);
  return t.push(std::move(out), {a, b}, [a, b](Tape& t, std::uint32_t self) {
    const Matrix& g = g_of(t, self);
    if (t.requires_grad(a)) t.grad_ref(a).noalias() += g * t.value(b).transpose();
    if (t.requires_grad(b)) t.grad_ref(b).noalias() += t.value(a).transpose() * g;
  });
}

Var matmul_nt(Tape& t, Var a, Var b) {
  Matrix out = t.value(a) * t.value(b).transpose();
  return t.push(std::move(out), {a, b}, [a, b](Tape& t, std::uint32_t self) {
    const Matrix& g = g_of(t, self);
    if (t.requires_grad(a)) t.grad_ref(a).noalias() += g * t.value(b);
    if (t.requires_grad(b)) t.grad_ref(b).noalias() += g.transpose() * t.value(a);
  });
}

Var add(Tape& t, Var a, Var b) {
  Matrix out = t.value(a) + t.value(b);
  return t.push(std::move(out), {a, b}, [a, b](Tape& t, std::uint32_t self) {
    const Matrix& g = g_of(t, self);
    if (t.requires_grad(a)) t.grad_ref(a) += g;
    if (t.requires_grad(b)) t.grad_ref(b) += g;
  });
}

Var add_row(Tape& t, Var a, Var row) {
  Matrix out = t.value(a).rowwise() + t.value(row).row(0);
  return t.push(std::move(out), {a, row}, [a, row](Tape& t, std::uint32_t self) {
    const Matrix& g = g_of(t, self);
    if (t.requires_grad(a)) t.grad_ref(a) += g;
    if (t.requires_grad(row)) t.grad_ref(row) += g.colwise().sum();
  });
}

Var scale(Tape& t, Var a, double factor) {
  Matrix out = t.value(a) * factor;
  return t.push(std::move(out), {a}, [a, factor](Tape& t, std::uint32_t self) {
    t.grad_ref(a) += g_of(t, self) * factor;
  });
}

Var one_minus(Tape& t, Var a) {
  Matrix out = (1.0 - t.value(a).array()).matrix();
  return t.push(std::move(out), {a}, [a](Tape& t, std::uint32_t self) { t.grad_ref(a) -= g_of(t, self); });
}

Var sigmoid(Tape& t, Var a) {
  Matrix out = (1.0 / (1.0 + (-t.value(a).array()).exp())).matrix();
  return t.push(std::move(out), {a}, [a](Tape& t, std::uint32_t self) {
    const auto s = t.value(Var{self}).array();
    t.grad_ref(a).array() += g_of(t, self).array() * s * (1.0 - s);
  });
}

Var gelu(Tape& t, Var a) {
  const Matrix& x = t.value(a);
  Matrix out = x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2)); });
  return t.push(std::move(out), {a}, [a](Tape& t, std::uint32_t self) {
    const Matrix& x = t.value(a);
    const Matrix d = x.unaryExpr([](double v) {
      const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
      const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
      return cdf + v * pdf;
    });
    t.grad_ref(a).array() += g_of(t, self).array() * d.array();
  });
}

Var layer_norm(Tape& t, Var x, Var gamma, Var beta, double eps) {
  const Matrix& in = t.value(x);
  const auto rows = in.rows();
  const auto cols = in.cols();
  Matrix normalized(rows, cols);
  Eigen::VectorXd inv_std(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mean = in.row(r).mean();
    const double var = (in.row(r).array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    normalized.row(r) = (in.row(r).array() - mean) * inv_std(r);
  }
  Matrix out = (normalized.array().rowwise() * t.value(gamma).row(0).array()).rowwise() + t.value(beta).row(0).array();
  return t.push(std::move(out), {x, gamma, beta},
                [x, gamma, beta, normalized = std::move(normalized), inv_std = std::move(inv_std)](Tape& t, std::uint32_t self) {
                  const Matrix& g = g_of(t, self);
                  if (t.requires_grad(gamma)) t.grad_ref(gamma) += (g.array() * normalized.array()).colwise().sum().matrix();
                  if (t.requires_grad(beta)) t.grad_ref(beta) += g.colwise().sum();
                  if (t.requires_grad(x)) {
                    const Matrix dn = (g.array().rowwise() * t.value(gamma).row(0).array()).matrix();
                    Matrix& gx = t.grad_ref(x);
                    const double n = static_cast<double>(dn.cols());
                    for (Eigen::Index r = 0; r < dn.rows(); ++r) {
                      const double mean_dn = dn.row(r).sum() / n;
                      const double mean_dn_xhat = dn.row(r).dot(normalized.row(r)) / n;
                      gx.row(r).array() +=
                          inv_std(r) * (dn.row(r).array() - mean_dn - normalized.row(r).array() * mean_dn_xhat);
                    }
                  }
                });
}

Var gather_rows(Tape& t, std::span<const RowRef> rows) {
  if (rows.empty()) throw std::invalid_argument("gather_rows needs at least one row");
  const auto cols = t.value(rows[0].source).cols();
  Matrix out(static_cast<Eigen::Index>(rows.size()), cols);
  std::vector<Var> parents;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Matrix& src = t.value(rows[i].source);
    if (src.cols() != cols) throw std::invalid_argument("gather_rows column mismatch");
    out.row(static_cast<Eigen::Index>(i)) = src.row(rows[i].row);
    parents.push_back(rows[i].source);
  }
  std::vector<RowRef> refs(rows.begin(), rows.end());
  return t.push(std::move(out), parents, [refs = std::move(refs)](Tape& t, std::uint32_t self) {
    const Matrix& g = g_of(t, self);
    for (std::size_t i = 0; i < refs.size(); ++i) {
      if (t.requires_grad(refs[i].source)) {
        t.grad_ref(refs[i].source).row(refs[i].row) += g.row(static_cast<Eigen::Index>(i));
      }
    }
  });
}

Var mean_of(Tape& t, std::span<const Var> inputs) {
  Matrix out = t.value(inputs[0]);
  for (std::size_t i = 1; i < inputs.size(); ++i) out += t.value(inputs[i]);
  const double inv = 1.0 / static_cast<double>(inputs.size());
  out *= inv;
  std::vector<Var> ins(inputs.begin(), inputs.end());
  return t.push(std::move(out), inputs, [ins, inv](Tape& t, std::uint32_t self) {
    for (Var v : ins) {
      if (t.requires_grad(v)) t.grad_ref(v) += g_of(t, self) * inv;
    }
  });
}

Var dropout(Tape& t, Var a, double rate, std::mt19937_64* rng) {
  if (rate <= 0.0 || rng == nullptr) return a;
  std::bernoulli_distribution keep(1.0 - rate);
  const Matrix& in = t.value(a);
  Matrix mask(in.rows(), in.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(*rng) ? 1.0 / (1.0 - rate) : 0.0;
  Matrix out = (in.array() * mask.array()).matrix();
  return t.push(std::move(out), {a}, [a, mask = std::move(mask)](Tape& t, std::uint32_t self) {
    t.grad_ref(a).array() += g_of(t, self).array() * mask.array();
  });
}

Var role_linear(Tape& t, Var x, Var w_entity, Var w_relation, std::span<const std::uint8_t> relation_rows) {
  const Matrix& in = t.value(x);
  const Matrix& we = t.value(w_entity);
  const Matrix& wr = t.value(w_relation);
  if (static_cast<std::size_t>(in.rows()) != relation_rows.size()) throw std::invalid_argument("role mask size mismatch");
  Matrix out(in.rows(), we.cols());
  for (Eigen::Index r = 0; r < in.rows(); ++r) {
    out.row(r).noalias() = in.row(r) * (relation_rows[static_cast<std::size_t>(r)] ? wr : we);
  }
  std::vector<std::uint8_t> roles(relation_rows.begin(), relation_rows.end());
  return t.push(std::move(out), {x, w_entity, w_relation},
                [x, w_entity, w_relation, roles = std::move(roles)](Tape& t, std::uint32_t self) {
                  const Matrix& g = g_of(t, self);
                  const Matrix& in = t.value(x);
                  const bool gx = t.requires_grad(x);
                  for (Eigen::Index r = 0; r < g.rows(); ++r) {
                    const Var w = roles[static_cast<std::size_t>(r)] ? w_relation : w_entity;
                    if (t.requires_grad(w)) t.grad_ref(w).noalias() += in.row(r).transpose() * g.row(r);
                    if (gx) t.grad_ref(x).row(r).noalias() += g.row(r) * t.value(w).transpose();
                  }
                });
}

Var biased_attention(Tape& t, Var q, Var k, Var v, Var bq, Var bk, Var bv, const AttentionLayout& layout,
                     double dropout_rate, std::mt19937_64* rng, std::vector<double>* probabilities) {
  const Matrix& Q = t.value(q);
  const Matrix& K = t.value(k);
  const Matrix& V = t.value(v);
  const std::size_t L = layout.seq_len;
  const std::size_t H = layout.heads;
  const auto width = static_cast<std::size_t>(Q.cols());
  if (L == 0 || Q.rows() % static_cast<Eigen::Index>(L) != 0 || width % H != 0) {
    throw std::invalid_argument("attention shape mismatch");
  }
  const std::size_t dh = width / H;
  const std::size_t B = static_cast<std::size_t>(Q.rows()) / L;
  const double s = 1.0 / std::sqrt(static_cast<double>(dh));
  using Row = Eigen::Matrix<double, 1, Eigen::Dynamic>;
  const Row zero = Row::Zero(static_cast<Eigen::Index>(dh));
  auto bias = [&](Var table, std::uint8_t type) -> Row {
    return table.valid() ? Row(t.value(table).row(type)) : zero;
  };

  // alpha (after softmax) and the dropped-out weights actually applied.
  std::vector<double> alpha(B * H * L * L);
  std::vector<double> keep;
  if (dropout_rate > 0.0 && rng) keep.resize(alpha.size());
  std::bernoulli_distribution keep_dist(1.0 - std::min(dropout_rate, 0.999999));
  Matrix out = Matrix::Zero(Q.rows(), Q.cols());
  std::vector<double> logits(L);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t h = 0; h < H; ++h) {
      const auto col = static_cast<Eigen::Index>(h * dh);
      const auto w = static_cast<Eigen::Index>(dh);
      for (std::size_t i = 0; i < L; ++i) {
        const auto ri = static_cast<Eigen::Index>(b * L + i);
        double max_logit = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < L; ++j) {
          const auto rj = static_cast<Eigen::Index>(b * L + j);
          const std::uint8_t type = layout.pair_type[i * L + j];
          const Row qi = Q.block(ri, col, 1, w) + bias(bq, type);
          const Row kj = K.block(rj, col, 1, w) + bias(bk, type);
          logits[j] = qi.dot(kj) * s;
          max_logit = std::max(max_logit, logits[j]);
        }
        double total = 0.0;
        for (std::size_t j = 0; j < L; ++j) total += (logits[j] = std::exp(logits[j] - max_logit));
        double* a = &alpha[((b * H + h) * L + i) * L];
        for (std::size_t j = 0; j < L; ++j) {
          a[j] = logits[j] / total;
          double weight = a[j];
          if (!keep.empty()) {
            const double m = keep_dist(*rng) ? 1.0 / (1.0 - dropout_rate) : 0.0;
            keep[((b * H + h) * L + i) * L + j] = m;
            weight *= m;
          }
          const auto rj = static_cast<Eigen::Index>(b * L + j);
          out.block(ri, col, 1, w) += weight * (V.block(rj, col, 1, w) + bias(bv, layout.pair_type[i * L + j]));
        }
      }
    }
  }
  if (probabilities) *probabilities = alpha;

  return t.push(
      std::move(out), {q, k, v, bq, bk, bv},
      [q, k, v, bq, bk, bv, layout, alpha = std::move(alpha), keep = std::move(keep), B, dh, s](Tape& t,
                                                                                                  std::uint32_t self) {
        const Matrix& G = g_of(t, self);
        const Matrix& Q = t.value(q);
        const Matrix& K = t.value(k);
        const Matrix& V = t.value(v);
        const std::size_t L = layout.seq_len;
        const std::size_t H = layout.heads;
        const auto w = static_cast<Eigen::Index>(dh);
        using Row = Eigen::Matrix<double, 1, Eigen::Dynamic>;
        const Row zero = Row::Zero(w);
        auto bias = [&](Var table, std::uint8_t type) -> Row {
          return table.valid() ? Row(t.value(table).row(type)) : zero;
        };
        Matrix* gq = t.requires_grad(q) ? &t.grad_ref(q) : nullptr;
        Matrix* gk = t.requires_grad(k) ? &t.grad_ref(k) : nullptr;
        Matrix* gv = t.requires_grad(v) ? &t.grad_ref(v) : nullptr;
        Matrix* gbq = t.requires_grad(bq) ? &t.grad_ref(bq) : nullptr;
        Matrix* gbk = t.requires_grad(bk) ? &t.grad_ref(bk) : nullptr;
        Matrix* gbv = t.requires_grad(bv) ? &t.grad_ref(bv) : nullptr;
        std::vector<double> d_alpha(L);
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t h = 0; h < H; ++h) {
            const auto col = static_cast<Eigen::Index>(h * dh);
            for (std::size_t i = 0; i < L; ++i) {
              const auto ri = static_cast<Eigen::Index>(b * L + i);
              const std::size_t base = ((b * H + h) * L + i) * L;
              const Row go = G.block(ri, col, 1, w);
              double weighted = 0.0;
              for (std::size_t j = 0; j < L; ++j) {
                const auto rj = static_cast<Eigen::Index>(b * L + j);
                const std::uint8_t type = layout.pair_type[i * L + j];
                const double m = keep.empty() ? 1.0 : keep[base + j];
                const double applied = alpha[base + j] * m;
                const Row vj = V.block(rj, col, 1, w) + bias(bv, type);
                d_alpha[j] = go.dot(vj) * m;
                weighted += alpha[base + j] * d_alpha[j];
                if (gv) gv->block(rj, col, 1, w) += applied * go;
                if (gbv) gbv->row(type) += applied * go;
              }
              for (std::size_t j = 0; j < L; ++j) {
                const double dm = alpha[base + j] * (d_alpha[j] - weighted) * s;
                if (dm == 0.0) continue;
                const auto rj = static_cast<Eigen::Index>(b * L + j);
                const std::uint8_t type = layout.pair_type[i * L + j];
                const Row qi = Q.block(ri, col, 1, w) + bias(bq, type);
                const Row kj = K.block(rj, col, 1, w) + bias(bk, type);
                if (gq) gq->block(ri, col, 1, w) += dm * kj;
                if (gbq) gbq->row(type) += dm * kj;
                if (gk) gk->block(rj, col, 1, w) += dm * qi;
                if (gbk) gbk->row(type) += dm * qi;
              }
            }
          }
        }
      });
}

Var smoothed_cross_entropy(Tape& t, Var logits, std::span<const std::uint32_t> targets, double eps, double factor) {
  const Matrix& z = t.value(logits);
  const auto rows = z.rows();
  const auto classes = z.cols();
  if (static_cast<std::size_t>(rows) != targets.size()) throw std::invalid_argument("one target per row required");
  const double off = classes > 1 ? eps / static_cast<double>(classes - 1) : 0.0;
  const double on = classes > 1 ? 1.0 - eps : 1.0;
  Matrix probs(rows, classes);
  double total = 0.0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double max_z = z.row(r).maxCoeff();
    const double log_norm = max_z + std::log((z.row(r).array() - max_z).exp().sum());
    for (Eigen::Index c = 0; c < classes; ++c) {
      const double log_p = z(r, c) - log_norm;
      probs(r, c) = std::exp(log_p);
      const double y = c == static_cast<Eigen::Index>(targets[static_cast<std::size_t>(r)]) ? on : off;
      if (y != 0.0) total -= y * log_p;
    }
  }
  Matrix out(1, 1);
  out(0, 0) = factor * total;
  std::vector<std::uint32_t> tg(targets.begin(), targets.end());
  return t.push(std::move(out), {logits},
                [logits, probs = std::move(probs), tg = std::move(tg), on, off, factor](Tape& t, std::uint32_t self) {
                  const double g = g_of(t, self)(0, 0) * factor;
                  Matrix& gz = t.grad_ref(logits);
                  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
                    for (Eigen::Index c = 0; c < probs.cols(); ++c) {
                      const double y = c == static_cast<Eigen::Index>(tg[static_cast<std::size_t>(r)]) ? on : off;
                      gz(r, c) += g * (probs(r, c) - y);
                    }
                  }
                });
}

}  // namespace nqe::ad
