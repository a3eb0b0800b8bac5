#include "nqe/fuzzy_logic.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "nqe/errors.hpp"

namespace nqe {

FuzzyVec::FuzzyVec(std::vector<double> values) : values_(std::move(values)) {
  for (double v : values_) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::domain_error("fuzzy component outside [0,1]: " + std::to_string(v));
  }
}

FuzzyVec FuzzyVec::constant(std::size_t dim, double value) { return FuzzyVec(std::vector<double>(dim, value)); }

std::string_view to_string(LogicKind kind) {
  switch (kind) {
    case LogicKind::product: return "product";
    case LogicKind::godel: return "godel";
    case LogicKind::lukasiewicz: return "lukasiewicz";
  }
  return "?";
}

LogicKind parse_logic_kind(std::string_view text) {
  if (text == "product") return LogicKind::product;
  if (text == "godel" || text == "goedel") return LogicKind::godel;
  if (text == "lukasiewicz") return LogicKind::lukasiewicz;
  throw DataError("unknown logic kind '" + std::string(text) + "'");
}

double conj_scalar(LogicKind kind, std::span<const double> xs) {
  double acc = xs[0];
  for (std::size_t i = 1; i < xs.size(); ++i) {
    switch (kind) {
      case LogicKind::product: acc *= xs[i]; break;
      case LogicKind::godel: acc = std::min(acc, xs[i]); break;
      case LogicKind::lukasiewicz: acc = std::max(0.0, acc + xs[i] - 1.0); break;
    }
  }
  return acc;
}

double disj_scalar(LogicKind kind, std::span<const double> xs) {
  if (kind == LogicKind::product) {
    double complement = 1.0;
    for (double x : xs) complement *= 1.0 - x;
    return 1.0 - complement;
  }
  double acc = xs[0];
  for (std::size_t i = 1; i < xs.size(); ++i) {
    acc = kind == LogicKind::godel ? std::max(acc, xs[i]) : std::min(1.0, acc + xs[i]);
  }
  return acc;
}

namespace {

// Lukasiewicz folds: each stage is either linear in both operands (slope 1)
// or clamped (slope 0); a clamp kills the gradient of everything before it.
template <bool Conj>
void lukasiewicz_partials(std::span<const double> xs, std::span<double> grads) {
  const std::size_t m = xs.size();
  std::vector<bool> active(m, true);  // active[i]: stage i (i >= 1) is unclamped
  double acc = xs[0];
  for (std::size_t i = 1; i < m; ++i) {
    const double raw = Conj ? acc + xs[i] - 1.0 : acc + xs[i];
    active[i] = Conj ? raw > 0.0 : raw < 1.0;
    acc = Conj ? std::max(0.0, raw) : std::min(1.0, raw);
  }
  // d out / d x_i = product of stage slopes from max(i, 1) to m - 1.
  double chain = 1.0;
  for (std::size_t i = m; i-- > 0;) {
    if (i >= 1) {
      chain *= active[i] ? 1.0 : 0.0;
      grads[i] = chain;
    } else {
      grads[0] = chain;
    }
  }
}

}  // namespace

void conj_partials(LogicKind kind, std::span<const double> xs, std::span<double> grads) {
  const std::size_t m = xs.size();
  switch (kind) {
    case LogicKind::product:
      for (std::size_t i = 0; i < m; ++i) {
        double p = 1.0;
        for (std::size_t j = 0; j < m; ++j) {
          if (j != i) p *= xs[j];
        }
        grads[i] = p;
      }
      break;
    case LogicKind::godel: {
      const auto best = static_cast<std::size_t>(std::min_element(xs.begin(), xs.end()) - xs.begin());
      for (std::size_t i = 0; i < m; ++i) grads[i] = i == best ? 1.0 : 0.0;
      break;
    }
    case LogicKind::lukasiewicz:
      lukasiewicz_partials<true>(xs, grads);
      break;
  }
}

void disj_partials(LogicKind kind, std::span<const double> xs, std::span<double> grads) {
  const std::size_t m = xs.size();
  switch (kind) {
    case LogicKind::product:
      for (std::size_t i = 0; i < m; ++i) {
        double p = 1.0;
        for (std::size_t j = 0; j < m; ++j) {
          if (j != i) p *= 1.0 - xs[j];
        }
        grads[i] = p;
      }
      break;
    case LogicKind::godel: {
      const auto best = static_cast<std::size_t>(std::max_element(xs.begin(), xs.end()) - xs.begin());
      for (std::size_t i = 0; i < m; ++i) grads[i] = i == best ? 1.0 : 0.0;
      break;
    }
    case LogicKind::lukasiewicz:
      lukasiewicz_partials<false>(xs, grads);
      break;
  }
}

double product_disj_expansion(std::span<const double> xs) {
  // Sum over non-empty subsets S of (-1)^(|S|+1) * prod_{i in S} x_i.
  const std::size_t m = xs.size();
  if (m >= 31) throw std::invalid_argument("expansion limited to m < 31");
  double total = 0.0;
  for (std::uint32_t mask = 1; mask < (1u << m); ++mask) {
    double term = 1.0;
    int bits = 0;
    for (std::size_t i = 0; i < m; ++i) {
      if (mask & (1u << i)) {
        term *= xs[i];
        ++bits;
      }
    }
    total += (bits % 2 == 1) ? term : -term;
  }
  return total;
}

namespace {

template <class Kernel>
FuzzyVec apply(std::span<const FuzzyVec> inputs, Kernel&& kernel) {
  if (inputs.size() < 2) throw std::invalid_argument("logic operator needs at least two inputs");
  const std::size_t d = inputs[0].size();
  for (const auto& in : inputs) {
    if (in.size() != d) throw std::invalid_argument("fuzzy vector dimension mismatch");
  }
  std::vector<double> out(d);
  std::vector<double> column(inputs.size());
  for (std::size_t k = 0; k < d; ++k) {
    for (std::size_t i = 0; i < inputs.size(); ++i) column[i] = inputs[i][k];
    out[k] = std::clamp(kernel(std::span<const double>(column)), 0.0, 1.0);
  }
  return FuzzyVec(std::move(out));
}

}  // namespace

FuzzyVec conj(LogicKind kind, std::span<const FuzzyVec> inputs) {
  return apply(inputs, [kind](std::span<const double> xs) { return conj_scalar(kind, xs); });
}

FuzzyVec disj(LogicKind kind, std::span<const FuzzyVec> inputs) {
  return apply(inputs, [kind](std::span<const double> xs) { return disj_scalar(kind, xs); });
}

FuzzyVec neg(const FuzzyVec& q) {
  std::vector<double> out(q.size());
  for (std::size_t k = 0; k < q.size(); ++k) out[k] = 1.0 - q[k];
  return FuzzyVec(std::move(out));
}

}  // namespace nqe
