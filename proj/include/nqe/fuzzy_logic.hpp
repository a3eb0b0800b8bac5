#pragma once

#include <span>
#include <string_view>
#include <vector>

namespace nqe {

// A vector of membership degrees, each in [0, 1].
class FuzzyVec {
 public:
  FuzzyVec() = default;
  // Throws std::domain_error if a component lies outside [0, 1].
  explicit FuzzyVec(std::vector<double> values);
  static FuzzyVec constant(std::size_t dim, double value);

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const noexcept { return values_; }

  bool operator==(const FuzzyVec&) const = default;

 private:
  std::vector<double> values_;
};

enum class LogicKind { product, godel, lukasiewicz };

std::string_view to_string(LogicKind kind);
LogicKind parse_logic_kind(std::string_view text);

// m-ary element-wise operators, m >= 2. Product conjunction is the t-norm
// product, product disjunction 1 - prod(1 - q_i); Goedel uses min/max;
// Lukasiewicz left-folds max(0, a + b - 1) and min(1, a + b).
FuzzyVec conj(LogicKind kind, std::span<const FuzzyVec> inputs);
FuzzyVec disj(LogicKind kind, std::span<const FuzzyVec> inputs);
FuzzyVec neg(const FuzzyVec& q);

// Scalar kernels over one component of m inputs.
double conj_scalar(LogicKind kind, std::span<const double> xs);
double disj_scalar(LogicKind kind, std::span<const double> xs);

// Partial derivatives d out / d x_i of the scalar kernels, written to
// `grads` (same length as xs). Goedel routes the whole derivative to the
// attaining input with the lowest index; Lukasiewicz clamps have zero slope.
void conj_partials(LogicKind kind, std::span<const double> xs, std::span<double> grads);
void disj_partials(LogicKind kind, std::span<const double> xs, std::span<double> grads);

// Literal inclusion-exclusion expansion of the m-ary product disjunction,
// kept as an independent reference for the closed form.
double product_disj_expansion(std::span<const double> xs);

}  // namespace nqe
