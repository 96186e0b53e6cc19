#pragma once

// Derivative operators, monomial library terms, term parsing/rendering and
// the derivative evaluation plan.
//
// Term grammar (whitespace between tokens is ignored):
//   term    := factor ( ['*'] factor )*
//   factor  := primary [ '^' int ]
//   primary := 'U' | deriv+ 'U' | '(' term ')'
//   deriv   := 'D_' ('t'|'x'|'y'|'z') [ '^' int ]
// Rendering always parenthesises factors, e.g. "(D_x U)^2(U)".

#include <array>
#include <compare>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pdelearn/autodiff.hpp"

namespace pdelearn {

class Network;

inline constexpr int kMaxCoordinates = 4;  // t, x, y, z
inline constexpr std::array<char, kMaxCoordinates> kCoordinateNames{'t', 'x', 'y', 'z'};

/// Partial derivative multi-index (order in t, x, y, z). Zero is the identity.
struct DerivativeOp {
  std::array<int, kMaxCoordinates> orders{};

  static DerivativeOp identity() { return {}; }
  static DerivativeOp along(int coordinate, int order);

  int total_order() const;
  bool is_identity() const { return total_order() == 0; }
  /// Largest coordinate index with a nonzero order, or -1 for the identity.
  int highest_coordinate() const;
  DerivativeOp lowered(int coordinate) const;

  /// "U", "D_x U", "D_x^2 U", "D_t D_x^2 U".
  std::string render() const;

  auto operator<=>(const DerivativeOp&) const = default;
};

struct TermFactor {
  DerivativeOp op;
  int power = 1;
  auto operator<=>(const TermFactor&) const = default;
};

/// Monomial in U and its partial derivatives. Factors are kept sorted by
/// multi-index with repeated operators merged into a power.
class LibraryTerm {
 public:
  LibraryTerm() = default;
  explicit LibraryTerm(std::vector<TermFactor> factors);
  static LibraryTerm single(const DerivativeOp& op, int power = 1);

  const std::vector<TermFactor>& factors() const { return factors_; }
  int degree() const;
  int max_order() const;

  /// Parenthesised form, factors by descending multi-index: "(D_x U)(U)".
  std::string render() const;
  /// Bare form for equation left-hand sides: "D_t U" when the term is a
  /// single first-power factor, otherwise render().
  std::string render_lhs() const;

  auto operator<=>(const LibraryTerm&) const = default;

 private:
  std::vector<TermFactor> factors_;
};

LibraryTerm parse_term(std::string_view text);

/// All multisets of size 1..max_degree over `derivs`, ordered by degree and
/// then lexicographically.
std::vector<LibraryTerm> enumerate_terms(std::span<const DerivativeOp> derivs, int max_degree);

struct Library {
  LibraryTerm lhs;
  std::vector<LibraryTerm> rhs;
  int spatial_dim = 1;
  int max_order = 0;  // derived from the terms when 0

  void validate() const;
  std::size_t size() const { return rhs.size(); }
  /// Every operator appearing in lhs or rhs, sorted.
  std::vector<DerivativeOp> derivative_ops() const;

  static Library parse(std::string_view text);
  static Library load(const std::string& path);
  std::string to_text() const;
};

struct PlanStep {
  DerivativeOp op;
  std::optional<std::size_t> predecessor;  // index into steps
  int coordinate = -1;                      // differentiated coordinate
};

/// Derivative operators ordered by total order; each non-identity step is one
/// differentiation of an earlier step.
struct EvalPlan {
  std::vector<PlanStep> steps;

  std::size_t size() const { return steps.size(); }
  std::optional<std::size_t> index_of(const DerivativeOp& op) const;
};

EvalPlan build_eval_plan(const Library& lib);

struct TermValues {
  std::vector<ad::Expr> derivatives;  // aligned with EvalPlan::steps
  ad::Expr lhs;
  std::vector<ad::Expr> rhs;
};

/// Graph nodes for every plan derivative and library term at the given
/// coordinate columns.
TermValues evaluate_terms(const Network& net, std::span<const ad::Expr> coordinates, const EvalPlan& plan,
                          const Library& lib);

/// Product of the factor powers of a term, given plan-aligned derivatives.
ad::Expr assemble_term(const LibraryTerm& term, const EvalPlan& plan, std::span<const ad::Expr> derivatives);

/// A rendered equation "LHS = c1(term1) - c2(term2) ...".
struct Equation {
  LibraryTerm lhs;
  std::vector<std::pair<LibraryTerm, double>> terms;
};

/// Coefficients are printed to four decimals.
std::string render_equation(const Equation& eq);
Equation parse_equation(std::string_view text);

}  // namespace pdelearn
