#pragma once

// Fully connected surrogate network with one trainable (3,2) rational
// activation per hidden layer.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pdelearn/autodiff.hpp"

namespace pdelearn {

/// Minimax (3,2) rational approximation of max(0, x) on [-1, 1], produced by
/// tools/oracles/fit_ramp_rational.py. Denominator constant term is 1.
struct RampApproximation {
  static constexpr std::array<double, 4> numerator{1.1914858983147432, 1.5957424316546363,
                                                   0.49999999999999101, 0.021844417692519207};
  static constexpr std::array<double, 3> denominator{2.3829717966294734, 0.0, 1.0};
  /// Max |r(x) - max(0,x)| over the fit grid.
  static constexpr double max_error = 0.021844628782206665;
};

/// r(x) = (a3 x^3 + a2 x^2 + a1 x + a0) / (b2 x^2 + b1 x + b0), every
/// coefficient a trainable scalar leaf.
class RationalActivation {
 public:
  RationalActivation() = default;
  RationalActivation(const std::string& prefix, std::array<double, 4> numerator,
                     std::array<double, 3> denominator);

  static RationalActivation ramp(const std::string& prefix);

  /// Elementwise application inside a graph (Horner form).
  ad::Expr apply(const ad::Expr& z) const;

  /// Plain numeric evaluation. Throws DomainError on a zero denominator.
  double operator()(double x) const;

  std::array<double, 4> numerator() const;
  std::array<double, 3> denominator() const;
  void set(std::array<double, 4> numerator, std::array<double, 3> denominator);

  std::span<const ad::Expr, 4> numerator_leaves() const { return num_; }
  std::span<const ad::Expr, 3> denominator_leaves() const { return den_; }

 private:
  std::array<ad::Expr, 4> num_;  // a3, a2, a1, a0
  std::array<ad::Expr, 3> den_;  // b2, b1, b0
};

struct NetworkArchitecture {
  int input_dim = 2;  // 1 + spatial dimension
  int hidden_layers = 1;
  int units = 1;
  int output_dim = 1;

  void validate() const;
  /// Total trainable scalars.
  std::size_t parameter_count() const;
};

/// Glorot-uniform bound sqrt(6 / (fan_in + fan_out)).
double glorot_bound(int fan_in, int fan_out);

class Network {
 public:
  Network(const NetworkArchitecture& arch, std::uint64_t seed);
  // Parameters are graph leaves; copies would alias them. Use clone().
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  /// Independent network with identical architecture, seed and values.
  Network clone() const;

  const NetworkArchitecture& architecture() const { return arch_; }
  std::uint64_t seed() const { return seed_; }

  /// Output node (rows x 1) for coordinate columns, one Expr per input
  /// coordinate in (t, x, y, ...) order, each rows x 1.
  ad::Expr forward(std::span<const ad::Expr> coordinates) const;
  /// Convenience: output for a single point, coordinates as fresh leaves.
  double predict(std::span<const double> point) const;

  /// Every trainable leaf, in a stable order: per layer weights then bias,
  /// then the hidden-layer activation coefficients.
  const ad::ParamSet& parameters() const { return params_; }

  std::size_t layer_count() const { return weights_.size(); }
  /// Full weight matrix of layer l (fan_in x fan_out).
  ad::Matrix weight(std::size_t layer) const;
  void set_weight(std::size_t layer, const ad::Matrix& w);
  const ad::Expr& bias(std::size_t layer) const { return biases_[layer]; }
  RationalActivation& activation(std::size_t hidden) { return activations_[hidden]; }
  const RationalActivation& activation(std::size_t hidden) const { return activations_[hidden]; }

  /// Copy every parameter value from another network of the same shape.
  void copy_values_from(const Network& other);

  // Checkpoint I/O (JSON document, keys documented in the README).
  void save(const std::string& path) const;
  static Network load(const std::string& path);
  std::string to_json() const;
  static Network from_json(const std::string& text);

 private:
  void collect_parameters();

  NetworkArchitecture arch_;
  std::uint64_t seed_ = 0;
  // First layer weights are stored row-per-input so each coordinate column
  // enters as its own affine block; later layers hold one matrix leaf.
  std::vector<std::vector<ad::Expr>> weights_;
  std::vector<ad::Expr> biases_;
  std::vector<RationalActivation> activations_;
  ad::ParamSet params_;
};

}  // namespace pdelearn
