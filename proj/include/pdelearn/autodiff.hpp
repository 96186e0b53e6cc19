#pragma once

// Computational-graph engine used for every derivative in the toolkit.
//
// Nodes hold 2-D values (Eigen matrices). Elementwise operations accept
// operands of identical shape, or a 1x1 operand which is broadcast. Rows are
// independent sample points everywhere in the toolkit, so differentiating a
// batched node with respect to a batched coordinate leaf yields the per-point
// derivative.
//
// `differentiate` rewrites a graph into a new graph (which can itself be
// differentiated again). `gradient` runs a numeric reverse sweep over a
// compiled `Program` and is what training uses for parameter gradients.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace pdelearn::ad {

using Matrix = Eigen::MatrixXd;

enum class Op : std::uint8_t {
  Constant,
  Leaf,
  Add,
  Sub,
  Neg,
  Mul,
  Div,
  Pow,
  Affine,
  Sum,
};

const char* op_name(Op op);

struct Node;

/// Shared handle to a graph vertex. Copying an Expr copies the handle, not
/// the subgraph.
class Expr {
 public:
  Expr() = default;

  static Expr constant(double value);
  static Expr constant(Matrix value);
  static Expr leaf(std::string name, Matrix value = Matrix());
  static Expr scalar_leaf(std::string name, double value);

  bool valid() const { return node_ != nullptr; }
  Op op() const;
  std::uint64_t id() const;
  const std::string& name() const;  // leaves only; empty otherwise
  std::span<const Expr> children() const;
  int exponent() const;  // Pow only
  bool has_bias() const;  // Affine only

  // Constant payload (Constant nodes).
  const Matrix& constant_value() const;
  bool is_constant_scalar(double v) const;

  // Leaf payload.
  const Matrix& value() const;
  void assign(Matrix value) const;
  void assign(double value) const;
  double scalar() const;

  const Node* get() const { return node_.get(); }
  friend bool operator==(const Expr& a, const Expr& b) { return a.node_ == b.node_; }

 private:
  friend struct Node;
  friend Expr make_node(Op, std::vector<Expr>, int, bool);
  explicit Expr(std::shared_ptr<Node> n) : node_(std::move(n)) {}
  std::shared_ptr<Node> node_;
};

Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr operator+(const Expr& a, double b);
Expr operator+(double a, const Expr& b);
Expr operator-(const Expr& a, double b);
Expr operator-(double a, const Expr& b);
Expr operator*(double a, const Expr& b);
Expr operator*(const Expr& a, double b);
Expr operator/(const Expr& a, double b);
Expr operator/(double a, const Expr& b);

/// x^n elementwise, n >= 0. pow(x, 0) evaluates to ones shaped like x.
Expr pow(const Expr& x, int n);

/// One input block of an affine map: input (rows x m) times weight (m x n).
struct AffineBlock {
  Expr input;
  Expr weight;
};

/// sum_i input_i * weight_i (+ bias broadcast over rows, bias is 1 x n).
Expr affine(std::span<const AffineBlock> blocks, const std::optional<Expr>& bias = std::nullopt);
Expr affine(const Expr& input, const Expr& weight, const std::optional<Expr>& bias = std::nullopt);

/// Sum of all entries, as a 1x1 node.
Expr sum(const Expr& x);

/// Ordered set of trainable leaves. Each leaf appears at most once.
class ParamSet {
 public:
  ParamSet() = default;
  explicit ParamSet(std::vector<Expr> leaves);

  void add(const Expr& leaf);
  void append(const ParamSet& other);
  bool contains(const Expr& leaf) const;
  std::size_t size() const { return leaves_.size(); }
  bool empty() const { return leaves_.empty(); }
  std::size_t scalar_count() const;
  const Expr& operator[](std::size_t i) const { return leaves_[i]; }
  std::span<const Expr> leaves() const { return leaves_; }
  /// Position of a leaf, or npos.
  std::size_t index_of(const Expr& leaf) const;

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  std::vector<Expr> leaves_;
  std::unordered_map<const Node*, std::size_t> index_;
};

/// Per-leaf gradient blocks aligned with a ParamSet.
using GradientBlocks = std::vector<Matrix>;

/// Topologically ordered evaluation of one or more outputs. Values are held
/// by the program, not by the nodes, so the same graph can be re-run after
/// leaf reassignment.
class Program {
 public:
  explicit Program(std::vector<Expr> outputs);

  /// Forward sweep. Throws DomainError on division by an exact zero.
  void run();

  const Matrix& value(const Expr& e) const;
  std::size_t size() const { return order_.size(); }

  /// Reverse sweep from a 1x1 output, adding d(output)/d(leaf) into `accum`
  /// (one block per ParamSet entry; empty blocks are initialised). Requires
  /// a prior run().
  void accumulate_gradient(const Expr& output, const ParamSet& params, GradientBlocks& accum,
                           double seed = 1.0);

 private:
  std::size_t slot(const Node* n) const;

  std::vector<Expr> outputs_;
  std::vector<Expr> order_;
  std::unordered_map<const Node*, std::size_t> slot_;
  std::vector<Matrix> values_;
  std::vector<Matrix> adjoint_;
};

/// Evaluate a node; returns the full value.
Matrix evaluate_matrix(const Expr& node);
/// Evaluate a node whose value is 1x1.
double evaluate(const Expr& node);

/// Builds derivative graphs with respect to one leaf. The memo persists
/// across calls, so differentiating a derivative graph again reuses the
/// derivative subgraphs already built for shared nodes.
class Differentiator {
 public:
  explicit Differentiator(Expr wrt);

  /// New graph for d(node)/d(wrt). Unreachable wrt gives the constant 0.
  Expr operator()(const Expr& node);
  const Expr& wrt() const { return wrt_; }

 private:
  // Structural zero is represented by an invalid Expr.
  Expr derive(const Expr& node);
  Expr rule(const Expr& node);

  Expr wrt_;
  Expr seed_;
  std::unordered_map<const Node*, Expr> memo_;
};

Expr differentiate(const Expr& output, const Expr& wrt);

/// d(output)/d(p) for every p, flattened column-major in ParamSet order.
std::vector<double> gradient(const Expr& scalar_output, const ParamSet& params);
GradientBlocks gradient_blocks(const Expr& scalar_output, const ParamSet& params);

}  // namespace pdelearn::ad
