#include "pdelearn/autodiff.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

#include "pdelearn/errors.hpp"

namespace pdelearn::ad {

struct Node {
  Op op = Op::Constant;
  std::uint64_t id = 0;
  std::vector<Expr> children;
  int exponent = 0;
  bool bias = false;
  std::string name;
  Matrix value;  // constant payload or leaf value
};

namespace {

std::atomic<std::uint64_t> next_id{1};

std::string describe(const Node& n) {
  std::ostringstream os;
  os << op_name(n.op) << " node #" << n.id;
  if (!n.name.empty()) os << " '" << n.name << "'";
  return os.str();
}

bool broadcastable(Eigen::Index a, Eigen::Index b) { return a == b || a == 1 || b == 1; }

void check_broadcast(const Node& n, const Matrix& a, const Matrix& b) {
  if (!broadcastable(a.rows(), b.rows()) || !broadcastable(a.cols(), b.cols())) {
    std::ostringstream os;
    os << "shape mismatch at " << describe(n) << ": " << a.rows() << "x" << a.cols() << " vs "
       << b.rows() << "x" << b.cols();
    throw ConfigError(os.str());
  }
}

// Expand `m` to rows x cols by replicating unit dimensions.
Matrix expand(const Matrix& m, Eigen::Index rows, Eigen::Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  if (m.size() == 1) return Matrix::Constant(rows, cols, m(0, 0));
  return m.replicate(rows / m.rows(), cols / m.cols());
}

template <class F>
Matrix binary(const Node& n, const Matrix& a, const Matrix& b, F f) {
  check_broadcast(n, a, b);
  if (a.rows() == b.rows() && a.cols() == b.cols()) {
    Matrix out(a.rows(), a.cols());
    out.array() = f(a.array(), b.array());
    return out;
  }
  const Eigen::Index rows = std::max(a.rows(), b.rows());
  const Eigen::Index cols = std::max(a.cols(), b.cols());
  if (a.size() == 1) {
    Matrix out(rows, cols);
    out.array() = f(Eigen::ArrayXXd::Constant(rows, cols, a(0, 0)), b.array());
    return out;
  }
  if (b.size() == 1) {
    Matrix out(rows, cols);
    out.array() = f(a.array(), Eigen::ArrayXXd::Constant(rows, cols, b(0, 0)));
    return out;
  }
  const Matrix ea = expand(a, rows, cols);
  const Matrix eb = expand(b, rows, cols);
  Matrix out(rows, cols);
  out.array() = f(ea.array(), eb.array());
  return out;
}

// Reduce a contribution shaped like the broadcast output down to `rows x cols`.
Matrix reduce_to(Matrix contribution, Eigen::Index rows, Eigen::Index cols) {
  if (contribution.rows() == rows && contribution.cols() == cols) return contribution;
  if (rows == 1 && cols == 1) return Matrix::Constant(1, 1, contribution.sum());
  if (rows == 1) contribution = contribution.colwise().sum().eval();
  if (cols == 1) contribution = contribution.rowwise().sum().eval();
  return contribution;
}

Matrix int_power(const Matrix& x, int n) {
  if (n == 0) return Matrix::Ones(x.rows(), x.cols());
  if (n == 1) return x;
  Matrix out(x.rows(), x.cols());
  if (n == 2) {
    out.array() = x.array().square();
    return out;
  }
  if (n == 3) {
    out.array() = x.array().square() * x.array();
    return out;
  }
  Eigen::ArrayXXd base = x.array();
  Eigen::ArrayXXd acc = Eigen::ArrayXXd::Ones(x.rows(), x.cols());
  int e = n;
  while (e > 0) {
    if (e & 1) acc *= base;
    e >>= 1;
    if (e > 0) base = base.square();
  }
  out.array() = acc;
  return out;
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::Constant: return "constant";
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::Sub: return "subtract";
    case Op::Neg: return "negate";
    case Op::Mul: return "multiply";
    case Op::Div: return "divide";
    case Op::Pow: return "integer-power";
    case Op::Affine: return "affine-map";
    case Op::Sum: return "reduction-sum";
  }
  return "?";
}

Expr make_node(Op op, std::vector<Expr> children, int exponent, bool bias) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->id = next_id.fetch_add(1, std::memory_order_relaxed);
  n->children = std::move(children);
  n->exponent = exponent;
  n->bias = bias;
  for (const auto& c : n->children) {
    if (!c.valid()) throw ConfigError(std::string("invalid operand for ") + op_name(op));
  }
  return Expr(std::move(n));
}

Expr Expr::constant(double value) { return constant(Matrix::Constant(1, 1, value)); }

Expr Expr::constant(Matrix value) {
  Expr e = make_node(Op::Constant, {}, 0, false);
  e.node_->value = std::move(value);
  return e;
}

Expr Expr::leaf(std::string name, Matrix value) {
  Expr e = make_node(Op::Leaf, {}, 0, false);
  e.node_->name = std::move(name);
  e.node_->value = std::move(value);
  return e;
}

Expr Expr::scalar_leaf(std::string name, double value) {
  return leaf(std::move(name), Matrix::Constant(1, 1, value));
}

Op Expr::op() const { return node_->op; }
std::uint64_t Expr::id() const { return node_->id; }
const std::string& Expr::name() const { return node_->name; }
std::span<const Expr> Expr::children() const { return node_->children; }
int Expr::exponent() const { return node_->exponent; }
bool Expr::has_bias() const { return node_->bias; }

const Matrix& Expr::constant_value() const {
  if (node_->op != Op::Constant) throw ConfigError("constant_value() on " + describe(*node_));
  return node_->value;
}

bool Expr::is_constant_scalar(double v) const {
  return node_ && node_->op == Op::Constant && node_->value.size() == 1 && node_->value(0, 0) == v;
}

const Matrix& Expr::value() const {
  if (node_->op != Op::Leaf && node_->op != Op::Constant) {
    throw ConfigError("value() requires a leaf or constant, got " + describe(*node_));
  }
  return node_->value;
}

void Expr::assign(Matrix value) const {
  if (node_->op != Op::Leaf) throw ConfigError("assign() on non-leaf " + describe(*node_));
  node_->value = std::move(value);
}

void Expr::assign(double value) const { assign(Matrix::Constant(1, 1, value)); }

double Expr::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ConfigError("scalar() on non-scalar " + describe(*node_));
  return v(0, 0);
}

Expr operator+(const Expr& a, const Expr& b) { return make_node(Op::Add, {a, b}, 0, false); }
Expr operator-(const Expr& a, const Expr& b) { return make_node(Op::Sub, {a, b}, 0, false); }
Expr operator-(const Expr& a) { return make_node(Op::Neg, {a}, 0, false); }
Expr operator*(const Expr& a, const Expr& b) { return make_node(Op::Mul, {a, b}, 0, false); }
Expr operator/(const Expr& a, const Expr& b) { return make_node(Op::Div, {a, b}, 0, false); }
Expr operator+(const Expr& a, double b) { return a + Expr::constant(b); }
Expr operator+(double a, const Expr& b) { return Expr::constant(a) + b; }
Expr operator-(const Expr& a, double b) { return a - Expr::constant(b); }
Expr operator-(double a, const Expr& b) { return Expr::constant(a) - b; }
Expr operator*(double a, const Expr& b) { return Expr::constant(a) * b; }
Expr operator*(const Expr& a, double b) { return a * Expr::constant(b); }
Expr operator/(const Expr& a, double b) { return a / Expr::constant(b); }
Expr operator/(double a, const Expr& b) { return Expr::constant(a) / b; }

Expr pow(const Expr& x, int n) {
  if (n < 0) throw ConfigError("integer-power exponent must be >= 0, got " + std::to_string(n));
  return make_node(Op::Pow, {x}, n, false);
}

Expr affine(std::span<const AffineBlock> blocks, const std::optional<Expr>& bias) {
  if (blocks.empty()) throw ConfigError("affine map needs at least one input block");
  std::vector<Expr> children;
  children.reserve(2 * blocks.size() + 1);
  for (const auto& b : blocks) {
    children.push_back(b.input);
    children.push_back(b.weight);
  }
  if (bias) children.push_back(*bias);
  return make_node(Op::Affine, std::move(children), 0, bias.has_value());
}

Expr affine(const Expr& input, const Expr& weight, const std::optional<Expr>& bias) {
  const AffineBlock block{input, weight};
  return affine(std::span<const AffineBlock>(&block, 1), bias);
}

Expr sum(const Expr& x) { return make_node(Op::Sum, {x}, 0, false); }

// ---------------------------------------------------------------- ParamSet

ParamSet::ParamSet(std::vector<Expr> leaves) {
  for (const auto& l : leaves) add(l);
}

void ParamSet::add(const Expr& leaf) {
  if (!leaf.valid() || leaf.op() != Op::Leaf) throw ConfigError("ParamSet entries must be leaves");
  if (index_.contains(leaf.get())) {
    throw ConfigError("leaf '" + leaf.name() + "' already in ParamSet");
  }
  index_.emplace(leaf.get(), leaves_.size());
  leaves_.push_back(leaf);
}

void ParamSet::append(const ParamSet& other) {
  for (const auto& l : other.leaves()) add(l);
}

bool ParamSet::contains(const Expr& leaf) const { return index_.contains(leaf.get()); }

std::size_t ParamSet::index_of(const Expr& leaf) const {
  auto it = index_.find(leaf.get());
  return it == index_.end() ? npos : it->second;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& l : leaves_) n += static_cast<std::size_t>(l.value().size());
  return n;
}

// ----------------------------------------------------------------- Program

Program::Program(std::vector<Expr> outputs) : outputs_(std::move(outputs)) {
  // Iterative post-order DFS; children before parents.
  std::vector<std::pair<const Expr*, std::size_t>> stack;
  std::unordered_map<const Node*, bool> seen;
  for (const auto& out : outputs_) {
    if (!out.valid()) throw ConfigError("Program output is not a valid node");
    if (seen.contains(out.get())) continue;
    stack.emplace_back(&out, 0);
    seen.emplace(out.get(), true);
    while (!stack.empty()) {
      auto& [e, next] = stack.back();
      auto kids = e->children();
      if (next < kids.size()) {
        const Expr* child = &kids[next++];
        if (!seen.contains(child->get())) {
          seen.emplace(child->get(), true);
          stack.emplace_back(child, 0);
        }
      } else {
        slot_.emplace(e->get(), order_.size());
        order_.push_back(*e);
        stack.pop_back();
      }
    }
  }
  values_.resize(order_.size());
}

std::size_t Program::slot(const Node* n) const {
  auto it = slot_.find(n);
  if (it == slot_.end()) throw ConfigError("node is not part of this program");
  return it->second;
}

void Program::run() {
  for (std::size_t i = 0; i < order_.size(); ++i) {
    const Node& n = *order_[i].get();
    const auto arg = [&](std::size_t k) -> const Matrix& { return values_[slot_.at(n.children[k].get())]; };
    Matrix& out = values_[i];
    switch (n.op) {
      case Op::Constant:
      case Op::Leaf:
        if (n.value.size() == 0) throw ConfigError("unassigned " + describe(n));
        out = n.value;
        break;
      case Op::Add:
        out = binary(n, arg(0), arg(1), [](const auto& a, const auto& b) { return a + b; });
        break;
      case Op::Sub:
        out = binary(n, arg(0), arg(1), [](const auto& a, const auto& b) { return a - b; });
        break;
      case Op::Neg:
        out = -arg(0);
        break;
      case Op::Mul:
        out = binary(n, arg(0), arg(1), [](const auto& a, const auto& b) { return a * b; });
        break;
      case Op::Div: {
        const Matrix& den = arg(1);
        if ((den.array() == 0.0).any()) throw DomainError("division by zero at " + describe(n));
        out = binary(n, arg(0), den, [](const auto& a, const auto& b) { return a / b; });
        break;
      }
      case Op::Pow:
        out = int_power(arg(0), n.exponent);
        break;
      case Op::Affine: {
        const std::size_t blocks = (n.children.size() - (n.bias ? 1 : 0)) / 2;
        for (std::size_t b = 0; b < blocks; ++b) {
          const Matrix& x = arg(2 * b);
          const Matrix& w = arg(2 * b + 1);
          if (x.cols() != w.rows()) {
            std::ostringstream os;
            os << "affine block " << b << " shape mismatch at " << describe(n) << ": " << x.rows()
               << "x" << x.cols() << " * " << w.rows() << "x" << w.cols();
            throw ConfigError(os.str());
          }
          if (b == 0) {
            out.noalias() = x * w;
          } else {
            if (out.rows() != x.rows() || out.cols() != w.cols()) {
              throw ConfigError("affine blocks disagree in output shape at " + describe(n));
            }
            out.noalias() += x * w;
          }
        }
        if (n.bias) {
          const Matrix& bias = arg(n.children.size() - 1);
          if (bias.rows() != 1 || bias.cols() != out.cols()) {
            throw ConfigError("affine bias must be 1 x n at " + describe(n));
          }
          out.rowwise() += bias.row(0);
        }
        break;
      }
      case Op::Sum:
        out = Matrix::Constant(1, 1, arg(0).sum());
        break;
    }
  }
}

const Matrix& Program::value(const Expr& e) const { return values_[slot(e.get())]; }

void Program::accumulate_gradient(const Expr& output, const ParamSet& params, GradientBlocks& accum,
                                  double seed) {
  const std::size_t root = slot(output.get());
  if (values_[root].size() != 1) throw ConfigError("gradient requires a 1x1 output");
  if (accum.size() != params.size()) accum.assign(params.size(), Matrix());

  // Which nodes lie on a path from a parameter leaf.
  std::vector<char> needs(order_.size(), 0);
  for (std::size_t i = 0; i <= root; ++i) {
    const Node& n = *order_[i].get();
    if (n.op == Op::Leaf) {
      needs[i] = params.contains(order_[i]) ? 1 : 0;
    } else {
      for (const auto& c : n.children) {
        if (needs[slot_.at(c.get())]) {
          needs[i] = 1;
          break;
        }
      }
    }
  }

  adjoint_.assign(order_.size(), Matrix());
  adjoint_[root] = Matrix::Constant(1, 1, seed);

  const auto push = [&](const Expr& child, Matrix contribution) {
    const std::size_t s = slot_.at(child.get());
    if (!needs[s]) return;
    const Matrix& v = values_[s];
    contribution = reduce_to(std::move(contribution), v.rows(), v.cols());
    if (adjoint_[s].size() == 0) {
      adjoint_[s] = std::move(contribution);
    } else {
      adjoint_[s] += contribution;
    }
  };

  for (std::size_t i = root + 1; i-- > 0;) {
    if (!needs[i] || adjoint_[i].size() == 0) continue;
    const Node& n = *order_[i].get();
    Matrix g = std::move(adjoint_[i]);
    adjoint_[i] = Matrix();
    const auto val = [&](std::size_t k) -> const Matrix& { return values_[slot_.at(n.children[k].get())]; };
    switch (n.op) {
      case Op::Constant:
        break;
      case Op::Leaf: {
        const std::size_t p = params.index_of(order_[i]);
        if (accum[p].size() == 0) {
          accum[p] = std::move(g);
        } else {
          accum[p] += g;
        }
        break;
      }
      case Op::Add:
        push(n.children[0], g);
        push(n.children[1], std::move(g));
        break;
      case Op::Sub:
        push(n.children[0], g);
        push(n.children[1], -g);
        break;
      case Op::Neg:
        push(n.children[0], -g);
        break;
      case Op::Mul:
        if (needs[slot_.at(n.children[0].get())]) {
          push(n.children[0], binary(n, g, val(1), [](const auto& a, const auto& b) { return a * b; }));
        }
        if (needs[slot_.at(n.children[1].get())]) {
          push(n.children[1], binary(n, g, val(0), [](const auto& a, const auto& b) { return a * b; }));
        }
        break;
      case Op::Div: {
        const Matrix& den = val(1);
        if (needs[slot_.at(n.children[0].get())]) {
          push(n.children[0], binary(n, g, den, [](const auto& a, const auto& b) { return a / b; }));
        }
        if (needs[slot_.at(n.children[1].get())]) {
          // d(a/b)/db = -(a/b)/b
          Matrix gq = binary(n, g, values_[i], [](const auto& a, const auto& b) { return a * b; });
          push(n.children[1], -binary(n, gq, den, [](const auto& a, const auto& b) { return a / b; }));
        }
        break;
      }
      case Op::Pow: {
        const int e = n.exponent;
        if (e == 0) break;
        const Matrix& x = val(0);
        if (e == 1) {
          push(n.children[0], std::move(g));
          break;
        }
        Matrix local = int_power(x, e - 1);
        local.array() *= static_cast<double>(e);
        push(n.children[0], binary(n, g, local, [](const auto& a, const auto& b) { return a * b; }));
        break;
      }
      case Op::Affine: {
        const std::size_t blocks = (n.children.size() - (n.bias ? 1 : 0)) / 2;
        for (std::size_t b = 0; b < blocks; ++b) {
          const Expr& x = n.children[2 * b];
          const Expr& w = n.children[2 * b + 1];
          if (needs[slot_.at(x.get())]) {
            Matrix gx;
            gx.noalias() = g * val(2 * b + 1).transpose();
            push(x, std::move(gx));
          }
          if (needs[slot_.at(w.get())]) {
            Matrix gw;
            gw.noalias() = val(2 * b).transpose() * g;
            push(w, std::move(gw));
          }
        }
        if (n.bias) push(n.children.back(), g.colwise().sum());
        break;
      }
      case Op::Sum: {
        const Matrix& x = val(0);
        push(n.children[0], Matrix::Constant(x.rows(), x.cols(), g(0, 0)));
        break;
      }
    }
  }
  adjoint_.clear();
}

Matrix evaluate_matrix(const Expr& node) {
  Program prog({node});
  prog.run();
  return prog.value(node);
}

double evaluate(const Expr& node) {
  const Matrix v = evaluate_matrix(node);
  if (v.size() != 1) throw ConfigError("evaluate() expects a 1x1 result; use evaluate_matrix()");
  return v(0, 0);
}

// ---------------------------------------------------------- Differentiator

Differentiator::Differentiator(Expr wrt) : wrt_(std::move(wrt)) {
  if (!wrt_.valid() || wrt_.op() != Op::Leaf) throw ConfigError("can only differentiate w.r.t. a leaf");
  // ones shaped like the leaf
  seed_ = pow(wrt_, 0);
}

Expr Differentiator::operator()(const Expr& node) {
  Expr d = derive(node);
  return d.valid() ? d : Expr::constant(0.0);
}

Expr Differentiator::derive(const Expr& node) {
  auto it = memo_.find(node.get());
  if (it != memo_.end()) return it->second;
  Expr d = rule(node);
  memo_.emplace(node.get(), d);
  return d;
}

namespace {

bool is_zero(const Expr& e) { return !e.valid(); }

Expr add_or(const Expr& a, const Expr& b) {
  if (is_zero(a)) return b;
  if (is_zero(b)) return a;
  return a + b;
}

}  // namespace

Expr Differentiator::rule(const Expr& node) {
  const auto kids = node.children();
  switch (node.op()) {
    case Op::Constant:
      return {};
    case Op::Leaf:
      return node == wrt_ ? seed_ : Expr{};
    case Op::Add:
      return add_or(derive(kids[0]), derive(kids[1]));
    case Op::Sub: {
      Expr da = derive(kids[0]);
      Expr db = derive(kids[1]);
      if (is_zero(db)) return da;
      if (is_zero(da)) return -db;
      return da - db;
    }
    case Op::Neg: {
      Expr da = derive(kids[0]);
      return is_zero(da) ? Expr{} : -da;
    }
    case Op::Mul: {
      Expr da = derive(kids[0]);
      Expr db = derive(kids[1]);
      Expr left = is_zero(da) ? Expr{} : da * kids[1];
      Expr right = is_zero(db) ? Expr{} : kids[0] * db;
      return add_or(left, right);
    }
    case Op::Div: {
      // d(a/b) = (da - (a/b) db) / b
      Expr da = derive(kids[0]);
      Expr db = derive(kids[1]);
      if (is_zero(da) && is_zero(db)) return {};
      if (is_zero(db)) return da / kids[1];
      Expr qdb = node * db;
      return (is_zero(da) ? -qdb : da - qdb) / kids[1];
    }
    case Op::Pow: {
      const int e = node.exponent();
      if (e == 0) return {};
      Expr dx = derive(kids[0]);
      if (is_zero(dx)) return {};
      if (e == 1) return dx;
      Expr local = e == 2 ? kids[0] : pow(kids[0], e - 1);
      return (static_cast<double>(e) * local) * dx;
    }
    case Op::Affine: {
      const bool bias = node.has_bias();
      const std::size_t blocks = (kids.size() - (bias ? 1 : 0)) / 2;
      std::vector<AffineBlock> out;
      for (std::size_t b = 0; b < blocks; ++b) {
        Expr dx = derive(kids[2 * b]);
        Expr dw = derive(kids[2 * b + 1]);
        if (!is_zero(dx)) out.push_back({dx, kids[2 * b + 1]});
        if (!is_zero(dw)) out.push_back({kids[2 * b], dw});
      }
      Expr dbias = bias ? derive(kids.back()) : Expr{};
      if (out.empty()) {
        if (is_zero(dbias)) return {};
        return pow(node, 0) * dbias;
      }
      if (is_zero(dbias)) return affine(out);
      return affine(out, dbias);
    }
    case Op::Sum: {
      Expr dx = derive(kids[0]);
      return is_zero(dx) ? Expr{} : sum(dx);
    }
  }
  return {};
}

Expr differentiate(const Expr& output, const Expr& wrt) {
  Differentiator d(wrt);
  return d(output);
}

GradientBlocks gradient_blocks(const Expr& scalar_output, const ParamSet& params) {
  GradientBlocks g(params.size());
  if (params.empty()) return g;
  Program prog({scalar_output});
  prog.run();
  prog.accumulate_gradient(scalar_output, params, g);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (g[i].size() == 0) g[i] = Matrix::Zero(params[i].value().rows(), params[i].value().cols());
  }
  return g;
}

std::vector<double> gradient(const Expr& scalar_output, const ParamSet& params) {
  const GradientBlocks blocks = gradient_blocks(scalar_output, params);
  std::vector<double> flat;
  flat.reserve(params.scalar_count());
  for (const auto& b : blocks) flat.insert(flat.end(), b.data(), b.data() + b.size());
  return flat;
}

}  // namespace pdelearn::ad
