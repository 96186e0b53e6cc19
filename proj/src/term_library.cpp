#include "pdelearn/term_library.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "pdelearn/errors.hpp"
#include "pdelearn/rational_net.hpp"
#include "pdelearn/settings.hpp"

namespace pdelearn {

// ------------------------------------------------------------- DerivativeOp

DerivativeOp DerivativeOp::along(int coordinate, int order) {
  if (coordinate < 0 || coordinate >= kMaxCoordinates) throw ConfigError("coordinate index out of range");
  if (order < 0) throw ConfigError("derivative order must be >= 0");
  DerivativeOp op;
  op.orders[static_cast<std::size_t>(coordinate)] = order;
  return op;
}

int DerivativeOp::total_order() const {
  int n = 0;
  for (int o : orders) n += o;
  return n;
}

int DerivativeOp::highest_coordinate() const {
  for (int c = kMaxCoordinates - 1; c >= 0; --c) {
    if (orders[static_cast<std::size_t>(c)] > 0) return c;
  }
  return -1;
}

DerivativeOp DerivativeOp::lowered(int coordinate) const {
  DerivativeOp op = *this;
  auto& o = op.orders[static_cast<std::size_t>(coordinate)];
  if (o == 0) throw ConfigError("cannot lower a zero derivative order");
  --o;
  return op;
}

std::string DerivativeOp::render() const {
  std::string out;
  for (std::size_t c = 0; c < orders.size(); ++c) {
    if (orders[c] == 0) continue;
    out += "D_";
    out += kCoordinateNames[c];
    if (orders[c] > 1) out += "^" + std::to_string(orders[c]);
    out += ' ';
  }
  return out + "U";
}

// -------------------------------------------------------------- LibraryTerm

LibraryTerm::LibraryTerm(std::vector<TermFactor> factors) {
  std::map<DerivativeOp, int> merged;
  for (const auto& f : factors) {
    if (f.power < 1) throw ConfigError("term factor powers must be >= 1");
    merged[f.op] += f.power;
  }
  if (merged.empty()) throw ConfigError("a library term needs at least one factor");
  for (const auto& [op, p] : merged) factors_.push_back({op, p});
}

LibraryTerm LibraryTerm::single(const DerivativeOp& op, int power) { return LibraryTerm({{op, power}}); }

int LibraryTerm::degree() const {
  int d = 0;
  for (const auto& f : factors_) d += f.power;
  return d;
}

int LibraryTerm::max_order() const {
  int m = 0;
  for (const auto& f : factors_) m = std::max(m, f.op.total_order());
  return m;
}

std::string LibraryTerm::render() const {
  std::string out;
  for (auto it = factors_.rbegin(); it != factors_.rend(); ++it) {
    out += "(" + it->op.render() + ")";
    if (it->power > 1) out += "^" + std::to_string(it->power);
  }
  return out;
}

std::string LibraryTerm::render_lhs() const {
  if (factors_.size() == 1 && factors_[0].power == 1) return factors_[0].op.render();
  return render();
}

// ------------------------------------------------------------------ parsing

namespace {

class TermParser {
 public:
  explicit TermParser(std::string_view text) : text_(text) {}

  std::size_t pos() const { return pos_; }
  bool done() {
    skip();
    return pos_ >= text_.size();
  }
  char peek() {
    skip();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }
  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError("term: " + msg + " in \"" + std::string(text_) + "\"", pos_);
  }

  // Factors up to end of input, ')' , '=' or (when `stop_at_sign`) '+'/'-'.
  std::vector<TermFactor> term(bool stop_at_sign) {
    std::vector<TermFactor> out;
    while (true) {
      const char c = peek();
      if (c == '\0' || c == ')' || c == '=') break;
      if (stop_at_sign && (c == '+' || c == '-')) break;
      if (c == '*') {
        if (out.empty()) fail("'*' before any factor");
        ++pos_;
      }
      auto f = factor();
      out.insert(out.end(), f.begin(), f.end());
    }
    if (out.empty()) fail("empty term");
    return out;
  }

  double number() {
    skip();
    double v = 0.0;
    const char* begin = text_.data() + pos_;
    const auto [ptr, ec] = std::from_chars(begin, text_.data() + text_.size(), v);
    if (ec != std::errc() || ptr == begin) fail("expected a coefficient");
    pos_ += static_cast<std::size_t>(ptr - begin);
    return v;
  }

 private:
  void skip() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  int exponent() {
    skip();
    const std::size_t start = pos_;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (start == pos_) fail("expected an integer exponent");
    int v = 0;
    std::from_chars(text_.data() + start, text_.data() + pos_, v);
    if (v == 0) {
      pos_ = start;
      fail("power must be >= 1");
    }
    return v;
  }

  std::vector<TermFactor> factor() {
    std::vector<TermFactor> out;
    const char c = peek();
    if (c == '(') {
      ++pos_;
      out = term(false);
      expect(')');
    } else if (c == 'U') {
      ++pos_;
      out.push_back({DerivativeOp::identity(), 1});
    } else if (c == 'D') {
      DerivativeOp op;
      while (peek() == 'D') {
        ++pos_;
        if (pos_ >= text_.size() || text_[pos_] != '_') fail("expected '_' after 'D'");
        ++pos_;
        if (pos_ >= text_.size()) fail("expected a variable");
        const char var = text_[pos_];
        const auto it = std::find(kCoordinateNames.begin(), kCoordinateNames.end(), var);
        if (it == kCoordinateNames.end()) fail(std::string("unknown variable '") + var + "'");
        ++pos_;
        int order = 1;
        if (peek() == '^') {
          ++pos_;
          order = exponent();
        }
        op.orders[static_cast<std::size_t>(it - kCoordinateNames.begin())] += order;
      }
      if (peek() != 'U') fail("expected 'U' after derivative operator");
      ++pos_;
      out.push_back({op, 1});
    } else {
      fail(std::string("unexpected character '") + c + "'");
    }
    if (peek() == '^') {
      ++pos_;
      const int p = exponent();
      for (auto& f : out) f.power *= p;
    }
    return out;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

LibraryTerm parse_term(std::string_view text) {
  TermParser p(text);
  auto factors = p.term(false);
  if (!p.done()) p.fail("unexpected trailing input");
  return LibraryTerm(std::move(factors));
}

std::vector<LibraryTerm> enumerate_terms(std::span<const DerivativeOp> derivs, int max_degree) {
  if (max_degree < 1) throw ConfigError("max degree must be >= 1");
  std::vector<DerivativeOp> ops(derivs.begin(), derivs.end());
  std::sort(ops.begin(), ops.end());
  ops.erase(std::unique(ops.begin(), ops.end()), ops.end());
  if (ops.empty()) throw ConfigError("need at least one derivative operator");

  std::vector<LibraryTerm> out;
  std::vector<std::size_t> idx;
  for (int degree = 1; degree <= max_degree; ++degree) {
    // nondecreasing index sequences of length `degree`, lexicographic
    idx.assign(static_cast<std::size_t>(degree), 0);
    while (true) {
      std::vector<TermFactor> factors;
      for (std::size_t i : idx) factors.push_back({ops[i], 1});
      out.emplace_back(std::move(factors));
      int k = degree - 1;
      while (k >= 0 && idx[static_cast<std::size_t>(k)] == ops.size() - 1) --k;
      if (k < 0) break;
      const std::size_t next = idx[static_cast<std::size_t>(k)] + 1;
      for (auto j = static_cast<std::size_t>(k); j < idx.size(); ++j) idx[j] = next;
    }
  }
  return out;
}

// ------------------------------------------------------------------ Library

void Library::validate() const {
  if (spatial_dim < 1 || spatial_dim > kMaxCoordinates - 1) {
    throw ConfigError("library spatial dimension must be in [1, 3]");
  }
  if (rhs.empty()) throw ConfigError("library needs at least one right-hand-side term");
  if (lhs.factors().empty()) throw ConfigError("library needs a left-hand-side term");
  std::set<LibraryTerm> seen;
  for (const auto& t : rhs) {
    if (t == lhs) throw ConfigError("right-hand-side term " + t.render() + " equals the left-hand side");
    if (!seen.insert(t).second) throw ConfigError("duplicate right-hand-side term " + t.render());
  }
  for (const auto& op : derivative_ops()) {
    if (op.highest_coordinate() > spatial_dim) {
      throw ConfigError("term uses " + op.render() + " beyond spatial dimension " + std::to_string(spatial_dim));
    }
    if (max_order > 0 && op.total_order() > max_order) {
      throw ConfigError(op.render() + " exceeds the maximum derivative order " + std::to_string(max_order));
    }
  }
}

std::vector<DerivativeOp> Library::derivative_ops() const {
  std::set<DerivativeOp> ops;
  for (const auto& f : lhs.factors()) ops.insert(f.op);
  for (const auto& t : rhs) {
    for (const auto& f : t.factors()) ops.insert(f.op);
  }
  return {ops.begin(), ops.end()};
}

Library Library::parse(std::string_view text) {
  const SettingsDocument doc = SettingsDocument::parse(text);
  const SettingsTable& root = doc.root();
  Library lib;
  lib.lhs = parse_term(root.get_string("lhs"));
  for (const auto& s : root.get_strings("rhs")) lib.rhs.push_back(parse_term(s));
  int highest = 1;
  for (const auto& op : lib.derivative_ops()) highest = std::max(highest, op.highest_coordinate());
  lib.spatial_dim = static_cast<int>(root.get_int("spatial_dim", highest));
  lib.max_order = static_cast<int>(root.get_int("max_order", 0));
  lib.validate();
  return lib;
}

Library Library::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read library file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string Library::to_text() const {
  std::string out = "lhs = \"" + lhs.render_lhs() + "\"\n";
  out += "spatial_dim = " + std::to_string(spatial_dim) + "\n";
  if (max_order > 0) out += "max_order = " + std::to_string(max_order) + "\n";
  out += "rhs = [\n";
  for (const auto& t : rhs) out += "  \"" + t.render() + "\",\n";
  return out + "]\n";
}

// ----------------------------------------------------------------- EvalPlan

std::optional<std::size_t> EvalPlan::index_of(const DerivativeOp& op) const {
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (steps[i].op == op) return i;
  }
  return std::nullopt;
}

EvalPlan build_eval_plan(const Library& lib) {
  std::set<DerivativeOp> needed;
  needed.insert(DerivativeOp::identity());
  for (const auto& op : lib.derivative_ops()) needed.insert(op);

  // Process in increasing total order so that lower-order operators already
  // chosen are preferred as predecessors.
  std::vector<DerivativeOp> pending(needed.begin(), needed.end());
  const auto by_order = [](const DerivativeOp& a, const DerivativeOp& b) {
    return a.total_order() != b.total_order() ? a.total_order() < b.total_order() : a < b;
  };
  std::map<DerivativeOp, int> chosen;  // op -> coordinate (-1 for identity)
  std::function<void(const DerivativeOp&)> include = [&](const DerivativeOp& op) {
    if (chosen.contains(op)) return;
    if (op.is_identity()) {
      chosen[op] = -1;
      return;
    }
    int coord = -1;
    for (int c = 0; c < kMaxCoordinates; ++c) {
      if (op.orders[static_cast<std::size_t>(c)] > 0 && chosen.contains(op.lowered(c))) {
        coord = c;
        break;
      }
    }
    if (coord < 0) {
      coord = op.highest_coordinate();
      include(op.lowered(coord));
    }
    chosen[op] = coord;
  };
  std::sort(pending.begin(), pending.end(), by_order);
  for (const auto& op : pending) include(op);

  std::vector<DerivativeOp> ordered;
  for (const auto& [op, c] : chosen) ordered.push_back(op);
  std::sort(ordered.begin(), ordered.end(), by_order);

  EvalPlan plan;
  for (const auto& op : ordered) {
    PlanStep step{op, std::nullopt, chosen[op]};
    if (step.coordinate >= 0) step.predecessor = plan.index_of(op.lowered(step.coordinate));
    plan.steps.push_back(step);
  }
  return plan;
}

// ------------------------------------------------------------ term values

ad::Expr assemble_term(const LibraryTerm& term, const EvalPlan& plan, std::span<const ad::Expr> derivatives) {
  ad::Expr out;
  for (const auto& f : term.factors()) {
    const auto idx = plan.index_of(f.op);
    if (!idx) throw ConfigError("evaluation plan does not cover " + f.op.render());
    const ad::Expr& d = derivatives[*idx];
    ad::Expr factor = f.power == 1 ? d : ad::pow(d, f.power);
    out = out.valid() ? out * factor : factor;
  }
  return out;
}

TermValues evaluate_terms(const Network& net, std::span<const ad::Expr> coordinates, const EvalPlan& plan,
                          const Library& lib) {
  if (static_cast<int>(coordinates.size()) != 1 + lib.spatial_dim) {
    throw ConfigError("library expects " + std::to_string(1 + lib.spatial_dim) + " coordinates, got " +
                      std::to_string(coordinates.size()));
  }
  TermValues out;
  out.derivatives.resize(plan.size());
  std::vector<std::unique_ptr<ad::Differentiator>> diff(coordinates.size());
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const PlanStep& step = plan.steps[i];
    if (!step.predecessor) {
      out.derivatives[i] = net.forward(coordinates);
      continue;
    }
    const auto c = static_cast<std::size_t>(step.coordinate);
    if (c >= coordinates.size()) throw ConfigError("plan differentiates along a missing coordinate");
    if (!diff[c]) diff[c] = std::make_unique<ad::Differentiator>(coordinates[c]);
    out.derivatives[i] = (*diff[c])(out.derivatives[*step.predecessor]);
  }
  out.lhs = assemble_term(lib.lhs, plan, out.derivatives);
  out.rhs.reserve(lib.rhs.size());
  for (const auto& t : lib.rhs) out.rhs.push_back(assemble_term(t, plan, out.derivatives));
  return out;
}

// ---------------------------------------------------------------- equations

std::string render_equation(const Equation& eq) {
  std::string out = eq.lhs.render_lhs() + " =";
  if (eq.terms.empty()) return out + " 0";
  char buf[64];
  for (std::size_t i = 0; i < eq.terms.size(); ++i) {
    const double c = eq.terms[i].second;
    std::snprintf(buf, sizeof(buf), "%.4f", std::abs(c));
    if (i == 0) {
      out += c < 0 ? " -" : " ";
    } else {
      out += c < 0 ? " - " : " + ";
    }
    out += buf + eq.terms[i].first.render();
  }
  return out;
}

Equation parse_equation(std::string_view text) {
  TermParser p(text);
  Equation eq;
  eq.lhs = LibraryTerm(p.term(false));
  p.expect('=');
  bool first = true;
  while (!p.done()) {
    double sign = 1.0;
    const char c = p.peek();
    if (c == '+' || c == '-') {
      p.expect(c);
      sign = c == '-' ? -1.0 : 1.0;
    } else if (!first) {
      p.fail("expected '+' or '-' between terms");
    }
    const double coeff = p.number();
    eq.terms.emplace_back(LibraryTerm(p.term(true)), sign * coeff);
    first = false;
  }
  return eq;
}

}  // namespace pdelearn
