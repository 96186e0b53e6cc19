#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <set>

#include "pdelearn/errors.hpp"
#include "pdelearn/rational_net.hpp"
#include "pdelearn/term_library.hpp"
#include "test_support.hpp"

namespace pdelearn {
namespace {

using ad::Expr;
using ad::Matrix;
using testing::arch;

DerivativeOp dx(int n) { return DerivativeOp::along(1, n); }
DerivativeOp dt(int n) { return DerivativeOp::along(0, n); }
DerivativeOp dy(int n) { return DerivativeOp::along(2, n); }

TEST(ParseTerm, SingleU) {
  const LibraryTerm t = parse_term("U");
  ASSERT_EQ(t.factors().size(), 1u);
  EXPECT_TRUE(t.factors()[0].op.is_identity());
  EXPECT_EQ(t.degree(), 1);
}

TEST(ParseTerm, PowerTimesU) {
  const LibraryTerm t = parse_term("(D_x U)^2 * U");
  ASSERT_EQ(t.factors().size(), 2u);
  EXPECT_EQ(t.factors()[0], (TermFactor{DerivativeOp::identity(), 1}));
  EXPECT_EQ(t.factors()[1], (TermFactor{dx(1), 2}));
  EXPECT_EQ(t.degree(), 3);
}

TEST(ParseTerm, Commutativity) {
  EXPECT_EQ(parse_term("D_x^2 U * U"), parse_term("U * D_x^2 U"));
  EXPECT_EQ(parse_term("(D_x U)(U)(D_x U)"), parse_term("(D_x U)^2 * U"));
}

TEST(ParseTerm, Errors) {
  const auto position = [](const std::string& text) -> long {
    try {
      parse_term(text);
    } catch (const ParseError& e) {
      return static_cast<long>(e.position());
    }
    return -1;
  };
  EXPECT_EQ(position("D_q U"), 2);
  EXPECT_GE(position("U^0"), 2);
  EXPECT_GE(position("(U"), 2);
  EXPECT_GE(position("U +"), 2);
  EXPECT_GE(position(""), 0);
  EXPECT_GE(position("D_x^0 U"), 4);
}

TEST(ParseTerm, RenderRoundTripAndPermutations) {
  std::vector<LibraryTerm> all = testing::burgers_library().rhs;
  const auto wave = testing::wave_library().rhs;
  all.insert(all.end(), wave.begin(), wave.end());
  all.push_back(parse_term("D_t D_x^2 U * (D_y U)^3"));
  for (const auto& term : all) {
    EXPECT_EQ(parse_term(term.render()), term) << term.render();
    // Every ordering of the expanded factor list parses to the same term.
    std::vector<std::string> factors;
    for (const auto& f : term.factors()) {
      for (int i = 0; i < f.power; ++i) factors.push_back("(" + LibraryTerm::single(f.op).render_lhs() + ")");
    }
    std::sort(factors.begin(), factors.end());
    do {
      std::string text;
      for (const auto& f : factors) text += (text.empty() ? "" : " * ") + f;
      EXPECT_EQ(parse_term(text), term) << text;
    } while (std::next_permutation(factors.begin(), factors.end()));
  }
}

TEST(Render, Forms) {
  EXPECT_EQ(parse_term("U * D_x U").render(), "(D_x U)(U)");
  EXPECT_EQ(parse_term("D_t U").render_lhs(), "D_t U");
  EXPECT_EQ(parse_term("D_x^2 U").render(), "(D_x^2 U)");
  EXPECT_EQ(parse_term("U*U*D_x U").render(), "(D_x U)(U)^2");
}

std::size_t brute_force_count(std::size_t n, int max_degree) {
  std::set<std::vector<std::size_t>> seen;
  std::vector<std::size_t> idx;
  std::function<void(int)> rec = [&](int depth) {
    if (depth > 0) {
      auto s = idx;
      std::sort(s.begin(), s.end());
      seen.insert(s);
    }
    if (depth == max_degree) return;
    for (std::size_t i = 0; i < n; ++i) {
      idx.push_back(i);
      rec(depth + 1);
      idx.pop_back();
    }
  };
  rec(0);
  return seen.size();
}

TEST(Enumerate, SmallCase) {
  const std::vector<DerivativeOp> ops{DerivativeOp::identity(), dx(1)};
  const auto terms = enumerate_terms(ops, 2);
  const std::vector<LibraryTerm> expected{parse_term("U"), parse_term("D_x U"), parse_term("U^2"),
                                          parse_term("U D_x U"), parse_term("(D_x U)^2")};
  ASSERT_EQ(terms.size(), 5u);
  for (const auto& e : expected) EXPECT_NE(std::find(terms.begin(), terms.end(), e), terms.end()) << e.render();
}

TEST(Enumerate, BurgersClosureCount) {
  const std::vector<DerivativeOp> ops{DerivativeOp::identity(), dx(1), dx(2), dx(3)};
  const auto terms = enumerate_terms(ops, 4);
  EXPECT_EQ(terms.size(), 69u);
  const std::set<LibraryTerm> unique(terms.begin(), terms.end());
  EXPECT_EQ(unique.size(), terms.size());
  for (const auto& t : testing::burgers_library().rhs) EXPECT_TRUE(unique.contains(t)) << t.render();
}

TEST(Enumerate, CountsMatchBruteForce) {
  const std::vector<DerivativeOp> pool{DerivativeOp::identity(), dx(1), dx(2), dt(1), dy(1)};
  for (std::size_t n = 1; n <= 5; ++n) {
    const std::vector<DerivativeOp> ops(pool.begin(), pool.begin() + static_cast<long>(n));
    for (int j = 1; j <= 4; ++j) {
      EXPECT_EQ(enumerate_terms(ops, j).size(), brute_force_count(n, j)) << n << " ops, J=" << j;
    }
  }
}

void check_plan_invariants(const EvalPlan& plan, const Library& lib) {
  const auto needed = lib.derivative_ops();
  std::set<DerivativeOp> listed;
  int last_order = 0;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const auto& s = plan.steps[i];
    EXPECT_TRUE(listed.insert(s.op).second) << "duplicate " << s.op.render();
    EXPECT_GE(s.op.total_order(), last_order);
    last_order = s.op.total_order();
    if (s.op.is_identity()) {
      EXPECT_FALSE(s.predecessor.has_value());
      continue;
    }
    ASSERT_TRUE(s.predecessor.has_value());
    ASSERT_LT(*s.predecessor, i);
    const auto& pred = plan.steps[*s.predecessor].op;
    EXPECT_EQ(pred.total_order() + 1, s.op.total_order());
    EXPECT_EQ(pred, s.op.lowered(s.coordinate));
  }
  for (const auto& op : needed) EXPECT_TRUE(listed.contains(op)) << op.render();
  // Every step is needed or is a predecessor of a later step.
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const bool used = std::find(needed.begin(), needed.end(), plan.steps[i].op) != needed.end() ||
                      std::any_of(plan.steps.begin(), plan.steps.end(),
                                  [&](const PlanStep& s) { return s.predecessor == i; });
    EXPECT_TRUE(used) << plan.steps[i].op.render();
  }
}

TEST(Plan, Burgers) {
  const Library lib = testing::burgers_library();
  const EvalPlan plan = build_eval_plan(lib);
  EXPECT_EQ(plan.size(), 5u);
  for (const auto& op : {DerivativeOp::identity(), dx(1), dx(2), dx(3), dt(1)}) {
    EXPECT_TRUE(plan.index_of(op).has_value()) << op.render();
  }
  EXPECT_EQ(*plan.steps[*plan.index_of(dx(3))].predecessor, *plan.index_of(dx(2)));
  check_plan_invariants(plan, lib);
}

TEST(Plan, SingleU) {
  Library lib;
  lib.lhs = parse_term("D_t U");
  lib.rhs = {parse_term("U")};
  Library only_u = lib;
  only_u.lhs = parse_term("U^2");
  const EvalPlan plan = build_eval_plan(only_u);
  ASSERT_EQ(plan.size(), 1u);
  EXPECT_TRUE(plan.steps[0].op.is_identity());
}

TEST(Plan, Wave) {
  const Library lib = testing::wave_library();
  const EvalPlan plan = build_eval_plan(lib);
  EXPECT_EQ(plan.size(), 9u);
  ASSERT_TRUE(plan.index_of(dx(2)).has_value());
  EXPECT_EQ(*plan.steps[*plan.index_of(dx(2))].predecessor, *plan.index_of(dx(1)));
  check_plan_invariants(plan, lib);
}

TEST(Plan, MixedPartialsChain) {
  Library lib;
  lib.spatial_dim = 2;
  lib.lhs = parse_term("D_t U");
  lib.rhs = {parse_term("D_x D_y U"), parse_term("D_x^2 D_y U * U")};
  const EvalPlan plan = build_eval_plan(lib);
  check_plan_invariants(plan, lib);
}

TEST(Library, Validation) {
  Library lib;
  lib.lhs = parse_term("D_t U");
  EXPECT_THROW(lib.validate(), ConfigError);  // K = 0
  lib.rhs = {parse_term("U"), parse_term("U")};
  EXPECT_THROW(lib.validate(), ConfigError);
  lib.rhs = {parse_term("U"), parse_term("D_t U")};
  EXPECT_THROW(lib.validate(), ConfigError);
  lib.rhs = {parse_term("U"), parse_term("D_y U")};
  EXPECT_THROW(lib.validate(), ConfigError);  // spatial_dim 1
  lib.rhs = {parse_term("U"), parse_term("D_x^3 U")};
  lib.max_order = 2;
  EXPECT_THROW(lib.validate(), ConfigError);
  lib.max_order = 3;
  EXPECT_NO_THROW(lib.validate());
}

TEST(Library, FileRoundTrip) {
  const Library lib = testing::burgers_library();
  EXPECT_EQ(lib.size(), 17u);
  EXPECT_EQ(lib.spatial_dim, 1);
  const Library back = Library::parse(lib.to_text());
  EXPECT_EQ(back.lhs, lib.lhs);
  EXPECT_EQ(back.rhs, lib.rhs);
  EXPECT_EQ(back.spatial_dim, lib.spatial_dim);
  const Library wave = testing::wave_library();
  EXPECT_EQ(wave.size(), 23u);
  EXPECT_EQ(wave.spatial_dim, 2);
}

TEST(Library, ParseErrorsCarryPosition) {
  EXPECT_THROW(Library::parse("lhs = \"D_t U\"\nrhs = [\"U\", \"D_w U\"]\n"), ParseError);
  EXPECT_THROW(Library::parse("lhs = \"D_t U\"\n"), ConfigError);
}

std::vector<Expr> coords_for(const Matrix& pts) {
  std::vector<Expr> c;
  for (Eigen::Index j = 0; j < pts.cols(); ++j) c.push_back(Expr::leaf("c" + std::to_string(j), pts.col(j)));
  return c;
}

TEST(EvaluateTerms, UEqualsForward) {
  Network net(arch(2, 2, 4), 3);
  Library lib;
  lib.lhs = parse_term("D_t U");
  lib.rhs = {parse_term("U")};
  Matrix pts(3, 2);
  pts << 0.1, 0.2, 0.5, -0.3, 0.9, 0.0;
  const auto c = coords_for(pts);
  const TermValues tv = evaluate_terms(net, c, build_eval_plan(lib), lib);
  const Matrix u = ad::evaluate_matrix(tv.rhs[0]);
  const Matrix f = ad::evaluate_matrix(net.forward(c));
  EXPECT_EQ(u, f);
}

TEST(EvaluateTerms, LinearSurrogate) {
  Network net(arch(2, 1, 1), 1);
  for (const auto& leaf : net.parameters().leaves()) {
    if (leaf.name().find("act") == std::string::npos) leaf.assign(Matrix::Zero(leaf.value().rows(), leaf.value().cols()));
  }
  net.activation(0).set({0, 0, 1, 0}, {0, 0, 1});
  Matrix w0(2, 1);
  w0 << 0.0, 2.0;
  net.set_weight(0, w0);
  net.set_weight(1, Matrix::Constant(1, 1, 1.0));
  Library lib;
  lib.lhs = parse_term("D_t U");
  lib.rhs = {parse_term("(D_x U)^2 * U")};
  Matrix pts(4, 2);
  pts << 0.3, -1.0, 1.0, 0.0, 2.0, 0.25, 4.0, 3.0;
  const TermValues tv = evaluate_terms(net, coords_for(pts), build_eval_plan(lib), lib);
  const Matrix v = ad::evaluate_matrix(tv.rhs[0]);
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(v(i), 8.0 * pts(i, 1));
}

TEST(EvaluateTerms, MatchesRecomputationFromScratch) {
  Network net(arch(2, 3, 6), 12);
  const Library lib = testing::burgers_library();
  Matrix pts(5, 2);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (Eigen::Index i = 0; i < pts.size(); ++i) pts(i) = U(rng);
  const TermValues tv = evaluate_terms(net, coords_for(pts), build_eval_plan(lib), lib);
  for (std::size_t k = 0; k < lib.size(); ++k) {
    // Fresh graph per factor: no sharing with the plan.
    Matrix direct = Matrix::Ones(5, 1);
    for (const auto& f : lib.rhs[k].factors()) {
      const auto c = coords_for(pts);
      Expr e = net.forward(c);
      for (int axis = 0; axis < 2; ++axis) {
        for (int n = 0; n < f.op.orders[axis]; ++n) e = ad::differentiate(e, c[axis]);
      }
      direct = direct.cwiseProduct(ad::evaluate_matrix(e).array().pow(f.power).matrix());
    }
    const Matrix planned = ad::evaluate_matrix(tv.rhs[k]);
    for (int i = 0; i < 5; ++i) {
      EXPECT_NEAR(planned(i), direct(i), 1e-12 * std::max(1.0, std::abs(direct(i)))) << lib.rhs[k].render();
    }
  }
}

TEST(EvaluateTerms, CoordinateCountMismatch) {
  Network net(arch(2, 1, 2), 1);
  const Library lib = testing::burgers_library();
  Matrix pts(2, 3);
  pts.setZero();
  EXPECT_THROW(evaluate_terms(net, coords_for(pts), build_eval_plan(lib), lib), ConfigError);
}

TEST(Equation, RendersTableString) {
  Equation eq{parse_term("D_t U"), {{parse_term("D_x^2 U"), 0.0987}, {parse_term("D_x U * U"), -0.9704}}};
  EXPECT_EQ(render_equation(eq), "D_t U = 0.0987(D_x^2 U) - 0.9704(D_x U)(U)");
  Equation one{parse_term("D_t U"), {{parse_term("U"), 1.0}}};
  EXPECT_EQ(render_equation(one), "D_t U = 1.0000(U)");
  Equation neg{parse_term("D_x^2 U"), {{parse_term("D_y^2 U"), -0.5}}};
  EXPECT_EQ(render_equation(neg), "D_x^2 U = -0.5000(D_y^2 U)");
}

TEST(Equation, RenderParseRenderIsFixedPoint) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> U(-2.0, 2.0);
  const Library lib = testing::wave_library();
  for (int trial = 0; trial < 20; ++trial) {
    Equation eq{lib.lhs, {}};
    for (const auto& t : lib.rhs) {
      if (U(rng) > 0.5) eq.terms.emplace_back(t, U(rng));
    }
    if (eq.terms.empty()) eq.terms.emplace_back(lib.rhs[0], 0.25);
    const std::string once = render_equation(eq);
    const Equation back = parse_equation(once);
    EXPECT_EQ(back.lhs, eq.lhs);
    ASSERT_EQ(back.terms.size(), eq.terms.size());
    EXPECT_EQ(render_equation(back), once);
  }
}

}  // namespace
}  // namespace pdelearn
