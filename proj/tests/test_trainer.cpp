#include <gtest/gtest.h>

#include <cfloat>
#include <cmath>
#include <random>

#include "pdelearn/errors.hpp"
#include "pdelearn/trainer.hpp"
#include "test_support.hpp"

namespace pdelearn {
namespace {

using ad::Expr;
using ad::Matrix;

PointDataset linear_points(std::size_t n, double slope, std::uint64_t seed) {
  PointDataset d;
  d.domain = ProblemDomain{1.0, {{-1.0, 1.0}}};
  d.coords.resize(static_cast<Eigen::Index>(n), 2);
  d.values.resize(static_cast<Eigen::Index>(n));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> T(0.0, 1.0), X(-1.0, 1.0);
  for (Eigen::Index i = 0; i < d.coords.rows(); ++i) {
    d.coords(i, 0) = T(rng);
    d.coords(i, 1) = X(rng);
    d.values(i) = slope * d.coords(i, 1);
  }
  d.role = DatasetRole::Train;
  return d;
}

Library small_library() { return Library::parse("lhs = \"D_t U\"\nrhs = [\"U\", \"D_x U\", \"D_x^2 U\", \"(D_x U)(U)\"]\n"); }

TrainConfig small_config(std::size_t epochs) {
  TrainConfig cfg;
  cfg.library = small_library();
  DatasetSpec d;
  d.name = "line";
  d.train = linear_points(128, 2.0, 1);
  d.arch = testing::arch(2, 2, 6);
  d.network_seed = 3;
  d.collocation_seed = 4;
  cfg.datasets.push_back(d);
  cfg.burn_in.epochs = epochs;
  cfg.sparsify.epochs = epochs;
  cfg.fine_tune.epochs = epochs;
  cfg.n_random_coll = 64;
  cfg.chunk = 64;
  return cfg;
}

TEST(Adam, FirstStepIsLearningRateTimesSign) {
  Expr w = Expr::scalar_leaf("w", 1.0);
  Expr b = Expr::scalar_leaf("b", 1.0);
  ad::ParamSet ps({w, b});
  Adam adam;
  adam.reset(ps);
  adam.step(ps, {Matrix::Constant(1, 1, 2.5), Matrix::Constant(1, 1, -0.01)}, 0.1);
  EXPECT_NEAR(w.scalar(), 0.9, 1e-8);
  EXPECT_NEAR(b.scalar(), 1.1, 1e-5);
  EXPECT_EQ(adam.steps(), 1u);
}

TEST(Adam, ZeroGradientLeavesParameter) {
  Expr w = Expr::scalar_leaf("w", -0.25);
  ad::ParamSet ps({w});
  Adam adam;
  for (int i = 0; i < 5; ++i) adam.step(ps, {Matrix::Zero(1, 1)}, 0.1);
  EXPECT_EQ(w.scalar(), -0.25);
}

TEST(Adam, QuadraticConvergesToOracle) {
  Expr w = Expr::scalar_leaf("w", 0.0);
  ad::ParamSet ps({w});
  Adam adam;
  for (int i = 0; i < 200; ++i) adam.step(ps, {Matrix::Constant(1, 1, 2.0 * (w.scalar() - 3.0))}, 0.1);
  EXPECT_NEAR(w.scalar(), 3.0000530297387056, 1e-9);
  EXPECT_LT(std::abs(w.scalar() - 3.0), 0.05);
}

TEST(Adam, NonFiniteGradientThrowsBeforeUpdating) {
  Expr w = Expr::scalar_leaf("w", 1.0);
  Expr v = Expr::scalar_leaf("v", 2.0);
  ad::ParamSet ps({w, v});
  Adam adam;
  try {
    adam.step(ps, {Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, std::nan(""))}, 0.1);
    FAIL() << "no throw";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("v"), std::string::npos);
  }
  EXPECT_EQ(w.scalar(), 1.0);
  EXPECT_EQ(v.scalar(), 2.0);
}

TEST(Prune, Examples) {
  CoefficientVector xi(4);
  const std::vector<double> v{0.3, -1e-4, 4e-4, -6e-4};
  xi.set_values(v);
  EXPECT_EQ(prune(xi, 5e-4), 2u);
  EXPECT_EQ(xi.mask(), (std::vector<bool>{true, false, false, true}));
  EXPECT_EQ(xi.value(1), 0.0);
  EXPECT_EQ(prune(xi, 5e-4), 0u);
  xi.set_value(0, 1e-6);
  EXPECT_EQ(prune(xi, 5e-4), 1u);
  EXPECT_THROW(prune(xi, 1.0), EmptyPdeError);
  EXPECT_THROW(prune(xi, 0.0), ConfigError);
}

TEST(Prune, ThresholdAboveFloatRoundoff) {
  EXPECT_NEAR(std::sqrt(double(FLT_EPSILON)), 3.4527e-4, 1e-8);
  EXPECT_GT(TrainConfig{}.prune_threshold, std::sqrt(double(FLT_EPSILON)));
}

TEST(Phase, Validation) {
  PhaseConfig p = PhaseConfig::defaults(PhaseKind::BurnIn);
  EXPECT_NO_THROW(p.validate());
  p.weights.lp = 1e-4;
  EXPECT_THROW(p.validate(), ConfigError);
  PhaseConfig s = PhaseConfig::defaults(PhaseKind::Sparsification);
  EXPECT_EQ(s.weights.lp, 1e-4);
  s.weights.lp = 0.0;
  EXPECT_THROW(s.validate(), ConfigError);
  PhaseConfig f = PhaseConfig::defaults(PhaseKind::FineTune);
  f.lr = 0.0;
  EXPECT_THROW(f.validate(), ConfigError);
}

TEST(TrainConfig, ReportsEveryProblem) {
  TrainConfig cfg = small_config(1);
  cfg.p = 3.0;
  cfg.chunk = 0;
  cfg.burn_in.weights.lp = 1.0;
  cfg.datasets[0].arch.input_dim = 3;
  const auto problems = cfg.problems();
  EXPECT_EQ(problems.size(), 4u);
  try {
    cfg.validate();
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("p must"), std::string::npos);
    EXPECT_NE(msg.find("chunk"), std::string::npos);
    EXPECT_NE(msg.find("w_lp"), std::string::npos);
    EXPECT_NE(msg.find("input dimension"), std::string::npos);
  }
  TrainConfig none = small_config(1);
  none.datasets.clear();
  EXPECT_THROW(none.validate(), ConfigError);
}

TEST(BurnIn, DataLossDecreasesOnLinearTarget) {
  TrainConfig cfg = small_config(50);
  TrainState state(cfg);
  EXPECT_EQ(state.run_phase(cfg.burn_in), 50u);
  const auto& h = state.history();
  ASSERT_EQ(h.size(), 50u);
  int decreasing = 0;
  for (std::size_t i = 1; i < h.size(); ++i) decreasing += h[i].losses.data[0] < h[i - 1].losses.data[0];
  EXPECT_GE(decreasing, 45);
  EXPECT_LT(h.back().losses.data[0], h.front().losses.data[0]);
  for (const auto& r : h) EXPECT_EQ(r.losses.weights.lp, 0.0);
}

TEST(FineTune, StopsWhenTestLossRisesAndTrainFalls) {
  TrainConfig cfg = small_config(1000);
  cfg.datasets[0].test = linear_points(64, -2.0, 9);
  cfg.datasets[0].test.role = DatasetRole::Test;
  cfg.fine_tune.stop.patience = 10;
  cfg.fine_tune.stop.lp_tolerance = 0.0;
  TrainState state(cfg);
  const std::size_t run = state.run_phase(cfg.fine_tune);
  EXPECT_LT(run, 1000u);
  EXPECT_GE(run, 11u);
}

TEST(FineTune, StopsWhenLpMetricSettles) {
  TrainConfig cfg = small_config(1000);
  cfg.fine_tune.stop.lp_window = 5;
  cfg.fine_tune.stop.lp_tolerance = 0.5;
  TrainState state(cfg);
  // xi starts at zero, so the first window never counts as settled.
  const std::size_t run = state.run_phase(cfg.fine_tune);
  EXPECT_GT(run, 6u);
  EXPECT_LT(run, 50u);
  // Burn-in and sparsification never stop early.
  TrainState other(cfg);
  PhaseConfig b = cfg.burn_in;
  b.epochs = 20;
  b.stop = cfg.fine_tune.stop;
  EXPECT_EQ(other.run_phase(b), 20u);
}

TEST(Train, DeterministicAndPruneMonotone) {
  const TrainConfig cfg = small_config(15);
  const TrainResult a = train(cfg);
  const TrainResult b = train(cfg);
  EXPECT_EQ(a.xi, b.xi);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) EXPECT_EQ(a.history[i].losses.total(), b.history[i].losses.total());
  for (std::size_t i = 1; i < a.history.size(); ++i) {
    for (std::size_t k = 0; k < a.history[i].mask.size(); ++k) {
      if (!a.history[i - 1].mask[k]) {
        EXPECT_FALSE(a.history[i].mask[k]);
      }
    }
  }
  EXPECT_EQ(a.epochs_run.at("burn_in"), 15u);
}

TEST(Train, InactiveCoefficientsStayZero) {
  TrainConfig cfg = small_config(10);
  TrainState state(cfg);
  state.xi().set_values(std::vector<double>{0.5, 1e-5, 0.2, 0.3});
  EXPECT_EQ(state.prune(5e-4), 1u);
  state.run_phase(cfg.sparsify);
  EXPECT_EQ(state.xi().value(1), 0.0);
  EXPECT_FALSE(state.xi().active(1));
}

TEST(Train, IdenticalDatasetsDoubleTheCoefficientGradient) {
  TrainConfig one = small_config(1);
  TrainConfig two = one;
  two.datasets.push_back(two.datasets[0]);
  TrainState a(one), b(two);
  const std::vector<double> v{0.1, -0.2, 0.3, -0.4};
  a.xi().set_values(v);
  b.xi().set_values(v);
  const ObjectiveResult ra = a.epoch_objective({1.0, 1.0, 0.0});
  const ObjectiveResult rb = b.epoch_objective({1.0, 1.0, 0.0});
  const auto& pa = a.objective().params();
  const auto& pb = b.objective().params();
  for (std::size_t k = 0; k < v.size(); ++k) {
    const Matrix ga = ra.gradient[pa.index_of(a.xi().leaf(k))];
    const Matrix gb = rb.gradient[pb.index_of(b.xi().leaf(k))];
    EXPECT_EQ(gb(0, 0), 2.0 * ga(0, 0)) << k;
  }
}

TEST(Report, FormatsAndRoundTrip) {
  IdentifiedPDE pde;
  pde.lhs = parse_term("D_t U");
  pde.terms = {{parse_term("D_x^2 U"), 0.09874}, {parse_term("(D_x U)(U)"), -0.97036}};
  pde.provenance["seed"] = "1";
  EXPECT_EQ(report(pde), "D_t U = 0.0987(D_x^2 U) - 0.9704(D_x U)(U)");
  const IdentifiedPDE back = IdentifiedPDE::from_json(pde.to_json());
  EXPECT_EQ(back.text(), pde.text());
  EXPECT_EQ(back.terms[0].second, 0.09874);
  EXPECT_EQ(back.provenance.at("seed"), "1");
  const std::string dir = testing::scratch_dir("report");
  pde.save(dir + "/pde.json");
  EXPECT_EQ(IdentifiedPDE::load(dir + "/pde.json").terms, pde.terms);
  EXPECT_THROW(IdentifiedPDE::from_json("[1, 2]"), ParseError);
  IdentifiedPDE empty;
  empty.lhs = pde.lhs;
  EXPECT_THROW(report(empty), EmptyPdeError);
}

TEST(Train, WritesArtifacts) {
  TrainConfig cfg = small_config(5);
  cfg.output_dir = testing::scratch_dir("artifacts");
  cfg.emit_plot_data = true;
  train(cfg);
  namespace fs = std::filesystem;
  for (const char* f : {"loss_history.csv", "xi_history.csv", "identified_pde.json", "identified_pde.txt",
                        "network_0_burn_in.json", "network_0_fine_tune.json", "plot_0.csv"}) {
    EXPECT_TRUE(fs::exists(fs::path(cfg.output_dir) / f)) << f;
  }
}

}  // namespace
}  // namespace pdelearn
