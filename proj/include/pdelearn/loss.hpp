#pragma once

// Data, collocation and L^p losses, collocation-point management and the
// chunked objective used by training.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <span>
#include <vector>

#include "pdelearn/autodiff.hpp"
#include "pdelearn/data.hpp"
#include "pdelearn/term_library.hpp"

namespace pdelearn {

class Network;

/// a_k = 1 / max(delta, |xi_k|^(2-p)).
std::vector<double> lp_weights(std::span<const double> xi, double p, double delta);

/// Trainable coefficients xi with the active mask and IRLS weights.
class CoefficientVector {
 public:
  CoefficientVector(std::size_t size, double p = 0.1, double delta = 1e-8);

  std::size_t size() const { return leaves_.size(); }
  double p() const { return p_; }
  double delta() const { return delta_; }

  double value(std::size_t k) const { return leaves_[k].scalar(); }
  std::vector<double> values() const;
  void set_value(std::size_t k, double v);
  void set_values(std::span<const double> v);
  const ad::Expr& leaf(std::size_t k) const { return leaves_[k]; }

  bool active(std::size_t k) const { return mask_[k]; }
  const std::vector<bool>& mask() const { return mask_; }
  std::size_t active_count() const;
  /// Irreversible: zeroes xi_k and removes it from params().
  void deactivate(std::size_t k);
  ad::ParamSet params() const;

  /// Recompute a from the current xi.
  void update_weights();
  const std::vector<double>& weights() const { return weights_; }
  const ad::Expr& weight_leaf(std::size_t k) const { return weight_leaves_[k]; }

  /// sum over active k of |xi_k|^p.
  double lp_metric() const;

 private:
  double p_;
  double delta_;
  std::vector<ad::Expr> leaves_;
  std::vector<ad::Expr> weight_leaves_;
  std::vector<bool> mask_;
  std::vector<double> weights_;
};

/// Random and targeted collocation points for one domain.
struct CollocationState {
  ProblemDomain domain;
  std::size_t n_random = 0;
  Eigen::MatrixXd random;    // rows are points (t, x, ...)
  Eigen::MatrixXd targeted;  // starts empty
  Eigen::VectorXd residuals;  // |R| over random rows then targeted rows
  std::mt19937_64 rng;

  CollocationState(ProblemDomain domain, std::size_t n_random, std::uint64_t seed);

  void resample();
  void clear_targeted();
  Eigen::MatrixXd points() const;
  std::size_t size() const { return static_cast<std::size_t>(random.rows() + targeted.rows()); }
};

Eigen::MatrixXd sample_random_collocation(const ProblemDomain& domain, std::size_t n, std::mt19937_64& rng);
Eigen::MatrixXd sample_random_collocation(const ProblemDomain& domain, std::size_t n, std::uint64_t seed);

/// Indices i with |r_i| > mean(|r|) + 3 std(|r|), population std.
std::vector<std::size_t> select_targeted(std::span<const double> residual_magnitudes);

/// Replace the targeted set with the recorded points that qualify.
void update_targeted(CollocationState& colloc);

/// Coordinate leaves holding a fixed point matrix, one (N x 1) leaf per column.
std::vector<ad::Expr> coordinate_leaves(const Eigen::MatrixXd& points, const std::string& prefix = "c");

/// Mean squared error of the network against the dataset.
ad::Expr data_loss(const Network& net, const PointDataset& data);

/// f0 - sum over active k of xi_k f_k at every point (an N x 1 node).
ad::Expr pde_residual(const Network& net, const CoefficientVector& xi, const Library& lib, const EvalPlan& plan,
                      std::span<const ad::Expr> coordinates);
ad::Expr pde_residual(const TermValues& terms, const CoefficientVector& xi);

/// Mean squared residual over random and targeted points; records |R|.
ad::Expr collocation_loss(const Network& net, const CoefficientVector& xi, const Library& lib, const EvalPlan& plan,
                          CollocationState& colloc);

/// sum over active k of a_k xi_k^2, with a held constant.
ad::Expr lp_loss(const CoefficientVector& xi);

struct LossWeights {
  double data = 1.0;
  double coll = 1.0;
  double lp = 0.0;
};

struct LossBreakdown {
  std::vector<double> data;
  std::vector<double> coll;
  double lp = 0.0;
  LossWeights weights;

  double total() const;
};

struct LossTerms {
  std::vector<ad::Expr> data;
  std::vector<ad::Expr> coll;
  ad::Expr lp;
};

ad::Expr total_loss(const LossTerms& parts, const LossWeights& w);

/// One dataset's share of the objective.
struct ObjectiveDataset {
  const Network* net = nullptr;
  const PointDataset* train = nullptr;
  const PointDataset* test = nullptr;  // optional
  CollocationState* colloc = nullptr;
};

struct ObjectiveResult {
  LossBreakdown losses;
  ad::GradientBlocks gradient;  // aligned with Objective::params()
};

/// Chunked evaluation of the total loss and its gradient. Graphs are built
/// once per active set; point values stream through in chunks.
class Objective {
 public:
  Objective(std::vector<ObjectiveDataset> sets, const Library& lib, CoefficientVector& xi, std::size_t chunk = 256);

  /// Call after pruning changes the active set.
  void rebuild();
  const ad::ParamSet& params() const { return params_; }

  /// Losses at the current collocation points and IRLS weights. Records
  /// |R| into each collocation state.
  ObjectiveResult evaluate(const LossWeights& w, bool with_gradient);

  /// Mean squared error on each dataset's test points (NaN when absent).
  std::vector<double> test_data_loss();

  /// Network prediction at arbitrary points.
  Eigen::VectorXd predict(std::size_t dataset, const Eigen::MatrixXd& points);
  /// Residual at arbitrary points.
  Eigen::VectorXd residual(std::size_t dataset, const Eigen::MatrixXd& points);

 private:
  struct Graphs {
    std::vector<ad::Expr> data_coords;
    ad::Expr target;
    ad::Expr data_prediction;
    ad::Expr data_sum;
    std::vector<ad::Expr> coll_coords;
    ad::Expr residual;
    ad::Expr coll_sum;
    std::unique_ptr<ad::Program> data_prog;
    std::unique_ptr<ad::Program> coll_prog;
  };

  double data_pass(Graphs& g, const PointDataset& d, double scale, ad::GradientBlocks* grad);
  double coll_pass(Graphs& g, const Eigen::MatrixXd& points, double scale, ad::GradientBlocks* grad,
                   Eigen::VectorXd* magnitudes);

  std::vector<ObjectiveDataset> sets_;
  Library lib_;
  EvalPlan plan_;
  CoefficientVector* xi_;
  std::size_t chunk_;
  std::vector<Graphs> graphs_;
  ad::Expr lp_;
  std::unique_ptr<ad::Program> lp_prog_;
  ad::ParamSet params_;
};

/// Elementwise sum of gradient blocks (b may be empty blocks).
void add_gradient(ad::GradientBlocks& a, const ad::GradientBlocks& b);

}  // namespace pdelearn
