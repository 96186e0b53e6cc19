#include "pdelearn/loss.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "pdelearn/errors.hpp"
#include "pdelearn/rational_net.hpp"

namespace pdelearn {

using ad::Expr;
using ad::Matrix;

// --------------------------------------------------------------- xi vector

std::vector<double> lp_weights(std::span<const double> xi, double p, double delta) {
  if (!(p > 0.0 && p < 2.0)) throw ConfigError("p must lie in (0, 2)");
  if (!(delta > 0.0)) throw ConfigError("delta must be > 0");
  std::vector<double> a(xi.size());
  for (std::size_t k = 0; k < xi.size(); ++k) a[k] = 1.0 / std::max(delta, std::pow(std::abs(xi[k]), 2.0 - p));
  return a;
}

CoefficientVector::CoefficientVector(std::size_t size, double p, double delta) : p_(p), delta_(delta) {
  if (size == 0) throw ConfigError("coefficient vector needs at least one entry");
  if (!(p > 0.0 && p < 2.0)) throw ConfigError("p must lie in (0, 2)");
  if (!(delta > 0.0)) throw ConfigError("delta must be > 0");
  for (std::size_t k = 0; k < size; ++k) {
    leaves_.push_back(Expr::scalar_leaf("xi[" + std::to_string(k) + "]", 0.0));
    weight_leaves_.push_back(Expr::scalar_leaf("a[" + std::to_string(k) + "]", 1.0));
  }
  mask_.assign(size, true);
  weights_.assign(size, 1.0);
  update_weights();
}

std::vector<double> CoefficientVector::values() const {
  std::vector<double> v(size());
  for (std::size_t k = 0; k < size(); ++k) v[k] = value(k);
  return v;
}

void CoefficientVector::set_value(std::size_t k, double v) {
  if (!mask_.at(k) && v != 0.0) throw ConfigError("cannot set a pruned coefficient");
  leaves_[k].assign(v);
}

void CoefficientVector::set_values(std::span<const double> v) {
  if (v.size() != size()) throw ConfigError("coefficient count mismatch");
  for (std::size_t k = 0; k < v.size(); ++k) set_value(k, v[k]);
}

std::size_t CoefficientVector::active_count() const {
  return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), true));
}

void CoefficientVector::deactivate(std::size_t k) {
  mask_.at(k) = false;
  leaves_[k].assign(0.0);
}

ad::ParamSet CoefficientVector::params() const {
  ad::ParamSet ps;
  for (std::size_t k = 0; k < size(); ++k) {
    if (mask_[k]) ps.add(leaves_[k]);
  }
  return ps;
}

void CoefficientVector::update_weights() {
  const auto v = values();
  weights_ = lp_weights(v, p_, delta_);
  for (std::size_t k = 0; k < size(); ++k) weight_leaves_[k].assign(weights_[k]);
}

double CoefficientVector::lp_metric() const {
  double s = 0.0;
  for (std::size_t k = 0; k < size(); ++k) {
    if (mask_[k]) s += std::pow(std::abs(value(k)), p_);
  }
  return s;
}

// ------------------------------------------------------------- collocation

Eigen::MatrixXd sample_random_collocation(const ProblemDomain& domain, std::size_t n, std::mt19937_64& rng) {
  domain.validate();
  if (n == 0) throw ConfigError("need at least one collocation point");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto cols = static_cast<Eigen::Index>(domain.box.size() + 1);
  Eigen::MatrixXd pts(static_cast<Eigen::Index>(n), cols);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    pts(i, 0) = domain.t_end * (1.0 - unit(rng));  // (0, T]
    for (Eigen::Index c = 1; c < cols; ++c) {
      const auto& [lo, hi] = domain.box[static_cast<std::size_t>(c - 1)];
      pts(i, c) = lo + (hi - lo) * unit(rng);
    }
  }
  return pts;
}

Eigen::MatrixXd sample_random_collocation(const ProblemDomain& domain, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_random_collocation(domain, n, rng);
}

CollocationState::CollocationState(ProblemDomain d, std::size_t n, std::uint64_t seed)
    : domain(std::move(d)), n_random(n), rng(seed) {
  targeted.resize(0, static_cast<Eigen::Index>(domain.box.size() + 1));
  resample();
}

void CollocationState::resample() { random = sample_random_collocation(domain, n_random, rng); }

void CollocationState::clear_targeted() {
  targeted.resize(0, random.cols());
  residuals.resize(0);
}

Eigen::MatrixXd CollocationState::points() const {
  Eigen::MatrixXd all(random.rows() + targeted.rows(), random.cols());
  all.topRows(random.rows()) = random;
  if (targeted.rows() > 0) all.bottomRows(targeted.rows()) = targeted;
  return all;
}

std::vector<std::size_t> select_targeted(std::span<const double> r) {
  std::vector<std::size_t> out;
  if (r.empty()) return out;
  const double n = static_cast<double>(r.size());
  const double mean = std::accumulate(r.begin(), r.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : r) ss += (v - mean) * (v - mean);
  const double cut = mean + 3.0 * std::sqrt(ss / n);
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (r[i] > cut) out.push_back(i);
  }
  return out;
}

void update_targeted(CollocationState& colloc) {
  const Eigen::MatrixXd all = colloc.points();
  if (colloc.residuals.size() != all.rows()) {
    throw ConfigError("residuals were not recorded for the current collocation points");
  }
  const auto picked = select_targeted(std::span<const double>(colloc.residuals.data(), colloc.size()));
  Eigen::MatrixXd next(static_cast<Eigen::Index>(picked.size()), all.cols());
  for (std::size_t i = 0; i < picked.size(); ++i) {
    next.row(static_cast<Eigen::Index>(i)) = all.row(static_cast<Eigen::Index>(picked[i]));
  }
  colloc.targeted = std::move(next);
}

// ------------------------------------------------------------ loss graphs

std::vector<Expr> coordinate_leaves(const Eigen::MatrixXd& points, const std::string& prefix) {
  std::vector<Expr> out;
  for (Eigen::Index c = 0; c < points.cols(); ++c) {
    out.push_back(Expr::leaf(prefix + std::string(1, kCoordinateNames[static_cast<std::size_t>(c)]), points.col(c)));
  }
  return out;
}

Expr data_loss(const Network& net, const PointDataset& data) {
  if (data.empty()) throw ConfigError("data loss needs a nonempty dataset");
  const auto coords = coordinate_leaves(data.coords, "data.");
  const Expr diff = net.forward(coords) - Expr::constant(Matrix(data.values));
  return ad::sum(diff * diff) / static_cast<double>(data.size());
}

Expr pde_residual(const TermValues& terms, const CoefficientVector& xi) {
  if (terms.rhs.size() != xi.size()) throw ConfigError("coefficient count does not match the library");
  Expr rhs;
  for (std::size_t k = 0; k < xi.size(); ++k) {
    if (!xi.active(k)) continue;
    Expr term = xi.leaf(k) * terms.rhs[k];
    rhs = rhs.valid() ? rhs + term : term;
  }
  return rhs.valid() ? terms.lhs - rhs : terms.lhs;
}

Expr pde_residual(const Network& net, const CoefficientVector& xi, const Library& lib, const EvalPlan& plan,
                  std::span<const Expr> coordinates) {
  return pde_residual(evaluate_terms(net, coordinates, plan, lib), xi);
}

Expr collocation_loss(const Network& net, const CoefficientVector& xi, const Library& lib, const EvalPlan& plan,
                      CollocationState& colloc) {
  const Eigen::MatrixXd pts = colloc.points();
  if (pts.rows() == 0) throw ConfigError("collocation loss needs at least one point");
  const auto coords = coordinate_leaves(pts, "coll.");
  const Expr r = pde_residual(net, xi, lib, plan, coords);
  colloc.residuals = ad::evaluate_matrix(r).col(0).cwiseAbs();
  return ad::sum(r * r) / static_cast<double>(pts.rows());
}

Expr lp_loss(const CoefficientVector& xi) {
  Expr total;
  for (std::size_t k = 0; k < xi.size(); ++k) {
    if (!xi.active(k)) continue;
    Expr term = xi.weight_leaf(k) * ad::pow(xi.leaf(k), 2);
    total = total.valid() ? total + term : term;
  }
  return total.valid() ? total : Expr::constant(0.0);
}

double LossBreakdown::total() const {
  const double d = std::accumulate(data.begin(), data.end(), 0.0);
  const double c = std::accumulate(coll.begin(), coll.end(), 0.0);
  return weights.data * d + weights.coll * c + weights.lp * lp;
}

Expr total_loss(const LossTerms& parts, const LossWeights& w) {
  if (w.data < 0.0 || w.coll < 0.0 || w.lp < 0.0) throw ConfigError("loss weights must be >= 0");
  const auto add_all = [](const std::vector<Expr>& xs) {
    Expr s;
    for (const auto& x : xs) s = s.valid() ? s + x : x;
    return s.valid() ? s : Expr::constant(0.0);
  };
  Expr total = w.data * add_all(parts.data) + w.coll * add_all(parts.coll);
  if (parts.lp.valid()) total = total + w.lp * parts.lp;
  return total;
}

void add_gradient(ad::GradientBlocks& a, const ad::GradientBlocks& b) {
  if (a.empty()) a.resize(b.size());
  if (a.size() != b.size()) throw ConfigError("gradient block count mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (b[i].size() == 0) continue;
    if (a[i].size() == 0) {
      a[i] = b[i];
    } else {
      a[i] += b[i];
    }
  }
}

// --------------------------------------------------------------- Objective

Objective::Objective(std::vector<ObjectiveDataset> sets, const Library& lib, CoefficientVector& xi, std::size_t chunk)
    : sets_(std::move(sets)), lib_(lib), plan_(build_eval_plan(lib)), xi_(&xi), chunk_(chunk) {
  if (sets_.empty()) throw ConfigError("objective needs at least one dataset");
  if (chunk_ == 0) throw ConfigError("chunk size must be >= 1");
  if (xi.size() != lib.size()) throw ConfigError("coefficient count does not match the library");
  for (const auto& s : sets_) {
    if (!s.net || !s.train || !s.colloc) throw ConfigError("objective dataset is incomplete");
    if (s.train->empty()) throw ConfigError("training dataset is empty");
  }
  rebuild();
}

void Objective::rebuild() {
  graphs_.clear();
  params_ = ad::ParamSet();
  for (const auto& s : sets_) params_.append(s.net->parameters());
  params_.append(xi_->params());

  const auto cols = static_cast<Eigen::Index>(lib_.spatial_dim + 1);
  for (const auto& s : sets_) {
    Graphs g;
    for (Eigen::Index c = 0; c < cols; ++c) {
      const std::string name(1, kCoordinateNames[static_cast<std::size_t>(c)]);
      g.data_coords.push_back(Expr::leaf("data." + name));
      g.coll_coords.push_back(Expr::leaf("coll." + name));
    }
    g.target = Expr::leaf("target");
    g.data_prediction = s.net->forward(g.data_coords);
    const Expr diff = g.data_prediction - g.target;
    g.data_sum = ad::sum(diff * diff);
    g.residual = pde_residual(*s.net, *xi_, lib_, plan_, g.coll_coords);
    g.coll_sum = ad::sum(g.residual * g.residual);
    g.data_prog = std::make_unique<ad::Program>(std::vector<Expr>{g.data_sum, g.data_prediction});
    g.coll_prog = std::make_unique<ad::Program>(std::vector<Expr>{g.coll_sum, g.residual});
    graphs_.push_back(std::move(g));
  }
  lp_ = lp_loss(*xi_);
  lp_prog_ = std::make_unique<ad::Program>(std::vector<Expr>{lp_});
}

double Objective::data_pass(Graphs& g, const PointDataset& d, double scale, ad::GradientBlocks* grad) {
  const auto n = static_cast<Eigen::Index>(d.size());
  double total = 0.0;
  for (Eigen::Index start = 0; start < n; start += static_cast<Eigen::Index>(chunk_)) {
    const Eigen::Index m = std::min<Eigen::Index>(static_cast<Eigen::Index>(chunk_), n - start);
    for (std::size_t c = 0; c < g.data_coords.size(); ++c) {
      g.data_coords[c].assign(d.coords.block(start, static_cast<Eigen::Index>(c), m, 1));
    }
    g.target.assign(d.values.segment(start, m));
    g.data_prog->run();
    total += g.data_prog->value(g.data_sum)(0, 0);
    if (grad) g.data_prog->accumulate_gradient(g.data_sum, params_, *grad, scale);
  }
  return total;
}

double Objective::coll_pass(Graphs& g, const Eigen::MatrixXd& points, double scale, ad::GradientBlocks* grad,
                            Eigen::VectorXd* magnitudes) {
  const Eigen::Index n = points.rows();
  double total = 0.0;
  if (magnitudes) magnitudes->resize(n);
  for (Eigen::Index start = 0; start < n; start += static_cast<Eigen::Index>(chunk_)) {
    const Eigen::Index m = std::min<Eigen::Index>(static_cast<Eigen::Index>(chunk_), n - start);
    for (std::size_t c = 0; c < g.coll_coords.size(); ++c) {
      g.coll_coords[c].assign(points.block(start, static_cast<Eigen::Index>(c), m, 1));
    }
    g.coll_prog->run();
    total += g.coll_prog->value(g.coll_sum)(0, 0);
    if (magnitudes) magnitudes->segment(start, m) = g.coll_prog->value(g.residual).col(0).cwiseAbs();
    if (grad) g.coll_prog->accumulate_gradient(g.coll_sum, params_, *grad, scale);
  }
  return total;
}

ObjectiveResult Objective::evaluate(const LossWeights& w, bool with_gradient) {
  ObjectiveResult out;
  out.losses.weights = w;
  if (with_gradient) out.gradient.assign(params_.size(), Matrix());
  for (std::size_t i = 0; i < sets_.size(); ++i) {
    auto& s = sets_[i];
    auto& g = graphs_[i];
    // Each dataset's gradient is summed on its own before joining the total,
    // so identical datasets contribute bit-identical blocks.
    ad::GradientBlocks local;
    ad::GradientBlocks* gp = with_gradient ? &local : nullptr;
    if (with_gradient) local.assign(params_.size(), Matrix());
    const double nd = static_cast<double>(s.train->size());
    out.losses.data.push_back(data_pass(g, *s.train, w.data / nd, gp) / nd);
    const Eigen::MatrixXd pts = s.colloc->points();
    if (pts.rows() == 0) throw ConfigError("collocation loss needs at least one point");
    const double nc = static_cast<double>(pts.rows());
    out.losses.coll.push_back(coll_pass(g, pts, w.coll / nc, gp, &s.colloc->residuals) / nc);
    if (with_gradient) add_gradient(out.gradient, local);
  }
  lp_prog_->run();
  out.losses.lp = lp_prog_->value(lp_)(0, 0);
  if (with_gradient) {
    if (w.lp != 0.0 && !xi_->params().empty()) {
      ad::GradientBlocks local(params_.size());
      lp_prog_->accumulate_gradient(lp_, params_, local, w.lp);
      add_gradient(out.gradient, local);
    }
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (out.gradient[i].size() == 0) {
        out.gradient[i] = Matrix::Zero(params_[i].value().rows(), params_[i].value().cols());
      }
    }
  }
  return out;
}

std::vector<double> Objective::test_data_loss() {
  std::vector<double> out;
  for (std::size_t i = 0; i < sets_.size(); ++i) {
    const PointDataset* test = sets_[i].test;
    if (!test || test->empty()) {
      out.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    out.push_back(data_pass(graphs_[i], *test, 0.0, nullptr) / static_cast<double>(test->size()));
  }
  return out;
}

Eigen::VectorXd Objective::predict(std::size_t dataset, const Eigen::MatrixXd& points) {
  Graphs& g = graphs_.at(dataset);
  Eigen::VectorXd out(points.rows());
  for (Eigen::Index start = 0; start < points.rows(); start += static_cast<Eigen::Index>(chunk_)) {
    const Eigen::Index m = std::min<Eigen::Index>(static_cast<Eigen::Index>(chunk_), points.rows() - start);
    for (std::size_t c = 0; c < g.data_coords.size(); ++c) {
      g.data_coords[c].assign(points.block(start, static_cast<Eigen::Index>(c), m, 1));
    }
    g.target.assign(Matrix::Zero(m, 1));
    g.data_prog->run();
    out.segment(start, m) = g.data_prog->value(g.data_prediction).col(0);
  }
  return out;
}

Eigen::VectorXd Objective::residual(std::size_t dataset, const Eigen::MatrixXd& points) {
  Eigen::VectorXd out;
  Graphs& g = graphs_.at(dataset);
  out.resize(points.rows());
  for (Eigen::Index start = 0; start < points.rows(); start += static_cast<Eigen::Index>(chunk_)) {
    const Eigen::Index m = std::min<Eigen::Index>(static_cast<Eigen::Index>(chunk_), points.rows() - start);
    for (std::size_t c = 0; c < g.coll_coords.size(); ++c) {
      g.coll_coords[c].assign(points.block(start, static_cast<Eigen::Index>(c), m, 1));
    }
    g.coll_prog->run();
    out.segment(start, m) = g.coll_prog->value(g.residual).col(0);
  }
  return out;
}

}  // namespace pdelearn
