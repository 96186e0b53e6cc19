#include "pdelearn/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pdelearn/errors.hpp"

namespace pdelearn {

// ------------------------------------------------------------------ phases

const char* phase_name(PhaseKind kind) {
  switch (kind) {
    case PhaseKind::BurnIn: return "burn-in";
    case PhaseKind::Sparsification: return "sparsification";
    case PhaseKind::FineTune: return "fine-tune";
  }
  return "?";
}

PhaseConfig PhaseConfig::defaults(PhaseKind kind) {
  PhaseConfig p;
  p.kind = kind;
  p.epochs = 1000;
  p.weights = {1.0, 1.0, kind == PhaseKind::Sparsification ? 1e-4 : 0.0};
  return p;
}

void PhaseConfig::validate() const {
  const std::string name = phase_name(kind);
  if (weights.data < 0.0 || weights.coll < 0.0 || weights.lp < 0.0) throw ConfigError(name + ": loss weights must be >= 0");
  if (kind == PhaseKind::Sparsification && !(weights.lp > 0.0)) {
    throw ConfigError(name + ": w_lp must be > 0");
  }
  if (kind != PhaseKind::Sparsification && weights.lp != 0.0) throw ConfigError(name + ": w_lp must be 0");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError(name + ": learning rate must be > 0");
  if (stop.lp_window == 0) throw ConfigError(name + ": lp_window must be >= 1");
  if (stop.patience == 0) throw ConfigError(name + ": patience must be >= 1");
}

// -------------------------------------------------------------------- Adam

void Adam::reset(const ad::ParamSet& params) {
  m_.clear();
  v_.clear();
  for (const auto& p : params.leaves()) {
    m_.push_back(ad::Matrix::Zero(p.value().rows(), p.value().cols()));
    v_.push_back(ad::Matrix::Zero(p.value().rows(), p.value().cols()));
  }
  t_ = 0;
}

void Adam::step(const ad::ParamSet& params, const ad::GradientBlocks& grad, double lr) {
  if (m_.size() != params.size()) reset(params);
  if (grad.size() != params.size()) throw ConfigError("gradient does not align with the parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grad[i].rows() != m_[i].rows() || grad[i].cols() != m_[i].cols()) {
      throw ConfigError("gradient shape mismatch for " + params[i].name());
    }
    if (!grad[i].allFinite()) throw NumericalError("non-finite gradient for parameter " + params[i].name());
  }
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i].cwiseProduct(grad[i]);
    const ad::Matrix mhat = m_[i] / c1;
    const ad::Matrix vhat = v_[i] / c2;
    params[i].assign(params[i].value() - lr * (mhat.array() / (vhat.array().sqrt() + cfg_.epsilon)).matrix());
  }
}

std::size_t prune(CoefficientVector& xi, double threshold) {
  if (!(threshold > 0.0)) throw ConfigError("prune threshold must be > 0");
  std::size_t pruned = 0;
  for (std::size_t k = 0; k < xi.size(); ++k) {
    if (xi.active(k) && std::abs(xi.value(k)) < threshold) {
      xi.deactivate(k);
      ++pruned;
    }
  }
  if (xi.active_count() == 0) throw EmptyPdeError();
  return pruned;
}

// ------------------------------------------------------------ TrainConfig

std::vector<std::string> TrainConfig::problems() const {
  std::vector<std::string> out;
  const auto check = [&](auto&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      out.emplace_back(e.what());
    }
  };
  check([&] { library.validate(); });
  check([&] { burn_in.validate(); });
  check([&] { sparsify.validate(); });
  check([&] { fine_tune.validate(); });
  if (burn_in.kind != PhaseKind::BurnIn || sparsify.kind != PhaseKind::Sparsification ||
      fine_tune.kind != PhaseKind::FineTune) {
    out.emplace_back("phase kinds are out of order");
  }
  if (!(p > 0.0 && p < 2.0)) out.emplace_back("p must lie in (0, 2)");
  if (!(delta > 0.0)) out.emplace_back("delta must be > 0");
  if (!(prune_threshold > 0.0)) out.emplace_back("prune_threshold must be > 0");
  if (n_random_coll == 0) out.emplace_back("n_random_coll must be >= 1");
  if (chunk == 0) out.emplace_back("chunk must be >= 1");
  if (datasets.empty()) out.emplace_back("at least one dataset is required");
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    const auto& d = datasets[i];
    const std::string tag = "dataset " + std::to_string(i) + (d.name.empty() ? "" : " (" + d.name + ")");
    if (d.train.empty()) out.push_back(tag + ": training set is empty");
    check([&] { d.train.validate(); });
    if (!d.test.empty()) {
      check([&] { d.test.validate(); });
      if (d.test.coords.cols() != d.train.coords.cols()) out.push_back(tag + ": test columns differ from train");
    }
    if (d.train.domain.spatial_dim() != library.spatial_dim) {
      out.push_back(tag + ": spatial dimension " + std::to_string(d.train.domain.spatial_dim()) +
                    " does not match the library's " + std::to_string(library.spatial_dim));
    }
    if (d.arch.input_dim != d.train.domain.spatial_dim() + 1) {
      out.push_back(tag + ": network input dimension must be " + std::to_string(d.train.domain.spatial_dim() + 1));
    }
    check([&] { d.arch.validate(); });
  }
  return out;
}

void TrainConfig::validate() const {
  const auto p = problems();
  if (p.empty()) return;
  std::string msg = "invalid training configuration:";
  for (const auto& s : p) msg += "\n  - " + s;
  throw ConfigError(msg);
}

// -------------------------------------------------------------- TrainState

namespace {

const TrainConfig& validated(const TrainConfig& cfg) {
  cfg.validate();
  return cfg;
}

}  // namespace

TrainState::TrainState(const TrainConfig& cfg)
    : cfg_(&validated(cfg)), xi_(cfg.library.size(), cfg.p, cfg.delta), adam_(cfg.adam) {
  nets_.reserve(cfg.datasets.size());
  colloc_.reserve(cfg.datasets.size());
  for (const auto& d : cfg.datasets) {
    nets_.emplace_back(d.arch, d.network_seed);
    colloc_.emplace_back(d.train.domain, cfg.n_random_coll, d.collocation_seed);
  }
  std::vector<ObjectiveDataset> sets;
  for (std::size_t i = 0; i < cfg.datasets.size(); ++i) {
    const auto& d = cfg.datasets[i];
    sets.push_back({&nets_[i], &d.train, d.test.empty() ? nullptr : &d.test, &colloc_[i]});
  }
  objective_ = std::make_unique<Objective>(std::move(sets), cfg.library, xi_, cfg.chunk);
}

ObjectiveResult TrainState::epoch_objective(const LossWeights& w) {
  for (auto& c : colloc_) c.resample();
  xi_.update_weights();
  return objective_->evaluate(w, true);
}

std::size_t TrainState::prune(double threshold) {
  const std::size_t n = pdelearn::prune(xi_, threshold);
  objective_->rebuild();
  return n;
}

std::size_t TrainState::run_phase(const PhaseConfig& phase) {
  phase.validate();
  adam_.reset(objective_->params());
  for (auto& c : colloc_) c.clear_targeted();

  std::vector<double> metric;
  double prev_test = std::numeric_limits<double>::quiet_NaN();
  double prev_train = std::numeric_limits<double>::quiet_NaN();
  std::size_t rising = 0;
  std::size_t run = 0;
  for (std::size_t e = 0; e < phase.epochs; ++e) {
    ObjectiveResult res = epoch_objective(phase.weights);
    const double total = res.losses.total();
    if (!std::isfinite(total)) {
      throw NumericalError(std::string("non-finite loss in ") + phase_name(phase.kind) + " epoch " + std::to_string(e));
    }
    EpochRecord rec;
    rec.epoch = epoch_;
    rec.phase = phase.kind;
    rec.test = objective_->test_data_loss();
    rec.lp_metric = xi_.lp_metric();
    rec.active = xi_.active_count();
    rec.xi = xi_.values();
    rec.mask = xi_.mask();
    rec.losses = std::move(res.losses);

    adam_.step(objective_->params(), res.gradient, phase.lr);
    for (auto& c : colloc_) update_targeted(c);

    if (cfg_->log && cfg_->log_every > 0 && (e % cfg_->log_every == 0 || e + 1 == phase.epochs)) {
      *cfg_->log << phase_name(phase.kind) << " epoch " << e << " total " << total << " active " << rec.active
                 << " lp_metric " << rec.lp_metric << '\n';
    }
    const double train_data = std::accumulate(rec.losses.data.begin(), rec.losses.data.end(), 0.0);
    double test_sum = 0.0;
    bool have_test = false;
    for (double t : rec.test) {
      if (!std::isnan(t)) {
        test_sum += t;
        have_test = true;
      }
    }
    metric.push_back(rec.lp_metric);
    history_.push_back(std::move(rec));
    ++epoch_;
    ++run;

    if (phase.kind != PhaseKind::FineTune) continue;
    if (have_test) {
      rising = (test_sum > prev_test && train_data < prev_train) ? rising + 1 : 0;
      prev_test = test_sum;
      prev_train = train_data;
      if (rising >= phase.stop.patience) break;
    }
    const std::size_t w = phase.stop.lp_window;
    if (metric.size() > w) {
      const double then = metric[metric.size() - 1 - w];
      const double now = metric.back();
      if (std::abs(now - then) < phase.stop.lp_tolerance * std::abs(then)) break;
    }
  }
  return run;
}

// ----------------------------------------------------------- IdentifiedPDE

std::string report(const IdentifiedPDE& pde) {
  if (pde.terms.empty()) throw EmptyPdeError();
  return render_equation(Equation{pde.lhs, pde.terms});
}

std::string IdentifiedPDE::text() const { return report(*this); }

std::string IdentifiedPDE::to_json() const {
  nlohmann::json j;
  j["format"] = "pdelearn-pde";
  j["version"] = 1;
  j["lhs"] = lhs.render_lhs();
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& [t, c] : this->terms) terms.push_back({{"term", t.render()}, {"coefficient", c}});
  j["terms"] = std::move(terms);
  j["equation"] = this->terms.empty() ? std::string() : text();
  j["provenance"] = provenance;
  return j.dump(1);
}

IdentifiedPDE IdentifiedPDE::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("identified PDE: ") + e.what(), e.byte);
  }
  try {
    if (j.at("format") != "pdelearn-pde" || j.at("version").get<int>() != 1) {
      throw ParseError("not a version 1 identified-PDE file", 0);
    }
    IdentifiedPDE pde;
    pde.lhs = parse_term(j.at("lhs").get<std::string>());
    for (const auto& t : j.at("terms")) {
      pde.terms.emplace_back(parse_term(t.at("term").get<std::string>()), t.at("coefficient").get<double>());
    }
    pde.provenance = j.value("provenance", std::map<std::string, std::string>{});
    return pde;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("identified PDE: ") + e.what(), 0);
  }
}

void IdentifiedPDE::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << to_json() << '\n';
}

IdentifiedPDE IdentifiedPDE::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

// ------------------------------------------------------------- histories

void write_loss_history(const std::vector<EpochRecord>& history, std::size_t datasets, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "epoch,phase,w_data,w_coll,w_lp";
  for (std::size_t i = 0; i < datasets; ++i) out << ",data_" << i;
  for (std::size_t i = 0; i < datasets; ++i) out << ",coll_" << i;
  for (std::size_t i = 0; i < datasets; ++i) out << ",test_" << i;
  out << ",lp,lp_metric,active,total\n";
  for (const auto& r : history) {
    const auto& l = r.losses;
    out << r.epoch << ',' << phase_name(r.phase) << ',' << format_exact(l.weights.data) << ','
        << format_exact(l.weights.coll) << ',' << format_exact(l.weights.lp);
    for (double v : l.data) out << ',' << format_exact(v);
    for (double v : l.coll) out << ',' << format_exact(v);
    for (double v : r.test) out << ',' << (std::isnan(v) ? std::string() : format_exact(v));
    out << ',' << format_exact(l.lp) << ',' << format_exact(r.lp_metric) << ',' << r.active << ','
        << format_exact(l.total()) << '\n';
  }
}

void write_xi_history(const std::vector<EpochRecord>& history, const Library& lib, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "epoch,phase";
  for (const auto& t : lib.rhs) out << ",xi:" << t.render();
  for (const auto& t : lib.rhs) out << ",active:" << t.render();
  out << '\n';
  for (const auto& r : history) {
    out << r.epoch << ',' << phase_name(r.phase);
    for (double v : r.xi) out << ',' << format_exact(v);
    for (bool m : r.mask) out << ',' << (m ? 1 : 0);
    out << '\n';
  }
}

void write_plot_data(TrainState& state, std::size_t dataset, const std::string& path) {
  const ProblemDomain& dom = state.config().datasets.at(dataset).train.domain;
  const int nd = dom.spatial_dim();
  const std::size_t nt = nd == 1 ? 101 : (nd == 2 ? 11 : 6);
  const std::size_t nx = nd == 1 ? 101 : (nd == 2 ? 41 : 21);
  std::size_t total = nt;
  for (int d = 0; d < nd; ++d) total *= nx;
  Eigen::MatrixXd pts(static_cast<Eigen::Index>(total), nd + 1);
  for (std::size_t r = 0; r < total; ++r) {
    std::size_t rest = r;
    for (int c = nd; c >= 0; --c) {
      const std::size_t n = c == 0 ? nt : nx;
      const std::size_t i = rest % n;
      rest /= n;
      // t runs over (0, T]; spatial axes include both ends
      const double frac = c == 0 ? static_cast<double>(i + 1) / static_cast<double>(nt)
                                 : static_cast<double>(i) / static_cast<double>(nx - 1);
      const double lo = c == 0 ? 0.0 : dom.box[static_cast<std::size_t>(c - 1)].first;
      const double hi = c == 0 ? dom.t_end : dom.box[static_cast<std::size_t>(c - 1)].second;
      pts(static_cast<Eigen::Index>(r), c) = lo + frac * (hi - lo);
    }
  }
  const Eigen::VectorXd u = state.objective().predict(dataset, pts);
  const Eigen::VectorXd res = state.objective().residual(dataset, pts);
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << 't';
  for (int d = 1; d <= nd; ++d) out << ',' << kCoordinateNames[static_cast<std::size_t>(d)];
  out << ",u,residual\n";
  for (Eigen::Index r = 0; r < pts.rows(); ++r) {
    for (Eigen::Index c = 0; c <= nd; ++c) out << format_exact(pts(r, c)) << ',';
    out << format_exact(u(r)) << ',' << format_exact(res(r)) << '\n';
  }
}

// ------------------------------------------------------------------- train

TrainResult train(const TrainConfig& cfg) {
  TrainState state(cfg);
  TrainResult result;
  namespace fs = std::filesystem;
  const bool files = !cfg.output_dir.empty();
  if (files) fs::create_directories(cfg.output_dir);
  const auto path = [&](const std::string& name) { return (fs::path(cfg.output_dir) / name).string(); };
  const auto checkpoint = [&](const char* phase) {
    if (!files) return;
    for (std::size_t i = 0; i < state.networks().size(); ++i) {
      state.networks()[i].save(path("network_" + std::to_string(i) + "_" + phase + ".json"));
    }
  };
  const auto flush_histories = [&] {
    if (!files) return;
    write_loss_history(state.history(), cfg.datasets.size(), path("loss_history.csv"));
    write_xi_history(state.history(), cfg.library, path("xi_history.csv"));
  };
  const auto log_prune = [&](std::size_t n) {
    if (cfg.log) *cfg.log << "pruned " << n << " terms, " << state.xi().active_count() << " active\n";
  };

  try {
    result.epochs_run["burn_in"] = state.run_phase(cfg.burn_in);
    checkpoint("burn_in");
    log_prune(state.prune(cfg.prune_threshold));
    result.epochs_run["sparsification"] = state.run_phase(cfg.sparsify);
    checkpoint("sparsification");
    log_prune(state.prune(cfg.prune_threshold));
    result.epochs_run["fine_tune"] = state.run_phase(cfg.fine_tune);
    checkpoint("fine_tune");
  } catch (...) {
    flush_histories();
    throw;
  }
  flush_histories();

  CoefficientVector& xi = state.xi();
  result.pde.lhs = cfg.library.lhs;
  for (std::size_t k = 0; k < xi.size(); ++k) {
    if (xi.active(k)) result.pde.terms.emplace_back(cfg.library.rhs[k], xi.value(k));
  }
  result.pde.provenance = cfg.provenance;
  for (const auto& [phase, n] : result.epochs_run) result.pde.provenance["epochs_" + phase] = std::to_string(n);
  for (std::size_t i = 0; i < cfg.datasets.size(); ++i) {
    result.pde.provenance["network_seed_" + std::to_string(i)] = std::to_string(cfg.datasets[i].network_seed);
    result.pde.provenance["collocation_seed_" + std::to_string(i)] = std::to_string(cfg.datasets[i].collocation_seed);
  }
  result.history = state.history();
  result.xi = xi.values();
  result.mask = xi.mask();
  if (files) {
    if (cfg.emit_plot_data) {
      for (std::size_t i = 0; i < cfg.datasets.size(); ++i) {
        write_plot_data(state, i, path("plot_" + std::to_string(i) + ".csv"));
      }
    }
    result.pde.save(path("identified_pde.json"));
    std::ofstream txt(path("identified_pde.txt"));
    txt << result.pde.text() << '\n';
  }
  return result;
}

}  // namespace pdelearn
