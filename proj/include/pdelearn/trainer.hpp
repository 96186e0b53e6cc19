#pragma once

// Adam, pruning and the burn-in / sparsification / fine-tune schedule.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pdelearn/autodiff.hpp"
#include "pdelearn/data.hpp"
#include "pdelearn/loss.hpp"
#include "pdelearn/rational_net.hpp"
#include "pdelearn/term_library.hpp"

namespace pdelearn {

enum class PhaseKind { BurnIn, Sparsification, FineTune };
const char* phase_name(PhaseKind kind);

struct EarlyStop {
  std::size_t patience = 100;      // test-loss rises while train loss falls
  std::size_t lp_window = 100;     // epochs compared by the L^p metric rule
  double lp_tolerance = 1e-3;      // relative change of sum |xi|^p
};

struct PhaseConfig {
  PhaseKind kind = PhaseKind::BurnIn;
  std::size_t epochs = 0;
  LossWeights weights;
  double lr = 1e-3;
  EarlyStop stop;

  void validate() const;
  static PhaseConfig defaults(PhaseKind kind);
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  /// Zero moments shaped like the parameters.
  void reset(const ad::ParamSet& params);
  /// One bias-corrected step. A non-finite gradient entry throws
  /// NumericalError naming the parameter, before anything is updated.
  void step(const ad::ParamSet& params, const ad::GradientBlocks& grad, double lr);
  std::size_t steps() const { return t_; }
  const std::vector<ad::Matrix>& first_moment() const { return m_; }
  const std::vector<ad::Matrix>& second_moment() const { return v_; }

 private:
  AdamConfig cfg_;
  std::vector<ad::Matrix> m_;
  std::vector<ad::Matrix> v_;
  std::size_t t_ = 0;
};

/// Deactivate every active xi_k with |xi_k| < threshold. Returns the number
/// pruned. Throws EmptyPdeError when nothing survives.
std::size_t prune(CoefficientVector& xi, double threshold);

struct DatasetSpec {
  std::string name;
  PointDataset train;
  PointDataset test;  // may be empty
  NetworkArchitecture arch;
  std::uint64_t network_seed = 0;
  std::uint64_t collocation_seed = 0;
};

struct TrainConfig {
  Library library;
  std::vector<DatasetSpec> datasets;
  PhaseConfig burn_in = PhaseConfig::defaults(PhaseKind::BurnIn);
  PhaseConfig sparsify = PhaseConfig::defaults(PhaseKind::Sparsification);
  PhaseConfig fine_tune = PhaseConfig::defaults(PhaseKind::FineTune);
  double p = 0.1;
  double delta = 1e-8;
  double prune_threshold = 5e-4;
  std::size_t n_random_coll = 3000;
  std::size_t chunk = 256;
  AdamConfig adam;

  std::string output_dir;  // empty: no files
  bool emit_plot_data = false;  // surrogate/residual grids as CSV
  std::size_t log_every = 0;
  std::ostream* log = nullptr;
  std::map<std::string, std::string> provenance;  // copied into the report

  /// Every problem found, empty when valid.
  std::vector<std::string> problems() const;
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  PhaseKind phase = PhaseKind::BurnIn;
  LossBreakdown losses;
  std::vector<double> test;
  double lp_metric = 0.0;
  std::size_t active = 0;
  std::vector<double> xi;
  std::vector<bool> mask;
};

struct IdentifiedPDE {
  LibraryTerm lhs;
  std::vector<std::pair<LibraryTerm, double>> terms;
  std::map<std::string, std::string> provenance;

  std::string text() const;
  std::string to_json() const;
  static IdentifiedPDE from_json(const std::string& text);
  void save(const std::string& path) const;
  static IdentifiedPDE load(const std::string& path);
};

/// Pretty-printed equation, parseable by parse_equation.
std::string report(const IdentifiedPDE& pde);

/// Networks, coefficients, collocation and optimizer state of one run.
class TrainState {
 public:
  explicit TrainState(const TrainConfig& cfg);

  const TrainConfig& config() const { return *cfg_; }
  std::vector<Network>& networks() { return nets_; }
  CoefficientVector& xi() { return xi_; }
  std::vector<CollocationState>& collocation() { return colloc_; }
  Objective& objective() { return *objective_; }
  Adam& adam() { return adam_; }
  const std::vector<EpochRecord>& history() const { return history_; }
  std::size_t epoch() const { return epoch_; }

  /// Runs the phase; returns the number of epochs actually run.
  std::size_t run_phase(const PhaseConfig& phase);
  /// Prune and rebuild the objective.
  std::size_t prune(double threshold);

  /// The first half of an epoch: resample random collocation points,
  /// refresh the IRLS weights, evaluate losses and the gradient.
  ObjectiveResult epoch_objective(const LossWeights& w);

 private:
  const TrainConfig* cfg_;
  std::vector<Network> nets_;
  CoefficientVector xi_;
  std::vector<CollocationState> colloc_;
  std::unique_ptr<Objective> objective_;
  Adam adam_;
  std::vector<EpochRecord> history_;
  std::size_t epoch_ = 0;
};

struct TrainResult {
  IdentifiedPDE pde;
  std::vector<EpochRecord> history;
  std::vector<double> xi;
  std::vector<bool> mask;
  std::map<std::string, std::size_t> epochs_run;
};

/// burn-in, prune, sparsification, prune, fine-tune, report.
TrainResult train(const TrainConfig& cfg);

void write_loss_history(const std::vector<EpochRecord>& history, std::size_t datasets, const std::string& path);
/// Surrogate and residual on a regular grid over the dataset's domain.
void write_plot_data(TrainState& state, std::size_t dataset, const std::string& path);

void write_xi_history(const std::vector<EpochRecord>& history, const Library& lib, const std::string& path);

}  // namespace pdelearn
