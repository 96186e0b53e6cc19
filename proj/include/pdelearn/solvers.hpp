#pragma once

// Noise-free dataset generation: periodic Fourier pseudo-spectral ETDRK4 for
// the 1-D equations and the closed-form 2-D wave field.
//
//   burgers     u_t = nu u_xx - u u_x
//   kdv-sin     u_t = -u u_x - u_xxx           (IC -sin(pi x / 20))
//   kdv-expcos  u_t = -u u_x - u_xxx           (IC exp(-pi (x/30)^2) cos(pi x / 10))
//   ks          u_t = nu u_xx - mu u_xxxx - lambda u u_x
//   allen-cahn  u_t = eps u_xx - u^3 + u
//   wave        u(t,x,y) = -sin(t-x) + exp(0.05 (t-x-y)) + sin(t-y)

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pdelearn/data.hpp"

namespace pdelearn {

enum class EquationKind { Burgers, KdvSin, KdvExpCos, KuramotoSivashinsky, AllenCahn, Wave };

struct SolverConfig {
  EquationKind kind = EquationKind::Burgers;
  std::string name;
  double nu = 0.1;       // Burgers, KS
  double mu = 1.0;       // KS
  double lambda = 1.0;   // KS
  double epsilon = 0.003;  // Allen-Cahn
  double t_end = 10.0;
  double x_lo = -8.0;
  double x_hi = 8.0;
  std::size_t modes = 256;        // internal Fourier modes (power of two)
  std::size_t time_samples = 201;  // output t grid lines, including t = 0
  std::size_t x_samples = 257;     // output x grid lines, both endpoints
  std::size_t substeps = 0;        // internal steps per output interval; 0 = default

  void validate() const;
  /// Internal time step actually used.
  double time_step() const;
  std::size_t steps_per_sample() const;
};

/// Names accepted by preset(): burgers, kdv-sin, kdv-expcos, ks, allen-cahn.
std::vector<std::string> solver_names();
SolverConfig preset(const std::string& name);

double initial_condition(const SolverConfig& cfg, double x);

/// Integrate and sample on the output grid. Throws NumericalError naming the
/// time at which the field stops being finite.
GridDataset solve(const SolverConfig& cfg);

/// Field on the internal periodic grid (modes points, x_lo inclusive) at t_end.
Eigen::VectorXd solve_final_state(const SolverConfig& cfg);

double wave_analytic(double t, double x, double y);
Eigen::VectorXd wave_analytic(const Eigen::MatrixXd& points);

inline ProblemDomain wave_domain() { return ProblemDomain{10.0, {{-5.0, 5.0}, {-5.0, 5.0}}}; }

/// n points drawn uniformly over (0,10] x [-5,5]^2 with exact values.
PointDataset wave_dataset(std::size_t n, std::uint64_t seed);

}  // namespace pdelearn
