#include "pdelearn/solvers.hpp"

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "pdelearn/errors.hpp"

namespace pdelearn {

namespace {

using cplx = std::complex<double>;
constexpr double kPi = std::numbers::pi;

bool power_of_two(std::size_t n) { return n >= 4 && (n & (n - 1)) == 0; }

// Real-to-complex transform pair on fixed buffers.
class Fft {
 public:
  explicit Fft(std::size_t n) : n_(n), m_(n / 2 + 1) {
    real_ = fftw_alloc_real(n_);
    spec_ = fftw_alloc_complex(m_);
    forward_ = fftw_plan_dft_r2c_1d(static_cast<int>(n_), real_, spec_, FFTW_ESTIMATE);
    inverse_ = fftw_plan_dft_c2r_1d(static_cast<int>(n_), spec_, real_, FFTW_ESTIMATE);
  }
  ~Fft() {
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(inverse_);
    fftw_free(real_);
    fftw_free(spec_);
  }
  Fft(const Fft&) = delete;
  Fft& operator=(const Fft&) = delete;

  void forward(const std::vector<double>& u, std::vector<cplx>& out) {
    std::copy(u.begin(), u.end(), real_);
    fftw_execute(forward_);
    out.resize(m_);
    for (std::size_t j = 0; j < m_; ++j) out[j] = {spec_[j][0], spec_[j][1]};
  }
  void inverse(const std::vector<cplx>& in, std::vector<double>& u) {
    for (std::size_t j = 0; j < m_; ++j) {
      spec_[j][0] = in[j].real();
      spec_[j][1] = in[j].imag();
    }
    fftw_execute(inverse_);
    u.resize(n_);
    const double scale = 1.0 / static_cast<double>(n_);
    for (std::size_t i = 0; i < n_; ++i) u[i] = real_[i] * scale;
  }

 private:
  std::size_t n_;
  std::size_t m_;
  double* real_;
  fftw_complex* spec_;
  fftw_plan forward_;
  fftw_plan inverse_;
};

struct Etdrk4 {
  std::vector<cplx> E, E2, Q, f1, f2, f3;
};

// Contour-integral evaluation of the ETDRK4 phi-functions (Kassam and
// Trefethen), on a full circle so that complex L works too.
Etdrk4 etdrk4_coefficients(const std::vector<cplx>& L, double h) {
  constexpr int M = 32;
  Etdrk4 c;
  const std::size_t m = L.size();
  for (auto* v : {&c.E, &c.E2, &c.Q, &c.f1, &c.f2, &c.f3}) v->resize(m);
  for (std::size_t j = 0; j < m; ++j) {
    const cplx hl = h * L[j];
    c.E[j] = std::exp(hl);
    c.E2[j] = std::exp(hl / 2.0);
    cplx q{}, a{}, b{}, d{};
    for (int k = 0; k < M; ++k) {
      const cplx r = std::polar(1.0, 2.0 * kPi * (k + 0.5) / M);
      const cplx z = hl + r;
      const cplx ez = std::exp(z);
      const cplx z3 = z * z * z;
      q += (std::exp(z / 2.0) - 1.0) / z;
      a += (-4.0 - z + ez * (4.0 - 3.0 * z + z * z)) / z3;
      b += (2.0 + z + ez * (-2.0 + z)) / z3;
      d += (-4.0 - 3.0 * z - z * z + ez * (4.0 - z)) / z3;
    }
    c.Q[j] = h * q / double(M);
    c.f1[j] = h * a / double(M);
    c.f2[j] = h * b / double(M);
    c.f3[j] = h * d / double(M);
  }
  return c;
}

class Integrator {
 public:
  explicit Integrator(const SolverConfig& cfg) : cfg_(cfg), n_(cfg.modes), fft_(cfg.modes) {
    const std::size_t m = n_ / 2 + 1;
    const double length = cfg.x_hi - cfg.x_lo;
    std::vector<cplx> L(m);
    g_.assign(m, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
      const double k = 2.0 * kPi * static_cast<double>(j) / length;
      const bool nyquist = j == n_ / 2;
      const cplx ik = nyquist ? cplx{} : cplx{0.0, k};
      switch (cfg.kind) {
        case EquationKind::Burgers:
          L[j] = -cfg.nu * k * k;
          g_[j] = -0.5 * ik;
          break;
        case EquationKind::KdvSin:
        case EquationKind::KdvExpCos:
          L[j] = nyquist ? cplx{} : cplx{0.0, k * k * k};
          g_[j] = -0.5 * ik;
          break;
        case EquationKind::KuramotoSivashinsky:
          L[j] = -cfg.nu * k * k - cfg.mu * k * k * k * k;
          g_[j] = -0.5 * cfg.lambda * ik;
          break;
        case EquationKind::AllenCahn:
          L[j] = -cfg.epsilon * k * k + 1.0;
          g_[j] = -1.0;
          break;
        case EquationKind::Wave:
          throw ConfigError("the wave field is analytic, not integrated");
      }
    }
    coef_ = etdrk4_coefficients(L, cfg.time_step());
  }

  void nonlinear(const std::vector<cplx>& v, std::vector<cplx>& out) {
    fft_.inverse(v, u_);
    if (cfg_.kind == EquationKind::AllenCahn) {
      for (double& x : u_) x = x * x * x;
    } else {
      for (double& x : u_) x = x * x;
    }
    fft_.forward(u_, out);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] *= g_[j];
  }

  void step(std::vector<cplx>& v) {
    const std::size_t m = v.size();
    nonlinear(v, Nv_);
    a_.resize(m);
    for (std::size_t j = 0; j < m; ++j) a_[j] = coef_.E2[j] * v[j] + coef_.Q[j] * Nv_[j];
    nonlinear(a_, Na_);
    b_.resize(m);
    for (std::size_t j = 0; j < m; ++j) b_[j] = coef_.E2[j] * v[j] + coef_.Q[j] * Na_[j];
    nonlinear(b_, Nb_);
    c_.resize(m);
    for (std::size_t j = 0; j < m; ++j) c_[j] = coef_.E2[j] * a_[j] + coef_.Q[j] * (2.0 * Nb_[j] - Nv_[j]);
    nonlinear(c_, Nc_);
    for (std::size_t j = 0; j < m; ++j) {
      v[j] = coef_.E[j] * v[j] + Nv_[j] * coef_.f1[j] + 2.0 * (Na_[j] + Nb_[j]) * coef_.f2[j] + Nc_[j] * coef_.f3[j];
    }
  }

  Fft& fft() { return fft_; }

 private:
  const SolverConfig& cfg_;
  std::size_t n_;
  Fft fft_;
  std::vector<cplx> g_;
  Etdrk4 coef_;
  std::vector<double> u_;
  std::vector<cplx> Nv_, Na_, Nb_, Nc_, a_, b_, c_;
};

// Trigonometric interpolant of the periodic grid values at x.
double fourier_eval(const std::vector<cplx>& v, std::size_t n, double length, double xi) {
  double s = v[0].real();
  for (std::size_t j = 1; j < v.size(); ++j) {
    const double k = 2.0 * kPi * static_cast<double>(j) / length;
    const cplx e = std::polar(1.0, k * xi);
    if (j == n / 2) {
      s += v[j].real() * std::cos(k * xi);
    } else {
      s += 2.0 * (v[j] * e).real();
    }
  }
  return s / static_cast<double>(n);
}

std::vector<double> initial_field(const SolverConfig& cfg) {
  std::vector<double> u(cfg.modes);
  const double dx = (cfg.x_hi - cfg.x_lo) / static_cast<double>(cfg.modes);
  for (std::size_t i = 0; i < cfg.modes; ++i) u[i] = initial_condition(cfg, cfg.x_lo + dx * static_cast<double>(i));
  return u;
}

void check_finite(const std::vector<double>& u, double t) {
  for (double x : u) {
    if (!std::isfinite(x)) throw NumericalError("solver blew up: non-finite field at t = " + std::to_string(t));
  }
}

}  // namespace

void SolverConfig::validate() const {
  if (kind == EquationKind::Wave) throw ConfigError("the wave field has no solver configuration");
  if (!power_of_two(modes)) throw ConfigError("spatial mode count must be a power of two >= 4");
  if (!(t_end > 0.0) || !(x_lo < x_hi)) throw ConfigError("solver domain must have T > 0 and x_lo < x_hi");
  if (time_samples < 2 || x_samples < 2) throw ConfigError("output grid needs at least two lines per axis");
  for (double p : {nu, mu, lambda, epsilon}) {
    if (!std::isfinite(p)) throw ConfigError("solver parameters must be finite");
  }
}

std::size_t SolverConfig::steps_per_sample() const {
  if (substeps > 0) return substeps;
  const double interval = t_end / static_cast<double>(time_samples - 1);
  return static_cast<std::size_t>(std::ceil(interval / (1e-3 * t_end) - 1e-9));
}

double SolverConfig::time_step() const {
  return t_end / static_cast<double>(time_samples - 1) / static_cast<double>(steps_per_sample());
}

std::vector<std::string> solver_names() { return {"burgers", "kdv-sin", "kdv-expcos", "ks", "allen-cahn"}; }

SolverConfig preset(const std::string& name) {
  SolverConfig c;
  c.name = name;
  if (name == "burgers") {
    c.kind = EquationKind::Burgers;
    c.nu = 0.1;
    c.t_end = 10.0;
    c.x_lo = -8.0;
    c.x_hi = 8.0;
  } else if (name == "kdv-sin" || name == "kdv-expcos") {
    c.kind = name == "kdv-sin" ? EquationKind::KdvSin : EquationKind::KdvExpCos;
    c.t_end = 40.0;
    c.x_lo = -20.0;
    c.x_hi = 20.0;
    c.substeps = 20;
  } else if (name == "ks") {
    c.kind = EquationKind::KuramotoSivashinsky;
    c.nu = -1.0;
    c.mu = 1.0;
    c.lambda = 1.0;
    c.t_end = 5.0;
    c.x_lo = -5.0;
    c.x_hi = 5.0;
    c.x_samples = 256;
    c.substeps = 10;
  } else if (name == "allen-cahn") {
    c.kind = EquationKind::AllenCahn;
    c.epsilon = 0.003;
    c.t_end = 40.0;
    c.x_lo = -20.0;
    c.x_hi = 20.0;
    c.modes = 2048;
    c.substeps = 20;
  } else {
    std::string names;
    for (const auto& n : solver_names()) names += (names.empty() ? "" : ", ") + n;
    throw ConfigError("unknown equation '" + name + "' (valid: " + names + ", wave)");
  }
  return c;
}

double initial_condition(const SolverConfig& cfg, double x) {
  switch (cfg.kind) {
    case EquationKind::Burgers:
      return -std::sin(kPi * x / 8.0);
    case EquationKind::KdvSin:
      return -std::sin(kPi * x / 20.0);
    case EquationKind::KdvExpCos:
      return std::exp(-kPi * (x / 30.0) * (x / 30.0)) * std::cos(kPi * x / 10.0);
    case EquationKind::KuramotoSivashinsky:
      return std::cos(2.0 * kPi * x / 5.0) * (1.0 + std::sin(kPi * x / 5.0));
    case EquationKind::AllenCahn: {
      const double s = std::sin(2.0 * kPi * x);
      return -0.2 * s * s * s * s * s + 0.8 * std::sin(5.0 * kPi * x);
    }
    case EquationKind::Wave:
      break;
  }
  throw ConfigError("the wave field has no initial condition");
}

GridDataset solve(const SolverConfig& cfg) {
  cfg.validate();
  Integrator integ(cfg);
  const double length = cfg.x_hi - cfg.x_lo;
  const std::size_t n = cfg.modes;

  GridDataset grid;
  std::vector<double> taxis(cfg.time_samples), xaxis(cfg.x_samples);
  for (std::size_t i = 0; i < cfg.time_samples; ++i) {
    taxis[i] = cfg.t_end * static_cast<double>(i) / static_cast<double>(cfg.time_samples - 1);
  }
  for (std::size_t i = 0; i < cfg.x_samples; ++i) {
    xaxis[i] = cfg.x_lo + length * static_cast<double>(i) / static_cast<double>(cfg.x_samples - 1);
  }
  // Output lines that coincide with internal grid points are copied, the rest
  // use the trigonometric interpolant.
  const std::size_t intervals = cfg.x_samples - 1;
  const bool aligned = n % intervals == 0;
  const std::size_t stride = aligned ? n / intervals : 0;

  std::vector<double> u = initial_field(cfg);
  std::vector<cplx> v;
  integ.fft().forward(u, v);
  grid.values.reserve(cfg.time_samples * cfg.x_samples);
  const auto emit = [&](double t) {
    integ.fft().inverse(v, u);
    check_finite(u, t);
    for (std::size_t i = 0; i < cfg.x_samples; ++i) {
      if (aligned) {
        grid.values.push_back(u[(i * stride) % n]);
      } else {
        grid.values.push_back(fourier_eval(v, n, length, xaxis[i] - cfg.x_lo));
      }
    }
  };
  emit(0.0);
  const std::size_t sub = cfg.steps_per_sample();
  for (std::size_t s = 1; s < cfg.time_samples; ++s) {
    for (std::size_t k = 0; k < sub; ++k) integ.step(v);
    emit(taxis[s]);
  }
  grid.axes = {std::move(taxis), std::move(xaxis)};
  char buf[64];
  grid.metadata["equation"] = cfg.name.empty() ? "custom" : cfg.name;
  grid.metadata["method"] = "fourier-etdrk4";
  grid.metadata["modes"] = std::to_string(cfg.modes);
  std::snprintf(buf, sizeof(buf), "%.17g", cfg.time_step());
  grid.metadata["dt"] = buf;
  switch (cfg.kind) {
    case EquationKind::Burgers:
      grid.metadata["nu"] = format_exact(cfg.nu);
      break;
    case EquationKind::KuramotoSivashinsky:
      grid.metadata["nu"] = format_exact(cfg.nu);
      grid.metadata["mu"] = format_exact(cfg.mu);
      grid.metadata["lambda"] = format_exact(cfg.lambda);
      break;
    case EquationKind::AllenCahn:
      grid.metadata["epsilon"] = format_exact(cfg.epsilon);
      break;
    default:
      break;
  }
  return grid;
}

Eigen::VectorXd solve_final_state(const SolverConfig& cfg) {
  cfg.validate();
  Integrator integ(cfg);
  std::vector<double> u = initial_field(cfg);
  std::vector<cplx> v;
  integ.fft().forward(u, v);
  const std::size_t total = cfg.steps_per_sample() * (cfg.time_samples - 1);
  for (std::size_t k = 0; k < total; ++k) integ.step(v);
  integ.fft().inverse(v, u);
  check_finite(u, cfg.t_end);
  return Eigen::Map<Eigen::VectorXd>(u.data(), static_cast<Eigen::Index>(u.size()));
}

double wave_analytic(double t, double x, double y) {
  return -std::sin(t - x) + std::exp(0.05 * (t - x - y)) + std::sin(t - y);
}

Eigen::VectorXd wave_analytic(const Eigen::MatrixXd& points) {
  if (points.cols() != 3) throw ConfigError("wave points need columns t, x, y");
  Eigen::VectorXd out(points.rows());
  for (Eigen::Index i = 0; i < points.rows(); ++i) out(i) = wave_analytic(points(i, 0), points(i, 1), points(i, 2));
  return out;
}

PointDataset wave_dataset(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ConfigError("need at least one wave point");
  PointDataset d;
  d.domain = wave_domain();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  d.coords.resize(static_cast<Eigen::Index>(n), 3);
  for (Eigen::Index i = 0; i < d.coords.rows(); ++i) {
    d.coords(i, 0) = 10.0 * (1.0 - unit(rng));
    d.coords(i, 1) = -5.0 + 10.0 * unit(rng);
    d.coords(i, 2) = -5.0 + 10.0 * unit(rng);
  }
  d.values = wave_analytic(d.coords);
  d.metadata["equation"] = "wave";
  d.metadata["seed"] = std::to_string(seed);
  return d;
}

}  // namespace pdelearn
