#include "pdelearn/cli.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "pdelearn/data.hpp"
#include "pdelearn/errors.hpp"
#include "pdelearn/run_config.hpp"
#include "pdelearn/solvers.hpp"
#include "pdelearn/trainer.hpp"
#include "pdelearn/version.hpp"

namespace pdelearn {

namespace fs = std::filesystem;

namespace {

struct GenerateArgs {
  std::string equation;
  std::string out;
  std::optional<std::size_t> modes, substeps, time_samples, x_samples, points;
  std::optional<double> nu, mu, lambda, epsilon, t_end;
  std::uint64_t seed = 0;
};

struct CorruptArgs {
  std::string input;
  std::size_t n = 0;
  std::optional<std::size_t> n_test;
  double q = 0.0;
  std::uint64_t sample_seed = 0;
  std::uint64_t noise_seed = 1;
  std::string train_out = "train.csv";
  std::string test_out = "test.csv";
};

struct TrainArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  bool emit_plot_data = false;
  bool quiet = false;
  std::size_t log_every = 100;
};

struct ReportArgs {
  std::string path;
  bool json = false;
};

std::string valid_equations() {
  std::string s;
  for (const auto& n : solver_names()) s += n + ", ";
  return s + "wave";
}

void ensure_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

void cmd_generate(const GenerateArgs& a, std::ostream& out) {
  if (a.equation == "wave") {
    if (!a.points) throw ConfigError("wave needs --points");
    PointDataset d = wave_dataset(*a.points, a.seed);
    const std::string path = a.out.empty() ? "wave.csv" : a.out;
    ensure_parent(path);
    save_points(d, path);
    out << "wrote " << path << ": " << d.size() << " points\n";
    return;
  }
  const auto names = solver_names();
  if (std::find(names.begin(), names.end(), a.equation) == names.end()) {
    throw ConfigError("unknown equation '" + a.equation + "'; valid names: " + valid_equations());
  }
  if (a.points) throw ConfigError("--points applies to wave only");
  SolverConfig cfg = preset(a.equation);
  if (a.modes) cfg.modes = *a.modes;
  if (a.substeps) cfg.substeps = *a.substeps;
  if (a.time_samples) cfg.time_samples = *a.time_samples;
  if (a.x_samples) cfg.x_samples = *a.x_samples;
  if (a.nu) cfg.nu = *a.nu;
  if (a.mu) cfg.mu = *a.mu;
  if (a.lambda) cfg.lambda = *a.lambda;
  if (a.epsilon) cfg.epsilon = *a.epsilon;
  if (a.t_end) cfg.t_end = *a.t_end;
  GridDataset g = solve(cfg);
  const std::string path = a.out.empty() ? a.equation + ".grid" : a.out;
  ensure_parent(path);
  save_grid(g, path);
  out << "wrote " << path << ": grid " << g.axes[0].size() << " x " << g.axes[1].size() << '\n';
}

bool is_grid_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  char magic[8] = {};
  in.read(magic, 8);
  return in.gcount() == 8 && std::string_view(magic, 8) == std::string_view("PDLGRID\0", 8);
}

void cmd_corrupt(const CorruptArgs& a, std::ostream& out) {
  PointDataset pool = is_grid_file(a.input) ? grid_points(load_grid(a.input)) : load_points(a.input);
  SplitOptions opts;
  opts.n_train = a.n;
  opts.n_test = a.n_test;
  opts.q = a.q;
  opts.sample_seed = a.sample_seed;
  opts.noise_seed = a.noise_seed;
  auto [train, test] = split_train_test(pool, opts);
  for (PointDataset* d : {&train, &test}) {
    d->metadata["source"] = fs::path(a.input).filename().string();
    d->metadata["n_train"] = std::to_string(train.size());
    d->metadata["n_test"] = std::to_string(test.size());
    d->metadata["q"] = format_exact(a.q);
  }
  ensure_parent(a.train_out);
  ensure_parent(a.test_out);
  save_points(train, a.train_out);
  save_points(test, a.test_out);
  out << "wrote " << a.train_out << " (" << train.size() << " rows), " << a.test_out << " (" << test.size()
      << " rows)\n";
}

void write_run_info(const RunConfig& rc, const TrainArgs& a, const std::string& dir) {
  nlohmann::ordered_json j;
  j["version"] = kVersion;
  j["config_source"] = a.config;
  j["config_hash"] = rc.hash;
  j["overrides"] = a.overrides;
  j["seed"] = rc.train.provenance.at("seed");
  nlohmann::ordered_json sets = nlohmann::ordered_json::array();
  for (const auto& d : rc.train.datasets) {
    sets.push_back({{"name", d.name},
                    {"network_seed", d.network_seed},
                    {"collocation_seed", d.collocation_seed},
                    {"train_rows", d.train.size()},
                    {"test_rows", d.test.size()},
                    {"train_metadata", d.train.metadata}});
  }
  j["datasets"] = sets;
  std::ofstream(fs::path(dir) / "run_info.json") << j.dump(2) << '\n';
}

void cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  std::vector<std::string> overrides = a.overrides;
  if (a.emit_plot_data) overrides.emplace_back("emit_plot_data=true");
  RunConfig rc = load_run_config(a.config, overrides);
  TrainConfig& tc = rc.train;
  if (!a.out.empty()) tc.output_dir = a.out;
  if (!a.quiet) {
    tc.log = &err;
    tc.log_every = tc.log_every > 0 ? tc.log_every : a.log_every;
  }
  fs::create_directories(tc.output_dir);
  std::ofstream(fs::path(tc.output_dir) / "config.toml") << rc.rendered;
  write_run_info(rc, a, tc.output_dir);
  TrainResult r = train(tc);
  out << r.pde.text() << '\n';
}

void cmd_report(const ReportArgs& a, std::ostream& out) {
  const IdentifiedPDE pde = IdentifiedPDE::load(a.path);
  if (a.json) {
    out << pde.to_json() << '\n';
    return;
  }
  out << pde.text() << '\n';
  for (const auto& [k, v] : pde.provenance) out << "  " << k << " = " << v << '\n';
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"PDE discovery from noisy data with rational neural networks", "pdelearn"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Solve a benchmark equation and write a grid file (wave: points file)");
  g->add_option("equation", gen.equation, "burgers, kdv-sin, kdv-expcos, ks, allen-cahn or wave")->required();
  g->add_option("-o,--out", gen.out, "Output path (default <equation>.grid, wave.csv)");
  g->add_option("--modes", gen.modes, "Internal Fourier modes");
  g->add_option("--substeps", gen.substeps, "Internal time steps per output interval");
  g->add_option("--time-samples", gen.time_samples, "Output time levels");
  g->add_option("--x-samples", gen.x_samples, "Output x points");
  g->add_option("--nu", gen.nu);
  g->add_option("--mu", gen.mu);
  g->add_option("--lambda", gen.lambda);
  g->add_option("--epsilon", gen.epsilon);
  g->add_option("--t-end", gen.t_end);
  g->add_option("--points", gen.points, "Sample count (wave)");
  g->add_option("--seed", gen.seed, "Sampling seed (wave)");

  CorruptArgs cor;
  auto* c = app.add_subcommand("corrupt", "Subsample a grid or point file and add noise");
  c->add_option("input", cor.input)->required();
  c->add_option("-n,--n", cor.n, "Training points")->required();
  c->add_option("--n-test", cor.n_test, "Test points (default ceil(n/5))");
  c->add_option("-q,--q", cor.q, "Noise level: noise std / clean data std");
  c->add_option("--sample-seed", cor.sample_seed);
  c->add_option("--noise-seed", cor.noise_seed);
  c->add_option("--train-out", cor.train_out);
  c->add_option("--test-out", cor.test_out);

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Run burn-in, sparsification and fine-tuning");
  t->add_option("config", tr.config)->required();
  t->add_option("--set", tr.overrides, "Override a config key: key=value, table.key=value, dataset.N.key=value");
  t->add_option("--out", tr.out, "Output directory (overrides output_dir)");
  t->add_flag("--emit-plot-data", tr.emit_plot_data, "Write surrogate and residual grids as CSV");
  t->add_flag("--quiet", tr.quiet, "No progress log");
  t->add_option("--log-every", tr.log_every, "Epochs between progress lines");

  ReportArgs rep;
  auto* r = app.add_subcommand("report", "Print a saved identified PDE");
  r->add_option("pde", rep.path, "identified_pde.json")->required();
  r->add_flag("--json", rep.json);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (*g) cmd_generate(gen, out);
    if (*c) cmd_corrupt(cor, out);
    if (*t) cmd_train(tr, out, err);
    if (*r) cmd_report(rep, out);
  } catch (const EmptyPdeError& e) {
    err << "error: " << e.what() << '\n';
    return kExitEmptyPde;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const DomainError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  }
  return kExitOk;
}

}  // namespace pdelearn
