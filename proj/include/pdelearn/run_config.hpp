#pragma once

// Run configuration file. Keys (all optional unless marked):
//
//   library = "path"            (required) library file
//   output_dir = "path"         default "run"
//   seed = 0                    base seed for per-dataset defaults
//   p, delta, prune_threshold, n_random_coll, chunk, log_every
//   emit_plot_data = false
//   [network]                   hidden_layers, units (defaults for datasets)
//   [burn_in] [sparsification] [fine_tune]
//                               epochs, w_data, w_coll, w_lp, lr,
//                               patience, lp_window, lp_tolerance
//   [[dataset]]                 (at least one) train = "points file"
//                               (required), test, name, network_seed,
//                               collocation_seed, hidden_layers, units
//
// Relative paths resolve against the configuration file's directory.
// Dataset i defaults to network_seed = seed + i and
// collocation_seed = seed + 1000 + i.

#include <span>
#include <string>
#include <vector>

#include "pdelearn/settings.hpp"
#include "pdelearn/trainer.hpp"

namespace pdelearn {

struct RunConfig {
  TrainConfig train;
  std::string source_path;
  std::string rendered;  // effective configuration after overrides
  std::string hash;      // FNV-1a of `rendered`, hex
};

/// Parse, apply `key=value` overrides, load every referenced file and
/// validate. All problems are reported together in one ConfigError.
RunConfig load_run_config(const std::string& path, std::span<const std::string> overrides = {});
RunConfig parse_run_config(const SettingsDocument& doc, const std::string& base_dir);

std::string fnv1a_hex(std::string_view text);

}  // namespace pdelearn
