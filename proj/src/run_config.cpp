#include "pdelearn/run_config.hpp"

#include <cstdio>
#include <filesystem>
#include <set>

#include "pdelearn/errors.hpp"

namespace pdelearn {

namespace fs = std::filesystem;

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

class Collector {
 public:
  std::vector<std::string> problems;

  template <typename F>
  void operator()(const std::string& where, F&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      problems.push_back(where + ": " + e.what());
    }
  }

  void unknown_keys(const std::string& where, const SettingsTable& t, const std::set<std::string>& known) {
    for (const auto& [k, v] : t.values()) {
      if (!known.contains(k)) problems.push_back(where + ": unknown key '" + k + "' (line " + std::to_string(v.line) + ")");
    }
  }
};

std::string resolve(const std::string& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path.string() : (fs::path(base) / path).string();
}

std::size_t non_negative(std::int64_t v, const char* key) {
  if (v < 0) throw ConfigError(std::string(key) + " must be >= 0");
  return static_cast<std::size_t>(v);
}

void read_phase(Collector& c, const SettingsDocument& doc, const std::string& name, PhaseConfig& phase) {
  if (!doc.has_table(name)) return;
  const SettingsTable& t = doc.table(name);
  c.unknown_keys("[" + name + "]", t, {"epochs", "w_data", "w_coll", "w_lp", "lr", "patience", "lp_window", "lp_tolerance"});
  const std::string where = "[" + name + "]";
  c(where, [&] { phase.epochs = non_negative(t.get_int("epochs", static_cast<std::int64_t>(phase.epochs)), "epochs"); });
  c(where, [&] { phase.weights.data = t.get_double("w_data", phase.weights.data); });
  c(where, [&] { phase.weights.coll = t.get_double("w_coll", phase.weights.coll); });
  c(where, [&] { phase.weights.lp = t.get_double("w_lp", phase.weights.lp); });
  c(where, [&] { phase.lr = t.get_double("lr", phase.lr); });
  c(where, [&] {
    phase.stop.patience = non_negative(t.get_int("patience", static_cast<std::int64_t>(phase.stop.patience)), "patience");
  });
  c(where, [&] {
    phase.stop.lp_window = non_negative(t.get_int("lp_window", static_cast<std::int64_t>(phase.stop.lp_window)), "lp_window");
  });
  c(where, [&] { phase.stop.lp_tolerance = t.get_double("lp_tolerance", phase.stop.lp_tolerance); });
}

}  // namespace

RunConfig parse_run_config(const SettingsDocument& doc, const std::string& base_dir) {
  RunConfig rc;
  TrainConfig& tc = rc.train;
  Collector c;
  const SettingsTable& root = doc.root();
  c.unknown_keys("config", root,
                 {"library", "output_dir", "seed", "p", "delta", "prune_threshold", "n_random_coll", "chunk", "log_every",
                  "emit_plot_data"});
  for (const auto& [name, t] : doc.tables()) {
    if (name != "network" && name != "burn_in" && name != "sparsification" && name != "fine_tune") {
      c.problems.push_back("unknown table [" + name + "]");
    }
  }
  for (const auto& [name, v] : doc.table_arrays()) {
    if (name != "dataset") c.problems.push_back("unknown table array [[" + name + "]]");
  }

  std::int64_t seed = 0;
  c("config", [&] { seed = root.get_int("seed", 0); });
  c("config", [&] { tc.p = root.get_double("p", tc.p); });
  c("config", [&] { tc.delta = root.get_double("delta", tc.delta); });
  c("config", [&] { tc.prune_threshold = root.get_double("prune_threshold", tc.prune_threshold); });
  c("config", [&] {
    tc.n_random_coll = non_negative(root.get_int("n_random_coll", static_cast<std::int64_t>(tc.n_random_coll)), "n_random_coll");
  });
  c("config", [&] { tc.chunk = non_negative(root.get_int("chunk", static_cast<std::int64_t>(tc.chunk)), "chunk"); });
  c("config", [&] { tc.log_every = non_negative(root.get_int("log_every", 0), "log_every"); });
  c("config", [&] { tc.emit_plot_data = root.get_bool("emit_plot_data", false); });
  c("config", [&] { tc.output_dir = resolve(base_dir, root.get_string("output_dir", "run")); });
  c("library", [&] { tc.library = Library::load(resolve(base_dir, root.get_string("library"))); });

  std::int64_t layers = 5, units = 20;
  if (doc.has_table("network")) {
    const auto& t = doc.table("network");
    c.unknown_keys("[network]", t, {"hidden_layers", "units"});
    c("[network]", [&] { layers = t.get_int("hidden_layers", layers); });
    c("[network]", [&] { units = t.get_int("units", units); });
  }
  read_phase(c, doc, "burn_in", tc.burn_in);
  read_phase(c, doc, "sparsification", tc.sparsify);
  read_phase(c, doc, "fine_tune", tc.fine_tune);

  const auto& sets = doc.table_array("dataset");
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const auto& t = sets[i];
    const std::string where = "[[dataset]] #" + std::to_string(i);
    c.unknown_keys(where, t, {"name", "train", "test", "network_seed", "collocation_seed", "hidden_layers", "units"});
    DatasetSpec d;
    c(where, [&] { d.name = t.get_string("name", ""); });
    c(where, [&] { d.train = load_points(resolve(base_dir, t.get_string("train"))); });
    c(where, [&] {
      if (t.has("test")) d.test = load_points(resolve(base_dir, t.get_string("test")));
    });
    c(where, [&] { d.network_seed = static_cast<std::uint64_t>(t.get_int("network_seed", seed + static_cast<std::int64_t>(i))); });
    c(where, [&] {
      d.collocation_seed = static_cast<std::uint64_t>(t.get_int("collocation_seed", seed + 1000 + static_cast<std::int64_t>(i)));
    });
    c(where, [&] {
      d.arch.hidden_layers = static_cast<int>(t.get_int("hidden_layers", layers));
      d.arch.units = static_cast<int>(t.get_int("units", units));
    });
    d.arch.input_dim = d.train.coords.cols() > 0 ? static_cast<int>(d.train.coords.cols()) : 1 + tc.library.spatial_dim;
    tc.datasets.push_back(std::move(d));
  }

  // Structural checks only make sense once the pieces parsed.
  if (c.problems.empty()) {
    for (auto& p : tc.problems()) c.problems.push_back(std::move(p));
  } else if (sets.empty()) {
    c.problems.emplace_back("at least one [[dataset]] is required");
  }
  if (!c.problems.empty()) {
    std::string msg = "invalid run configuration:";
    for (const auto& p : c.problems) msg += "\n  - " + p;
    throw ConfigError(msg);
  }
  rc.rendered = doc.render();
  rc.hash = fnv1a_hex(rc.rendered);
  tc.provenance["config_hash"] = rc.hash;
  tc.provenance["seed"] = std::to_string(seed);
  return rc;
}

RunConfig load_run_config(const std::string& path, std::span<const std::string> overrides) {
  SettingsDocument doc = SettingsDocument::load(path);
  for (const auto& o : overrides) doc.apply_override(o);
  RunConfig rc = parse_run_config(doc, fs::path(path).parent_path().string());
  rc.source_path = path;
  return rc;
}

}  // namespace pdelearn
