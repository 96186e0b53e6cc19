#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "pdelearn/errors.hpp"
#include "pdelearn/run_config.hpp"
#include "pdelearn/settings.hpp"
#include "pdelearn/solvers.hpp"
#include "test_support.hpp"

namespace pdelearn {
namespace {

namespace fs = std::filesystem;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

// A scratch directory with lib.toml, train.csv and test.csv.
std::string run_dir(const std::string& name) {
  const std::string dir = testing::scratch_dir(name);
  fs::copy_file(testing::source_path("configs/libraries/burgers.toml"), dir + "/lib.toml");
  const PointDataset pool = grid_points(solve([] {
    SolverConfig c = preset("burgers");
    c.t_end = 1.0;
    c.time_samples = 11;
    c.x_samples = 33;
    return c;
  }()));
  SplitOptions o;
  o.n_train = 100;
  o.n_test = 20;
  auto [train, test] = split_train_test(pool, o);
  save_points(train, dir + "/train.csv");
  save_points(test, dir + "/test.csv");
  return dir;
}

const char* kConfig = R"(library = "lib.toml"
output_dir = "out"
seed = 7

[network]
hidden_layers = 2
units = 4

[burn_in]
epochs = 3

[sparsification]
epochs = 2
w_lp = 2e-4

[[dataset]]
name = "a"
train = "train.csv"
test = "test.csv"

[[dataset]]
train = "train.csv"
network_seed = 99
)";

TEST(Settings, ParsesValues) {
  const auto doc = SettingsDocument::parse(
      "a = 1\nb = -2.5e-3\nc = \"x # y\"  # comment\nd = true\ne = [1, 2,\n  3]\n[t]\nk = \"lit\"\n[[arr]]\nz = 0\n[[arr]]\nz = 1\n");
  EXPECT_EQ(doc.root().get_int("a"), 1);
  EXPECT_TRUE(doc.root().at("a").integer);
  EXPECT_EQ(doc.root().get_double("b"), -2.5e-3);
  EXPECT_EQ(doc.root().get_string("c"), "x # y");
  EXPECT_TRUE(doc.root().get_bool("d", false));
  EXPECT_EQ(doc.root().get_doubles("e"), (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(doc.table("t").get_string("k"), "lit");
  ASSERT_EQ(doc.table_array("arr").size(), 2u);
  EXPECT_EQ(doc.table_array("arr")[1].get_int("z"), 1);
  EXPECT_EQ(doc.root().at("e").line, 5u);
}

TEST(Settings, RenderReparses) {
  const auto doc = SettingsDocument::parse(kConfig);
  const auto back = SettingsDocument::parse(doc.render());
  EXPECT_EQ(back.render(), doc.render());
}

TEST(Settings, ErrorsCarryLine) {
  try {
    SettingsDocument::parse("a = 1\nb = \"unterminated\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.position(), 2u);
  }
  EXPECT_THROW(SettingsDocument::parse("a = 1\na = 2\n"), ParseError);
  EXPECT_THROW(SettingsDocument::parse("= 3\n"), ParseError);
  EXPECT_THROW(SettingsDocument::parse("[t\n"), ParseError);
  EXPECT_THROW(SettingsDocument::parse("a = [1, 2\n"), ParseError);
}

TEST(Settings, TypedGettersReject) {
  const auto doc = SettingsDocument::parse("a = \"s\"\nb = 1.5\n");
  EXPECT_THROW(doc.root().get_double("a"), ConfigError);
  EXPECT_THROW(doc.root().get_int("b"), ConfigError);
  EXPECT_THROW(doc.root().get_string("missing"), ConfigError);
  EXPECT_EQ(doc.root().get_int("missing", 4), 4);
}

TEST(Settings, Overrides) {
  auto doc = SettingsDocument::parse(kConfig);
  doc.apply_override("seed=3");
  doc.apply_override("burn_in.epochs=10");
  doc.apply_override("dataset.1.name=second");
  doc.apply_override("output_dir=/tmp/x y");
  EXPECT_EQ(doc.root().get_int("seed"), 3);
  EXPECT_EQ(doc.table("burn_in").get_int("epochs"), 10);
  EXPECT_EQ(doc.table_array("dataset")[1].get_string("name"), "second");
  EXPECT_EQ(doc.root().get_string("output_dir"), "/tmp/x y");
  EXPECT_THROW(doc.apply_override("novalue"), ConfigError);
  EXPECT_THROW(doc.apply_override("dataset.5.name=x"), ConfigError);
}

TEST(RunConfig, LoadsWithDefaultsAndSeeds) {
  const std::string dir = run_dir("rc_load");
  write_text(dir + "/run.toml", kConfig);
  const RunConfig rc = load_run_config(dir + "/run.toml");
  const TrainConfig& tc = rc.train;
  EXPECT_EQ(tc.library.size(), 17u);
  EXPECT_EQ(tc.output_dir, (fs::path(dir) / "out").string());
  EXPECT_EQ(tc.burn_in.epochs, 3u);
  EXPECT_EQ(tc.sparsify.weights.lp, 2e-4);
  EXPECT_EQ(tc.fine_tune.epochs, 1000u);
  EXPECT_EQ(tc.p, 0.1);
  EXPECT_EQ(tc.prune_threshold, 5e-4);
  ASSERT_EQ(tc.datasets.size(), 2u);
  EXPECT_EQ(tc.datasets[0].network_seed, 7u);
  EXPECT_EQ(tc.datasets[0].collocation_seed, 1007u);
  EXPECT_EQ(tc.datasets[1].network_seed, 99u);
  EXPECT_EQ(tc.datasets[1].collocation_seed, 1008u);
  EXPECT_EQ(tc.datasets[0].arch.hidden_layers, 2);
  EXPECT_EQ(tc.datasets[0].arch.input_dim, 2);
  EXPECT_EQ(tc.datasets[0].test.size(), 20u);
  EXPECT_TRUE(tc.datasets[1].test.empty());
  EXPECT_EQ(rc.hash.size(), 16u);
}

TEST(RunConfig, OverridesChangeHash) {
  const std::string dir = run_dir("rc_hash");
  write_text(dir + "/run.toml", kConfig);
  const RunConfig a = load_run_config(dir + "/run.toml");
  const RunConfig b = load_run_config(dir + "/run.toml");
  const std::vector<std::string> ov{"seed=8"};
  const RunConfig c = load_run_config(dir + "/run.toml", ov);
  EXPECT_EQ(a.hash, b.hash);
  EXPECT_NE(a.hash, c.hash);
  EXPECT_EQ(c.train.datasets[0].network_seed, 8u);
}

TEST(RunConfig, AllProblemsReportedTogether) {
  const std::string dir = run_dir("rc_bad");
  std::string text = kConfig;
  text += "bogus = 1\n";  // lands in the second dataset table
  text.replace(text.find("seed = 7"), 8, "seed = 7\ncolour = \"red\"");
  text.replace(text.find("[burn_in]\nepochs = 3"), 20, "[burn_in]\nepochs = 3\nw_lp = 0.1");
  write_text(dir + "/run.toml", text);
  try {
    load_run_config(dir + "/run.toml");
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("colour"), std::string::npos) << msg;
    EXPECT_NE(msg.find("bogus"), std::string::npos) << msg;
  }
  // Once the keys are known the structural check rejects w_lp in burn-in.
  std::string only_lp = kConfig;
  only_lp.replace(only_lp.find("[burn_in]\nepochs = 3"), 20, "[burn_in]\nepochs = 3\nw_lp = 0.1");
  write_text(dir + "/run.toml", only_lp);
  try {
    load_run_config(dir + "/run.toml");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("w_lp"), std::string::npos);
  }
}

TEST(RunConfig, MissingFilesAreConfigErrors) {
  const std::string dir = run_dir("rc_missing");
  std::string text = kConfig;
  text.replace(text.find("lib.toml"), 8, "nope.toml");
  write_text(dir + "/run.toml", text);
  EXPECT_THROW(load_run_config(dir + "/run.toml"), ConfigError);
  EXPECT_THROW(load_run_config(dir + "/absent.toml"), ConfigError);
  write_text(dir + "/run.toml", "library = \"lib.toml\"\n");
  EXPECT_THROW(load_run_config(dir + "/run.toml"), ConfigError);
}

TEST(RunConfig, Fnv1a) {
  EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
}

}  // namespace
}  // namespace pdelearn
