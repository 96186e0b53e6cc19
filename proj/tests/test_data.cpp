#include <gtest/gtest.h>

#include <charconv>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "pdelearn/data.hpp"
#include "pdelearn/errors.hpp"
#include "pdelearn/solvers.hpp"
#include "test_support.hpp"

namespace pdelearn {
namespace {

GridDataset small_grid(std::size_t nt = 4, std::size_t nx = 5) {
  GridDataset g;
  g.axes.resize(2);
  for (std::size_t i = 0; i < nt; ++i) g.axes[0].push_back(0.25 * static_cast<double>(i));
  for (std::size_t i = 0; i < nx; ++i) g.axes[1].push_back(-1.0 + 0.5 * static_cast<double>(i));
  for (std::size_t i = 0; i < nt * nx; ++i) g.values.push_back(std::sin(0.37 * static_cast<double>(i)) / 3.0);
  g.metadata["equation"] = "test";
  return g;
}

std::set<std::vector<double>> row_set(const PointDataset& d) {
  std::set<std::vector<double>> s;
  for (Eigen::Index i = 0; i < d.coords.rows(); ++i) {
    std::vector<double> r;
    for (Eigen::Index c = 0; c < d.coords.cols(); ++c) r.push_back(d.coords(i, c));
    s.insert(r);
  }
  return s;
}

PointDataset gaussian_pool(std::size_t n, std::uint64_t seed) {
  PointDataset d;
  d.domain = ProblemDomain{1.0, {{0.0, 1.0}}};
  d.coords.resize(static_cast<Eigen::Index>(n), 2);
  d.values.resize(static_cast<Eigen::Index>(n));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (Eigen::Index i = 0; i < d.coords.rows(); ++i) {
    d.coords(i, 0) = U(rng);
    d.coords(i, 1) = U(rng);
    d.values(i) = std::sin(6.0 * d.coords(i, 1)) + d.coords(i, 0);
  }
  return d;
}

TEST(Domain, Validation) {
  EXPECT_NO_THROW((ProblemDomain{1.0, {{0.0, 1.0}}}).validate());
  EXPECT_THROW((ProblemDomain{0.0, {{0.0, 1.0}}}).validate(), ConfigError);
  EXPECT_THROW((ProblemDomain{1.0, {{1.0, 0.0}}}).validate(), ConfigError);
  EXPECT_THROW((ProblemDomain{1.0, {}}).validate(), ConfigError);
  EXPECT_THROW((ProblemDomain{1.0, {{0, 1}, {0, 1}, {0, 1}, {0, 1}}}).validate(), ConfigError);
}

TEST(Subsample, FullGridEveryPointOnce) {
  const GridDataset g = small_grid();
  const PointDataset all = subsample(g, g.size(), 3);
  EXPECT_EQ(all.size(), g.size());
  EXPECT_EQ(row_set(all), row_set(grid_points(g)));
}

TEST(Subsample, SinglePointAndLimits) {
  const GridDataset g = small_grid();
  const PointDataset one = subsample(g, 1, 9);
  ASSERT_EQ(one.size(), 1u);
  const std::vector<double> p{one.coords(0, 0), one.coords(0, 1)};
  EXPECT_TRUE(g.domain().contains(p));
  EXPECT_THROW(subsample(g, g.size() + 1, 1), ConfigError);
}

TEST(Subsample, DistinctAndUniform) {
  const GridDataset g = small_grid(4, 5);  // 20 cells
  const PointDataset pool = grid_points(g);
  const int draws = 4000;
  const std::size_t n = 5;
  std::vector<int> hits(pool.size(), 0);
  for (int d = 0; d < draws; ++d) {
    std::vector<std::size_t> idx;
    subsample(pool, n, static_cast<std::uint64_t>(d), &idx);
    EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), n);
    for (std::size_t i : idx) ++hits[i];
  }
  const double p = static_cast<double>(n) / static_cast<double>(pool.size());
  const double mean = draws * p;
  const double sd = std::sqrt(draws * p * (1.0 - p));
  for (int h : hits) EXPECT_LE(std::abs(h - mean), 3.0 * sd);
}

TEST(Noise, ZeroAndDeterminism) {
  const PointDataset pool = gaussian_pool(200, 1);
  EXPECT_EQ(add_noise(pool, 0.0, 1.0, 5).values, pool.values);
  EXPECT_EQ(add_noise(pool, 0.3, 1.0, 5).values, add_noise(pool, 0.3, 1.0, 5).values);
  EXPECT_NE(add_noise(pool, 0.3, 1.0, 5).values, add_noise(pool, 0.3, 1.0, 6).values);
  EXPECT_THROW(add_noise(pool, -0.1, 1.0, 5), ConfigError);
}

TEST(Noise, LevelSemantics) {
  const PointDataset pool = gaussian_pool(100000, 2);
  const double sigma = population_std(std::span<const double>(pool.values.data(), pool.size()));
  for (double q : {0.25, 0.5, 1.0}) {
    const PointDataset noisy = add_noise(pool, q, sigma, 17);
    const Eigen::VectorXd eta = noisy.values - pool.values;
    const double s = std::sqrt((eta.array() - eta.mean()).square().mean());
    EXPECT_NEAR(s / sigma, q, 0.02 * q);
    if (q == 0.5) {
      EXPECT_GE(s / sigma, 0.49);
      EXPECT_LE(s / sigma, 0.51);
    }
  }
}

TEST(Split, SizesDefaultsAndDisjointness) {
  EXPECT_EQ(default_test_size(4000), 800u);
  EXPECT_EQ(default_test_size(1), 1u);
  EXPECT_EQ(default_test_size(6), 2u);
  EXPECT_EQ(default_test_size(10), 2u);
  const PointDataset pool = gaussian_pool(3000, 3);
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> size(1, 2000);
  for (int trial = 0; trial < 50; ++trial) {
    SplitOptions o;
    o.n_train = size(rng);
    o.n_test = std::min<std::size_t>(size(rng) / 2, 3000 - o.n_train);
    o.sample_seed = static_cast<std::uint64_t>(trial);
    o.q = 0.1;
    std::vector<std::size_t> tr, te;
    auto [train, test] = split_train_test(pool, o, &tr, &te);
    EXPECT_EQ(train.size(), o.n_train);
    EXPECT_EQ(test.size(), *o.n_test);
    std::set<std::size_t> a(tr.begin(), tr.end());
    for (std::size_t i : te) EXPECT_FALSE(a.contains(i));
    EXPECT_EQ(train.role, DatasetRole::Train);
    EXPECT_EQ(test.role, DatasetRole::Test);
  }
}

TEST(Split, EmptyTestAndOverflow) {
  const PointDataset pool = gaussian_pool(100, 3);
  SplitOptions o;
  o.n_train = 100;
  o.n_test = 0;
  auto [train, test] = split_train_test(pool, o);
  EXPECT_EQ(train.size(), 100u);
  EXPECT_TRUE(test.empty());
  o.n_test = 1;
  EXPECT_THROW(split_train_test(pool, o), ConfigError);
  o.n_train = 90;
  o.n_test.reset();  // default 18
  EXPECT_THROW(split_train_test(pool, o), ConfigError);
}

TEST(Split, SigmaIsTakenOverWholePool) {
  // Only low values in the subset: the noise scale must still follow the pool.
  PointDataset pool = gaussian_pool(5000, 8);
  const double pool_sigma = population_std(std::span<const double>(pool.values.data(), pool.size()));
  SplitOptions o;
  o.n_train = 50;
  o.n_test = 10;
  o.q = 0.5;
  std::vector<std::size_t> tr;
  auto [train, test] = split_train_test(pool, o, &tr);
  EXPECT_EQ(train.metadata.at("sigma_nf"), format_exact(pool_sigma));
  Eigen::VectorXd sub(static_cast<Eigen::Index>(tr.size()));
  for (std::size_t i = 0; i < tr.size(); ++i) sub(static_cast<Eigen::Index>(i)) = pool.values(static_cast<Eigen::Index>(tr[i]));
  EXPECT_NE(format_exact(population_std(std::span<const double>(sub.data(), tr.size()))), train.metadata.at("sigma_nf"));
}

TEST(GridFile, RoundTripIsExact) {
  GridDataset g = small_grid();
  g.values[3] = std::numeric_limits<double>::denorm_min();
  g.values[4] = -0.0;
  g.metadata["note"] = "with = and spaces";
  const GridDataset back = decode_grid(encode_grid(g));
  EXPECT_EQ(back, g);
  EXPECT_TRUE(std::signbit(back.values[4]));
  const std::string dir = testing::scratch_dir("grid");
  save_grid(g, dir + "/g.grid");
  EXPECT_EQ(load_grid(dir + "/g.grid"), g);
}

TEST(GridFile, TruncationAndBadMagic) {
  const std::string bytes = encode_grid(small_grid());
  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{20}, bytes.size() - 1}) {
    EXPECT_THROW(decode_grid(bytes.substr(0, cut)), ParseError) << cut;
  }
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_grid(bad), ParseError);
  EXPECT_THROW(decode_grid(bytes + "x"), ParseError);
}

TEST(GridFile, BurgersAxes) {
  const GridDataset g = solve(preset("burgers"));
  const std::string dir = testing::scratch_dir("burgers_grid");
  save_grid(g, dir + "/b.grid");
  const GridDataset back = load_grid(dir + "/b.grid");
  EXPECT_EQ(back.axes[0].size(), 201u);
  EXPECT_EQ(back.axes[1].size(), 257u);
  EXPECT_EQ(back, g);
}

TEST(PointsFile, RoundTripIsExact) {
  PointDataset d = gaussian_pool(40, 9);
  d.values(0) = 1.0 / 3.0;
  d.values(1) = 1e-300;
  d.values(2) = -123456789.123456789;
  d.noise = 0.25;
  d.role = DatasetRole::Test;
  d.metadata["sample_seed"] = "7";
  const PointDataset back = decode_points(encode_points(d));
  EXPECT_EQ(back, d);
  const std::string dir = testing::scratch_dir("points");
  save_points(d, dir + "/p.csv");
  EXPECT_EQ(load_points(dir + "/p.csv"), d);
}

TEST(PointsFile, TwoDimensionalAndEmpty) {
  PointDataset d = wave_dataset(25, 3);
  EXPECT_EQ(decode_points(encode_points(d)), d);
  PointDataset empty;
  empty.domain = ProblemDomain{1.0, {{0.0, 1.0}}};
  empty.coords.resize(0, 2);
  EXPECT_EQ(decode_points(encode_points(empty)), empty);
}

TEST(PointsFile, TruncatedOrMalformed) {
  const std::string text = encode_points(gaussian_pool(10, 2));
  const std::size_t last_line = text.rfind('\n', text.size() - 2);
  EXPECT_THROW(decode_points(text.substr(0, last_line + 1)), ParseError);
  EXPECT_THROW(decode_points(text.substr(0, text.size() / 2)), ParseError);
  EXPECT_THROW(decode_points("t,x,u\n0,0,0\n"), ParseError);
  std::string bad = text;
  bad.replace(bad.rfind(','), 1, ";");
  EXPECT_THROW(decode_points(bad), ParseError);
}

TEST(PointsFile, OutsideDomainRejected) {
  PointDataset d = gaussian_pool(3, 1);
  d.coords(1, 1) = 7.0;
  EXPECT_THROW(d.validate(), ConfigError);
}

TEST(FormatExact, ShortestRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 5e-324, -2.5, 1e22}) {
    const std::string s = format_exact(v);
    double back = 0.0;
    std::from_chars(s.data(), s.data() + s.size(), back);
    EXPECT_EQ(back, v) << s;
  }
  EXPECT_EQ(format_exact(0.1), "0.1");
}

}  // namespace
}  // namespace pdelearn
