#pragma once

// Datasets, subsampling, noise corruption, train/test splits and file I/O.
//
// Grid file (binary, little-endian):
//   8 bytes   magic "PDLGRID\0"
//   uint32    version (1)
//   uint32    spatial dimension n_D
//   uint64    axis length, for t then each spatial axis
//   uint32    metadata entry count, then per entry: uint32 key length, key
//             bytes, uint32 value length, value bytes
//   float64   axis coordinates, t axis first
//   float64   values, t-major (the last spatial axis varies fastest)
//
// Point file (text): comment lines starting with '#', the first being
// "# pdelearn-points version=1", followed by "# key=value" metadata lines,
// a column header "t,x[,y[,z]],u" and one row per point with every number
// written in shortest round-trip form.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace pdelearn {

/// (0, T] x [lo_1, hi_1] x ... x [lo_nD, hi_nD].
struct ProblemDomain {
  double t_end = 1.0;
  std::vector<std::pair<double, double>> box;

  int spatial_dim() const { return static_cast<int>(box.size()); }
  void validate() const;
  /// Closed-box membership (t = 0 allowed so grids starting at t = 0 fit).
  bool contains(std::span<const double> point) const;
  bool operator==(const ProblemDomain&) const = default;
};

using Metadata = std::map<std::string, std::string>;

struct GridDataset {
  std::vector<std::vector<double>> axes;  // t, x, [y, [z]]
  std::vector<double> values;             // t-major
  Metadata metadata;

  int spatial_dim() const { return static_cast<int>(axes.size()) - 1; }
  std::size_t size() const { return values.size(); }
  void validate() const;
  ProblemDomain domain() const;
  std::vector<double> point(std::size_t flat_index) const;
  double at(std::size_t it, std::size_t ix) const;  // 1-D grids
  bool operator==(const GridDataset&) const = default;
};

enum class DatasetRole { Train, Test, Clean };
const char* role_name(DatasetRole role);
DatasetRole parse_role(const std::string& name);

struct PointDataset {
  Eigen::MatrixXd coords;  // N x (1 + n_D), columns t, x, ...
  Eigen::VectorXd values;
  ProblemDomain domain;
  double noise = 0.0;
  DatasetRole role = DatasetRole::Clean;
  Metadata metadata;

  std::size_t size() const { return static_cast<std::size_t>(values.size()); }
  bool empty() const { return values.size() == 0; }
  void validate() const;
  bool operator==(const PointDataset& other) const;
};

/// Every grid point as a clean PointDataset.
PointDataset grid_points(const GridDataset& grid);

/// Population standard deviation.
double population_std(std::span<const double> values);

/// n distinct rows drawn uniformly without replacement. Row order is the
/// draw order. Also returns the source indices.
PointDataset subsample(const PointDataset& pool, std::size_t n, std::uint64_t seed,
                       std::vector<std::size_t>* indices = nullptr);
PointDataset subsample(const GridDataset& grid, std::size_t n, std::uint64_t seed);

/// values += N(0, (q * sigma_nf)^2); sigma_nf must come from the full clean
/// dataset, not from the subsample.
PointDataset add_noise(PointDataset data, double q, double sigma_nf, std::uint64_t seed);

struct SplitOptions {
  std::size_t n_train = 0;
  std::optional<std::size_t> n_test;  // default ceil(0.2 n_train)
  double q = 0.0;
  std::uint64_t sample_seed = 0;
  std::uint64_t noise_seed = 0;
};

std::size_t default_test_size(std::size_t n_train);

/// Disjoint train/test subsamples of the pool, both corrupted at level q with
/// independent noise; sigma_nf is taken over the whole pool.
std::pair<PointDataset, PointDataset> split_train_test(const PointDataset& pool, const SplitOptions& opts,
                                                       std::vector<std::size_t>* train_indices = nullptr,
                                                       std::vector<std::size_t>* test_indices = nullptr);

void save_grid(const GridDataset& grid, const std::string& path);
GridDataset load_grid(const std::string& path);
std::string encode_grid(const GridDataset& grid);
GridDataset decode_grid(std::string_view bytes);

void save_points(const PointDataset& data, const std::string& path);
PointDataset load_points(const std::string& path);
std::string encode_points(const PointDataset& data);
PointDataset decode_points(std::string_view text);

/// Shortest text that parses back to the same double.
std::string format_exact(double v);

}  // namespace pdelearn
