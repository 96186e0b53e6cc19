#include "pdelearn/data.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "pdelearn/errors.hpp"
#include "pdelearn/term_library.hpp"

namespace pdelearn {

// ------------------------------------------------------------------ domains

void ProblemDomain::validate() const {
  if (!(t_end > 0.0) || !std::isfinite(t_end)) throw ConfigError("domain needs T > 0");
  if (box.empty() || box.size() > 3) throw ConfigError("domain spatial dimension must be 1, 2 or 3");
  for (const auto& [lo, hi] : box) {
    if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) throw ConfigError("domain needs lo < hi on every axis");
  }
}

bool ProblemDomain::contains(std::span<const double> point) const {
  if (point.size() != box.size() + 1) return false;
  if (point[0] < 0.0 || point[0] > t_end) return false;
  for (std::size_t i = 0; i < box.size(); ++i) {
    if (point[i + 1] < box[i].first || point[i + 1] > box[i].second) return false;
  }
  return true;
}

// -------------------------------------------------------------------- grids

void GridDataset::validate() const {
  if (axes.size() < 2 || axes.size() > 4) throw ConfigError("grid needs a t axis and 1 to 3 spatial axes");
  std::size_t n = 1;
  for (const auto& axis : axes) {
    if (axis.empty()) throw ConfigError("grid axes must be nonempty");
    for (std::size_t i = 1; i < axis.size(); ++i) {
      if (!(axis[i] > axis[i - 1])) throw ConfigError("grid axis coordinates must be strictly increasing");
    }
    n *= axis.size();
  }
  if (values.size() != n) throw ConfigError("grid value count does not match the axis lengths");
}

ProblemDomain GridDataset::domain() const {
  ProblemDomain d;
  d.t_end = axes[0].back();
  for (std::size_t i = 1; i < axes.size(); ++i) d.box.emplace_back(axes[i].front(), axes[i].back());
  return d;
}

std::vector<double> GridDataset::point(std::size_t flat_index) const {
  std::vector<double> p(axes.size());
  for (std::size_t a = axes.size(); a-- > 0;) {
    const std::size_t len = axes[a].size();
    p[a] = axes[a][flat_index % len];
    flat_index /= len;
  }
  return p;
}

double GridDataset::at(std::size_t it, std::size_t ix) const { return values.at(it * axes.at(1).size() + ix); }

// ------------------------------------------------------------ point datasets

const char* role_name(DatasetRole role) {
  switch (role) {
    case DatasetRole::Train: return "train";
    case DatasetRole::Test: return "test";
    case DatasetRole::Clean: return "clean";
  }
  return "clean";
}

DatasetRole parse_role(const std::string& name) {
  if (name == "train") return DatasetRole::Train;
  if (name == "test") return DatasetRole::Test;
  if (name == "clean") return DatasetRole::Clean;
  throw ConfigError("unknown dataset role '" + name + "'");
}

void PointDataset::validate() const {
  domain.validate();
  if (coords.rows() != values.size()) throw ConfigError("point dataset: coordinate and value counts differ");
  if (coords.cols() != domain.spatial_dim() + 1) throw ConfigError("point dataset: column count does not match domain");
  if (noise < 0.0) throw ConfigError("point dataset: noise level must be >= 0");
  std::vector<double> p(static_cast<std::size_t>(coords.cols()));
  for (Eigen::Index i = 0; i < coords.rows(); ++i) {
    for (Eigen::Index j = 0; j < coords.cols(); ++j) p[static_cast<std::size_t>(j)] = coords(i, j);
    if (!domain.contains(p)) throw ConfigError("point dataset: row " + std::to_string(i) + " lies outside the domain");
  }
}

bool PointDataset::operator==(const PointDataset& o) const {
  return coords.rows() == o.coords.rows() && coords.cols() == o.coords.cols() && coords == o.coords &&
         values.size() == o.values.size() && values == o.values && domain == o.domain && noise == o.noise &&
         role == o.role && metadata == o.metadata;
}

PointDataset grid_points(const GridDataset& grid) {
  grid.validate();
  PointDataset out;
  out.domain = grid.domain();
  const auto n = static_cast<Eigen::Index>(grid.size());
  out.coords.resize(n, static_cast<Eigen::Index>(grid.axes.size()));
  out.values.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto p = grid.point(static_cast<std::size_t>(i));
    for (std::size_t j = 0; j < p.size(); ++j) out.coords(i, static_cast<Eigen::Index>(j)) = p[j];
    out.values(i) = grid.values[static_cast<std::size_t>(i)];
  }
  out.metadata = grid.metadata;
  return out;
}

double population_std(std::span<const double> values) {
  if (values.empty()) return 0.0;
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size()));
}

namespace {

// First n entries of a seeded partial Fisher-Yates shuffle of 0..size-1.
std::vector<std::size_t> draw_indices(std::size_t size, std::size_t n, std::uint64_t seed) {
  if (n > size) {
    throw ConfigError("cannot draw " + std::to_string(n) + " points from " + std::to_string(size));
  }
  std::vector<std::size_t> idx(size);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, size - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(n);
  return idx;
}

PointDataset take_rows(const PointDataset& pool, std::span<const std::size_t> rows) {
  PointDataset out;
  out.domain = pool.domain;
  out.noise = pool.noise;
  out.role = pool.role;
  out.metadata = pool.metadata;
  out.coords.resize(static_cast<Eigen::Index>(rows.size()), pool.coords.cols());
  out.values.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(rows[i]);
    out.coords.row(static_cast<Eigen::Index>(i)) = pool.coords.row(r);
    out.values(static_cast<Eigen::Index>(i)) = pool.values(r);
  }
  return out;
}

}  // namespace

PointDataset subsample(const PointDataset& pool, std::size_t n, std::uint64_t seed, std::vector<std::size_t>* indices) {
  auto idx = draw_indices(pool.size(), n, seed);
  PointDataset out = take_rows(pool, idx);
  if (indices) *indices = std::move(idx);
  return out;
}

PointDataset subsample(const GridDataset& grid, std::size_t n, std::uint64_t seed) {
  if (n > grid.size()) {
    throw ConfigError("cannot draw " + std::to_string(n) + " points from a grid of " + std::to_string(grid.size()));
  }
  return subsample(grid_points(grid), n, seed);
}

PointDataset add_noise(PointDataset data, double q, double sigma_nf, std::uint64_t seed) {
  if (q < 0.0) throw ConfigError("noise level must be >= 0");
  data.noise = q;
  if (q == 0.0) return data;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> eta(0.0, q * sigma_nf);
  for (Eigen::Index i = 0; i < data.values.size(); ++i) data.values(i) += eta(rng);
  return data;
}

std::size_t default_test_size(std::size_t n_train) { return (n_train + 4) / 5; }

std::pair<PointDataset, PointDataset> split_train_test(const PointDataset& pool, const SplitOptions& opts,
                                                       std::vector<std::size_t>* train_indices,
                                                       std::vector<std::size_t>* test_indices) {
  if (!(opts.q >= 0.0)) throw ConfigError("noise level must be >= 0");
  const std::size_t n_test = opts.n_test.value_or(default_test_size(opts.n_train));
  if (opts.n_train + n_test > pool.size()) {
    throw ConfigError("train (" + std::to_string(opts.n_train) + ") + test (" + std::to_string(n_test) +
                      ") points exceed the " + std::to_string(pool.size()) + " available");
  }
  const auto idx = draw_indices(pool.size(), opts.n_train + n_test, opts.sample_seed);
  const std::span<const std::size_t> all(idx);
  const auto tr = all.first(opts.n_train);
  const auto te = all.subspan(opts.n_train);
  const double sigma = population_std(std::span<const double>(pool.values.data(), pool.size()));

  // One noise stream: train rows first, then test rows.
  std::mt19937_64 rng(opts.noise_seed);
  std::normal_distribution<double> eta(0.0, opts.q * sigma);
  const auto corrupt = [&](PointDataset d, DatasetRole role) {
    d.role = role;
    d.noise = opts.q;
    if (opts.q > 0.0) {
      for (Eigen::Index i = 0; i < d.values.size(); ++i) d.values(i) += eta(rng);
    }
    d.metadata["sample_seed"] = std::to_string(opts.sample_seed);
    d.metadata["noise_seed"] = std::to_string(opts.noise_seed);
    d.metadata["sigma_nf"] = format_exact(sigma);
    return d;
  };
  PointDataset train = corrupt(take_rows(pool, tr), DatasetRole::Train);
  PointDataset test = corrupt(take_rows(pool, te), DatasetRole::Test);
  if (train_indices) train_indices->assign(tr.begin(), tr.end());
  if (test_indices) test_indices->assign(te.begin(), te.end());
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------- file I/O

std::string format_exact(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

namespace {

constexpr char kGridMagic[8] = {'P', 'D', 'L', 'G', 'R', 'I', 'D', '\0'};
constexpr std::uint32_t kGridVersion = 1;

template <typename T>
void put(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_double(std::string& out, double d) { put(out, std::bit_cast<std::uint64_t>(d)); }

void put_string(std::string& out, const std::string& s) {
  put(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return v;
  }
  double get_double() { return std::bit_cast<double>(get<std::uint64_t>()); }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(bytes_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::string_view raw(std::size_t n) {
    need(n);
    auto v = bytes_.substr(pos_, n);
    pos_ += n;
    return v;
  }
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ParseError("grid file truncated", pos_);
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << content;
  if (!out) throw ConfigError("failed writing " + path);
}

}  // namespace

std::string encode_grid(const GridDataset& grid) {
  grid.validate();
  std::string out(kGridMagic, sizeof(kGridMagic));
  put(out, kGridVersion);
  put(out, static_cast<std::uint32_t>(grid.spatial_dim()));
  for (const auto& axis : grid.axes) put(out, static_cast<std::uint64_t>(axis.size()));
  put(out, static_cast<std::uint32_t>(grid.metadata.size()));
  for (const auto& [k, v] : grid.metadata) {
    put_string(out, k);
    put_string(out, v);
  }
  for (const auto& axis : grid.axes) {
    for (double d : axis) put_double(out, d);
  }
  for (double d : grid.values) put_double(out, d);
  return out;
}

GridDataset decode_grid(std::string_view bytes) {
  ByteReader r(bytes);
  if (r.raw(sizeof(kGridMagic)) != std::string_view(kGridMagic, sizeof(kGridMagic))) {
    throw ParseError("not a grid file (bad magic)", 0);
  }
  if (const auto v = r.get<std::uint32_t>(); v != kGridVersion) {
    throw ParseError("unsupported grid version " + std::to_string(v), r.pos() - 4);
  }
  const auto nd = r.get<std::uint32_t>();
  if (nd < 1 || nd > 3) throw ParseError("grid spatial dimension must be 1..3", r.pos() - 4);
  std::vector<std::uint64_t> lengths(nd + 1);
  std::uint64_t total = 1;
  for (auto& len : lengths) {
    len = r.get<std::uint64_t>();
    if (len == 0 || len > (std::uint64_t{1} << 32)) throw ParseError("implausible grid axis length", r.pos() - 8);
    total *= len;
  }
  GridDataset grid;
  const auto meta = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < meta; ++i) {
    std::string k = r.get_string();
    grid.metadata[std::move(k)] = r.get_string();
  }
  std::uint64_t axis_total = 0;
  for (auto len : lengths) axis_total += len;
  r.need(static_cast<std::size_t>((axis_total + total) * 8));
  for (auto len : lengths) {
    std::vector<double> axis(len);
    for (auto& d : axis) d = r.get_double();
    grid.axes.push_back(std::move(axis));
  }
  grid.values.resize(total);
  for (auto& d : grid.values) d = r.get_double();
  if (!r.done()) throw ParseError("trailing bytes after grid values", r.pos());
  try {
    grid.validate();
  } catch (const ConfigError& e) {
    throw ParseError(std::string("invalid grid: ") + e.what(), 0);
  }
  return grid;
}

void save_grid(const GridDataset& grid, const std::string& path) { write_file(path, encode_grid(grid)); }

GridDataset load_grid(const std::string& path) { return decode_grid(read_file(path)); }

std::string encode_points(const PointDataset& data) {
  const int nd = data.domain.spatial_dim();
  std::string out = "# pdelearn-points version=1\n";
  out += "# rows=" + std::to_string(data.size()) + "\n";
  out += "# t_end=" + format_exact(data.domain.t_end) + "\n";
  for (int i = 0; i < nd; ++i) {
    const auto& [lo, hi] = data.domain.box[static_cast<std::size_t>(i)];
    out += std::string("# box.") + kCoordinateNames[static_cast<std::size_t>(i + 1)] + "=" + format_exact(lo) + "," +
           format_exact(hi) + "\n";
  }
  out += "# noise=" + format_exact(data.noise) + "\n";
  out += std::string("# role=") + role_name(data.role) + "\n";
  for (const auto& [k, v] : data.metadata) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw ConfigError("metadata entries may not contain '=' in keys or line breaks");
    }
    out += "# meta." + k + "=" + v + "\n";
  }
  out += "t";
  for (int i = 0; i < nd; ++i) out += std::string(",") + kCoordinateNames[static_cast<std::size_t>(i + 1)];
  out += ",u\n";
  for (Eigen::Index r = 0; r < data.coords.rows(); ++r) {
    for (Eigen::Index c = 0; c < data.coords.cols(); ++c) out += format_exact(data.coords(r, c)) + ",";
    out += format_exact(data.values(r)) + "\n";
  }
  return out;
}

namespace {

double parse_number(std::string_view s, std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ParseError("points file line " + std::to_string(line) + ": bad number '" + std::string(s) + "'", line);
  }
  return v;
}

}  // namespace

PointDataset decode_points(std::string_view text) {
  std::vector<std::string_view> lines;
  for (std::size_t start = 0; start < text.size();) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  if (lines.empty() || lines[0] != "# pdelearn-points version=1") {
    throw ParseError("points file line 1: missing '# pdelearn-points version=1' header", 1);
  }
  PointDataset data;
  std::optional<std::size_t> rows;
  std::map<char, std::pair<double, double>> box;
  std::size_t i = 1;
  for (; i < lines.size() && !lines[i].empty() && lines[i][0] == '#'; ++i) {
    const std::size_t ln = i + 1;
    auto body = lines[i].substr(1);
    while (!body.empty() && body.front() == ' ') body.remove_prefix(1);
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw ParseError("points file line " + std::to_string(ln) + ": expected key=value", ln);
    const std::string key(body.substr(0, eq));
    const std::string_view value = body.substr(eq + 1);
    if (key == "rows") {
      rows = static_cast<std::size_t>(parse_number(value, ln));
    } else if (key == "t_end") {
      data.domain.t_end = parse_number(value, ln);
    } else if (key.starts_with("box.") && key.size() == 5) {
      const auto comma = value.find(',');
      if (comma == std::string_view::npos) throw ParseError("points file line " + std::to_string(ln) + ": box needs lo,hi", ln);
      box[key[4]] = {parse_number(value.substr(0, comma), ln), parse_number(value.substr(comma + 1), ln)};
    } else if (key == "noise") {
      data.noise = parse_number(value, ln);
    } else if (key == "role") {
      try {
        data.role = parse_role(std::string(value));
      } catch (const ConfigError& e) {
        throw ParseError("points file line " + std::to_string(ln) + ": " + e.what(), ln);
      }
    } else if (key.starts_with("meta.")) {
      data.metadata[key.substr(5)] = std::string(value);
    } else {
      throw ParseError("points file line " + std::to_string(ln) + ": unknown key '" + key + "'", ln);
    }
  }
  std::string header = "t";
  for (std::size_t d = 1; d <= box.size(); ++d) {
    const char name = kCoordinateNames[d];
    if (!box.contains(name)) throw ParseError("points file: box axes must be consecutive from x", 0);
    data.domain.box.push_back(box[name]);
    header += std::string(",") + name;
  }
  header += ",u";
  if (i >= lines.size() || lines[i] != header) {
    throw ParseError("points file line " + std::to_string(i + 1) + ": expected column header '" + header + "'", i + 1);
  }
  ++i;
  const auto cols = static_cast<Eigen::Index>(box.size() + 1);
  std::vector<double> flat;
  std::size_t n = 0;
  for (; i < lines.size(); ++i) {
    if (lines[i].empty()) {
      if (i + 1 == lines.size()) break;  // final newline
      throw ParseError("points file line " + std::to_string(i + 1) + ": empty line", i + 1);
    }
    std::size_t fields = 0;
    std::string_view rest = lines[i];
    while (true) {
      const auto comma = rest.find(',');
      flat.push_back(parse_number(rest.substr(0, comma), i + 1));
      ++fields;
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (fields != static_cast<std::size_t>(cols + 1)) {
      throw ParseError("points file line " + std::to_string(i + 1) + ": expected " + std::to_string(cols + 1) + " fields",
                       i + 1);
    }
    ++n;
  }
  if (!rows || *rows != n) {
    throw ParseError("points file truncated: header declares " + (rows ? std::to_string(*rows) : std::string("no")) +
                         " rows, found " + std::to_string(n),
                     lines.size());
  }
  data.coords.resize(static_cast<Eigen::Index>(n), cols);
  data.values.resize(static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      data.coords(static_cast<Eigen::Index>(r), c) = flat[r * static_cast<std::size_t>(cols + 1) + static_cast<std::size_t>(c)];
    }
    data.values(static_cast<Eigen::Index>(r)) = flat[r * static_cast<std::size_t>(cols + 1) + static_cast<std::size_t>(cols)];
  }
  try {
    data.validate();
  } catch (const ConfigError& e) {
    throw ParseError(std::string("invalid points file: ") + e.what(), 0);
  }
  return data;
}

void save_points(const PointDataset& data, const std::string& path) { write_file(path, encode_points(data)); }

PointDataset load_points(const std::string& path) { return decode_points(read_file(path)); }

}  // namespace pdelearn
