#include "pdelearn/rational_net.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pdelearn/errors.hpp"

namespace pdelearn {

using ad::Expr;
using ad::Matrix;

// ------------------------------------------------------ RationalActivation

RationalActivation::RationalActivation(const std::string& prefix, std::array<double, 4> numerator,
                                       std::array<double, 3> denominator) {
  static constexpr std::array<const char*, 4> num_names{"a3", "a2", "a1", "a0"};
  static constexpr std::array<const char*, 3> den_names{"b2", "b1", "b0"};
  for (std::size_t i = 0; i < 4; ++i) num_[i] = Expr::scalar_leaf(prefix + num_names[i], numerator[i]);
  for (std::size_t i = 0; i < 3; ++i) den_[i] = Expr::scalar_leaf(prefix + den_names[i], denominator[i]);
}

RationalActivation RationalActivation::ramp(const std::string& prefix) {
  return RationalActivation(prefix, RampApproximation::numerator, RampApproximation::denominator);
}

Expr RationalActivation::apply(const Expr& z) const {
  Expr p = num_[0] * z + num_[1];
  p = p * z + num_[2];
  p = p * z + num_[3];
  Expr q = den_[0] * z + den_[1];
  q = q * z + den_[2];
  return p / q;
}

double RationalActivation::operator()(double x) const {
  const double p = ((num_[0].scalar() * x + num_[1].scalar()) * x + num_[2].scalar()) * x + num_[3].scalar();
  const double q = (den_[0].scalar() * x + den_[1].scalar()) * x + den_[2].scalar();
  if (q == 0.0) {
    throw DomainError("rational activation denominator vanishes at x = " + std::to_string(x));
  }
  return p / q;
}

std::array<double, 4> RationalActivation::numerator() const {
  return {num_[0].scalar(), num_[1].scalar(), num_[2].scalar(), num_[3].scalar()};
}

std::array<double, 3> RationalActivation::denominator() const {
  return {den_[0].scalar(), den_[1].scalar(), den_[2].scalar()};
}

void RationalActivation::set(std::array<double, 4> numerator, std::array<double, 3> denominator) {
  for (std::size_t i = 0; i < 4; ++i) num_[i].assign(numerator[i]);
  for (std::size_t i = 0; i < 3; ++i) den_[i].assign(denominator[i]);
}

// ----------------------------------------------------- NetworkArchitecture

void NetworkArchitecture::validate() const {
  if (input_dim < 1) throw ConfigError("network input dimension must be >= 1");
  if (hidden_layers < 1) throw ConfigError("network needs at least one hidden layer");
  if (units < 1) throw ConfigError("hidden layers need at least one unit");
  if (output_dim != 1) throw ConfigError("network output dimension must be 1");
}

std::size_t NetworkArchitecture::parameter_count() const {
  const auto in = static_cast<std::size_t>(input_dim);
  const auto u = static_cast<std::size_t>(units);
  const auto h = static_cast<std::size_t>(hidden_layers);
  const auto out = static_cast<std::size_t>(output_dim);
  return in * u + u + (h - 1) * (u * u + u) + u * out + out + 7 * h;
}

double glorot_bound(int fan_in, int fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

// ------------------------------------------------------------------ Network

Network::Network(const NetworkArchitecture& arch, std::uint64_t seed) : arch_(arch), seed_(seed) {
  arch_.validate();
  std::mt19937_64 rng(seed);
  const int layers = arch_.hidden_layers + 1;
  for (int l = 0; l < layers; ++l) {
    const int fan_in = l == 0 ? arch_.input_dim : arch_.units;
    const int fan_out = l == layers - 1 ? arch_.output_dim : arch_.units;
    const double bound = glorot_bound(fan_in, fan_out);
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix w(fan_in, fan_out);
    for (int i = 0; i < fan_in; ++i) {
      for (int j = 0; j < fan_out; ++j) w(i, j) = dist(rng);
    }
    const std::string tag = "layer" + std::to_string(l);
    std::vector<Expr> leaves;
    if (l == 0) {
      for (int i = 0; i < fan_in; ++i) {
        leaves.push_back(Expr::leaf(tag + ".W[" + std::to_string(i) + "]", w.row(i)));
      }
    } else {
      leaves.push_back(Expr::leaf(tag + ".W", w));
    }
    weights_.push_back(std::move(leaves));
    biases_.push_back(Expr::leaf(tag + ".b", Matrix::Zero(1, fan_out)));
  }
  for (int h = 0; h < arch_.hidden_layers; ++h) {
    activations_.push_back(RationalActivation::ramp("act" + std::to_string(h) + "."));
  }
  collect_parameters();
}

void Network::collect_parameters() {
  params_ = ad::ParamSet();
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    for (const auto& w : weights_[l]) params_.add(w);
    params_.add(biases_[l]);
  }
  for (const auto& act : activations_) {
    for (const auto& c : act.numerator_leaves()) params_.add(c);
    for (const auto& c : act.denominator_leaves()) params_.add(c);
  }
}

Network Network::clone() const {
  Network copy(arch_, seed_);
  copy.copy_values_from(*this);
  return copy;
}

void Network::copy_values_from(const Network& other) {
  if (other.params_.size() != params_.size()) throw ConfigError("copy_values_from: architecture mismatch");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Matrix& v = other.params_[i].value();
    if (v.rows() != params_[i].value().rows() || v.cols() != params_[i].value().cols()) {
      throw ConfigError("copy_values_from: shape mismatch at " + params_[i].name());
    }
    params_[i].assign(v);
  }
}

Expr Network::forward(std::span<const Expr> coordinates) const {
  if (static_cast<int>(coordinates.size()) != arch_.input_dim) {
    throw ConfigError("network expects " + std::to_string(arch_.input_dim) + " coordinates, got " +
                      std::to_string(coordinates.size()));
  }
  std::vector<ad::AffineBlock> blocks;
  blocks.reserve(coordinates.size());
  for (std::size_t i = 0; i < coordinates.size(); ++i) blocks.push_back({coordinates[i], weights_[0][i]});
  Expr h = ad::affine(blocks, biases_[0]);
  h = activations_[0].apply(h);
  for (std::size_t l = 1; l + 1 < weights_.size(); ++l) {
    h = activations_[l].apply(ad::affine(h, weights_[l][0], biases_[l]));
  }
  return ad::affine(h, weights_.back()[0], biases_.back());
}

double Network::predict(std::span<const double> point) const {
  std::vector<Expr> coords;
  coords.reserve(point.size());
  for (double c : point) coords.push_back(Expr::scalar_leaf("coord", c));
  return ad::evaluate(forward(coords));
}

Matrix Network::weight(std::size_t layer) const {
  const auto& leaves = weights_.at(layer);
  if (leaves.size() == 1 && layer != 0) return leaves[0].value();
  Matrix w(static_cast<Eigen::Index>(leaves.size()), leaves[0].value().cols());
  for (std::size_t i = 0; i < leaves.size(); ++i) w.row(static_cast<Eigen::Index>(i)) = leaves[i].value();
  return w;
}

void Network::set_weight(std::size_t layer, const Matrix& w) {
  auto& leaves = weights_.at(layer);
  const Matrix current = weight(layer);
  if (w.rows() != current.rows() || w.cols() != current.cols()) {
    throw ConfigError("set_weight: shape mismatch in layer " + std::to_string(layer));
  }
  if (layer == 0) {
    for (std::size_t i = 0; i < leaves.size(); ++i) leaves[i].assign(w.row(static_cast<Eigen::Index>(i)));
  } else {
    leaves[0].assign(w);
  }
}

// --------------------------------------------------------------- checkpoint

namespace {

nlohmann::json matrix_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix json_matrix(const nlohmann::json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (static_cast<Eigen::Index>(j[i].size()) != cols) throw ParseError("ragged matrix in checkpoint", 0);
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = j[i][k].get<double>();
  }
  return m;
}

}  // namespace

std::string Network::to_json() const {
  nlohmann::json doc;
  doc["format"] = "pdelearn-network";
  doc["version"] = 1;
  doc["seed"] = seed_;
  doc["architecture"] = {{"input_dim", arch_.input_dim},
                         {"hidden_layers", arch_.hidden_layers},
                         {"units", arch_.units},
                         {"output_dim", arch_.output_dim}};
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    layers.push_back({{"weights", matrix_json(weight(l))}, {"bias", matrix_json(biases_[l].value())[0]}});
  }
  doc["layers"] = std::move(layers);
  nlohmann::json acts = nlohmann::json::array();
  for (const auto& a : activations_) acts.push_back({{"numerator", a.numerator()}, {"denominator", a.denominator()}});
  doc["activations"] = std::move(acts);
  return doc.dump(1);
}

Network Network::from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("network checkpoint: ") + e.what(), e.byte);
  }
  try {
    if (doc.at("format") != "pdelearn-network") throw ParseError("not a network checkpoint", 0);
    if (doc.at("version").get<int>() != 1) throw ParseError("unsupported checkpoint version", 0);
    const auto& a = doc.at("architecture");
    NetworkArchitecture arch{a.at("input_dim").get<int>(), a.at("hidden_layers").get<int>(),
                             a.at("units").get<int>(), a.at("output_dim").get<int>()};
    Network net(arch, doc.at("seed").get<std::uint64_t>());
    const auto& layers = doc.at("layers");
    if (layers.size() != net.weights_.size()) throw ParseError("checkpoint layer count mismatch", 0);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      net.set_weight(l, json_matrix(layers[l].at("weights")));
      const Matrix b = json_matrix(nlohmann::json::array({layers[l].at("bias")}));
      if (b.cols() != net.biases_[l].value().cols()) throw ParseError("checkpoint bias shape mismatch", 0);
      net.biases_[l].assign(b);
    }
    const auto& acts = doc.at("activations");
    if (acts.size() != net.activations_.size()) throw ParseError("checkpoint activation count mismatch", 0);
    for (std::size_t h = 0; h < acts.size(); ++h) {
      net.activations_[h].set(acts[h].at("numerator").get<std::array<double, 4>>(),
                              acts[h].at("denominator").get<std::array<double, 3>>());
    }
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("network checkpoint: ") + e.what(), 0);
  }
}

void Network::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write checkpoint " + path);
  out << to_json() << '\n';
}

Network Network::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read checkpoint " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

}  // namespace pdelearn
