#pragma once

#include <filesystem>
#include <string>

#include "pdelearn/rational_net.hpp"
#include "pdelearn/term_library.hpp"

namespace pdelearn::testing {

inline std::string source_path(const std::string& rel) { return std::string(PDELEARN_SOURCE_DIR) + "/" + rel; }

inline Library burgers_library() { return Library::load(source_path("configs/libraries/burgers.toml")); }
inline Library wave_library() { return Library::load(source_path("configs/libraries/wave.toml")); }

inline NetworkArchitecture arch(int inputs, int layers, int units) {
  NetworkArchitecture a;
  a.input_dim = inputs;
  a.hidden_layers = layers;
  a.units = units;
  return a;
}

/// U(t, x, ...) = slope * x: identity activation, one hidden unit.
inline Network linear_x_network(int inputs, double slope) {
  Network net(arch(inputs, 1, 1), 1);
  for (const auto& leaf : net.parameters().leaves()) {
    leaf.assign(ad::Matrix::Zero(leaf.value().rows(), leaf.value().cols()));
  }
  net.activation(0).set({0, 0, 1, 0}, {0, 0, 1});
  ad::Matrix w0 = ad::Matrix::Zero(inputs, 1);
  w0(1, 0) = slope;
  net.set_weight(0, w0);
  net.set_weight(1, ad::Matrix::Constant(1, 1, 1.0));
  return net;
}

/// Fresh empty directory under the system temp directory.
inline std::string scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("pdelearn_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

}  // namespace pdelearn::testing
