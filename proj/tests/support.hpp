#pragma once

#include <filesystem>
#include <random>

#include "mimoloc/harness/experiment.hpp"

namespace testing {

inline std::filesystem::path source_path(const std::string &rel) {
  return std::filesystem::path(MIMOLOC_SOURCE_DIR) / rel;
}

inline mimo::ScenarioConfig small_config() {
  return mimo::load_scenario(source_path("tests/data/small.cfg"));
}

inline Eigen::VectorXcd random_vector(mimo::Index n, std::mt19937_64 &rng) {
  std::normal_distribution<double> nd;
  Eigen::VectorXcd v(n);
  for (mimo::Index i = 0; i < n; ++i) {
    v[i] = {nd(rng), nd(rng)};
  }
  return v;
}

/// Monostatic-style layout: one transceiver at the origin.
inline mimo::AntennaLayout origin_layout() {
  return {{mimo::Position2D(0.0, 0.0)}, {mimo::Position2D(0.0, 0.0)}};
}

inline std::filesystem::path scratch_dir(const std::string &name) {
  auto dir = std::filesystem::temp_directory_path() / ("mimoloc_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

} // namespace testing
