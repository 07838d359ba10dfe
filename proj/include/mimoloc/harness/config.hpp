#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mimoloc/estimators.hpp"

namespace mimo {

struct TargetSpec {
  Position2D position = Position2D::Zero(); // meters
  /// Relative square modulus of the reflection coefficient.
  double proportion = 1.0;
};

/// Validated scenario description. Positions are stored in meters and times
/// in seconds; the file format uses kilometers and microseconds. See
/// docs/config.md.
struct ScenarioConfig {
  std::string name;
  std::uint64_t seed = 1;

  std::vector<Position2D> transmitters;
  std::vector<Position2D> receivers;
  std::vector<TargetSpec> targets;

  int waveform_count = 0; // 0: one per transmitter
  double window = 160e-6;
  Index samples = 20481;
  double pulse_width = 1e-6;

  /// One value for every path, or one per path in layout order.
  std::vector<double> sigma_sq{1.0};
  ClutterModel clutter;

  Rect region;
  double cell = 100.0;

  std::vector<Algorithm> algorithms{Algorithm::ssr};
  EstimatorConfig estimator;
  double pfa = 0.1;
  std::size_t calibration_trials = 500;
  /// Fixed lambda' that skips calibration.
  std::optional<double> threshold;
  /// Empty means unit weights.
  std::vector<double> path_weights;

  std::vector<double> snr_db;
  std::size_t trials = 200;
  bool benchmark = false;
  unsigned threads = 0; // 0: hardware concurrency

  std::filesystem::path output_dir = "out";

  AntennaLayout layout() const { return {transmitters, receivers}; }
  std::size_t path_count() const { return transmitters.size() * receivers.size(); }
  std::vector<double> proportions() const;
  /// Throws ConfigError describing the first violated constraint.
  void validate() const;
};

/// Parses and validates a scenario file. Unknown keys, type errors and
/// semantic violations raise ConfigError with file:line context.
ScenarioConfig load_scenario(const std::filesystem::path &file);
ScenarioConfig parse_scenario(const std::string &text,
                              const std::string &origin = "<string>");

/// Thresholds file written by `calibrate`.
void write_thresholds(const std::filesystem::path &file,
                      const ThresholdConfig &thresholds,
                      std::optional<double> joint_lambda = std::nullopt);
ThresholdConfig read_thresholds(const std::filesystem::path &file,
                                std::optional<double> *joint_lambda = nullptr);

} // namespace mimo
