#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mimoloc/likelihood.hpp"

namespace mimo {

struct ThresholdConfig {
  /// Threshold for the full path set.
  double lambda_prime = 0.0;
  double pfa = 0.1;
  /// Per-path weights used to rescale the threshold after cancellation.
  std::vector<double> path_weights;
  std::size_t trials = 0;
  std::uint64_t seed = 0;

  double weight_sum() const;
  /// Throws ConfigError on negative lambda, negative weights or zero total.
  void validate() const;
  static ThresholdConfig uniform(double lambda_prime, std::size_t paths) {
    return {lambda_prime, 0.1, std::vector<double>(paths, 1.0), 0, 0};
  }
};

enum class Algorithm { joint, ssr, sic };

std::string to_string(Algorithm a);
/// Throws ConfigError for unknown names.
Algorithm parse_algorithm(const std::string &name);

struct EstimatorConfig {
  int g_max = 5;
  Algorithm algorithm = Algorithm::ssr;
  /// SIC: end the run at the first rejected candidate.
  bool early_stop = true;
  /// Joint search: tuples with a delay pair closer than this many samples on
  /// any path are excluded.
  double singularity_tolerance = 1.0;

  void validate() const;
};

struct Detection {
  Position2D location = Position2D::Zero();
  Index cell = -1;
  /// F_g at declaration (the modified objective for SIC).
  double objective = 0.0;
  double threshold = 0.0;
  int iteration = 0;
  Footprint footprint;
  std::vector<Complex> alpha;
};

struct DetectionReport {
  Algorithm algorithm = Algorithm::ssr;
  std::vector<Detection> detections;
  double accumulated_objective = 0.0;

  std::size_t declared() const { return detections.size(); }
};

/// Empirical (1 - pfa) quantile of H0 peak statistics: sorted[ceil((1-pfa) n) - 1].
/// Throws ConfigError unless 0 < pfa < 1 and peaks is non-empty.
double calibrate_threshold(std::vector<double> peaks, double pfa);

/// Maximum-likelihood joint search over unordered G-tuples of distinct grid
/// cells. Declares the best tuple iff its summed joint log-likelihood is at
/// least lambda. Throws ConfigError when G exceeds kMaxJointTargets.
inline constexpr int kMaxJointTargets = 3;
/// Refuse searches whose tuple count would take hours.
inline constexpr double kMaxJointTuples = 2e7;

struct JointResult {
  DetectionReport report;
  /// Best summed log-likelihood over admissible tuples (the H0 statistic).
  double best_value = 0.0;
  std::size_t excluded_tuples = 0;
};

JointResult joint_search(const ObjectiveField &field, const ReplicaBank &bank,
                         int targets, double lambda,
                         const EstimatorConfig &config = {});

/// Successive space removal.
DetectionReport ssr_run(const ObjectiveField &field,
                        const ThresholdConfig &thresholds,
                        const EstimatorConfig &config);

/// Per-(cell, path) pairs the g-th detection removes from the field:
/// B_lk(theta_hat) minus pairs already subtracted by earlier detections.
ObjectiveField::PathMask sic_modified_term(const ObjectiveField &field,
                                           Index theta_hat);

/// lambda' scaled by the share of path weight not yet cancelled at cell.
double sic_threshold(const ObjectiveField &field, Index cell,
                     const ThresholdConfig &thresholds);

/// Successive interference cancellation. The field is consumed.
DetectionReport sic_run(ObjectiveField &field, const ThresholdConfig &thresholds,
                        const EstimatorConfig &config);

/// Runs the configured algorithm on a copy of the field.
DetectionReport run_estimator(const ObjectiveField &field,
                              const ReplicaBank &bank,
                              const ThresholdConfig &thresholds,
                              const EstimatorConfig &config,
                              std::optional<int> joint_targets = std::nullopt);

/// Text record: '#'-prefixed header lines, then one
/// "iteration,x,y,objective,threshold" line per detection.
void write_report(std::ostream &out, const DetectionReport &report);
/// Parses what write_report emits (locations, values, iteration only).
DetectionReport read_report(std::istream &in);

} // namespace mimo
