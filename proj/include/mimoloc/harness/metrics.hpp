#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "mimoloc/estimators.hpp"

namespace mimo {

/// Half-width of the validity box around a true location, per dimension.
inline constexpr double kValidBoxHalfWidth = 200.0;

/// |dx| <= 200 m and |dy| <= 200 m.
bool valid_detection(const Position2D &estimate, const Position2D &truth);

struct Association {
  /// Truth index claimed by each detection, -1 for a false declaration.
  std::vector<int> truth_of_detection;
  /// Detection index that claimed each truth, -1 for a miss.
  std::vector<int> detection_of_truth;

  std::size_t false_declarations() const;
  std::size_t misses() const;
};

/// Greedy in declaration order: each detection claims the nearest unclaimed
/// truth that it validly detects; ties go to the lower truth index.
Association associate(const DetectionReport &report,
                      const std::vector<Position2D> &truths);

struct TargetOutcome {
  bool valid = false;
  double dx = 0.0;
  double dy = 0.0;
};

/// Per-algorithm result of one Monte Carlo trial.
struct TrialOutcome {
  std::size_t declared = 0;
  std::vector<TargetOutcome> targets;
};

TrialOutcome evaluate(const DetectionReport &report,
                      const std::vector<Position2D> &truths);

struct MetricsRecord {
  std::string algorithm;
  double snr_db = 0.0;
  int target = 0; // 1-based
  double pd = 0.0;
  double rmse_x = 0.0;
  double rmse_y = 0.0;
  double g_hat_mean = 0.0;
  std::size_t trials = 0;
};

bool operator==(const MetricsRecord &a, const MetricsRecord &b);

/// Running sums for one (algorithm, snr, target) cell.
struct MetricsCell {
  std::size_t trials = 0;
  std::size_t valid = 0;
  double sum_dx2 = 0.0;
  double sum_dy2 = 0.0;
  double sum_declared = 0.0;

  void add(const TargetOutcome &t, std::size_t declared);
  /// RMSE over valid detections only; NaN when none.
  MetricsRecord record(const std::string &algorithm, double snr_db,
                       int target) const;
};

inline const char *kMetricsHeader =
    "algorithm,snr_db,target,pd,rmse_x_m,rmse_y_m,g_hat_mean,trials";

void write_csv(std::ostream &out, const std::vector<MetricsRecord> &records);
void export_csv(const std::filesystem::path &file,
                const std::vector<MetricsRecord> &records);
std::vector<MetricsRecord> parse_csv(std::istream &in);
std::vector<MetricsRecord> read_csv(const std::filesystem::path &file);

} // namespace mimo
