#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "mimoloc/harness/config.hpp"
#include "mimoloc/harness/metrics.hpp"

namespace mimo {

/// Everything derived once from a scenario: waveforms, grid, whitening and
/// the replica bank shared by all trials.
class Experiment {
public:
  explicit Experiment(ScenarioConfig config);

  const ScenarioConfig &config() const { return config_; }
  const WaveformSet &waveforms() const { return waveforms_; }
  const AntennaLayout &layout() const { return layout_; }
  const Grid &grid() const { return bank_->grid(); }
  const NoiseModel &noise() const { return noise_; }
  const std::vector<Whitener> &whiteners() const { return whiteners_; }
  const ReplicaBank &bank() const { return *bank_; }
  std::vector<Position2D> truths() const;
  ThresholdConfig threshold_template() const;

  /// Targets with alphas scaled for snr_db; phases depend on the trial only.
  Scene scaled_scene(double snr_db, std::uint64_t trial) const;
  /// Whitened observations for every path. tag separates sweep, calibration
  /// and hold-out noise.
  std::vector<PathObservation> observe(const Scene &scene, std::uint64_t tag,
                                       std::uint64_t trial) const;
  ObjectiveField field(const Scene &scene, std::uint64_t tag,
                       std::uint64_t trial) const;

private:
  ScenarioConfig config_;
  WaveformSet waveforms_;
  AntennaLayout layout_;
  NoiseModel noise_;
  std::vector<Whitener> whiteners_;
  std::shared_ptr<const ReplicaBank> bank_;
};

/// Runs fn(i) for i in [0, count) on up to threads workers (0 = hardware
/// concurrency). Each index is processed exactly once; callers write results
/// into per-index slots so the outcome is independent of scheduling.
void parallel_for(std::size_t count, unsigned threads,
                  const std::function<void(std::size_t)> &fn);

struct Thresholds {
  ThresholdConfig main;
  std::optional<double> joint;
};

/// Grid-peak statistic max F under H0 for trials [first, first + count).
/// With joint set, the best joint-tuple value for G = number of targets.
std::vector<double> h0_peaks(const Experiment &exp, std::uint64_t first,
                             std::size_t count, bool joint, unsigned threads);

/// Hold-out trials use indices starting here, disjoint from calibration.
inline constexpr std::uint64_t kHoldoutTrialOffset = 1'000'000'000ULL;

/// Honours a fixed threshold in the config, otherwise calibrates from
/// config.calibration_trials H0 runs.
Thresholds calibrate(const Experiment &exp, unsigned threads);

struct TrialResult {
  /// One report per requested algorithm, in order.
  std::vector<DetectionReport> reports;
  std::vector<TrialOutcome> outcomes;
};

TrialResult run_trial(const Experiment &exp, const Thresholds &thresholds,
                      double snr_db, std::uint64_t trial,
                      const std::vector<Algorithm> &algorithms);

/// Single-target benchmark: target g alone, same alphas and noise streams as
/// the full scene, detected by SSR.
TrialOutcome run_single_target(const Experiment &exp,
                               const Thresholds &thresholds, double snr_db,
                               std::uint64_t trial, std::size_t target);

inline const char *kBenchmarkLabel = "ssr_single";

struct SweepOptions {
  std::vector<Algorithm> algorithms;
  std::filesystem::path out_dir;
  bool resume = false;
  unsigned threads = 0;
};

/// Full experiment. Writes <out_dir>/metrics.csv and a per-trial journal
/// (<out_dir>/trials.journal) that --resume reuses.
std::vector<MetricsRecord> run_sweep(const Experiment &exp,
                                     const Thresholds &thresholds,
                                     const SweepOptions &options);

} // namespace mimo
