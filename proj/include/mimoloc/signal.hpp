#pragma once

#include <array>
#include <optional>
#include <vector>

#include "mimoloc/geometry.hpp"
#include "mimoloc/rng.hpp"

namespace mimo {

/// N mutually orthogonal lowpass transmit pulses sampled over the window.
struct WaveformSet {
  /// One length-N_T vector per transmitter; the pulse occupies the first
  /// pulse_samples entries.
  std::vector<Eigen::VectorXcd> samples;
  /// Per-transmitter tone offset (Hz) of the rectangular pulse.
  std::vector<double> frequency_offsets;
  double window = 0.0;          // T
  double sample_interval = 0.0; // Ts = T / (N_T - 1)
  Index sample_count = 0;       // N_T
  Index pulse_samples = 0;
  double tau_c = 0.0;
  /// Largest normalized cross-correlation magnitude between distinct pulses
  /// over all integer lags.
  double orth_bound = 0.0;

  std::size_t count() const { return samples.size(); }
  auto pulse(std::size_t k) const { return samples[k].head(pulse_samples); }
};

inline constexpr double kMaxCrossCorrelation = 0.05;

/// Rectangular pulses with integer-multiple tone offsets. The tone spacing is
/// the smallest integer multiple of 1/pulse_width that meets the
/// cross-correlation bound; throws ConfigError if no spacing fits below a
/// quarter of the sampling rate.
WaveformSet build_waveform_set(int count, double window, Index sample_count,
                               double pulse_width);

/// Maximum normalized cross-correlation over all lags of two sequences.
double max_cross_correlation(const Eigen::VectorXcd &a,
                             const Eigen::VectorXcd &b);

/// Band-limited fractional-delay interpolator: Kaiser-windowed sinc.
struct FractionalDelay {
  static constexpr int kTaps = 8;
  /// Tap j of the kernel weights samples[n - lag - (j + kFirstTap)].
  static constexpr int kFirstTap = -3;
  static constexpr double kBeta = 6.0;

  static double kernel(double x);
  /// Weights for fractional part mu in [0, 1). mu == 0 is an exact delta.
  static std::array<double, kTaps> weights(double mu);
};

/// Split a delay in samples into its integer lag and fractional part.
/// Values within 1e-9 of an integer are snapped to it.
struct SampleDelay {
  Index lag = 0;
  double mu = 0.0;
};
SampleDelay split_delay(double delay_samples);

/// Pulse delayed by delay_samples over a window of n samples; zero before
/// arrival and truncated at the window end.
Eigen::VectorXcd delayed_replica(const Eigen::Ref<const Eigen::VectorXcd> &pulse,
                                 double delay_samples, Index n);

struct SteeringVector {
  PathId path;
  Position2D theta = Position2D::Zero();
  double delay = 0.0;
  Eigen::VectorXcd s_tilde;
};

/// s_k(n Ts - tau_lk(theta)). Throws WindowError when tau + tau_c > T.
SteeringVector steering_vector(const WaveformSet &waveforms, PathId path,
                               const Position2D &theta,
                               const AntennaLayout &layout);

/// Exponentially correlated clutter: C[m, n] = power * rho^|m - n|.
struct ClutterModel {
  double power = 0.0;
  double rho = 0.0;

  bool enabled() const { return power > 0.0; }
};

struct NoiseModel {
  /// Thermal noise power per path (same indexing as AntennaLayout).
  std::vector<double> sigma_sq;
  ClutterModel clutter;

  static NoiseModel white(std::size_t paths, double sigma_sq) {
    return {std::vector<double>(paths, sigma_sq), {}};
  }
  /// R_lk = sigma_lk^2 I + C_lk.
  Eigen::MatrixXcd covariance(std::size_t path, Index n) const;
};

/// R^{-1/2}, either a scalar multiple of the identity or a dense Hermitian
/// matrix.
class Whitener {
public:
  static Whitener scalar(double sigma_sq);
  /// Throws CovarianceError unless R is Hermitian positive definite.
  static Whitener dense(const Eigen::MatrixXcd &covariance);

  bool is_scalar() const { return !matrix_.has_value(); }
  /// 1/sigma for the scalar form.
  double scale() const { return scale_; }
  const Eigen::MatrixXcd &matrix() const { return *matrix_; }

  /// W x.
  Eigen::VectorXcd apply(const Eigen::Ref<const Eigen::VectorXcd> &x) const;
  /// W^H x (W is Hermitian, so identical to apply).
  Eigen::VectorXcd apply_adjoint(const Eigen::Ref<const Eigen::VectorXcd> &x) const {
    return apply(x);
  }
  /// x^H R^{-1} x.
  double quadratic_form(const Eigen::Ref<const Eigen::VectorXcd> &x) const;

private:
  double scale_ = 1.0;
  std::optional<Eigen::MatrixXcd> matrix_;
};

/// Dense whitening is O(N_T^3); configurations with clutter must stay below
/// this window length.
inline constexpr Index kMaxDenseWhiteningSamples = 4096;

Whitener make_whitener(const NoiseModel &noise, std::size_t path, Index n);

struct PathObservation {
  PathId path;
  std::size_t index = 0;
  Eigen::VectorXcd r;
  bool whitened = false;
};

/// r = sum_g alpha_lkg s~_lkg + n + c for one path; the caller owns the
/// per-(trial, path) random stream.
PathObservation synthesize_observation(const Scene &scene,
                                       const WaveformSet &waveforms,
                                       const NoiseModel &noise,
                                       std::size_t path, Rng &rng);

/// Throws Error if obs is already whitened, CovarianceError if R is not
/// positive definite.
PathObservation whiten(const PathObservation &obs, const NoiseModel &noise);
PathObservation whiten(const PathObservation &obs, const Whitener &whitener);

/// Sets every alpha_lkg so that, on each path, the strongest target's
/// post-whitening SNR |alpha|^2 s~^H R^{-1} s~ equals 10^(snr_db/10); the
/// other targets keep their relative square modulus. Phases are uniform on
/// [0, 2pi), drawn target-major then path-major from rng.
Scene scale_alphas_for_snr(const Scene &scene, const WaveformSet &waveforms,
                           const std::vector<Whitener> &whiteners,
                           double snr_db, const std::vector<double> &proportions,
                           Rng &rng);

} // namespace mimo
