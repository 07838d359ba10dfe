#include "mimoloc/signal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Eigenvalues>

namespace mimo {

namespace {

Eigen::VectorXcd tone_pulse(Index length, double freq, double ts) {
  Eigen::VectorXcd p(length);
  const double norm = 1.0 / std::sqrt(static_cast<double>(length));
  for (Index n = 0; n < length; ++n) {
    p[n] = std::polar(norm, 2.0 * std::numbers::pi * freq * ts *
                                static_cast<double>(n));
  }
  return p;
}

// Power series of I0. Arguments stay below kBeta, where 30 terms reach full
// double precision; std::cyl_bessel_i is an order of magnitude slower and
// the kernel is evaluated for every (cell, path) of a grid.
double bessel_i0(double x) {
  const double q = 0.25 * x * x;
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k < 30; ++k) {
    term *= q / (static_cast<double>(k) * static_cast<double>(k));
    sum += term;
  }
  return sum;
}

} // namespace

double max_cross_correlation(const Eigen::VectorXcd &a,
                             const Eigen::VectorXcd &b) {
  const double denom = a.norm() * b.norm();
  if (denom == 0.0) {
    return 0.0;
  }
  const Index na = a.size();
  const Index nb = b.size();
  double best = 0.0;
  for (Index lag = -(nb - 1); lag < na; ++lag) {
    const Index lo = std::max<Index>(0, lag);
    const Index hi = std::min<Index>(na, lag + nb);
    if (hi <= lo) {
      continue;
    }
    const Complex c =
        b.segment(lo - lag, hi - lo).dot(a.segment(lo, hi - lo));
    best = std::max(best, std::abs(c));
  }
  return best / denom;
}

WaveformSet build_waveform_set(int count, double window, Index sample_count,
                               double pulse_width) {
  if (count < 1) {
    throw ConfigError("waveform count must be positive");
  }
  if (sample_count < 2 || !(window > 0.0) || !(pulse_width > 0.0) ||
      pulse_width > window) {
    throw ConfigError("invalid window, sample count or pulse width");
  }
  WaveformSet w;
  w.window = window;
  w.sample_count = sample_count;
  w.sample_interval = window / static_cast<double>(sample_count - 1);
  w.tau_c = pulse_width;
  w.pulse_samples =
      static_cast<Index>(std::llround(pulse_width / w.sample_interval));
  if (w.pulse_samples < 1) {
    throw ConfigError("pulse shorter than one sample");
  }

  const double fs = 1.0 / w.sample_interval;
  const int centre = (count - 1) / 2;
  const int max_index = std::max(centre, count - 1 - centre);
  for (int m = 1;; ++m) {
    const double spacing = static_cast<double>(m) / pulse_width;
    if (count > 1 && static_cast<double>(max_index) * spacing > fs / 4.0) {
      throw ConfigError("insufficient bandwidth-time product");
    }
    std::vector<Eigen::VectorXcd> pulses;
    std::vector<double> freqs;
    for (int k = 0; k < count; ++k) {
      freqs.push_back(static_cast<double>(k - centre) * spacing);
      pulses.push_back(tone_pulse(w.pulse_samples, freqs.back(),
                                  w.sample_interval));
    }
    double bound = 0.0;
    for (int i = 0; i < count; ++i) {
      for (int j = i + 1; j < count; ++j) {
        bound = std::max(bound, max_cross_correlation(pulses[i], pulses[j]));
      }
    }
    if (bound <= kMaxCrossCorrelation || count == 1) {
      w.orth_bound = bound;
      w.frequency_offsets = std::move(freqs);
      for (auto &p : pulses) {
        Eigen::VectorXcd full = Eigen::VectorXcd::Zero(sample_count);
        full.head(w.pulse_samples) = p;
        w.samples.push_back(std::move(full));
      }
      return w;
    }
  }
}

double FractionalDelay::kernel(double x) {
  constexpr double half = kTaps / 2.0;
  if (std::abs(x) >= half) {
    return 0.0;
  }
  const double sinc =
      x == 0.0 ? 1.0
               : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
  const double r = x / half;
  static const double norm = bessel_i0(kBeta);
  return sinc * bessel_i0(kBeta * std::sqrt(1.0 - r * r)) / norm;
}

std::array<double, FractionalDelay::kTaps> FractionalDelay::weights(double mu) {
  std::array<double, kTaps> w{};
  if (mu == 0.0) {
    w[-kFirstTap] = 1.0;
    return w;
  }
  for (int j = 0; j < kTaps; ++j) {
    w[j] = kernel(static_cast<double>(j + kFirstTap) - mu);
  }
  return w;
}

SampleDelay split_delay(double delay_samples) {
  const double nearest = std::round(delay_samples);
  if (std::abs(delay_samples - nearest) < 1e-9) {
    return {static_cast<Index>(nearest), 0.0};
  }
  const double lag = std::floor(delay_samples);
  return {static_cast<Index>(lag), delay_samples - lag};
}

Eigen::VectorXcd delayed_replica(const Eigen::Ref<const Eigen::VectorXcd> &pulse,
                                 double delay_samples, Index n) {
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(n);
  const SampleDelay sd = split_delay(delay_samples);
  const auto w = FractionalDelay::weights(sd.mu);
  const Index np = pulse.size();
  for (int j = 0; j < FractionalDelay::kTaps; ++j) {
    if (w[j] == 0.0) {
      continue;
    }
    const Index start = sd.lag + j + FractionalDelay::kFirstTap;
    const Index lo = std::max<Index>(0, start);
    const Index hi = std::min<Index>(n, start + np);
    if (hi > lo) {
      out.segment(lo, hi - lo) += w[j] * pulse.segment(lo - start, hi - lo);
    }
  }
  return out;
}

SteeringVector steering_vector(const WaveformSet &waveforms, PathId path,
                               const Position2D &theta,
                               const AntennaLayout &layout) {
  SteeringVector sv;
  sv.path = path;
  sv.theta = theta;
  sv.delay = layout.delay(theta, path);
  if (sv.delay + waveforms.tau_c > waveforms.window) {
    throw WindowError("delay " + std::to_string(sv.delay * 1e6) + " us");
  }
  sv.s_tilde = delayed_replica(waveforms.pulse(static_cast<std::size_t>(path.tx)),
                               sv.delay / waveforms.sample_interval,
                               waveforms.sample_count);
  return sv;
}

Eigen::MatrixXcd NoiseModel::covariance(std::size_t path, Index n) const {
  Eigen::MatrixXcd r = Eigen::MatrixXcd::Zero(n, n);
  r.diagonal().setConstant(sigma_sq.at(path));
  if (clutter.enabled()) {
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < n; ++j) {
        r(i, j) += clutter.power *
                   std::pow(clutter.rho, static_cast<double>(std::abs(i - j)));
      }
    }
  }
  return r;
}

Whitener Whitener::scalar(double sigma_sq) {
  if (!(sigma_sq > 0.0) || !std::isfinite(sigma_sq)) {
    throw CovarianceError();
  }
  Whitener w;
  w.scale_ = 1.0 / std::sqrt(sigma_sq);
  return w;
}

Whitener Whitener::dense(const Eigen::MatrixXcd &covariance) {
  if (covariance.rows() != covariance.cols() || covariance.size() == 0 ||
      !covariance.allFinite()) {
    throw CovarianceError();
  }
  const double norm = covariance.norm();
  if ((covariance - covariance.adjoint()).norm() > 1e-10 * norm) {
    throw CovarianceError();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(covariance);
  if (eig.info() != Eigen::Success) {
    throw CovarianceError();
  }
  const Eigen::VectorXd &lambda = eig.eigenvalues();
  if (!(lambda.minCoeff() > 1e-12 * lambda.maxCoeff())) {
    throw CovarianceError();
  }
  Whitener w;
  w.matrix_ = eig.eigenvectors() *
              lambda.cwiseSqrt().cwiseInverse().asDiagonal() *
              eig.eigenvectors().adjoint();
  return w;
}

Eigen::VectorXcd Whitener::apply(const Eigen::Ref<const Eigen::VectorXcd> &x) const {
  if (is_scalar()) {
    return scale_ * x;
  }
  return *matrix_ * x;
}

double Whitener::quadratic_form(const Eigen::Ref<const Eigen::VectorXcd> &x) const {
  if (is_scalar()) {
    return scale_ * scale_ * x.squaredNorm();
  }
  return (*matrix_ * x).squaredNorm();
}

Whitener make_whitener(const NoiseModel &noise, std::size_t path, Index n) {
  if (!noise.clutter.enabled()) {
    return Whitener::scalar(noise.sigma_sq.at(path));
  }
  if (n > kMaxDenseWhiteningSamples) {
    throw ConfigError("clutter whitening requires at most " +
                      std::to_string(kMaxDenseWhiteningSamples) + " samples");
  }
  return Whitener::dense(noise.covariance(path, n));
}

PathObservation synthesize_observation(const Scene &scene,
                                       const WaveformSet &waveforms,
                                       const NoiseModel &noise,
                                       std::size_t path, Rng &rng) {
  const Index n = waveforms.sample_count;
  PathObservation obs;
  obs.path = scene.layout.path(path);
  obs.index = path;
  obs.r = Eigen::VectorXcd::Zero(n);
  for (const auto &t : scene.targets) {
    const Complex alpha =
        path < t.per_path_alpha.size() ? t.per_path_alpha[path] : Complex{};
    if (alpha == Complex{}) {
      continue;
    }
    obs.r += alpha *
             steering_vector(waveforms, obs.path, t.position, scene.layout).s_tilde;
  }

  const double sigma_sq = noise.sigma_sq.at(path);
  if (sigma_sq > 0.0) {
    std::normal_distribution<double> nd(0.0, std::sqrt(sigma_sq / 2.0));
    for (Index i = 0; i < n; ++i) {
      const double re = nd(rng);
      const double im = nd(rng);
      obs.r[i] += Complex(re, im);
    }
  }
  if (noise.clutter.enabled()) {
    const double rho = noise.clutter.rho;
    std::normal_distribution<double> nd(0.0, std::sqrt(noise.clutter.power / 2.0));
    const double innov = std::sqrt(1.0 - rho * rho);
    Complex c;
    for (Index i = 0; i < n; ++i) {
      const double re = nd(rng);
      const double im = nd(rng);
      const Complex w(re, im);
      c = i == 0 ? w : rho * c + innov * w;
      obs.r[i] += c;
    }
  }
  return obs;
}

PathObservation whiten(const PathObservation &obs, const Whitener &whitener) {
  if (obs.whitened) {
    throw Error("observation is already whitened");
  }
  return {obs.path, obs.index, whitener.apply(obs.r), true};
}

PathObservation whiten(const PathObservation &obs, const NoiseModel &noise) {
  if (obs.whitened) {
    throw Error("observation is already whitened");
  }
  return whiten(obs, make_whitener(noise, obs.index, obs.r.size()));
}

Scene scale_alphas_for_snr(const Scene &scene, const WaveformSet &waveforms,
                           const std::vector<Whitener> &whiteners,
                           double snr_db, const std::vector<double> &proportions,
                           Rng &rng) {
  const std::size_t G = scene.targets.size();
  const std::size_t P = scene.layout.path_count();
  if (whiteners.size() != P) {
    throw ConfigError("one whitener per path is required");
  }
  std::vector<double> prop(G);
  for (std::size_t g = 0; g < G; ++g) {
    prop[g] = proportions.empty() ? scene.targets[g].amplitude_sq
                                  : proportions.at(g);
    if (!(prop[g] > 0.0)) {
      throw ConfigError("target proportions must be positive");
    }
  }
  Scene out = scene;
  if (G == 0) {
    return out;
  }
  const std::size_t ref = static_cast<std::size_t>(
      std::max_element(prop.begin(), prop.end()) - prop.begin());
  const double snr = std::pow(10.0, snr_db / 10.0);

  std::vector<double> ref_amp_sq(P);
  for (std::size_t p = 0; p < P; ++p) {
    const auto sv = steering_vector(waveforms, scene.layout.path(p),
                                    scene.targets[ref].position, scene.layout);
    ref_amp_sq[p] = snr / whiteners[p].quadratic_form(sv.s_tilde);
  }
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  for (std::size_t g = 0; g < G; ++g) {
    auto &t = out.targets[g];
    t.amplitude_sq = prop[g];
    t.per_path_alpha.assign(P, Complex{});
    for (std::size_t p = 0; p < P; ++p) {
      const double mag = std::sqrt(ref_amp_sq[p] * prop[g] / prop[ref]);
      t.per_path_alpha[p] = std::polar(mag, phase(rng));
    }
  }
  return out;
}

} // namespace mimo
