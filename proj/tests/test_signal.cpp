#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include <unsupported/Eigen/FFT>

#include "support.hpp"

using namespace mimo;

namespace {

// Brute-force peak normalized cross-correlation over every integer lag.
double brute_cross(const Eigen::VectorXcd &a, const Eigen::VectorXcd &b) {
  const Index n = a.size();
  double best = 0.0;
  for (Index lag = -(n - 1); lag < n; ++lag) {
    Complex acc;
    for (Index i = 0; i < n; ++i) {
      const Index j = i + lag;
      if (j >= 0 && j < n) {
        acc += std::conj(a[i]) * b[j];
      }
    }
    best = std::max(best, std::abs(acc));
  }
  return best / (a.norm() * b.norm());
}

// Band-limited reference: oversample by 64 with a zero-padded spectrum and
// read the delayed samples straight off the fine grid.
Eigen::VectorXcd oversampled_delay(const Eigen::VectorXcd &pulse, double delay,
                                   Index n) {
  constexpr Index kUp = 64;
  const Index m = 4096;
  Eigen::FFT<double> fft;
  std::vector<Complex> x(m, Complex{}), spec;
  for (Index i = 0; i < pulse.size(); ++i) {
    x[i] = pulse[i];
  }
  fft.fwd(spec, x);
  std::vector<Complex> wide(m * kUp, Complex{});
  for (Index k = 0; k < m / 2; ++k) {
    wide[k] = spec[k];
    wide[m * kUp - m / 2 + k] = spec[m / 2 + k];
  }
  std::vector<Complex> fine;
  fft.inv(fine, wide);
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(n);
  const auto shift = static_cast<Index>(std::llround(delay * kUp));
  for (Index i = 0; i < n; ++i) {
    // The reference is periodic; negative times wrap to the buffer end.
    const Index len = m * kUp;
    const Index f = ((i * kUp - shift) % len + len) % len;
    out[i] = fine[f] * static_cast<double>(kUp);
  }
  return out;
}

} // namespace

TEST_CASE("waveform set meets the cross-correlation bound") {
  for (int count : {1, 2, 5}) {
    CAPTURE(count);
    const WaveformSet wf = build_waveform_set(count, 20e-6, 2561, 1e-6);
    CHECK(wf.count() == static_cast<std::size_t>(count));
    CHECK(wf.pulse_samples == 128);
    CHECK(wf.tau_c == doctest::Approx(1e-6));
    for (std::size_t k = 0; k < wf.count(); ++k) {
      CHECK(wf.pulse(k).norm() == doctest::Approx(1.0));
      CHECK(wf.samples[k].tail(wf.sample_count - wf.pulse_samples).isZero());
    }
    double worst = 0.0;
    for (std::size_t a = 0; a < wf.count(); ++a) {
      for (std::size_t b = a + 1; b < wf.count(); ++b) {
        worst = std::max(worst, brute_cross(wf.pulse(a), wf.pulse(b)));
      }
    }
    CHECK(worst <= kMaxCrossCorrelation);
    CHECK(wf.orth_bound == doctest::Approx(worst).epsilon(1e-9));
    if (count == 1) {
      CHECK(wf.orth_bound == 0.0);
    }
  }
}

TEST_CASE("too few samples per pulse is rejected") {
  try {
    build_waveform_set(5, 10e-6, 41, 1e-6);
    FAIL("expected ConfigError");
  } catch (const ConfigError &e) {
    CHECK(std::string(e.what()).find("insufficient bandwidth-time product") != std::string::npos);
  }
  CHECK_THROWS_AS(build_waveform_set(0, 10e-6, 1001, 1e-6), ConfigError);
}

TEST_CASE("fractional delay kernel") {
  const auto w0 = FractionalDelay::weights(0.0);
  for (int j = 0; j < FractionalDelay::kTaps; ++j) {
    CHECK(w0[j] == (j + FractionalDelay::kFirstTap == 0 ? 1.0 : 0.0));
  }
  CHECK(FractionalDelay::kernel(0.0) == doctest::Approx(1.0));
  for (double x : {0.3, 1.7, 2.5}) {
    CHECK(FractionalDelay::kernel(x) == doctest::Approx(FractionalDelay::kernel(-x)));
  }
  const auto wh = FractionalDelay::weights(0.5);
  double sum = 0.0;
  for (double w : wh) {
    sum += w;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-2));
  CHECK(split_delay(7.0 - 1e-12).lag == 7);
  CHECK(split_delay(7.0 - 1e-12).mu == 0.0);
  CHECK(split_delay(7.25).mu == doctest::Approx(0.25));
}

TEST_CASE("steering vectors") {
  const WaveformSet wf = build_waveform_set(5, 20e-6, 2561, 1e-6);
  const AntennaLayout layout = testing::origin_layout();
  const double ts = wf.sample_interval;
  const auto at_delay = [&](double samples) {
    return Position2D(samples * ts * kSpeedOfLight / 2.0, 0.0);
  };
  const Eigen::VectorXcd &s0 = wf.samples[0];

  SUBCASE("zero delay reproduces the pulse") {
    const auto sv = steering_vector(wf, {0, 0}, Position2D(0, 0), layout);
    CHECK(sv.s_tilde == s0);
  }
  SUBCASE("integer delay is an exact shift") {
    const auto sv = steering_vector(wf, {0, 0}, at_delay(7.0), layout);
    CHECK(sv.s_tilde.head(7).isZero());
    CHECK((sv.s_tilde.segment(7, wf.pulse_samples) - wf.pulse(0)).norm() < 1e-12);
    CHECK(sv.s_tilde.tail(wf.sample_count - 7 - wf.pulse_samples).isZero());
  }
  SUBCASE("half-sample delay matches an oversampled resampler") {
    Position2D theta = at_delay(7.5);
    // Use the highest tone so the interpolator sees the most bandwidth.
    AntennaLayout five{std::vector<Position2D>(5, Position2D(0, 0)), {Position2D(0, 0)}};
    for (int k = 0; k < 5; ++k) {
      five.tx[k] = Position2D(0, 1e-9 * k);
    }
    const auto sv = steering_vector(wf, {0, 4}, theta, five);
    const Eigen::VectorXcd ref = oversampled_delay(wf.pulse(4), sv.delay / ts, wf.sample_count);
    const double rel = (sv.s_tilde - ref).squaredNorm() / ref.squaredNorm();
    CAPTURE(rel);
    CHECK(rel <= 1e-3);
  }
  SUBCASE("echo past the window end") {
    const double late = wf.window - wf.tau_c + 2 * ts;
    CHECK_THROWS_AS(steering_vector(wf, {0, 0}, at_delay(late / ts), layout), WindowError);
    CHECK_NOTHROW(steering_vector(wf, {0, 0}, at_delay((wf.window - wf.tau_c) / ts - 1), layout));
  }
  SUBCASE("energy is preserved for in-window delays") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> d(0.0, (wf.window - wf.tau_c) / ts - 1);
    for (int i = 0; i < 50; ++i) {
      const auto sv = steering_vector(wf, {0, 0}, at_delay(d(rng)), layout);
      CHECK(sv.s_tilde.squaredNorm() == doctest::Approx(1.0).epsilon(1e-3));
    }
  }
}

TEST_CASE("observation synthesis") {
  const WaveformSet wf = build_waveform_set(1, 20e-6, 2561, 1e-6);
  const AntennaLayout layout = testing::origin_layout();
  const NoiseModel silent = NoiseModel::white(1, 0.0);
  Rng rng = make_stream(1, {kNoiseStream});
  const Position2D t1(900.0, 0.0), t2(1700.0, 0.0);
  const Eigen::VectorXcd s1 = steering_vector(wf, {0, 0}, t1, layout).s_tilde;
  const Eigen::VectorXcd s2 = steering_vector(wf, {0, 0}, t2, layout).s_tilde;

  SUBCASE("no targets, no noise") {
    Scene s{layout, {}, {-5000, 5000, -5000, 5000}};
    CHECK(synthesize_observation(s, wf, silent, 0, rng).r.isZero());
  }
  SUBCASE("one target") {
    Scene s{layout, {{t1, 1.0, {Complex(2.0, 0.0)}}}, {-5000, 5000, -5000, 5000}};
    const auto obs = synthesize_observation(s, wf, silent, 0, rng);
    CHECK((obs.r - 2.0 * s1).norm() == doctest::Approx(0.0));
    CHECK_FALSE(obs.whitened);
  }
  SUBCASE("superposition") {
    const Complex a(0.3, -1.1), b(-0.7, 0.4);
    Scene s{layout, {{t1, 1.0, {a}}, {t2, 1.0, {b}}}, {-5000, 5000, -5000, 5000}};
    const auto obs = synthesize_observation(s, wf, silent, 0, rng);
    CHECK((obs.r - a * s1 - b * s2).norm() < 1e-12);
  }
  SUBCASE("noise streams are reproducible") {
    Scene s{layout, {}, {-5000, 5000, -5000, 5000}};
    const NoiseModel noisy = NoiseModel::white(1, 2.0);
    Rng a = make_stream(9, {kNoiseStream, 4, 0});
    Rng b = make_stream(9, {kNoiseStream, 4, 0});
    Rng c = make_stream(9, {kNoiseStream, 5, 0});
    const auto ra = synthesize_observation(s, wf, noisy, 0, a).r;
    CHECK(ra == synthesize_observation(s, wf, noisy, 0, b).r);
    CHECK(ra != synthesize_observation(s, wf, noisy, 0, c).r);
    CHECK(ra.squaredNorm() / ra.size() == doctest::Approx(2.0).epsilon(0.1));
  }
}

TEST_CASE("whitening") {
  PathObservation obs{{0, 0}, 0, Eigen::VectorXcd(2), false};
  obs.r << 1.0, 0.0;

  SUBCASE("identity covariance") {
    const auto w = whiten(obs, NoiseModel::white(1, 1.0));
    CHECK(w.whitened);
    CHECK(w.r == obs.r);
  }
  SUBCASE("scaled identity") {
    const auto w = whiten(obs, NoiseModel::white(1, 4.0));
    CHECK(w.r[0] == Complex(0.5, 0.0));
  }
  SUBCASE("dense 2x2 against its eigendecomposition") {
    // R = [[2,1],[1,2]]: eigenvalues 3 and 1 with eigenvectors (1,1)/sqrt2
    // and (1,-1)/sqrt2, so R^{-1/2} e1 = ((1/sqrt3 + 1)/2, (1/sqrt3 - 1)/2).
    Eigen::MatrixXcd r(2, 2);
    r << 2.0, 1.0, 1.0, 2.0;
    const auto w = whiten(obs, Whitener::dense(r));
    const double is3 = 1.0 / std::sqrt(3.0);
    CHECK(w.r[0].real() == doctest::Approx((is3 + 1.0) / 2.0));
    CHECK(w.r[1].real() == doctest::Approx((is3 - 1.0) / 2.0));
    CHECK(std::abs(w.r[0].imag()) < 1e-14);
  }
  SUBCASE("invalid covariance") {
    Eigen::MatrixXcd r(2, 2);
    r << 1.0, 2.0, 2.0, 1.0;
    CHECK_THROWS_AS(Whitener::dense(r), CovarianceError);
    CHECK_THROWS_AS(Whitener::scalar(0.0), CovarianceError);
    r << 1.0, 0.5, 0.2, 1.0;
    CHECK_THROWS_AS(Whitener::dense(r), CovarianceError);
  }
  SUBCASE("double whitening is refused") {
    const auto w = whiten(obs, NoiseModel::white(1, 1.0));
    CHECK_THROWS_AS(whiten(w, NoiseModel::white(1, 1.0)), Error);
  }
  SUBCASE("quadratic form") {
    Eigen::MatrixXcd r(2, 2);
    r << 2.0, 1.0, 1.0, 2.0;
    Eigen::VectorXcd x(2);
    x << Complex(1, 2), Complex(-1, 0.5);
    const double direct = std::real(x.dot(r.inverse() * x));
    CHECK(Whitener::dense(r).quadratic_form(x) == doctest::Approx(direct));
    CHECK(Whitener::scalar(4.0).quadratic_form(x) == doctest::Approx(x.squaredNorm() / 4.0));
  }
}

TEST_CASE("whitened clutter-plus-noise has identity covariance") {
  const Index n = 6;
  WaveformSet wf;
  wf.sample_count = n;
  NoiseModel noise{{1.5}, {2.0, 0.8}};
  const Whitener w = make_whitener(noise, 0, n);
  REQUIRE_FALSE(w.is_scalar());
  Scene scene{testing::origin_layout(), {}, {-1, 1, -1, 1}};
  Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(n, n);
  const int draws = 100000;
  Rng rng = make_stream(5, {kNoiseStream});
  for (int i = 0; i < draws; ++i) {
    const auto obs = whiten(synthesize_observation(scene, wf, noise, 0, rng), w);
    acc += obs.r * obs.r.adjoint();
  }
  acc /= static_cast<double>(draws);
  const Eigen::MatrixXcd eye = Eigen::MatrixXcd::Identity(n, n);
  CHECK((acc - eye).norm() / eye.norm() <= 0.05);
}

TEST_CASE("dense whitening size limit") {
  NoiseModel noise{{1.0}, {1.0, 0.5}};
  CHECK_THROWS_AS(make_whitener(noise, 0, kMaxDenseWhiteningSamples + 1), ConfigError);
  CHECK(make_whitener(NoiseModel::white(1, 2.0), 0, 100000).is_scalar());
}

TEST_CASE("alpha scaling sets the per-path SNR") {
  const Experiment exp(testing::small_config());
  const Scene base = exp.scaled_scene(0.0, 0);
  for (double snr : {-5.0, 10.0}) {
    Rng rng = make_stream(1, {kPhaseStream, 3});
    const Scene s = scale_alphas_for_snr(base, exp.waveforms(), exp.whiteners(), snr,
                                         {1.0, 0.65}, rng);
    for (std::size_t p = 0; p < exp.layout().path_count(); ++p) {
      const auto sv0 = steering_vector(exp.waveforms(), exp.layout().path(p),
                                       s.targets[0].position, exp.layout());
      const double a0 = std::norm(s.targets[0].per_path_alpha[p]);
      const double a1 = std::norm(s.targets[1].per_path_alpha[p]);
      CHECK(a0 * exp.whiteners()[p].quadratic_form(sv0.s_tilde) ==
            doctest::Approx(std::pow(10.0, snr / 10.0)));
      CHECK(a1 / a0 == doctest::Approx(0.65));
    }
  }
  Rng rng = make_stream(1, {kPhaseStream, 3});
  CHECK_THROWS_AS(scale_alphas_for_snr(base, exp.waveforms(), exp.whiteners(), 0.0,
                                       {1.0, 0.0}, rng),
                  ConfigError);
}
