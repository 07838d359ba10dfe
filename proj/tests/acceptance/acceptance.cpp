// Acceptance checks, one PASS/FAIL line per criterion. Exit status is
// nonzero iff some criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "mimoloc/harness/experiment.hpp"

using namespace mimo;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

fs::path source(const std::string &rel) { return fs::path(MIMOLOC_SOURCE_DIR) / rel; }

int failures = 0;

void report(int id, bool pass, const std::string &detail) {
  std::printf("criterion %d: %s (%s)\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  failures += pass ? 0 : 1;
}

std::string fmt(const char *f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

std::vector<Index> cells_of(const DetectionReport &r) {
  std::vector<Index> out;
  for (const auto &d : r.detections) {
    out.push_back(d.cell);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Every cell of a is within `slack` cells of a distinct cell of b.
bool same_locations(const Grid &grid, std::vector<Index> a, std::vector<Index> b,
                    Index slack) {
  if (a.size() != b.size()) {
    return false;
  }
  std::sort(b.begin(), b.end());
  do {
    bool ok = true;
    for (std::size_t i = 0; i < a.size() && ok; ++i) {
      ok = grid.cell_distance(a[i], b[i]) <= slack;
    }
    if (ok) {
      return true;
    }
  } while (std::next_permutation(b.begin(), b.end()));
  return false;
}

struct PdTally {
  std::vector<std::size_t> valid;
  std::vector<double> sx, sy;
  std::size_t trials = 0;

  explicit PdTally(std::size_t targets) : valid(targets), sx(targets), sy(targets) {}
  void add(const TrialOutcome &o) {
    ++trials;
    for (std::size_t g = 0; g < o.targets.size(); ++g) {
      if (o.targets[g].valid) {
        ++valid[g];
        sx[g] += o.targets[g].dx * o.targets[g].dx;
        sy[g] += o.targets[g].dy * o.targets[g].dy;
      }
    }
  }
  double pd(std::size_t g) const { return double(valid[g]) / double(trials); }
  double rmse_x(std::size_t g) const { return std::sqrt(sx[g] / double(valid[g])); }
  double rmse_y(std::size_t g) const { return std::sqrt(sy[g] / double(valid[g])); }
};

constexpr std::size_t kTrials = 200;

// Criteria 1 and 2: scenario A, SSR against the single-target benchmark.
void isolated_scene(const Experiment &a, const Thresholds &th, double calib_s) {
  const std::size_t G = a.config().targets.size();
  bool bench_ok = true;
  std::string bench_detail;
  for (double snr : {5.0, 10.0}) {
    std::vector<TrialOutcome> ssr(kTrials);
    std::vector<std::vector<TrialOutcome>> single(kTrials);
    const auto t0 = Clock::now();
    parallel_for(kTrials, 0, [&](std::size_t t) {
      ssr[t] = run_trial(a, th, snr, t, {Algorithm::ssr}).outcomes[0];
    });
    const double ssr_s = seconds_since(t0);
    parallel_for(kTrials, 0, [&](std::size_t t) {
      for (std::size_t g = 0; g < G; ++g) {
        single[t].push_back(run_single_target(a, th, snr, t, g));
      }
    });
    PdTally full(G), bench(G);
    for (std::size_t t = 0; t < kTrials; ++t) {
      full.add(ssr[t]);
      TrialOutcome merged;
      for (const auto &s : single[t]) {
        merged.targets.push_back(s.targets[0]);
      }
      bench.add(merged);
    }
    for (std::size_t g = 0; g < G; ++g) {
      const double gap = std::abs(full.pd(g) - bench.pd(g));
      bench_ok = bench_ok && gap <= 0.05;
      bench_detail += fmt("%s%g dB t%zu %.3f vs %.3f", bench_detail.empty() ? "" : "; ",
                          snr, g + 1, full.pd(g), bench.pd(g));
    }
    if (snr == 10.0) {
      const double elapsed = calib_s + ssr_s;
      bool ok = elapsed <= 600.0;
      std::string detail;
      for (std::size_t g = 0; g < G; ++g) {
        ok = ok && full.pd(g) >= 0.95;
        detail += fmt("pd t%zu = %.3f, ", g + 1, full.pd(g));
      }
      report(1, ok, detail + fmt("calibration + 200 trials %.0f s", elapsed));
    }
  }
  report(2, bench_ok, bench_detail);
}

// Criterion 3: scenario B, SIC recovers the target SSR removes.
void ssr_failure(const Experiment &b, const Thresholds &th) {
  std::vector<TrialResult> res(kTrials);
  parallel_for(kTrials, 0, [&](std::size_t t) {
    res[t] = run_trial(b, th, 10.0, t, {Algorithm::ssr, Algorithm::sic});
  });
  PdTally ssr(3), sic(3);
  for (const auto &r : res) {
    ssr.add(r.outcomes[0]);
    sic.add(r.outcomes[1]);
  }
  const double gain = sic.pd(2) - ssr.pd(2);
  report(3, gain >= 0.2 && sic.pd(2) >= 0.9,
         fmt("target 3 pd ssr = %.3f, sic = %.3f", ssr.pd(2), sic.pd(2)));
}

// Criterion 4: scenario C, six targets by SIC.
void six_targets(const Experiment &c, const Thresholds &th) {
  constexpr std::size_t kC = 100;
  std::vector<TrialOutcome> res(kC);
  parallel_for(kC, 0, [&](std::size_t t) {
    res[t] = run_trial(c, th, 10.0, t, {Algorithm::sic}).outcomes[0];
  });
  PdTally tally(6);
  for (const auto &o : res) {
    tally.add(o);
  }
  bool ok = true;
  double worst_pd = 1.0, worst_rmse = 0.0;
  for (std::size_t g = 0; g < 6; ++g) {
    worst_pd = std::min(worst_pd, tally.pd(g));
    if (tally.valid[g] > 0) {
      worst_rmse = std::max({worst_rmse, tally.rmse_x(g), tally.rmse_y(g)});
    }
    ok = ok && tally.pd(g) >= 0.9 && tally.valid[g] > 0 && tally.rmse_x(g) <= 150.0 &&
         tally.rmse_y(g) <= 150.0;
  }
  report(4, ok, fmt("min pd = %.3f, max rmse = %.1f m", worst_pd, worst_rmse));
}

// Random scene on the compact test geometry.
Scene random_scene(const Experiment &exp, std::size_t targets, std::mt19937_64 &rng,
                   const std::function<bool(const Scene &)> &accept) {
  std::uniform_int_distribution<Index> cell(0, exp.grid().size() - 1);
  std::uniform_real_distribution<double> prop(0.5, 1.0);
  while (true) {
    Scene s{exp.layout(), {}, exp.config().region};
    std::set<Index> used;
    while (s.targets.size() < targets) {
      const Index c = cell(rng);
      if (used.insert(c).second) {
        s.targets.push_back({exp.grid().center(c), s.targets.empty() ? 1.0 : prop(rng), {}});
      }
    }
    if (accept(s)) {
      return s;
    }
  }
}

Scene with_alphas(const Experiment &exp, const Scene &s, double snr, std::uint64_t trial) {
  std::vector<double> p;
  for (const auto &t : s.targets) {
    p.push_back(t.amplitude_sq);
  }
  Rng rng = make_stream(exp.config().seed, {kPhaseStream, trial});
  return scale_alphas_for_snr(s, exp.waveforms(), exp.whiteners(), snr, p, rng);
}

// Criterion 5: SIC accumulated objective never below SSR's.
void sic_dominates(const Experiment &small) {
  std::mt19937_64 rng(505);
  int holds = 0;
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t G = 2 + static_cast<std::size_t>(i % 2);
    const Scene s = random_scene(small, G, rng, [&](const Scene &sc) {
      return classify_scene(sc, small.waveforms().tau_c).scene_class == SceneClass::mixed;
    });
    const ObjectiveField f = small.field(with_alphas(small, s, 60.0, i), kSceneStream, i);
    EstimatorConfig ec;
    ec.g_max = static_cast<int>(G);
    ec.early_stop = false;
    const ThresholdConfig th = ThresholdConfig::uniform(0.0, small.layout().path_count());
    const double ssr = ssr_run(f, th, ec).accumulated_objective;
    ObjectiveField g = f;
    const double sic = sic_run(g, th, ec).accumulated_objective;
    if (sic >= ssr * (1.0 - 1e-9)) {
      ++holds;
    }
    worst = std::min(worst, (sic - ssr) / ssr);
  }
  report(5, holds == 100, fmt("%d/100 scenes, worst relative margin %.3g", holds, worst));
}

// Criterion 6: joint search, SSR and SIC agree on isolated pairs.
void oracle_equivalence(const Experiment &small) {
  std::mt19937_64 rng(606);
  const auto disjoint = [&](const Scene &s) {
    const Grid &grid = small.grid();
    const double tc = small.waveforms().tau_c;
    const Index a = grid.cell_of(s.targets[0].position);
    const Index b = grid.cell_of(s.targets[1].position);
    return !footprint(s.targets[0].position, grid, s.layout, tc).any(b) &&
           !footprint(s.targets[1].position, grid, s.layout, tc).any(a);
  };
  EstimatorConfig ec;
  ec.g_max = 2;
  const ThresholdConfig th = ThresholdConfig::uniform(0.0, small.layout().path_count());
  const auto agree = [&](double snr, int n, Index slack, std::uint64_t base) {
    int count = 0;
    for (int i = 0; i < n; ++i) {
      const Scene s = random_scene(small, 2, rng, disjoint);
      const std::vector<Index> truth{small.grid().cell_of(s.targets[0].position),
                                     small.grid().cell_of(s.targets[1].position)};
      const ObjectiveField f = small.field(with_alphas(small, s, snr, base + i), kSceneStream, base + i);
      const auto joint = cells_of(joint_search(f, small.bank(), 2, 0.0, ec).report);
      const auto ssr = cells_of(ssr_run(f, th, ec));
      ObjectiveField g = f;
      const auto sic = cells_of(sic_run(g, th, ec));
      bool ok = same_locations(small.grid(), joint, ssr, slack) &&
                same_locations(small.grid(), joint, sic, slack) &&
                same_locations(small.grid(), ssr, sic, slack);
      if (slack == 0) {
        ok = ok && same_locations(small.grid(), joint, truth, 0);
      }
      count += ok ? 1 : 0;
    }
    return count;
  };
  const int clean = agree(120.0, 50, 0, 0);
  const int noisy = agree(15.0, 100, 1, 1000);
  report(6, clean == 50 && noisy >= 90,
         fmt("noise-free identical %d/50; 15 dB within one cell %d/100", clean, noisy));
}

// Criterion 7: normal-equation residual or a declared coincidence.
void normal_equations() {
  std::mt19937_64 rng(707);
  std::uniform_int_distribution<int> nt(24, 64), gcount(1, 3);
  std::normal_distribution<double> nd;
  int ok = 0, singular = 0;
  double worst = 0.0;
  const AntennaLayout layout{{Position2D(0, 0)}, {Position2D(0, 0)}};
  const Whitener w = Whitener::scalar(1.0);
  for (int i = 0; i < 1000; ++i) {
    const Index n = nt(rng);
    const double ts = 0.125e-6;
    const WaveformSet wf = build_waveform_set(1, static_cast<double>(n - 1) * ts, n, 1e-6);
    const PathContext ctx{wf, layout, {0, 0}, w};
    const double max_delay = static_cast<double>(n - wf.pulse_samples - 1);
    std::uniform_real_distribution<double> ud(0.0, max_delay), jitter(0.0, 2.0);
    const int G = gcount(rng);
    std::vector<double> d{ud(rng)};
    for (int g = 1; g < G; ++g) {
      // Half the instances put a second delay within two samples.
      d.push_back(i % 2 == 0 ? std::min(max_delay, d[0] + jitter(rng)) : ud(rng));
    }
    bool coincident = false;
    std::vector<Position2D> thetas;
    for (int a = 0; a < G; ++a) {
      thetas.emplace_back(d[a] * ts * kSpeedOfLight / 2.0, 0.0);
      for (int b = a + 1; b < G; ++b) {
        coincident = coincident || std::abs(d[a] - d[b]) < 1.0;
      }
    }
    PathObservation obs{{0, 0}, 0, Eigen::VectorXcd(n), true};
    for (Index k = 0; k < n; ++k) {
      obs.r[k] = {nd(rng), nd(rng)};
    }
    try {
      const Eigen::VectorXcd alpha = alpha_mle_joint(thetas, obs, ctx);
      Eigen::MatrixXcd s(n, G);
      for (int g = 0; g < G; ++g) {
        s.col(g) = whitened_replica(thetas[g], ctx);
      }
      const Eigen::VectorXcd c = s.adjoint() * obs.r;
      const double res = (s.adjoint() * s * alpha - c).norm() / c.norm();
      worst = std::max(worst, res);
      ok += (!coincident && res <= 1e-8) ? 1 : 0;
    } catch (const SingularGramError &) {
      ++singular;
      ok += coincident ? 1 : 0;
    }
  }
  report(7, ok == 1000,
         fmt("%d/1000 correct, %d coincident, worst residual %.2e", ok, singular, worst));
}

// Criterion 8: hold-out alarm rate and whitening.
void calibration_accuracy(const Experiment &a, const Thresholds &th) {
  const auto peaks = h0_peaks(a, kHoldoutTrialOffset, 1000, false, 0);
  const auto alarms = std::count_if(peaks.begin(), peaks.end(),
                                    [&](double p) { return p > th.main.lambda_prime; });
  const double rate = static_cast<double>(alarms) / 1000.0;

  // Whitened clutter-plus-noise covariance.
  const Index n = 8;
  WaveformSet wf;
  wf.sample_count = n;
  const NoiseModel noise{{1.0}, {3.0, 0.9}};
  const Whitener w = make_whitener(noise, 0, n);
  const Scene empty{{{Position2D(0, 0)}, {Position2D(0, 0)}}, {}, {-1, 1, -1, 1}};
  Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(n, n);
  Rng rng = make_stream(808, {kNoiseStream});
  for (int i = 0; i < 100000; ++i) {
    const auto obs = whiten(synthesize_observation(empty, wf, noise, 0, rng), w);
    acc += obs.r * obs.r.adjoint();
  }
  acc /= 1e5;
  const double cov_err = (acc - Eigen::MatrixXcd::Identity(n, n)).norm() / std::sqrt(double(n));

  // Doubling the noise power leaves the whitened statistic unchanged.
  ScenarioConfig loud = a.config();
  loud.sigma_sq = {2.0};
  const Experiment b(loud);
  const auto p1 = h0_peaks(a, 0, 3, false, 0);
  const auto p2 = h0_peaks(b, 0, 3, false, 0);
  double drift = 0.0;
  for (int i = 0; i < 3; ++i) {
    drift = std::max(drift, std::abs(p1[i] - p2[i]) / p1[i]);
  }
  report(8, std::abs(rate - 0.1) <= 0.03 && cov_err <= 0.05 && drift <= 1e-9,
         fmt("hold-out alarm rate %.3f, covariance error %.4f, noise-doubling drift %.1e",
             rate, cov_err, drift));
}

// Criterion 9: equal delays give a rank-deficient Gram and an excluded tuple.
void singularity() {
  const WaveformSet wf = build_waveform_set(1, 16e-6, 1025, 1e-6);
  const AntennaLayout layout{{Position2D(0, 0)}, {Position2D(0, 0)}};
  const Grid grid({-1500, 1500, 0, 1500}, 1500);
  const Whitener w = Whitener::scalar(1.0);
  const PathContext ctx{wf, layout, {0, 0}, w};
  const std::vector<Position2D> pair{grid.center(0), grid.center(1)};
  bool ok = true;
  std::string detail;
  try {
    const GramMatrix g = gram_matrix(pair, ctx);
    ok = ok && g.rank_deficient();
    detail += fmt("gram condition %.3g", g.condition);
    const ReplicaBank bank(grid, layout, wf, {w});
    Scene scene{layout, {{pair[0], 1.0, {Complex(4.0, 0.0)}}}, grid.region()};
    Rng rng = make_stream(909, {0});
    const auto obs = whiten(synthesize_observation(scene, wf, NoiseModel::white(1, 1.0), 0, rng), w);
    const JointResult jr = joint_search(objective_field({obs}, bank), bank, 2, 0.0);
    ok = ok && jr.excluded_tuples == 1 && jr.report.declared() == 0;
    detail += fmt(", excluded tuples %zu, declared %zu", jr.excluded_tuples, jr.report.declared());
    bool threw = false;
    try {
      alpha_mle_joint(pair, obs, ctx);
    } catch (const SingularGramError &) {
      threw = true;
    }
    ok = ok && threw;
  } catch (const std::exception &e) {
    ok = false;
    detail += std::string(" unexpected error: ") + e.what();
  }
  report(9, ok, detail);
}

// Criterion 10: two CLI sweeps with the same seed write identical CSVs.
void determinism() {
  const fs::path base = fs::temp_directory_path() / "mimoloc_acceptance_det";
  fs::remove_all(base);
  std::string outputs[2];
  bool ran = true;
  for (int run = 0; run < 2; ++run) {
    const fs::path out = base / ("run" + std::to_string(run));
    const std::string cmd = std::string("\"") + MIMOLOC_CLI + "\" sweep \"" +
                            source("tests/data/small.cfg").string() +
                            "\" --seed 1234 --trials 4 --threads " + (run == 0 ? "1" : "2") +
                            " --out \"" + out.string() + "\" > /dev/null";
    ran = ran && std::system(cmd.c_str()) == 0;
    std::ifstream in(out / "metrics.csv", std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    outputs[run] = ss.str();
  }
  const bool ok = ran && !outputs[0].empty() && outputs[0] == outputs[1];
  report(10, ok, fmt("%zu and %zu bytes, %s", outputs[0].size(), outputs[1].size(),
                     outputs[0] == outputs[1] ? "identical" : "different"));
}

} // namespace

int main() {
  try {
    const auto t0 = Clock::now();
    ScenarioConfig ca = load_scenario(source("configs/scenario_a.cfg"));
    ca.calibration_trials = 1000;
    const Experiment a(ca);
    // B and C share A's antennas, grid, window and noise, so their H0
    // statistic has the same distribution and one calibration serves all.
    const Thresholds th = calibrate(a, 0);
    const double calib_s = seconds_since(t0);
    std::printf("lambda' = %.6g from %zu H0 trials in %.0f s\n", th.main.lambda_prime,
                ca.calibration_trials, calib_s);

    isolated_scene(a, th, calib_s);
    ssr_failure(Experiment(load_scenario(source("configs/scenario_b.cfg"))), th);
    six_targets(Experiment(load_scenario(source("configs/scenario_c.cfg"))), th);

    const Experiment small(load_scenario(source("tests/data/small.cfg")));
    sic_dominates(small);
    oracle_equivalence(small);
    normal_equations();
    calibration_accuracy(a, th);
    singularity();
    determinism();
    std::printf("total %.0f s\n", seconds_since(t0));
  } catch (const std::exception &e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 2;
  }
  return failures == 0 ? 0 : 1;
}
