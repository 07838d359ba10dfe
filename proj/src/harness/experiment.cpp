#include "mimoloc/harness/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace mimo {

Experiment::Experiment(ScenarioConfig config) : config_(std::move(config)) {
  config_.validate();
  layout_ = config_.layout();
  const int n_wave = config_.waveform_count == 0
                         ? static_cast<int>(layout_.tx.size())
                         : config_.waveform_count;
  waveforms_ = build_waveform_set(n_wave, config_.window, config_.samples,
                                  config_.pulse_width);
  const std::size_t P = layout_.path_count();
  noise_.sigma_sq = config_.sigma_sq.size() == 1
                        ? std::vector<double>(P, config_.sigma_sq.front())
                        : config_.sigma_sq;
  noise_.clutter = config_.clutter;
  for (std::size_t p = 0; p < P; ++p) {
    whiteners_.push_back(make_whitener(noise_, p, waveforms_.sample_count));
  }
  for (std::size_t g = 0; g < config_.targets.size(); ++g) {
    for (std::size_t p = 0; p < P; ++p) {
      if (layout_.delay(config_.targets[g].position, layout_.path(p)) +
              waveforms_.tau_c >
          waveforms_.window) {
        throw ConfigError("target " + std::to_string(g + 1) +
                          " outside observation window on path " +
                          std::to_string(p));
      }
    }
  }
  bank_ = std::make_shared<const ReplicaBank>(Grid(config_.region, config_.cell),
                                              layout_, waveforms_, whiteners_);
}

std::vector<Position2D> Experiment::truths() const {
  std::vector<Position2D> out;
  for (const auto &t : config_.targets) {
    out.push_back(t.position);
  }
  return out;
}

ThresholdConfig Experiment::threshold_template() const {
  ThresholdConfig t;
  t.pfa = config_.pfa;
  t.path_weights = config_.path_weights.empty()
                       ? std::vector<double>(layout_.path_count(), 1.0)
                       : config_.path_weights;
  t.trials = config_.calibration_trials;
  t.seed = config_.seed;
  return t;
}

Scene Experiment::scaled_scene(double snr_db, std::uint64_t trial) const {
  Scene scene;
  scene.layout = layout_;
  scene.region = config_.region;
  for (const auto &t : config_.targets) {
    scene.targets.push_back({t.position, t.proportion, {}});
  }
  Rng phases = make_stream(config_.seed, {kPhaseStream, trial});
  return scale_alphas_for_snr(scene, waveforms_, whiteners_, snr_db,
                              config_.proportions(), phases);
}

std::vector<PathObservation> Experiment::observe(const Scene &scene,
                                                 std::uint64_t tag,
                                                 std::uint64_t trial) const {
  std::vector<PathObservation> out;
  out.reserve(layout_.path_count());
  for (std::size_t p = 0; p < layout_.path_count(); ++p) {
    Rng rng = make_stream(config_.seed, {tag, trial, p});
    out.push_back(whiten(synthesize_observation(scene, waveforms_, noise_, p, rng),
                         whiteners_[p]));
  }
  return out;
}

ObjectiveField Experiment::field(const Scene &scene, std::uint64_t tag,
                                 std::uint64_t trial) const {
  return objective_field(observe(scene, tag, trial), *bank_);
}

void parallel_for(std::size_t count, unsigned threads,
                  const std::function<void(std::size_t)> &fn) {
  unsigned n = threads != 0 ? threads : std::max(1u, std::thread::hardware_concurrency());
  n = static_cast<unsigned>(std::min<std::size_t>(n, count));
  if (n <= 1) {
    for (std::size_t i = 0; i < count; ++i) {
      fn(i);
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  for (unsigned w = 0; w < n; ++w) {
    workers.emplace_back([&] {
      while (!failed.load()) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) {
          return;
        }
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) {
            error = std::current_exception();
          }
          failed = true;
        }
      }
    });
  }
  for (auto &t : workers) {
    t.join();
  }
  if (error) {
    std::rethrow_exception(error);
  }
}

namespace {

int joint_targets(const Experiment &exp) {
  return std::max<int>(1, static_cast<int>(exp.config().targets.size()));
}

Scene empty_scene(const Experiment &exp) {
  return {exp.layout(), {}, exp.config().region};
}

template <typename Fn> auto with_context(const std::string &ctx, Fn &&fn) {
  try {
    return fn();
  } catch (const ConfigError &e) {
    throw ConfigError(ctx + ": " + e.what());
  } catch (const Error &e) {
    throw Error(ctx + ": " + e.what());
  }
}

} // namespace

std::vector<double> h0_peaks(const Experiment &exp, std::uint64_t first,
                             std::size_t count, bool joint, unsigned threads) {
  const Scene scene = empty_scene(exp);
  std::vector<double> peaks(count);
  EstimatorConfig ec = exp.config().estimator;
  parallel_for(count, threads, [&](std::size_t i) {
    const ObjectiveField f = exp.field(scene, kCalibrationStream, first + i);
    peaks[i] = joint ? joint_search(f, exp.bank(), joint_targets(exp),
                                    std::numeric_limits<double>::infinity(), ec)
                           .best_value
                     : f.combined()[f.argmax()];
  });
  return peaks;
}

Thresholds calibrate(const Experiment &exp, unsigned threads) {
  const auto &cfg = exp.config();
  Thresholds t;
  t.main = exp.threshold_template();
  const bool need_joint = std::find(cfg.algorithms.begin(), cfg.algorithms.end(),
                                    Algorithm::joint) != cfg.algorithms.end();
  if (cfg.threshold) {
    t.main.lambda_prime = *cfg.threshold;
    t.main.trials = 0;
    if (need_joint) {
      t.joint = *cfg.threshold;
    }
    return t;
  }
  t.main.lambda_prime = calibrate_threshold(
      h0_peaks(exp, 0, cfg.calibration_trials, false, threads), cfg.pfa);
  if (need_joint) {
    t.joint = calibrate_threshold(
        h0_peaks(exp, 0, cfg.calibration_trials, true, threads), cfg.pfa);
  }
  return t;
}

TrialResult run_trial(const Experiment &exp, const Thresholds &thresholds,
                      double snr_db, std::uint64_t trial,
                      const std::vector<Algorithm> &algorithms) {
  return with_context("trial " + std::to_string(trial), [&] {
    const Scene scene = exp.scaled_scene(snr_db, trial);
    const ObjectiveField field = exp.field(scene, kNoiseStream, trial);
    const auto truths = exp.truths();
    TrialResult r;
    for (Algorithm a : algorithms) {
      EstimatorConfig ec = exp.config().estimator;
      ec.algorithm = a;
      ThresholdConfig th = thresholds.main;
      if (a == Algorithm::joint) {
        th.lambda_prime = thresholds.joint.value_or(th.lambda_prime);
      }
      r.reports.push_back(run_estimator(field, exp.bank(), th, ec, joint_targets(exp)));
      r.outcomes.push_back(evaluate(r.reports.back(), truths));
    }
    return r;
  });
}

TrialOutcome run_single_target(const Experiment &exp,
                               const Thresholds &thresholds, double snr_db,
                               std::uint64_t trial, std::size_t target) {
  return with_context("trial " + std::to_string(trial), [&] {
    Scene scene = exp.scaled_scene(snr_db, trial);
    scene.targets = {scene.targets.at(target)};
    const ObjectiveField field = exp.field(scene, kNoiseStream, trial);
    EstimatorConfig ec = exp.config().estimator;
    ec.algorithm = Algorithm::ssr;
    return evaluate(ssr_run(field, thresholds.main, ec),
                    {exp.truths().at(target)});
  });
}

// ---------------------------------------------------------------------------
// Sweep journal: one line per (label, snr index, trial):
//   label,snr_index,trial,declared,valid,dx,dy[,valid,dx,dy ...]

namespace {

struct JournalKey {
  std::string label;
  std::size_t snr_index;
  std::uint64_t trial;
  auto operator<=>(const JournalKey &) const = default;
};

std::string fingerprint(const Experiment &exp, const Thresholds &th,
                        const std::vector<std::string> &labels) {
  std::ostringstream os;
  const auto &c = exp.config();
  os.precision(17);
  os << c.seed << '|' << c.samples << '|' << c.window << '|' << c.cell << '|'
     << th.main.lambda_prime << '|' << th.joint.value_or(-1.0) << '|'
     << c.estimator.g_max << c.estimator.early_stop;
  for (double s : c.snr_db) {
    os << ',' << s;
  }
  for (const auto &t : c.targets) {
    os << ';' << t.position.x() << ':' << t.position.y() << ':' << t.proportion;
  }
  for (const auto &l : labels) {
    os << '/' << l;
  }
  // FNV-1a keeps the digest stable across standard libraries.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : os.str()) {
    h = (h ^ ch) * 0x100000001b3ULL;
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

std::string journal_line(const JournalKey &k, const TrialOutcome &o) {
  std::ostringstream os;
  char num[64];
  os << k.label << ',' << k.snr_index << ',' << k.trial << ',' << o.declared;
  for (const auto &t : o.targets) {
    os << ',' << (t.valid ? 1 : 0);
    std::snprintf(num, sizeof(num), ",%.17g,%.17g", t.dx, t.dy);
    os << num;
  }
  return os.str();
}

std::map<JournalKey, TrialOutcome> read_journal(const std::filesystem::path &file,
                                                const std::string &fp) {
  std::map<JournalKey, TrialOutcome> out;
  std::ifstream in(file);
  std::string line;
  if (!in || !std::getline(in, line) || line != "# fingerprint=" + fp) {
    return out;
  }
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::istringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      f.push_back(tok);
    }
    if (f.size() < 4 || (f.size() - 4) % 3 != 0) {
      continue; // torn final line after an interruption
    }
    try {
      JournalKey k{f[0], std::stoul(f[1]), std::stoull(f[2])};
      TrialOutcome o;
      o.declared = std::stoul(f[3]);
      for (std::size_t i = 4; i < f.size(); i += 3) {
        o.targets.push_back({f[i] == "1", std::stod(f[i + 1]), std::stod(f[i + 2])});
      }
      out[k] = std::move(o);
    } catch (const std::logic_error &) {
      continue;
    }
  }
  return out;
}

} // namespace

std::vector<MetricsRecord> run_sweep(const Experiment &exp,
                                     const Thresholds &thresholds,
                                     const SweepOptions &options) {
  const auto &cfg = exp.config();
  const std::vector<Algorithm> algorithms =
      options.algorithms.empty() ? cfg.algorithms : options.algorithms;
  const std::size_t G = cfg.targets.size();
  const bool bench = cfg.benchmark && G > 0;

  std::vector<std::string> labels;
  for (Algorithm a : algorithms) {
    labels.push_back(to_string(a));
  }
  std::vector<std::string> bench_labels;
  if (bench) {
    for (std::size_t g = 0; g < G; ++g) {
      bench_labels.push_back(std::string(kBenchmarkLabel) + ":" + std::to_string(g + 1));
    }
  }

  std::filesystem::create_directories(options.out_dir);
  const auto journal_path = options.out_dir / "trials.journal";
  const std::string fp = fingerprint(exp, thresholds, labels);
  std::map<JournalKey, TrialOutcome> done;
  if (options.resume) {
    done = read_journal(journal_path, fp);
  }
  std::ofstream journal;
  if (options.resume && !done.empty()) {
    journal.open(journal_path, std::ios::app);
  } else {
    done.clear();
    journal.open(journal_path, std::ios::trunc);
    journal << "# fingerprint=" << fp << '\n' << std::flush;
  }
  if (!journal) {
    throw Error("cannot open " + journal_path.string() + " for writing");
  }
  std::mutex journal_mutex;

  const std::size_t S = cfg.snr_db.size();
  const std::size_t T = cfg.trials;
  const std::size_t L = labels.size() + bench_labels.size();
  // outcomes[(s * T + t) * L + label]
  std::vector<TrialOutcome> outcomes(S * T * L);

  parallel_for(S * T, options.threads, [&](std::size_t item) {
    const std::size_t s = item / T;
    const std::uint64_t t = item % T;
    auto slot = [&](std::size_t l) -> TrialOutcome & { return outcomes[item * L + l]; };
    bool complete = true;
    for (std::size_t l = 0; l < L; ++l) {
      const std::string &lab = l < labels.size() ? labels[l] : bench_labels[l - labels.size()];
      const auto it = done.find({lab, s, t});
      if (it == done.end()) {
        complete = false;
        break;
      }
      slot(l) = it->second;
    }
    if (complete) {
      return;
    }
    std::vector<std::string> lines;
    const TrialResult r = run_trial(exp, thresholds, cfg.snr_db[s], t, algorithms);
    for (std::size_t l = 0; l < labels.size(); ++l) {
      slot(l) = r.outcomes[l];
      lines.push_back(journal_line({labels[l], s, t}, slot(l)));
    }
    for (std::size_t g = 0; g < bench_labels.size(); ++g) {
      const std::size_t l = labels.size() + g;
      slot(l) = run_single_target(exp, thresholds, cfg.snr_db[s], t, g);
      lines.push_back(journal_line({bench_labels[g], s, t}, slot(l)));
    }
    std::lock_guard lock(journal_mutex);
    for (const auto &line : lines) {
      journal << line << '\n';
    }
    journal.flush();
  });

  std::vector<MetricsRecord> records;
  for (std::size_t l = 0; l < labels.size(); ++l) {
    for (std::size_t s = 0; s < S; ++s) {
      if (G == 0) {
        MetricsCell cell;
        for (std::size_t t = 0; t < T; ++t) {
          cell.add({}, outcomes[(s * T + t) * L + l].declared);
        }
        MetricsRecord rec = cell.record(labels[l], cfg.snr_db[s], 0);
        rec.pd = rec.rmse_x = rec.rmse_y = std::numeric_limits<double>::quiet_NaN();
        records.push_back(rec);
        continue;
      }
      for (std::size_t g = 0; g < G; ++g) {
        MetricsCell cell;
        for (std::size_t t = 0; t < T; ++t) {
          const auto &o = outcomes[(s * T + t) * L + l];
          cell.add(o.targets[g], o.declared);
        }
        records.push_back(cell.record(labels[l], cfg.snr_db[s], static_cast<int>(g + 1)));
      }
    }
  }
  for (std::size_t s = 0; s < S && bench; ++s) {
    for (std::size_t g = 0; g < G; ++g) {
      MetricsCell cell;
      for (std::size_t t = 0; t < T; ++t) {
        const auto &o = outcomes[(s * T + t) * L + labels.size() + g];
        cell.add(o.targets[0], o.declared);
      }
      records.push_back(cell.record(kBenchmarkLabel, cfg.snr_db[s], static_cast<int>(g + 1)));
    }
  }
  export_csv(options.out_dir / "metrics.csv", records);
  return records;
}

} // namespace mimo
