// Command-line front end: calibrate, run, sweep, gridmap.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "mimoloc/harness/experiment.hpp"

namespace fs = std::filesystem;
using namespace mimo;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> thresholds;
  unsigned threads = 0;
};

Experiment load(const Common &c) {
  ScenarioConfig cfg = load_scenario(c.config);
  if (c.seed) {
    cfg.seed = *c.seed;
  }
  return Experiment(std::move(cfg));
}

Thresholds thresholds_for(const Experiment &exp, const Common &c) {
  if (!c.thresholds) {
    return calibrate(exp, c.threads);
  }
  Thresholds t;
  t.main = read_thresholds(*c.thresholds, &t.joint);
  if (t.main.path_weights.empty()) {
    t.main.path_weights = exp.threshold_template().path_weights;
  }
  if (t.main.path_weights.size() != exp.layout().path_count()) {
    throw ConfigError("thresholds file has the wrong number of path weights");
  }
  t.main.validate();
  return t;
}

void add_common(CLI::App *cmd, Common &c, bool with_thresholds) {
  cmd->add_option("config", c.config, "Scenario file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "Override the master seed");
  cmd->add_option("--threads", c.threads, "Worker threads (0 = all cores)");
  if (with_thresholds) {
    cmd->add_option("--thresholds", c.thresholds,
                    "Thresholds file from 'calibrate' (default: calibrate now)");
  }
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Noncoherent MIMO radar multi-target localization"};
  app.require_subcommand(1);

  Common calib_opts;
  std::optional<std::string> calib_out;
  auto *calib = app.add_subcommand("calibrate", "Estimate the detection threshold from H0 runs");
  add_common(calib, calib_opts, false);
  calib->add_option("--out", calib_out, "Output file (default <output dir>/thresholds.yaml)");

  Common run_opts;
  double run_snr = 0.0;
  std::uint64_t run_trial_index = 0;
  std::optional<std::string> run_algo;
  auto *run = app.add_subcommand("run", "Run one trial and print the detection reports");
  add_common(run, run_opts, true);
  run->add_option("--snr", run_snr, "SNR in dB")->required();
  run->add_option("--trial", run_trial_index, "Trial index")->required();
  run->add_option("--algo", run_algo, "ssr, sic or joint (default: config)");

  Common sweep_opts;
  std::optional<std::string> sweep_algo;
  std::optional<std::string> sweep_out;
  std::optional<std::size_t> sweep_trials;
  bool sweep_resume = false;
  auto *sweep = app.add_subcommand("sweep", "Monte Carlo sweep over the configured SNRs");
  add_common(sweep, sweep_opts, true);
  sweep->add_option("--algo", sweep_algo, "ssr, sic or joint (default: config)");
  sweep->add_option("--out", sweep_out, "Output directory (default: config)");
  sweep->add_option("--trials", sweep_trials, "Override the trial count");
  sweep->add_flag("--resume", sweep_resume, "Reuse completed trials from the journal");

  Common grid_opts;
  double grid_snr = 0.0;
  std::uint64_t grid_trial = 0;
  int after_cancel = 0;
  int grid_path = -1;
  std::string grid_format = "both";
  std::optional<std::string> grid_out;
  auto *gridmap = app.add_subcommand("gridmap", "Dump the objective field of one trial");
  add_common(gridmap, grid_opts, false);
  gridmap->add_option("--snr", grid_snr, "SNR in dB")->required();
  gridmap->add_option("--trial", grid_trial, "Trial index")->required();
  gridmap->add_option("--after-cancel", after_cancel,
                      "Apply this many interference-cancellation steps first")
      ->check(CLI::NonNegativeNumber);
  gridmap->add_option("--path", grid_path, "Path index (default: combined field)");
  gridmap->add_option("--format", grid_format, "csv, bin or both")
      ->check(CLI::IsMember({"csv", "bin", "both"}));
  gridmap->add_option("--out", grid_out, "Output directory (default: config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*calib) {
      const Experiment exp = load(calib_opts);
      const Thresholds t = calibrate(exp, calib_opts.threads);
      const fs::path out = calib_out ? fs::path(*calib_out)
                                     : exp.config().output_dir / "thresholds.yaml";
      if (out.has_parent_path()) {
        fs::create_directories(out.parent_path());
      }
      write_thresholds(out, t.main, t.joint);
      std::printf("lambda_prime=%.17g\n", t.main.lambda_prime);
      std::printf("wrote %s\n", out.string().c_str());
    } else if (*run) {
      const Experiment exp = load(run_opts);
      const Thresholds t = thresholds_for(exp, run_opts);
      const std::vector<Algorithm> algos =
          run_algo ? std::vector<Algorithm>{parse_algorithm(*run_algo)}
                   : exp.config().algorithms;
      const TrialResult r = run_trial(exp, t, run_snr, run_trial_index, algos);
      for (std::size_t i = 0; i < algos.size(); ++i) {
        write_report(std::cout, r.reports[i]);
        const auto &o = r.outcomes[i];
        for (std::size_t g = 0; g < o.targets.size(); ++g) {
          std::printf("# target %zu: %s\n", g + 1,
                      o.targets[g].valid ? "valid" : "missed");
        }
      }
    } else if (*sweep) {
      ScenarioConfig cfg = load_scenario(sweep_opts.config);
      if (sweep_opts.seed) {
        cfg.seed = *sweep_opts.seed;
      }
      if (sweep_trials) {
        cfg.trials = *sweep_trials;
      }
      const Experiment exp(std::move(cfg));
      const Thresholds t = thresholds_for(exp, sweep_opts);
      SweepOptions so;
      if (sweep_algo) {
        so.algorithms = {parse_algorithm(*sweep_algo)};
      }
      so.out_dir = sweep_out ? fs::path(*sweep_out) : exp.config().output_dir;
      so.resume = sweep_resume;
      so.threads = sweep_opts.threads != 0 ? sweep_opts.threads : exp.config().threads;
      const auto records = run_sweep(exp, t, so);
      std::printf("wrote %zu records to %s\n", records.size(),
                  (so.out_dir / "metrics.csv").string().c_str());
    } else if (*gridmap) {
      const Experiment exp = load(grid_opts);
      ObjectiveField field =
          exp.field(exp.scaled_scene(grid_snr, grid_trial), kNoiseStream, grid_trial);
      for (int g = 0; g < after_cancel; ++g) {
        field.cancel(sic_modified_term(field, field.argmax()));
      }
      const fs::path dir = grid_out ? fs::path(*grid_out) : exp.config().output_dir;
      fs::create_directories(dir);
      const std::string stem = "gridmap_snr" + std::to_string(static_cast<int>(grid_snr)) +
                               "_trial" + std::to_string(grid_trial) + "_cancel" +
                               std::to_string(after_cancel) +
                               (grid_path >= 0 ? "_path" + std::to_string(grid_path) : "");
      if (grid_format != "bin") {
        write_gridmap_csv(dir / (stem + ".csv"), field, grid_path);
        std::printf("wrote %s\n", (dir / (stem + ".csv")).string().c_str());
      }
      if (grid_format != "csv") {
        write_gridmap_binary(dir / (stem + ".bin"), field, grid_path);
        std::printf("wrote %s\n", (dir / (stem + ".bin")).string().c_str());
      }
    }
  } catch (const ConfigError &e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return 0;
}
