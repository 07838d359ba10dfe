#include "mimoloc/harness/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace mimo {

namespace {

class Reader {
public:
  explicit Reader(std::string origin) : origin_(std::move(origin)) {}

  [[noreturn]] void fail(const YAML::Node &node, const std::string &msg) const {
    std::ostringstream os;
    os << origin_;
    if (node.IsDefined() && node.Mark().line >= 0) {
      os << ':' << node.Mark().line + 1 << ':' << node.Mark().column + 1;
    }
    os << ": " << msg;
    throw ConfigError(os.str());
  }

  void require_map(const YAML::Node &node, const std::string &where) const {
    if (!node.IsMap()) {
      fail(node, "'" + where + "' must be a mapping");
    }
  }

  void check_keys(const YAML::Node &map, const std::set<std::string> &allowed,
                  const std::string &where) const {
    require_map(map, where);
    for (auto it = map.begin(); it != map.end(); ++it) {
      const auto key = it->first.as<std::string>();
      if (!allowed.contains(key)) {
        fail(it->first, "unknown key '" + key + "' in " + where);
      }
    }
  }

  template <typename T>
  T get(const YAML::Node &node, const std::string &what) const {
    if (!node.IsScalar()) {
      fail(node, "'" + what + "' must be a scalar");
    }
    try {
      return node.as<T>();
    } catch (const YAML::Exception &) {
      fail(node, "invalid value for '" + what + "'");
    }
  }

  std::vector<double> numbers(const YAML::Node &node,
                              const std::string &what) const {
    if (node.IsScalar()) {
      return {get<double>(node, what)};
    }
    if (!node.IsSequence()) {
      fail(node, "'" + what + "' must be a number or a list of numbers");
    }
    std::vector<double> out;
    for (const auto &item : node) {
      out.push_back(get<double>(item, what));
    }
    return out;
  }

  Position2D point_km(const YAML::Node &node, const std::string &what) const {
    if (!node.IsSequence() || node.size() != 2) {
      fail(node, "'" + what + "' must be a [x, y] pair in km");
    }
    return {get<double>(node[0], what) * 1e3, get<double>(node[1], what) * 1e3};
  }

  std::vector<Position2D> points_km(const YAML::Node &node,
                                   const std::string &what) const {
    if (!node.IsSequence()) {
      fail(node, "'" + what + "' must be a list of [x, y] pairs");
    }
    std::vector<Position2D> out;
    for (const auto &item : node) {
      out.push_back(point_km(item, what));
    }
    return out;
  }

  const std::string &origin() const { return origin_; }

private:
  std::string origin_;
};

ScenarioConfig from_yaml(const YAML::Node &root, const Reader &rd) {
  rd.check_keys(root,
                {"name", "seed", "antennas", "targets", "waveform", "noise",
                 "grid", "detection", "sweep", "output"},
                "the top level");
  ScenarioConfig cfg;
  if (root["name"]) {
    cfg.name = rd.get<std::string>(root["name"], "name");
  }
  if (root["seed"]) {
    cfg.seed = rd.get<std::uint64_t>(root["seed"], "seed");
  }

  const YAML::Node ant = root["antennas"];
  if (!ant) {
    rd.fail(root, "missing 'antennas'");
  }
  rd.check_keys(ant, {"transmitters_km", "receivers_km"}, "antennas");
  if (!ant["transmitters_km"] || !ant["receivers_km"]) {
    rd.fail(ant, "antennas needs transmitters_km and receivers_km");
  }
  cfg.transmitters = rd.points_km(ant["transmitters_km"], "transmitters_km");
  cfg.receivers = rd.points_km(ant["receivers_km"], "receivers_km");

  if (const YAML::Node targets = root["targets"]) {
    if (!targets.IsSequence()) {
      rd.fail(targets, "'targets' must be a list");
    }
    for (const auto &t : targets) {
      rd.check_keys(t, {"position_km", "proportion"}, "a target");
      if (!t["position_km"]) {
        rd.fail(t, "target needs position_km");
      }
      TargetSpec spec;
      spec.position = rd.point_km(t["position_km"], "position_km");
      if (t["proportion"]) {
        spec.proportion = rd.get<double>(t["proportion"], "proportion");
      }
      cfg.targets.push_back(spec);
    }
  }

  if (const YAML::Node wf = root["waveform"]) {
    rd.check_keys(wf, {"count", "window_us", "samples", "pulse_width_us"},
                  "waveform");
    if (wf["count"]) {
      cfg.waveform_count = rd.get<int>(wf["count"], "count");
    }
    if (wf["window_us"]) {
      cfg.window = rd.get<double>(wf["window_us"], "window_us") * 1e-6;
    }
    if (wf["samples"]) {
      cfg.samples = rd.get<Index>(wf["samples"], "samples");
    }
    if (wf["pulse_width_us"]) {
      cfg.pulse_width = rd.get<double>(wf["pulse_width_us"], "pulse_width_us") * 1e-6;
    }
  }

  if (const YAML::Node noise = root["noise"]) {
    rd.check_keys(noise, {"sigma_sq", "clutter"}, "noise");
    if (noise["sigma_sq"]) {
      cfg.sigma_sq = rd.numbers(noise["sigma_sq"], "sigma_sq");
    }
    if (const YAML::Node cl = noise["clutter"]) {
      rd.check_keys(cl, {"power", "rho"}, "noise.clutter");
      if (cl["power"]) {
        cfg.clutter.power = rd.get<double>(cl["power"], "power");
      }
      if (cl["rho"]) {
        cfg.clutter.rho = rd.get<double>(cl["rho"], "rho");
      }
    }
  }

  const YAML::Node grid = root["grid"];
  if (!grid) {
    rd.fail(root, "missing 'grid'");
  }
  rd.check_keys(grid, {"region_km", "cell_m"}, "grid");
  if (!grid["region_km"]) {
    rd.fail(grid, "grid needs region_km");
  }
  const auto region = rd.numbers(grid["region_km"], "region_km");
  if (region.size() != 4) {
    rd.fail(grid["region_km"], "region_km must be [x_min, x_max, y_min, y_max]");
  }
  cfg.region = {region[0] * 1e3, region[1] * 1e3, region[2] * 1e3, region[3] * 1e3};
  if (grid["cell_m"]) {
    cfg.cell = rd.get<double>(grid["cell_m"], "cell_m");
  }

  if (const YAML::Node det = root["detection"]) {
    rd.check_keys(det,
                  {"algorithms", "g_max", "early_stop",
                   "singularity_tolerance_samples", "pfa", "calibration_trials",
                   "threshold", "path_weights"},
                  "detection");
    if (const YAML::Node algos = det["algorithms"]) {
      cfg.algorithms.clear();
      const auto add = [&](const YAML::Node &n) {
        try {
          cfg.algorithms.push_back(parse_algorithm(rd.get<std::string>(n, "algorithms")));
        } catch (const ConfigError &e) {
          rd.fail(n, e.what());
        }
      };
      if (algos.IsSequence()) {
        for (const auto &a : algos) {
          add(a);
        }
      } else {
        add(algos);
      }
    }
    if (det["g_max"]) {
      cfg.estimator.g_max = rd.get<int>(det["g_max"], "g_max");
    }
    if (det["early_stop"]) {
      cfg.estimator.early_stop = rd.get<bool>(det["early_stop"], "early_stop");
    }
    if (det["singularity_tolerance_samples"]) {
      cfg.estimator.singularity_tolerance = rd.get<double>(
          det["singularity_tolerance_samples"], "singularity_tolerance_samples");
    }
    if (det["pfa"]) {
      cfg.pfa = rd.get<double>(det["pfa"], "pfa");
    }
    if (det["calibration_trials"]) {
      cfg.calibration_trials =
          rd.get<std::size_t>(det["calibration_trials"], "calibration_trials");
    }
    if (det["threshold"]) {
      cfg.threshold = rd.get<double>(det["threshold"], "threshold");
    }
    if (det["path_weights"]) {
      cfg.path_weights = rd.numbers(det["path_weights"], "path_weights");
    }
  }

  const YAML::Node sweep = root["sweep"];
  if (!sweep) {
    rd.fail(root, "missing 'sweep'");
  }
  rd.check_keys(sweep, {"snr_db", "trials", "benchmark", "threads"}, "sweep");
  if (!sweep["snr_db"]) {
    rd.fail(sweep, "sweep needs snr_db");
  }
  cfg.snr_db = rd.numbers(sweep["snr_db"], "snr_db");
  if (sweep["trials"]) {
    cfg.trials = rd.get<std::size_t>(sweep["trials"], "trials");
  }
  if (sweep["benchmark"]) {
    cfg.benchmark = rd.get<bool>(sweep["benchmark"], "benchmark");
  }
  if (sweep["threads"]) {
    cfg.threads = rd.get<unsigned>(sweep["threads"], "threads");
  }

  if (const YAML::Node out = root["output"]) {
    rd.check_keys(out, {"directory"}, "output");
    if (out["directory"]) {
      cfg.output_dir = rd.get<std::string>(out["directory"], "directory");
    }
  }

  try {
    cfg.validate();
  } catch (const ConfigError &e) {
    throw ConfigError(rd.origin() + ": " + e.what());
  }
  return cfg;
}

} // namespace

std::vector<double> ScenarioConfig::proportions() const {
  std::vector<double> out;
  for (const auto &t : targets) {
    out.push_back(t.proportion);
  }
  return out;
}

void ScenarioConfig::validate() const {
  const AntennaLayout l = layout();
  l.validate();
  const int n_wave = waveform_count == 0 ? static_cast<int>(transmitters.size())
                                         : waveform_count;
  if (n_wave < static_cast<int>(transmitters.size())) {
    throw ConfigError("waveform count is smaller than the transmitter count");
  }
  if (samples < 2 || !(window > 0.0) || !(pulse_width > 0.0) ||
      pulse_width > window) {
    throw ConfigError("invalid waveform window, samples or pulse width");
  }
  if (sigma_sq.size() != 1 && sigma_sq.size() != path_count()) {
    throw ConfigError("sigma_sq needs one value or one per path");
  }
  for (double s : sigma_sq) {
    if (!(s > 0.0)) {
      throw ConfigError("sigma_sq must be positive");
    }
  }
  if (clutter.power < 0.0 || !(std::abs(clutter.rho) < 1.0)) {
    throw ConfigError("clutter power must be >= 0 and |rho| < 1");
  }
  if (clutter.enabled() && samples > kMaxDenseWhiteningSamples) {
    throw ConfigError("clutter whitening requires at most " +
                      std::to_string(kMaxDenseWhiteningSamples) + " samples");
  }
  if (!(region.x_max > region.x_min && region.y_max > region.y_min)) {
    throw ConfigError("grid region is empty");
  }
  Grid(region, cell);
  for (std::size_t g = 0; g < targets.size(); ++g) {
    if (!region.contains(targets[g].position)) {
      throw ConfigError("target " + std::to_string(g + 1) +
                        " lies outside the search region");
    }
    if (!(targets[g].proportion > 0.0)) {
      throw ConfigError("target " + std::to_string(g + 1) +
                        " needs a positive proportion");
    }
  }
  if (algorithms.empty()) {
    throw ConfigError("no algorithm selected");
  }
  estimator.validate();
  if (!(pfa > 0.0 && pfa < 1.0)) {
    throw ConfigError("pfa must lie strictly between 0 and 1");
  }
  if (!threshold && calibration_trials < 100) {
    throw ConfigError("calibration needs at least 100 trials");
  }
  if (threshold && !(*threshold >= 0.0)) {
    throw ConfigError("threshold must be non-negative");
  }
  if (!path_weights.empty()) {
    if (path_weights.size() != path_count()) {
      throw ConfigError("path_weights needs one value per path");
    }
    ThresholdConfig{0.0, pfa, path_weights, 0, 0}.validate();
  }
  if (snr_db.empty()) {
    throw ConfigError("snr_db must not be empty");
  }
  if (trials < 1) {
    throw ConfigError("trials must be at least 1");
  }
}

ScenarioConfig parse_scenario(const std::string &text,
                              const std::string &origin) {
  const Reader rd(origin);
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException &e) {
    throw ConfigError(origin + ":" + std::to_string(e.mark.line + 1) + ":" +
                      std::to_string(e.mark.column + 1) + ": " + e.msg);
  }
  return from_yaml(root, rd);
}

ScenarioConfig load_scenario(const std::filesystem::path &file) {
  std::ifstream in(file);
  if (!in) {
    throw ConfigError("cannot open " + file.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), file.string());
}

void write_thresholds(const std::filesystem::path &file,
                      const ThresholdConfig &thresholds,
                      std::optional<double> joint_lambda) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;
  out << YAML::Key << "statistic" << YAML::Value << "grid_peak_objective";
  out << YAML::Key << "lambda_prime" << YAML::Value << thresholds.lambda_prime;
  if (joint_lambda) {
    out << YAML::Key << "joint_lambda" << YAML::Value << *joint_lambda;
  }
  out << YAML::Key << "pfa" << YAML::Value << thresholds.pfa;
  out << YAML::Key << "trials" << YAML::Value << thresholds.trials;
  out << YAML::Key << "seed" << YAML::Value << thresholds.seed;
  out << YAML::Key << "path_weights" << YAML::Value << YAML::Flow
      << thresholds.path_weights;
  out << YAML::EndMap;
  std::ofstream f(file);
  if (!f) {
    throw Error("cannot open " + file.string() + " for writing");
  }
  f << out.c_str() << '\n';
  if (!f) {
    throw Error("write failed: " + file.string());
  }
}

ThresholdConfig read_thresholds(const std::filesystem::path &file,
                                std::optional<double> *joint_lambda) {
  const Reader rd(file.string());
  YAML::Node root;
  try {
    root = YAML::LoadFile(file.string());
  } catch (const YAML::BadFile &) {
    throw ConfigError("cannot open " + file.string());
  } catch (const YAML::ParserException &e) {
    throw ConfigError(file.string() + ":" + std::to_string(e.mark.line + 1) +
                      ": " + e.msg);
  }
  rd.check_keys(root,
                {"statistic", "lambda_prime", "joint_lambda", "pfa", "trials",
                 "seed", "path_weights"},
                "the thresholds file");
  ThresholdConfig t;
  if (!root["lambda_prime"]) {
    rd.fail(root, "missing lambda_prime");
  }
  t.lambda_prime = rd.get<double>(root["lambda_prime"], "lambda_prime");
  if (root["pfa"]) {
    t.pfa = rd.get<double>(root["pfa"], "pfa");
  }
  if (root["trials"]) {
    t.trials = rd.get<std::size_t>(root["trials"], "trials");
  }
  if (root["seed"]) {
    t.seed = rd.get<std::uint64_t>(root["seed"], "seed");
  }
  if (root["path_weights"]) {
    t.path_weights = rd.numbers(root["path_weights"], "path_weights");
  }
  if (joint_lambda != nullptr) {
    *joint_lambda = root["joint_lambda"]
                        ? std::optional<double>(rd.get<double>(
                              root["joint_lambda"], "joint_lambda"))
                        : std::nullopt;
  }
  return t;
}

} // namespace mimo
