#include "mimoloc/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace mimo {

double ThresholdConfig::weight_sum() const {
  return std::accumulate(path_weights.begin(), path_weights.end(), 0.0);
}

void ThresholdConfig::validate() const {
  if (!(lambda_prime >= 0.0) || !std::isfinite(lambda_prime)) {
    throw ConfigError("threshold must be finite and non-negative");
  }
  for (double w : path_weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw ConfigError("path weights must be finite and non-negative");
    }
  }
  if (!(weight_sum() > 0.0)) {
    throw ConfigError("path weights must not all be zero");
  }
}

std::string to_string(Algorithm a) {
  switch (a) {
  case Algorithm::joint:
    return "joint";
  case Algorithm::ssr:
    return "ssr";
  case Algorithm::sic:
    return "sic";
  }
  return "unknown";
}

Algorithm parse_algorithm(const std::string &name) {
  if (name == "joint") {
    return Algorithm::joint;
  }
  if (name == "ssr") {
    return Algorithm::ssr;
  }
  if (name == "sic") {
    return Algorithm::sic;
  }
  throw ConfigError("unknown algorithm '" + name + "' (expected ssr, sic or joint)");
}

void EstimatorConfig::validate() const {
  if (g_max < 1) {
    throw ConfigError("g_max must be at least 1");
  }
  if (!(singularity_tolerance >= 0.0)) {
    throw ConfigError("singularity tolerance must be non-negative");
  }
}

double calibrate_threshold(std::vector<double> peaks, double pfa) {
  if (!(pfa > 0.0 && pfa < 1.0)) {
    throw ConfigError("pfa must lie strictly between 0 and 1");
  }
  if (peaks.empty()) {
    throw ConfigError("threshold calibration needs at least one H0 trial");
  }
  std::sort(peaks.begin(), peaks.end());
  const auto n = static_cast<double>(peaks.size());
  auto k = static_cast<long>(std::ceil((1.0 - pfa) * n - 1e-9)) - 1;
  k = std::clamp<long>(k, 0, static_cast<long>(peaks.size()) - 1);
  return peaks[static_cast<std::size_t>(k)];
}

namespace {

Detection make_detection(const ObjectiveField &field, Index cell, double value,
                         double threshold, int iteration) {
  Detection d;
  d.location = field.grid().center(cell);
  d.cell = cell;
  d.objective = value;
  d.threshold = threshold;
  d.iteration = iteration;
  d.footprint = field.footprint(cell);
  d.alpha.resize(static_cast<std::size_t>(field.paths()));
  for (Index p = 0; p < field.paths(); ++p) {
    d.alpha[static_cast<std::size_t>(p)] = field.alpha(cell, p);
  }
  return d;
}

/// Summed joint log-likelihood of a cell tuple; nullopt when the tuple is
/// singular on some path.
std::optional<double> tuple_loglik(const ObjectiveField &field,
                                   const ReplicaBank &bank,
                                   std::span<const Index> cells,
                                   double tolerance_s,
                                   std::vector<Eigen::VectorXcd> *alphas) {
  const Index G = static_cast<Index>(cells.size());
  double total = 0.0;
  Eigen::MatrixXcd gv(G, G);
  Eigen::VectorXcd c(G);
  for (Index p = 0; p < field.paths(); ++p) {
    for (Index i = 0; i < G; ++i) {
      const auto &ei = bank.entry(cells[i], p);
      if (!ei.inside) {
        return std::nullopt;
      }
      for (Index j = 0; j < i; ++j) {
        if (std::abs(ei.delay - bank.entry(cells[j], p).delay) < tolerance_s) {
          return std::nullopt;
        }
      }
    }
    for (Index i = 0; i < G; ++i) {
      c[i] = field.cross()(cells[i], p);
      gv(i, i) = field.energy()(cells[i], p);
      for (Index j = 0; j < i; ++j) {
        gv(j, i) = bank.gram_entry(cells[j], cells[i], p);
        gv(i, j) = std::conj(gv(j, i));
      }
    }
    const GramMatrix gram = make_gram(gv);
    if (gram.rank_deficient()) {
      return std::nullopt;
    }
    const Eigen::VectorXcd a = alpha_mle_joint(gram, c);
    total += 0.5 * std::real(c.dot(a));
    if (alphas != nullptr) {
      alphas->push_back(a);
    }
  }
  return total;
}

} // namespace

JointResult joint_search(const ObjectiveField &field, const ReplicaBank &bank,
                         int targets, double lambda,
                         const EstimatorConfig &config) {
  if (targets < 1 || targets > kMaxJointTargets) {
    throw ConfigError("joint search limited to small G (1 to " +
                      std::to_string(kMaxJointTargets) + " targets)");
  }
  const Index C = field.cells();
  if (C < targets) {
    throw ConfigError("joint search needs at least G grid cells");
  }
  double tuples = 1.0;
  for (int i = 0; i < targets; ++i) {
    tuples *= static_cast<double>(C - i) / static_cast<double>(i + 1);
  }
  if (tuples > kMaxJointTuples) {
    throw ConfigError("joint search grid too large (" +
                      std::to_string(static_cast<long long>(tuples)) +
                      " tuples)");
  }
  const double tol = config.singularity_tolerance *
                     bank.waveforms().sample_interval;

  JointResult result;
  result.report.algorithm = Algorithm::joint;
  std::vector<Index> idx(static_cast<std::size_t>(targets));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::vector<Index> best;
  double best_value = -1.0;
  while (true) {
    const auto v = tuple_loglik(field, bank, idx, tol, nullptr);
    if (!v) {
      ++result.excluded_tuples;
    } else if (*v > best_value) {
      best_value = *v;
      best = idx;
    }
    // Next combination in lexicographic order.
    int k = targets - 1;
    while (k >= 0 && idx[static_cast<std::size_t>(k)] == C - targets + k) {
      --k;
    }
    if (k < 0) {
      break;
    }
    ++idx[static_cast<std::size_t>(k)];
    for (int j = k + 1; j < targets; ++j) {
      idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
    }
  }

  result.best_value = std::max(best_value, 0.0);
  if (!best.empty() && best_value >= lambda && best_value > 0.0) {
    std::vector<Eigen::VectorXcd> alphas;
    tuple_loglik(field, bank, best, tol, &alphas);
    for (int g = 0; g < targets; ++g) {
      Detection d = make_detection(field, best[static_cast<std::size_t>(g)],
                                   best_value, lambda, g + 1);
      for (std::size_t p = 0; p < alphas.size(); ++p) {
        d.alpha[p] = alphas[p][g];
      }
      result.report.detections.push_back(std::move(d));
    }
    result.report.accumulated_objective = best_value;
  }
  return result;
}

DetectionReport ssr_run(const ObjectiveField &field,
                        const ThresholdConfig &thresholds,
                        const EstimatorConfig &config) {
  config.validate();
  DetectionReport report;
  report.algorithm = Algorithm::ssr;
  const double lambda = thresholds.lambda_prime;
  ObjectiveField::Mask candidates = field.combined() > lambda;
  for (int g = 1; g <= config.g_max; ++g) {
    const Index cell = field.argmax(candidates);
    if (cell < 0) {
      break;
    }
    const double value = field.combined()[cell];
    Detection d = make_detection(field, cell, value, lambda, g);
    candidates = candidates && !d.footprint.any;
    report.accumulated_objective += value;
    report.detections.push_back(std::move(d));
  }
  return report;
}

ObjectiveField::PathMask sic_modified_term(const ObjectiveField &field,
                                           Index theta_hat) {
  return field.footprint(theta_hat).per_path && !field.subtracted();
}

double sic_threshold(const ObjectiveField &field, Index cell,
                     const ThresholdConfig &thresholds) {
  const double total = thresholds.weight_sum();
  if (!(total > 0.0)) {
    throw ConfigError("path weights must not all be zero");
  }
  if (static_cast<Index>(thresholds.path_weights.size()) != field.paths()) {
    throw ConfigError("one path weight per path is required");
  }
  double cancelled = 0.0;
  for (Index p = 0; p < field.paths(); ++p) {
    if (field.subtracted()(cell, p)) {
      cancelled += thresholds.path_weights[static_cast<std::size_t>(p)];
    }
  }
  return thresholds.lambda_prime * (total - cancelled) / total;
}

DetectionReport sic_run(ObjectiveField &field, const ThresholdConfig &thresholds,
                        const EstimatorConfig &config) {
  config.validate();
  DetectionReport report;
  report.algorithm = Algorithm::sic;
  for (int g = 1; g <= config.g_max; ++g) {
    const Index cell = field.argmax();
    const double value = field.combined()[cell];
    const double threshold = sic_threshold(field, cell, thresholds);
    Detection d = make_detection(field, cell, value, threshold, g);
    field.cancel(sic_modified_term(field, cell));
    if (value >= threshold && value > 0.0) {
      report.accumulated_objective += value;
      report.detections.push_back(std::move(d));
    } else if (config.early_stop) {
      break;
    }
  }
  return report;
}

DetectionReport run_estimator(const ObjectiveField &field,
                              const ReplicaBank &bank,
                              const ThresholdConfig &thresholds,
                              const EstimatorConfig &config,
                              std::optional<int> joint_targets) {
  switch (config.algorithm) {
  case Algorithm::ssr:
    return ssr_run(field, thresholds, config);
  case Algorithm::sic: {
    ObjectiveField copy = field;
    return sic_run(copy, thresholds, config);
  }
  case Algorithm::joint:
    return joint_search(field, bank, joint_targets.value_or(config.g_max),
                        thresholds.lambda_prime, config)
        .report;
  }
  throw Error("unknown algorithm");
}

void write_report(std::ostream &out, const DetectionReport &report) {
  char line[256];
  out << "# algorithm=" << to_string(report.algorithm) << '\n';
  out << "# declared=" << report.declared() << '\n';
  std::snprintf(line, sizeof(line), "# accumulated_objective=%.17g\n",
                report.accumulated_objective);
  out << line;
  out << "iteration,x,y,objective,threshold\n";
  for (const auto &d : report.detections) {
    std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,%.17g,%.17g\n",
                  d.iteration, d.location.x(), d.location.y(), d.objective,
                  d.threshold);
    out << line;
  }
}

DetectionReport read_report(std::istream &in) {
  DetectionReport report;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        continue;
      }
      const std::string key = line.substr(2, eq - 2);
      const std::string value = line.substr(eq + 1);
      if (key == "algorithm") {
        report.algorithm = parse_algorithm(value);
      } else if (key == "accumulated_objective") {
        report.accumulated_objective = std::stod(value);
      }
      continue;
    }
    if (line.rfind("iteration,", 0) == 0) {
      continue;
    }
    std::istringstream fields(line);
    Detection d;
    std::string tok;
    std::vector<std::string> parts;
    while (std::getline(fields, tok, ',')) {
      parts.push_back(tok);
    }
    if (parts.size() != 5) {
      throw Error("malformed report line: " + line);
    }
    d.iteration = std::stoi(parts[0]);
    d.location = {std::stod(parts[1]), std::stod(parts[2])};
    d.objective = std::stod(parts[3]);
    d.threshold = std::stod(parts[4]);
    report.detections.push_back(std::move(d));
  }
  return report;
}

} // namespace mimo
