#include "mimoloc/harness/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace mimo {

bool valid_detection(const Position2D &estimate, const Position2D &truth) {
  return std::abs(estimate.x() - truth.x()) <= kValidBoxHalfWidth &&
         std::abs(estimate.y() - truth.y()) <= kValidBoxHalfWidth;
}

std::size_t Association::false_declarations() const {
  return static_cast<std::size_t>(
      std::count(truth_of_detection.begin(), truth_of_detection.end(), -1));
}

std::size_t Association::misses() const {
  return static_cast<std::size_t>(
      std::count(detection_of_truth.begin(), detection_of_truth.end(), -1));
}

Association associate(const DetectionReport &report,
                      const std::vector<Position2D> &truths) {
  Association a;
  a.truth_of_detection.assign(report.detections.size(), -1);
  a.detection_of_truth.assign(truths.size(), -1);
  for (std::size_t d = 0; d < report.detections.size(); ++d) {
    const Position2D &est = report.detections[d].location;
    int best = -1;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < truths.size(); ++t) {
      if (a.detection_of_truth[t] >= 0 || !valid_detection(est, truths[t])) {
        continue;
      }
      const double dist = (est - truths[t]).norm();
      if (dist < best_dist) {
        best_dist = dist;
        best = static_cast<int>(t);
      }
    }
    if (best >= 0) {
      a.truth_of_detection[d] = best;
      a.detection_of_truth[static_cast<std::size_t>(best)] = static_cast<int>(d);
    }
  }
  return a;
}

TrialOutcome evaluate(const DetectionReport &report,
                      const std::vector<Position2D> &truths) {
  const Association a = associate(report, truths);
  TrialOutcome out;
  out.declared = report.declared();
  out.targets.resize(truths.size());
  for (std::size_t t = 0; t < truths.size(); ++t) {
    const int d = a.detection_of_truth[t];
    if (d >= 0) {
      const Position2D &est = report.detections[static_cast<std::size_t>(d)].location;
      out.targets[t] = {true, est.x() - truths[t].x(), est.y() - truths[t].y()};
    }
  }
  return out;
}

bool operator==(const MetricsRecord &a, const MetricsRecord &b) {
  auto same = [](double x, double y) {
    return (std::isnan(x) && std::isnan(y)) || x == y;
  };
  return a.algorithm == b.algorithm && same(a.snr_db, b.snr_db) &&
         a.target == b.target && same(a.pd, b.pd) && same(a.rmse_x, b.rmse_x) &&
         same(a.rmse_y, b.rmse_y) && same(a.g_hat_mean, b.g_hat_mean) &&
         a.trials == b.trials;
}

void MetricsCell::add(const TargetOutcome &t, std::size_t declared) {
  ++trials;
  sum_declared += static_cast<double>(declared);
  if (t.valid) {
    ++valid;
    sum_dx2 += t.dx * t.dx;
    sum_dy2 += t.dy * t.dy;
  }
}

MetricsRecord MetricsCell::record(const std::string &algorithm, double snr_db,
                                  int target) const {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  MetricsRecord r;
  r.algorithm = algorithm;
  r.snr_db = snr_db;
  r.target = target;
  r.trials = trials;
  r.pd = trials > 0 ? static_cast<double>(valid) / static_cast<double>(trials) : nan;
  r.rmse_x = valid > 0 ? std::sqrt(sum_dx2 / static_cast<double>(valid)) : nan;
  r.rmse_y = valid > 0 ? std::sqrt(sum_dy2 / static_cast<double>(valid)) : nan;
  r.g_hat_mean = trials > 0 ? sum_declared / static_cast<double>(trials) : nan;
  return r;
}

void write_csv(std::ostream &out, const std::vector<MetricsRecord> &records) {
  out << kMetricsHeader << '\n';
  char line[512];
  for (const auto &r : records) {
    std::snprintf(line, sizeof(line), "%s,%.17g,%d,%.17g,%.17g,%.17g,%.17g,%zu\n",
                  r.algorithm.c_str(), r.snr_db, r.target, r.pd, r.rmse_x,
                  r.rmse_y, r.g_hat_mean, r.trials);
    out << line;
  }
}

void export_csv(const std::filesystem::path &file,
                const std::vector<MetricsRecord> &records) {
  std::ofstream out(file, std::ios::binary);
  if (!out) {
    throw Error("cannot open " + file.string() + " for writing");
  }
  write_csv(out, records);
  out.flush();
  if (!out) {
    throw Error("write failed: " + file.string());
  }
}

std::vector<MetricsRecord> parse_csv(std::istream &in) {
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw Error("metrics CSV: unexpected header");
  }
  std::vector<MetricsRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) {
      continue;
    }
    std::vector<std::string> f;
    std::istringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      f.push_back(tok);
    }
    if (f.size() != 8) {
      throw Error("metrics CSV line " + std::to_string(lineno) +
                  ": expected 8 fields");
    }
    try {
      MetricsRecord r;
      r.algorithm = f[0];
      r.snr_db = std::stod(f[1]);
      r.target = std::stoi(f[2]);
      r.pd = std::stod(f[3]);
      r.rmse_x = std::stod(f[4]);
      r.rmse_y = std::stod(f[5]);
      r.g_hat_mean = std::stod(f[6]);
      r.trials = static_cast<std::size_t>(std::stoull(f[7]));
      out.push_back(std::move(r));
    } catch (const std::logic_error &) {
      throw Error("metrics CSV line " + std::to_string(lineno) +
                  ": malformed number");
    }
  }
  return out;
}

std::vector<MetricsRecord> read_csv(const std::filesystem::path &file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) {
    throw Error("cannot open " + file.string());
  }
  return parse_csv(in);
}

} // namespace mimo
