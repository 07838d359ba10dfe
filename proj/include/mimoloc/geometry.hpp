#pragma once

#include <cmath>
#include <vector>

#include "mimoloc/core.hpp"

namespace mimo {

template <typename Scalar> using Position2 = Eigen::Matrix<Scalar, 2, 1>;
using Position2D = Position2<double>;

/// Bistatic propagation delay tx -> target -> rx.
template <typename Scalar>
Scalar bistatic_delay(const Position2<Scalar> &target,
                      const Position2<Scalar> &tx,
                      const Position2<Scalar> &rx) {
  return ((target - tx).norm() + (target - rx).norm()) /
         static_cast<Scalar>(kSpeedOfLight);
}

/// Axis-aligned rectangle in meters.
struct Rect {
  double x_min = 0.0;
  double x_max = 0.0;
  double y_min = 0.0;
  double y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  bool contains(const Position2D &p) const {
    return p.x() >= x_min && p.x() <= x_max && p.y() >= y_min &&
           p.y() <= y_max;
  }
};

struct AntennaLayout {
  std::vector<Position2D> tx;
  std::vector<Position2D> rx;

  std::size_t path_count() const { return tx.size() * rx.size(); }
  /// Paths are enumerated receiver-major: index = rx * N + tx.
  std::size_t path_index(PathId p) const {
    return static_cast<std::size_t>(p.rx) * tx.size() +
           static_cast<std::size_t>(p.tx);
  }
  PathId path(std::size_t index) const {
    return {static_cast<int>(index / tx.size()),
            static_cast<int>(index % tx.size())};
  }
  double delay(const Position2D &target, PathId p) const {
    return bistatic_delay(target, tx[p.tx], rx[p.rx]);
  }

  /// Throws ConfigError on empty lists, non-finite or repeated positions.
  void validate() const;
};

struct TargetTruth {
  Position2D position = Position2D::Zero();
  /// Relative square modulus of the reflection coefficient.
  double amplitude_sq = 1.0;
  /// alpha_lkg for every path, indexed like AntennaLayout::path_index.
  std::vector<Complex> per_path_alpha;
};

struct Scene {
  AntennaLayout layout;
  std::vector<TargetTruth> targets;
  Rect region;

  void validate() const;
};

/// Strict inequality: delays closer than (or exactly) one pulse width share a
/// range bin.
inline bool pair_separable(double tau_g, double tau_j, double tau_c) {
  return std::abs(tau_g - tau_j) > tau_c;
}

enum class TargetClass { isolated, partially_separable };
enum class SceneClass { completely_isolated, mixed, empty };

struct SeparabilityReport {
  std::size_t targets = 0;
  std::size_t paths = 0;
  /// separable[(g * G + j) * paths + path]
  std::vector<bool> separable;
  std::vector<TargetClass> per_target;
  SceneClass scene_class = SceneClass::empty;

  bool is_separable(std::size_t g, std::size_t j, std::size_t path) const {
    return separable[(g * targets + j) * paths + path];
  }
  /// Number of paths on which targets g and j share a bin.
  std::size_t inseparable_paths(std::size_t g, std::size_t j) const;
};

SeparabilityReport classify_scene(const Scene &scene, double tau_c);

inline long delay_bin(double tau, double tau_c) {
  return static_cast<long>(std::floor(tau / tau_c));
}

/// One-bin error margin around the estimated location's range bin on a path.
inline bool bin_membership(const Position2D &theta,
                           const Position2D &theta_hat, const Position2D &tx,
                           const Position2D &rx, double tau_c) {
  const long a = delay_bin(bistatic_delay(theta, tx, rx), tau_c);
  const long b = delay_bin(bistatic_delay(theta_hat, tx, rx), tau_c);
  return std::abs(a - b) <= 1;
}

/// Square-cell search grid. Cells are stored row-major (y outer, x inner).
class Grid {
public:
  Grid() = default;
  /// Throws ConfigError unless the cells tile the region exactly.
  Grid(const Rect &region, double cell_size);

  const Rect &region() const { return region_; }
  double cell_size() const { return cell_; }
  Index nx() const { return nx_; }
  Index ny() const { return ny_; }
  Index size() const { return nx_ * ny_; }

  Index index(Index ix, Index iy) const { return iy * nx_ + ix; }
  Index ix(Index cell) const { return cell % nx_; }
  Index iy(Index cell) const { return cell / nx_; }
  Position2D center(Index cell) const {
    return {region_.x_min + (static_cast<double>(ix(cell)) + 0.5) * cell_,
            region_.y_min + (static_cast<double>(iy(cell)) + 0.5) * cell_};
  }
  /// Cell containing p (clamped to the grid).
  Index cell_of(const Position2D &p) const;
  /// Chebyshev distance in cells.
  Index cell_distance(Index a, Index b) const;

private:
  Rect region_;
  double cell_ = 0.0;
  Index nx_ = 0;
  Index ny_ = 0;
};

/// Cells x paths membership mask plus its union over paths.
struct Footprint {
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> per_path;
  Eigen::Array<bool, Eigen::Dynamic, 1> any;
};

/// B_lk(theta_hat) for every path, and their union B(theta_hat).
Footprint footprint(const Position2D &theta_hat, const Grid &grid,
                    const AntennaLayout &layout, double tau_c);

} // namespace mimo
