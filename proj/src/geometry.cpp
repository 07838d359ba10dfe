#include "mimoloc/geometry.hpp"

#include <algorithm>
#include <string>

namespace mimo {

namespace {

void check_distinct(const std::vector<Position2D> &points, const char *what) {
  if (points.empty()) {
    throw ConfigError(std::string("antenna layout: no ") + what);
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!points[i].allFinite()) {
      throw ConfigError(std::string("antenna layout: non-finite ") + what +
                        " position");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (points[i] == points[j]) {
        throw ConfigError(std::string("antenna layout: duplicate ") + what +
                          " position");
      }
    }
  }
}

} // namespace

void AntennaLayout::validate() const {
  check_distinct(tx, "transmitter");
  check_distinct(rx, "receiver");
}

void Scene::validate() const {
  layout.validate();
  if (!(region.x_max > region.x_min && region.y_max > region.y_min)) {
    throw ConfigError("scene region is empty");
  }
  for (std::size_t g = 0; g < targets.size(); ++g) {
    const auto &t = targets[g];
    if (!t.position.allFinite() || !region.contains(t.position)) {
      throw ConfigError("target " + std::to_string(g + 1) +
                        " lies outside the search region");
    }
    if (!(t.amplitude_sq > 0.0)) {
      throw ConfigError("target " + std::to_string(g + 1) +
                        " has non-positive amplitude");
    }
  }
}

std::size_t SeparabilityReport::inseparable_paths(std::size_t g,
                                                  std::size_t j) const {
  std::size_t n = 0;
  for (std::size_t p = 0; p < paths; ++p) {
    n += is_separable(g, j, p) ? 0 : 1;
  }
  return n;
}

SeparabilityReport classify_scene(const Scene &scene, double tau_c) {
  const std::size_t G = scene.targets.size();
  const std::size_t P = scene.layout.path_count();
  SeparabilityReport report;
  report.targets = G;
  report.paths = P;
  report.separable.assign(G * G * P, false);
  report.per_target.assign(G, TargetClass::isolated);

  std::vector<double> delays(G * P);
  for (std::size_t g = 0; g < G; ++g) {
    for (std::size_t p = 0; p < P; ++p) {
      delays[g * P + p] =
          scene.layout.delay(scene.targets[g].position, scene.layout.path(p));
    }
  }

  bool all_separable = true;
  for (std::size_t g = 0; g < G; ++g) {
    for (std::size_t j = 0; j < G; ++j) {
      for (std::size_t p = 0; p < P; ++p) {
        const bool sep =
            g != j && pair_separable(delays[g * P + p], delays[j * P + p], tau_c);
        report.separable[(g * G + j) * P + p] = sep;
        if (g != j && !sep) {
          report.per_target[g] = TargetClass::partially_separable;
          all_separable = false;
        }
      }
    }
  }

  if (G == 0) {
    report.scene_class = SceneClass::empty;
  } else if (all_separable) {
    report.scene_class = SceneClass::completely_isolated;
  } else {
    report.scene_class = SceneClass::mixed;
  }
  return report;
}

Grid::Grid(const Rect &region, double cell_size)
    : region_(region), cell_(cell_size) {
  if (!(cell_size > 0.0)) {
    throw ConfigError("grid cell size must be positive");
  }
  const double fx = region.width() / cell_size;
  const double fy = region.height() / cell_size;
  nx_ = static_cast<Index>(std::llround(fx));
  ny_ = static_cast<Index>(std::llround(fy));
  if (nx_ < 1 || ny_ < 1 || std::abs(fx - static_cast<double>(nx_)) > 1e-6 ||
      std::abs(fy - static_cast<double>(ny_)) > 1e-6) {
    throw ConfigError("grid cells do not tile the search region exactly");
  }
}

Index Grid::cell_of(const Position2D &p) const {
  auto clamp = [](double v, Index n) {
    return std::clamp<Index>(static_cast<Index>(std::floor(v)), 0, n - 1);
  };
  return index(clamp((p.x() - region_.x_min) / cell_, nx_),
               clamp((p.y() - region_.y_min) / cell_, ny_));
}

Index Grid::cell_distance(Index a, Index b) const {
  return std::max(std::abs(ix(a) - ix(b)), std::abs(iy(a) - iy(b)));
}

Footprint footprint(const Position2D &theta_hat, const Grid &grid,
                    const AntennaLayout &layout, double tau_c) {
  const Index P = static_cast<Index>(layout.path_count());
  Footprint fp;
  fp.per_path.resize(grid.size(), P);
  for (Index p = 0; p < P; ++p) {
    const PathId path = layout.path(static_cast<std::size_t>(p));
    const long ref = delay_bin(layout.delay(theta_hat, path), tau_c);
    for (Index c = 0; c < grid.size(); ++c) {
      const long b = delay_bin(layout.delay(grid.center(c), path), tau_c);
      fp.per_path(c, p) = std::abs(b - ref) <= 1;
    }
  }
  fp.any = fp.per_path.rowwise().any();
  return fp;
}

} // namespace mimo
