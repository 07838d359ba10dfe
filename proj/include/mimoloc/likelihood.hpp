#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "mimoloc/signal.hpp"

namespace mimo {

// Generic forms. Every argument lives in the whitened domain (R = I), so the
// formulas are plain inner products.

/// 1/2 |s^H r|^2 / (s^H s); zero for a zero replica.
template <typename DerivedS, typename DerivedR>
typename DerivedS::RealScalar
concentrated_loglik(const Eigen::MatrixBase<DerivedS> &s,
                    const Eigen::MatrixBase<DerivedR> &r) {
  using Real = typename DerivedS::RealScalar;
  const Real energy = s.squaredNorm();
  if (energy <= Real(0)) {
    return Real(0);
  }
  return Real(0.5) * std::norm(s.dot(r)) / energy;
}

/// S^H S for replicas stored as columns.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>
gram(const Eigen::MatrixBase<Derived> &replicas) {
  return replicas.adjoint() * replicas;
}

/// 1/2 c^H G^{-1} c with c = S^H r, i.e. half the energy of the projection
/// of r onto span(S).
template <typename DerivedG, typename DerivedC>
typename DerivedG::RealScalar
joint_concentrated_loglik(const Eigen::MatrixBase<DerivedG> &gram_values,
                          const Eigen::MatrixBase<DerivedC> &cross) {
  using Real = typename DerivedG::RealScalar;
  const auto alpha = gram_values.ldlt().solve(cross.derived()).eval();
  return Real(0.5) * std::real(cross.dot(alpha));
}

inline constexpr double kMaxGramCondition = 1e8;

struct GramMatrix {
  Eigen::MatrixXcd values;
  /// Ratio of extreme eigenvalues; +inf when rank deficient.
  double condition = 1.0;

  Index size() const { return values.rows(); }
  bool rank_deficient() const { return !(condition <= kMaxGramCondition); }
};

GramMatrix make_gram(Eigen::MatrixXcd values);
/// Gram of the columns of replicas.
GramMatrix gram_matrix(const Eigen::Ref<const Eigen::MatrixXcd> &replicas);

/// Solves G alpha = c. Throws SingularGramError when the Gram matrix is
/// rank deficient.
Eigen::VectorXcd alpha_mle_joint(const GramMatrix &gram,
                                 const Eigen::Ref<const Eigen::VectorXcd> &cross);

/// True when some pair of delays lies closer than tolerance.
bool delays_coincident(std::span<const double> delays, double tolerance);

/// Everything needed to evaluate one path: the waveform set, geometry, and
/// the path's whitening transform.
struct PathContext {
  const WaveformSet &waveforms;
  const AntennaLayout &layout;
  PathId path;
  const Whitener &whitener;
  /// Delay pairs closer than this many samples are treated as coincident.
  double singularity_tolerance = 1.0;
};

/// W s~(theta). Throws WindowError when the echo leaves the window.
Eigen::VectorXcd whitened_replica(const Position2D &theta,
                                  const PathContext &ctx);

/// Per-path concentrated log-likelihood for a whitened observation. A theta
/// whose echo leaves the window yields 0 and sets *out_of_window.
double path_loglik(const Position2D &theta, const PathObservation &obs,
                   const PathContext &ctx, bool *out_of_window = nullptr);

/// Gram matrix of the whitened replicas of thetas on one path.
GramMatrix gram_matrix(std::span<const Position2D> thetas,
                       const PathContext &ctx);

/// Joint reflection-coefficient estimate. Throws SingularGramError when two
/// delays coincide within the context tolerance or the Gram matrix is rank
/// deficient.
Eigen::VectorXcd alpha_mle_joint(std::span<const Position2D> thetas,
                                 const PathObservation &obs,
                                 const PathContext &ctx);

/// (W s~)^H y / |W s~|^2. Throws Error for a zero replica.
Complex alpha_mle_isolated(const Position2D &theta, const PathObservation &obs,
                           const PathContext &ctx);

/// Joint concentrated log-likelihood of a location tuple on one path.
double joint_path_loglik(std::span<const Position2D> thetas,
                         const PathObservation &obs, const PathContext &ctx);

/// Per-(cell, path) replica data shared by every trial of a configuration:
/// integer lag, interpolation weights, whitened energy and range bin. Cross
/// terms against an observation come from one FFT correlation per path.
class ReplicaBank {
public:
  struct Entry {
    Index lag = 0;
    std::array<double, FractionalDelay::kTaps> weights{};
    double delay = 0.0; // seconds
    bool inside = false; // echo fully within the window
  };

  ReplicaBank(const Grid &grid, const AntennaLayout &layout,
              const WaveformSet &waveforms, std::vector<Whitener> whiteners);

  const Grid &grid() const { return grid_; }
  const AntennaLayout &layout() const { return layout_; }
  const WaveformSet &waveforms() const { return waveforms_; }
  const std::vector<Whitener> &whiteners() const { return whiteners_; }
  Index cells() const { return grid_.size(); }
  Index paths() const { return static_cast<Index>(layout_.path_count()); }

  const Entry &entry(Index cell, Index path) const {
    return entries_[static_cast<std::size_t>(path * cells() + cell)];
  }
  /// s~^H R^{-1} s~ for every (cell, path); zero outside the window.
  const std::shared_ptr<const Eigen::ArrayXXd> &energy() const { return energy_; }
  /// floor(tau / tau_c) for every (cell, path).
  const std::shared_ptr<const Eigen::ArrayXXi> &bins() const { return bins_; }

  /// c[L] = sum_n conj(s_k[n - L]) z[n] with z = W^H y, for L in
  /// [min_lag(), min_lag() + size).
  Eigen::VectorXcd correlate(Index path, const Eigen::VectorXcd &y) const;
  static constexpr Index min_lag() { return FractionalDelay::kFirstTap - 1; }
  /// s~^H R^{-1} r from a correlation produced by correlate().
  Complex cross(Index cell, Index path, const Eigen::VectorXcd &corr) const;
  /// s~_a^H R^{-1} s~_b on one path.
  Complex gram_entry(Index cell_a, Index cell_b, Index path) const;

private:
  Complex direct_inner(Index cell_a, Index cell_b, Index path) const;

  Grid grid_;
  AntennaLayout layout_;
  WaveformSet waveforms_;
  std::vector<Whitener> whiteners_;
  /// R^{-1} for dense whiteners, empty otherwise.
  std::vector<Eigen::MatrixXcd> inverse_cov_;
  std::vector<Entry> entries_;
  std::shared_ptr<const Eigen::ArrayXXd> energy_;
  std::shared_ptr<const Eigen::ArrayXXi> bins_;
  /// A_k[m] = sum_n conj(s_k[n]) s_k[n + m], m in (-Np, Np).
  std::vector<Eigen::VectorXcd> autocorr_;
  Index fft_size_ = 0;
  std::vector<Eigen::VectorXcd> pulse_spectra_;
};

/// Gridded objective F(theta) with cached per-path terms and per-(cell, path)
/// cancellation flags.
class ObjectiveField {
public:
  using Mask = Eigen::Array<bool, Eigen::Dynamic, 1>;
  using PathMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

  ObjectiveField(Grid grid, Eigen::ArrayXXd per_path, Eigen::ArrayXXcd cross,
                 std::shared_ptr<const Eigen::ArrayXXd> energy,
                 std::shared_ptr<const Eigen::ArrayXXi> bins);

  const Grid &grid() const { return grid_; }
  Index cells() const { return per_path_.rows(); }
  Index paths() const { return per_path_.cols(); }
  /// cells x paths.
  const Eigen::ArrayXXd &per_path() const { return per_path_; }
  const Eigen::ArrayXd &combined() const { return combined_; }
  const PathMask &subtracted() const { return subtracted_; }
  const Eigen::ArrayXXcd &cross() const { return cross_; }
  const Eigen::ArrayXXd &energy() const { return *energy_; }
  const Eigen::ArrayXXi &bins() const { return *bins_; }

  /// Isolated estimate of alpha at a cell on a path (0 for a zero replica).
  Complex alpha(Index cell, Index path) const;

  /// Highest combined value, lowest cell index on ties.
  Index argmax() const;
  /// Same restricted to mask; -1 when the mask is empty.
  Index argmax(const Mask &mask) const;

  /// B_lk of the given cell on every path, plus the union over paths.
  Footprint footprint(Index cell) const;

  /// Number of subtracted paths at a cell.
  Index cancelled_paths(Index cell) const;

  /// Subtracts per_path(c, p) for every (c, p) in mask not already
  /// subtracted; returns the mask of pairs actually subtracted.
  PathMask cancel(const PathMask &mask);

private:
  void recompute(Index cell);

  Grid grid_;
  Eigen::ArrayXXd per_path_;
  Eigen::ArrayXXcd cross_;
  std::shared_ptr<const Eigen::ArrayXXd> energy_;
  std::shared_ptr<const Eigen::ArrayXXi> bins_;
  Eigen::ArrayXd combined_;
  PathMask subtracted_;
};

/// Builds F from whitened observations, one per path in layout order.
ObjectiveField objective_field(const std::vector<PathObservation> &observations,
                               const ReplicaBank &bank);
/// Convenience form for white noise (identity whiteners).
ObjectiveField objective_field(const std::vector<PathObservation> &observations,
                               const WaveformSet &waveforms,
                               const AntennaLayout &layout, const Grid &grid);

/// Gridmap exports. path = -1 selects the combined field.
void write_gridmap_csv(const std::filesystem::path &file,
                       const ObjectiveField &field, int path = -1);
void write_gridmap_binary(const std::filesystem::path &file,
                          const ObjectiveField &field, int path = -1);

struct Gridmap {
  std::uint32_t nx = 0;
  std::uint32_t ny = 0;
  std::int32_t path = -1;
  std::vector<double> values;
};
Gridmap read_gridmap_binary(const std::filesystem::path &file);

} // namespace mimo
